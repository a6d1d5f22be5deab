#pragma once

namespace drnas {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace drnas
