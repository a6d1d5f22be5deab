#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace drnas {

// Counter-style PRNG (splitmix64 core). The whole state is one 64-bit word,
// so streams serialize trivially and runs are reproducible bit-for-bit on
// any platform. std::* distributions are implementation-defined and must not
// be used anywhere in this project; all sampling goes through this class.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  // Independent named substream. Children derived from the same parent state
  // with different names never collide in practice (full 64-bit mixing).
  Rng split(std::string_view name) const;
  Rng split(std::uint64_t key) const;

  std::uint64_t next_u64();

  // Uniform on [0, 1), 53-bit resolution.
  double uniform();

  // Uniform on (0, 1]; safe as a log() argument.
  double uniform_pos();

  // Standard normal via Box-Muller. No cached spare, so the stream state
  // stays a single word.
  double normal();

  // Uniform integer in [0, n). Lemire multiply-shift with rejection.
  std::uint64_t uniform_int(std::uint64_t n);

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

 private:
  std::uint64_t state_;
};

// Fisher-Yates; the only sanctioned shuffle (std::shuffle output is
// implementation-defined).
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace drnas
