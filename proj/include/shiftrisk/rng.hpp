#pragma once

// Counter-based random numbers (Philox4x32-10, Salmon et al., SC 2011).
//
// A stream is identified by (key, stream id). The 128-bit counter holds the
// stream id in its upper 64 bits and a block index in its lower 64 bits, so
// any replicate can jump straight to its own sequence and results do not
// depend on which thread draws them.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

namespace shiftrisk {

class Philox4x32 {
 public:
  using result_type = std::uint64_t;

  static constexpr std::uint32_t kMulA = 0xD2511F53u;
  static constexpr std::uint32_t kMulB = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeylA = 0x9E3779B9u;  // golden ratio
  static constexpr std::uint32_t kWeylB = 0xBB67AE85u;  // sqrt(3) - 1
  static constexpr int kRounds = 10;

  Philox4x32(std::uint64_t key, std::uint64_t stream) : key_(key), stream_(stream) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (have_ == 0) {
      block_ = bijection(block_index_++);
      have_ = 2;
    }
    --have_;
    const auto& b = block_;
    return have_ == 1 ? (std::uint64_t{b[0]} << 32 | b[1]) : (std::uint64_t{b[2]} << 32 | b[3]);
  }

  // Uniform on the open interval (0, 1) with 53 random bits.
  double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  // Standard normal by the Box-Muller transform; the second deviate of each
  // pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, n) by rejection (unbiased).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t v;
    do {
      v = (*this)();
    } while (v >= limit);
    return v % n;
  }

  // The raw keyed bijection on one 128-bit counter.
  std::array<std::uint32_t, 4> bijection(std::uint64_t index) const {
    std::array<std::uint32_t, 4> c{static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                                   static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    std::uint32_t k0 = static_cast<std::uint32_t>(key_);
    std::uint32_t k1 = static_cast<std::uint32_t>(key_ >> 32);
    for (int r = 0; r < kRounds; ++r) {
      const std::uint64_t p0 = std::uint64_t{kMulA} * c[0];
      const std::uint64_t p1 = std::uint64_t{kMulB} * c[2];
      c = {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k0, static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k1, static_cast<std::uint32_t>(p0)};
      k0 += kWeylA;
      k1 += kWeylB;
    }
    return c;
  }

 private:
  std::uint64_t key_;
  std::uint64_t stream_;
  std::uint64_t block_index_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int have_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// What a stream is used for inside one replicate.
enum class Purpose : std::uint8_t {
  data = 1,
  split = 2,
  truth = 3,
  folds = 4,
  bootstrap = 5,
  selection = 6,
  cv = 7,
};

// Stream id layout: replicate index in bits 8..63, purpose in bits 0..7.
inline Philox4x32 make_stream(std::uint64_t seed, std::uint64_t replicate, Purpose purpose) {
  return Philox4x32(seed, (replicate << 8) | static_cast<std::uint64_t>(purpose));
}

// Fisher-Yates shuffle driven by the counter-based generator (std::shuffle's
// draw pattern is implementation-defined).
template <typename T>
void shuffle(std::vector<T>& v, Philox4x32& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace shiftrisk
