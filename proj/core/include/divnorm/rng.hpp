#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace divnorm {

// Deterministic random source. The raw stream is std::mt19937_64, whose
// output sequence is pinned by the C++ standard, so the same seed yields
// the same u64 stream on every platform. Real-valued draws are built on
// top of that stream with explicit arithmetic (no std::*_distribution,
// which is implementation-defined):
//
//   uniform():  (next_u64() >> 11) * 2^-53            in [0, 1)
//   normal():   Box-Muller on u1 in (0,1), u2 in [0,1), pair cached
//
// Single-owner mutable state; do not share one instance across threads.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  double uniform();                          // [0, 1)
  double uniform(double lo, double hi);      // [lo, hi)
  double normal();                           // standard normal
  int below(int n);                          // uniform in [0, n)

  // Fisher-Yates with below(); std::shuffle is not seed-stable across
  // standard libraries.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      std::swap(v[i], v[below(i + 1)]);
    }
  }

  // Exact state round-trip, used by checkpoints.
  std::string serialize() const;
  static SeededRng deserialize(const std::string& s);

  bool operator==(const SeededRng& other) const {
    return engine_ == other.engine_ && have_spare_ == other.have_spare_ &&
           spare_ == other.spare_;
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Stateless mix of a base seed and a stream index, for deriving independent
// per-epoch / per-task generators (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace divnorm
