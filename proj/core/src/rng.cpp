#include "divnorm/rng.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

#include "divnorm/errors.hpp"

namespace divnorm {

namespace {
constexpr double kTwoPow53Inv = 1.0 / 9007199254740992.0;  // 2^-53
}

double SeededRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * kTwoPow53Inv;
}

double SeededRng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double SeededRng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // Offset keeps u1 strictly inside (0, 1) so the log is finite.
  const double u1 = (static_cast<double>(next_u64() >> 11) + 0.5) * kTwoPow53Inv;
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

int SeededRng::below(int n) {
  if (n <= 0) throw ContractViolation("SeededRng::below: n must be positive");
  return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
}

std::string SeededRng::serialize() const {
  std::ostringstream os;
  os << engine_ << ' ' << (have_spare_ ? 1 : 0) << ' ';
  // The spare normal is stored as raw bits so the round-trip is exact.
  std::uint64_t bits;
  static_assert(sizeof(bits) == sizeof(spare_));
  std::memcpy(&bits, &spare_, sizeof(bits));
  os << bits;
  return os.str();
}

SeededRng SeededRng::deserialize(const std::string& s) {
  SeededRng rng(0);
  std::istringstream is(s);
  int spare_flag = 0;
  std::uint64_t bits = 0;
  if (!(is >> rng.engine_ >> spare_flag >> bits)) {
    throw ParseError("SeededRng::deserialize: malformed state string");
  }
  rng.have_spare_ = spare_flag != 0;
  std::memcpy(&rng.spare_, &bits, sizeof(bits));
  return rng;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace divnorm
