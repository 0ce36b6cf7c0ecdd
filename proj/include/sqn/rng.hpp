#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sqn {

// Stream ids for deriving independent generators from one experiment seed.
enum class StreamId : std::uint64_t {
  Arrivals = 1,
  Links = 2,
  Policy = 3,
  Init = 4,
};

inline std::uint64_t splitmix64_next(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_stream_seed(std::uint64_t experiment_seed, StreamId id) {
  std::uint64_t x = experiment_seed;
  std::uint64_t s = 0;
  // burn as many outputs as the stream id so streams decorrelate
  for (std::uint64_t i = 0; i <= static_cast<std::uint64_t>(id); ++i) s = splitmix64_next(x);
  return s;
}

// mt19937_64 wrapper with a fixed uniform mapping and exact text serialization.
class RandomStream {
 public:
  RandomStream() : engine_(0) {}
  RandomStream(std::uint64_t experiment_seed, StreamId id)
      : engine_(derive_stream_seed(experiment_seed, id)) {}

  explicit RandomStream(std::uint64_t raw_seed) : engine_(raw_seed) {}

  // uniform in [0, 1) with 53 random bits
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  std::uint64_t bits() { return engine_(); }

  // standard normal via Box-Muller; consumes two uniforms
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    // avoid log(0)
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  std::string save() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void restore(const std::string& text) {
    std::istringstream is(text);
    is >> engine_;
    if (is.fail()) throw std::runtime_error("bad rng state string");
  }

  bool operator==(const RandomStream& o) const { return engine_ == o.engine_; }

 private:
  std::mt19937_64 engine_;
};

// Inverse-CDF sample over the listed order; u in [0,1).
// Entries with zero probability can never be selected.
inline int sample_from_pmf(const std::vector<int>& values,
                           const std::vector<double>& probs, double u) {
  if (values.empty() || values.size() != probs.size())
    throw std::invalid_argument("sample_from_pmf: bad pmf");
  double cum = 0.0;
  int last_positive = -1;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last_positive = static_cast<int>(i);
    cum += probs[i];
    if (u < cum) return values[i];
  }
  if (last_positive < 0) throw std::invalid_argument("sample_from_pmf: all-zero pmf");
  return values[last_positive];
}

}  // namespace sqn
