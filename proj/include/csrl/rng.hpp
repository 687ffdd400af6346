#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace csrl {

// Splitmix64-based generator. Single word of state, identical sequences on
// every platform, trivially serializable into checkpoints.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(mix(seed ^ 0x9e3779b97f4a7c15ull)) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, two draws per call (no cached spare, keeps state one word).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  std::uint64_t raw_state() const { return state_; }
  void set_raw_state(std::uint64_t s) { state_ = s; }

  // Independent stream keyed on (current state, stream id). Used to hand each
  // purpose (collection, init, calibration, ...) its own generator.
  Rng derive(std::uint64_t stream) const {
    Rng r(0);
    r.state_ = mix(state_ ^ mix(stream + 0x9e3779b97f4a7c15ull));
    return r;
  }

  Rng derive(std::string_view tag) const { return derive(fnv1a(tag)); }

private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    return h;
  }

  std::uint64_t state_;
};

}  // namespace csrl
