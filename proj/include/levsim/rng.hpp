// Deterministic random-number streams.
//
// Every stochastic ingredient of a simulation (thermal force per axis,
// measurement noise per channel, slow drifts) draws from its own named
// stream.  Streams are derived from the scenario seed with a splitmix64
// hash, so runs are reproducible bit-for-bit and the same physical noise
// realization can be replayed against different controllers.
//
// Gaussian variates use an explicit Box-Muller transform on top of
// mt19937_64 rather than std::normal_distribution, whose algorithm is
// implementation-defined; this keeps byte-identical traces portable
// across standard libraries.
#pragma once

#include <cstdint>
#include <random>

namespace levsim {

enum class NoiseStream : std::uint64_t {
  thermal_x = 1,
  thermal_y = 2,
  thermal_z = 3,
  measurement_x = 4,
  measurement_z = 5,
  drift = 6,
  initial_condition = 7,
};

/// splitmix64 finalizer; used to decorrelate per-stream seeds.
std::uint64_t splitmix64(std::uint64_t x);

class GaussianRng {
 public:
  GaussianRng(std::uint64_t seed, NoiseStream stream);

  /// Uniform double in [0, 1).
  double uniform();

  /// Standard normal variate, Box-Muller, one spare cached.
  double normal();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace levsim
