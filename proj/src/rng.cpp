#include "levsim/rng.hpp"

#include <cmath>

#include "levsim/units.hpp"

namespace levsim {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

GaussianRng::GaussianRng(std::uint64_t seed, NoiseStream stream)
    : engine_(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(stream)))) {}

double GaussianRng::uniform() {
  // 53 random bits -> double in [0, 1).
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double GaussianRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller; u1 is shifted away from 0 so log() stays finite.
  const double u1 = uniform() + 0x1.0p-54;
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = two_pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

}  // namespace levsim
