#pragma once

// Wave functions and random draws shared by the unit and acceptance tests.

#include <cstdint>
#include <random>
#include <vector>

#include "hbdm/wavefunction.hpp"

namespace hbdm::testing {

inline PlaneWaveMode mode(double k, int sign = +1, Complex amplitude = {1.0, 0.0}) {
  PlaneWaveMode m;
  m.k = {k, 0.0, 0.0};
  m.energy_sign = sign;
  m.amplitude = amplitude;
  return m;
}

inline MultiTimeWaveFunction single_mode(double k = 0.7, double mass = 1.0) {
  return MultiTimeWaveFunction(DiracRepresentation::standard(1), {mass},
                               {ProductTerm{{1.0, 0.0}, {{mode(k)}}}});
}

inline MultiTimeWaveFunction two_mode(double mass = 1.0) {
  return MultiTimeWaveFunction(
      DiracRepresentation::standard(1), {mass},
      {ProductTerm{{1.0, 0.0}, {{mode(0.4), mode(-1.1, +1, {0.3, 0.5}), mode(0.9, -1, {0.2, -0.1})}}}});
}

/// Two particles, two product terms with different momenta: entangled.
inline MultiTimeWaveFunction entangled_pair(const DiracRepresentation& rep = DiracRepresentation::standard(1)) {
  ProductTerm a{{1.0, 0.0}, {{mode(0.8), mode(-0.3, +1, {0.4, 0.2})}, {mode(-0.6)}}};
  ProductTerm b{{0.3, 0.7}, {{mode(-1.2)}, {mode(1.3), mode(0.2, +1, {0.5, -0.3})}}};
  return MultiTimeWaveFunction(rep, {1.0, 0.8}, {a, b});
}

inline MultiTimeWaveFunction rest_pair() {
  ProductTerm t{{1.0, 0.0}, {{mode(0.0)}, {mode(0.0)}}};
  return MultiTimeWaveFunction(DiracRepresentation::standard(1), {1.0, 1.0}, {t});
}

inline MultiTimeWaveFunction product_pair() {
  ProductTerm t{{1.0, 0.0}, {{mode(0.5), mode(-0.4, +1, {0.3, 0.1})}, {mode(-0.7), mode(0.9, +1, {0.2, 0.4})}}};
  return MultiTimeWaveFunction(DiracRepresentation::standard(1), {1.0, 1.0}, {t});
}

/// Two particles in a superposition of crossing Gaussian packets on a
/// periodic domain (period 30); both terms send each particle across x = 0.
inline MultiTimeWaveFunction entangled_packets(double separation = 1.5, double momentum = 1.0,
                                               double width = 0.8, double period = 30.0) {
  const auto l = gaussian_packet_modes(-separation, momentum, width, period);
  const auto r = gaussian_packet_modes(separation, -momentum, width, period);
  const auto l2 = gaussian_packet_modes(-separation, 0.6 * momentum, width, period);
  const auto r2 = gaussian_packet_modes(separation, -0.6 * momentum, width, period);
  ProductTerm a{{1.0, 0.0}, {l, r}};
  ProductTerm b{{0.0, 0.8}, {r2, l2}};
  return MultiTimeWaveFunction(DiracRepresentation::standard(1), {1.0, 1.0}, {a, b});
}

/// Same packets without the second term: a product state.
inline MultiTimeWaveFunction product_packets(double separation = 1.5, double momentum = 1.0,
                                             double width = 0.8, double period = 30.0) {
  const auto l = gaussian_packet_modes(-separation, momentum, width, period);
  const auto r = gaussian_packet_modes(separation, -momentum, width, period);
  return MultiTimeWaveFunction(DiracRepresentation::standard(1), {1.0, 1.0},
                               {ProductTerm{{1.0, 0.0}, {l, r}}});
}

struct Rng {
  std::mt19937_64 engine;
  explicit Rng(std::uint64_t seed) : engine(seed) {}
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(engine() >> 11) * 0x1.0p-53);
  }
};

}  // namespace hbdm::testing
