#pragma once

// Seeded data generators for the fitting tests and the acceptance run.

#include "support/oracles.hpp"

#include <random>

namespace sim {

struct GridData {
  arelink::AreaCollection areas;
  arelink::NbStructure nb;
  std::vector<double> gamma;  // true spatial effect per unit; all zero without a field
};

/// Square rook grid with attributes unit, x, area and a Poisson count y drawn
/// from exp(beta0 + beta1 * x + gamma) * area, gamma an ICAR draw of precision
/// tau (omitted when tau is 0).
inline GridData poisson_grid(int side, double beta0, double beta1, double tau, unsigned seed) {
  std::mt19937 rng(seed);
  GridData g{oracle::grid(side, side), oracle::rook_nb(side, side), {}};
  g.gamma = tau > 0 ? oracle::icar_draw(g.nb, tau, rng) : std::vector<double>(g.areas.size(), 0.0);
  std::uniform_real_distribution<double> ux(-1.0, 1.0), ua(0.5, 2.0);
  for (std::size_t i = 0; i < g.areas.size(); ++i) {
    auto& u = g.areas[i];
    const double x = ux(rng), area = ua(rng);
    const double mu = std::exp(beta0 + beta1 * x + g.gamma[i]) * area;
    u.attrs["unit"] = u.name;
    u.attrs["x"] = x;
    u.attrs["area"] = area;
    u.attrs["y"] = std::poisson_distribution<int>(mu)(rng);
  }
  return g;
}

/// Square rook grid with a Gaussian response that has no spatial signal.
inline GridData gaussian_noise_grid(int side, unsigned seed) {
  std::mt19937 rng(seed);
  GridData g{oracle::grid(side, side), oracle::rook_nb(side, side), {}};
  g.gamma.assign(g.areas.size(), 0.0);
  std::normal_distribution<double> z(0.0, 1.0);
  for (auto& u : g.areas.units()) {
    u.attrs["unit"] = u.name;
    u.attrs["y"] = 2.0 + z(rng);
  }
  return g;
}

}  // namespace sim
