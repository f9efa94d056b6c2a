#pragma once

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hflab/grid.hpp"
#include "hflab/state.hpp"

namespace hflab::test {

inline constexpr double kPi = std::numbers::pi;

inline double rel_err(double value, double expected) {
  return std::abs(value - expected) / std::max(std::abs(expected), 1e-300);
}

inline ScalarField random_field(const GridPtr& grid, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  ScalarField f(grid);
  for (auto& v : f.values()) v = {normal(rng), normal(rng)};
  return f;
}

inline ScalarField gaussian(const GridPtr& grid, double sigma, std::array<double, 3> c = {0, 0, 0}) {
  return ScalarField::from_function(grid, [&](double x, double y, double z) {
    const double r2 = (x - c[0]) * (x - c[0]) + (y - c[1]) * (y - c[1]) + (z - c[2]) * (z - c[2]);
    return cplx(std::exp(-r2 / (2 * sigma * sigma)), 0.0);
  });
}

inline double max_diff(const ScalarField& a, const ScalarField& b) { return max_abs(a - b); }

}  // namespace hflab::test
