#include "common.hpp"

#include "hflab/errors.hpp"
#include "hflab/observables.hpp"

using namespace hflab;
using namespace hflab::test;

namespace {

MixedState plane_wave_one(double hbar, const GridPtr& g, std::array<int, 3> m) {
  std::vector<std::array<int, 3>> modes{m};
  return plane_wave_state(hbar, g, modes, {1.0});
}

}  // namespace

TEST_CASE("plane wave moments and densities") {
  const double L = 3.0, hbar = 0.6;
  auto g = TorusGrid::create(8, L);
  auto s = plane_wave_one(hbar, g, {1, 2, -1});
  const double p = hbar * 2 * kPi / L * std::sqrt(6.0);
  for (int k : {0, 2, 4, 6}) {
    auto rho = moment_density(s, k);
    for (std::size_t i = 0; i < rho.size(); ++i) {
      CHECK(std::abs(rho[i].real() * L * L * L - std::pow(p, k)) <= 1e-10 * std::pow(p, k));
    }
    CHECK(rel_err(moment(s, k), std::pow(p, k)) <= 1e-10);
  }
  auto rho0 = moment_density(s, 0);
  auto rho = spatial_density(s);
  CHECK(rho0.values() == rho.values());
  CHECK_THROWS_AS(moment(s, 3), InvalidArgument);
  CHECK_THROWS_AS(moment_density(s, 1), InvalidArgument);
}

TEST_CASE("moments of random states") {
  auto g = TorusGrid::create(8, 2 * kPi);
  auto s = random_mixed_state(6, 0.5, g, 4, 0.1);
  CHECK(moment(s, 0) == doctest::Approx(1.0).epsilon(1e-12));
  for (int n : {2, 4}) {
    CHECK(rel_err(lebesgue_norm(moment_density(s, n), 1.0), moment(s, n)) <= 1e-12);
    CHECK(rel_err(moment_real(s, n), moment(s, n)) <= 1e-12);
  }
}

TEST_CASE("component sum equivalence") {
  auto g = TorusGrid::create(8, 2 * kPi);
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto s = random_mixed_state(seed, 1.0, g, 1 + seed % 4, 0.05);
    for (int n : {2, 4}) {
      double comp = 0.0;
      for (int l = 0; l < 3; ++l) {
        auto w = Multiplier::from_function(g, [&](const Frequency& xi) {
          return cplx(1.0 + std::pow(s.hbar() * xi[l], n), 0);
        });
        for (int j = 0; j < s.rank(); ++j) {
          comp += s.h3() * s.weights()[j] * quadratic_form(s.orbital(j), w).real();
        }
      }
      const double full = 1.0 + moment(s, n);
      worst = std::max({worst, full / comp, comp / full});
      CHECK(std::max(full / comp, comp / full) <= 3 * std::pow(3.0, n / 2));
    }
  }
  CHECK(worst >= 1.0);
}

TEST_CASE("schatten norms of the weights") {
  auto g = TorusGrid::create(8, 2 * kPi);
  auto s = random_mixed_state(2, 0.5, g, 5, 0.1);
  CHECK(schatten_lp(s, 1.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(schatten_lp(s, kInfinity) == s.weights()[0]);
  for (double p : {1.5, 2.0, 4.0}) {
    const double bound = std::pow(schatten_lp(s, 1.0), 1 / p) * std::pow(schatten_lp(s, kInfinity), 1 - 1 / p);
    CHECK(schatten_lp(s, p) <= bound * (1 + 1e-12));
  }
  CHECK_THROWS_AS(schatten_lp(s, 0.5), InvalidArgument);
  auto single = random_mixed_state(2, 0.5, g, 1, 0.1);
  CHECK(rel_err(schatten_lp(single, kInfinity), 1 / single.h3()) <= 1e-14);
}

TEST_CASE("low rank singular values") {
  auto g = TorusGrid::create(8, 2.0);
  auto u = random_field(g, 1), v = random_field(g, 2);
  auto sv = low_rank_singular_values({{u}, {v}});
  CHECK(rel_err(sv[0], norm(u) * norm(v)) <= 1e-12);

  auto s = random_mixed_state(9, 1.0, g, 3, 0.1);
  LowRankOperator diag;
  for (int j = 0; j < 3; ++j) {
    diag.left.push_back(s.weights()[j] * s.orbital(j));
    diag.right.push_back(s.orbital(j));
  }
  auto values = low_rank_singular_values(diag);
  for (int j = 0; j < 3; ++j) CHECK(rel_err(values[j], s.weights()[j]) <= 1e-12);

  LowRankOperator op;
  for (int i = 0; i < 4; ++i) {
    op.left.push_back(random_field(g, 10 + i));
    op.right.push_back(random_field(g, 20 + i));
  }
  auto base = low_rank_singular_values(op);
  LowRankOperator permuted{{op.left[3], op.left[1], op.left[0], op.left[2]},
                           {op.right[3], op.right[1], op.right[0], op.right[2]}};
  LowRankOperator split = op;
  split.left[0] *= 0.5;
  split.left.push_back(split.left[0]);
  split.right.push_back(split.right[0]);
  auto vp = low_rank_singular_values(permuted);
  auto vs = low_rank_singular_values(split);
  REQUIRE(vs.size() == 5);
  for (int i = 0; i < 4; ++i) {
    CHECK(std::abs(vp[i] - base[i]) <= 1e-10 * base[0]);
    CHECK(std::abs(vs[i] - base[i]) <= 1e-10 * base[0]);
  }
  CHECK(vs[4] <= 1e-10 * base[0]);
  CHECK_THROWS_AS(low_rank_singular_values({{u}, {}}), InvalidArgument);
}

TEST_CASE("weighted schatten") {
  const double L = 2 * kPi, hbar = 0.5;
  auto g = TorusGrid::create(8, L);
  auto s = random_mixed_state(3, hbar, g, 3, 0.1);
  auto one = Multiplier::from_function(g, [](const Frequency&) { return cplx(1.0, 0); });
  for (double p : {1.0, 2.0, 3.0, kInfinity}) {
    CHECK(rel_err(weighted_schatten(s, one, p), schatten_lp(s, p)) <= 1e-12);
    CHECK(rel_err(weighted_schatten_real(s, 0.0, p), 2 * schatten_lp(s, p)) <= 1e-12);
    CHECK(rel_err(weighted_schatten_real(s, 2.0, p), weighted_schatten(s, 2, p)) <= 1e-12);
  }
  auto pw = plane_wave_one(hbar, g, {0, 1, 1});
  const double pk = hbar * std::sqrt(2.0);
  for (double p : {1.0, 2.0, kInfinity}) {
    const double expected = std::pow(pw.h(), std::isinf(p) ? 0.0 : 3 / p) * pw.weights()[0] * (1 + std::pow(pk, 4));
    CHECK(rel_err(weighted_schatten(pw, 4, p), expected) <= 1e-10);
  }
  CHECK_THROWS_AS(weighted_schatten(s, 3, 2.0), InvalidArgument);
}

TEST_CASE("sobolev factors and norms") {
  const double L = 2 * kPi, hbar = 1.0;
  auto g = TorusGrid::create(8, L);
  auto pw = plane_wave_one(hbar, g, {1, 0, 0});
  for (Direction d : {Direction::x1, Direction::x2, Direction::x3}) {
    auto sv = low_rank_singular_values(sobolev_factors(pw, d));
    CHECK(sv[0] <= 1e-12);
  }
  CHECK_THROWS_AS(sobolev_factors(pw, Direction::xi1), LocalizationError);
  SobolevOptions off;
  off.check_localization = false;
  CHECK(sobolev_norm(pw, 2, 2.0, off).directions[3] > 0.0);

  auto g32 = TorusGrid::create(32, 4 * kPi);
  std::vector<PhaseSpaceCenter> c{{{0, 0, 0}, {0, 0, 0}}};
  auto gauss = coherent_state_lattice(1.0, g32, c, 0.6);
  auto sv = low_rank_singular_values(sobolev_factors(gauss, Direction::xi1));
  CHECK(rel_err(sv[1], sv[0]) <= 1e-10);
  auto n0 = sobolev_norm(gauss, 0, 2.0);
  double unweighted = schatten_lp(gauss, 2.0);
  for (Direction d : kAllDirections) {
    unweighted += semiclassical_schatten(low_rank_singular_values(sobolev_factors(gauss, d)), 2.0, 1.0);
  }
  CHECK(rel_err(n0.total(), 2 * unweighted) <= 1e-12);
  CHECK(sobolev_norm(gauss, 2, 4.0).total() <= sobolev_norm(gauss, 2, 2.0).total() * (1 + 1e-12) *
                                                     std::pow(gauss.h(), 3.0 / 4 - 3.0 / 2));

  auto a = plane_wave_one(hbar, g, {1, 0, 0});
  auto mix = random_mixed_state(4, hbar, g, 2, 0.1);
  auto f = sobolev_factors(mix, Direction::x2);
  CHECK(f.rank() == 4);
}

TEST_CASE("lp plus minus eps") {
  auto g = TorusGrid::create(8, 2 * kPi);
  auto s = random_mixed_state(3, 1.0, g, 3, 0.1);
  CHECK(rel_err(lp_pm_eps(s, 2.5, 6.0, 1e-4), 2 * weighted_schatten_real(s, 2.5, 6.0)) <= 1e-6);
  CHECK_THROWS_AS(lp_pm_eps(s, 2.0, 1.2, 0.5), InvalidArgument);
  const double hbar = 1.0;
  std::vector<std::array<int, 3>> m{{1, 1, 0}};
  auto pw = plane_wave_state(hbar, g, m, {1.0});
  const double pk = std::sqrt(2.0);
  const double lam = pw.weights()[0];
  double expected = 0.0;
  for (double q : {6.5, 5.5}) expected += std::pow(pw.h(), 3 / q) * lam * (1 + std::pow(pk, 3.2));
  CHECK(rel_err(lp_pm_eps(pw, 3.2, 6.0, 0.5), expected) <= 1e-10);
}

TEST_CASE("lebesgue norms") {
  const double L = 1.5;
  auto g = TorusGrid::create(8, L);
  auto c = ScalarField::from_function(g, [](double, double, double) { return cplx(-2.0, 0); });
  for (double p : {1.0, 2.0, 3.5}) CHECK(rel_err(lebesgue_norm(c, p), 2 * std::pow(L, 3 / p)) <= 1e-13);
  CHECK(lebesgue_norm(c, kInfinity) == 2.0);
  auto f = random_field(g, 1), h = random_field(g, 2);
  CHECK(lebesgue_norm(multiply(f, h), 1.0) <= lebesgue_norm(f, 2.0) * lebesgue_norm(h, 2.0));
  CHECK_THROWS_AS(lebesgue_norm(c, 0.9), InvalidArgument);
}

TEST_CASE("free evolution preserves weighted norms") {
  auto g = TorusGrid::create(8, 2 * kPi);
  InteractionKernel free(g, 0.3, 0);
  auto s = random_mixed_state(3, 1.0, g, 3, 0.1);
  PropagatorConfig cfg;
  cfg.dt = 0.01;
  auto r = evolve(free, s, 0.2, cfg, 20).state;
  for (double p : {2.0, kInfinity}) CHECK(rel_err(weighted_schatten(r, 2, p), weighted_schatten(s, 2, p)) <= 1e-11);
}

TEST_CASE("observation record columns") {
  auto g = TorusGrid::create(8, 2 * kPi);
  InteractionKernel k(g, 0.3, -1);
  auto s = random_mixed_state(3, 1.0, g, 2, 0.1);
  ObservableConfig cfg;
  cfg.check_localization = false;
  cfg.density_norms = {{2, 2.0}};
  auto rec = observe(cfg, k, s, Mode::hartree_fock, 0.0);
  CHECK(rec.names == observable_columns(cfg));
  CHECK(rec.value("M_0") == doctest::Approx(1.0));
  for (double v : rec.values) CHECK(std::isfinite(v));
}
