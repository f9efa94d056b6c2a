#include "common.hpp"

#include <json.hpp>

#include "hflab/errors.hpp"
#include "hflab/inequality.hpp"

using namespace hflab;
using namespace hflab::test;

TEST_CASE("exponent table") {
  auto e = exponents(0.3, 2, 0, 1.0);
  CHECK(e.p_nk == 5.0 / 3.0);
  CHECK(e.b == doctest::Approx(3 / 1.3));
  CHECK(e.r == doctest::Approx(3 / 0.7));
  CHECK_FALSE(e.theta_2.has_value());
  CHECK_FALSE(e.big_theta_n.has_value());
  CHECK(exponents(0.5, 4).r == 6.0);
  CHECK(exponents(0.8, 4).b == doctest::Approx(5.0 / 3.0).epsilon(1e-15));
  for (int n : {4, 6, 8}) CHECK(*exponents(0.8, n).big_theta_n == 1.0);
  CHECK(exponents(0.3, 4).a_n == 8.0 / 7.0);
  CHECK(exponents(1.0, 4).n_a == 3.0);
  CHECK(exponents(0.3, 4).q_star == doctest::Approx(6 / 1.6));
  CHECK(exponents(0.3, 4).theta == doctest::Approx(0.8));
  CHECK(exponents(0.4, 4).big_theta_n.value() == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(std::isinf(exponents(0.3, 4, 4).p_nk_conj));

  auto m = exponents(0.3, 4, 0, 5.0 / 3.0);
  CHECK(*m.theta_2 == doctest::Approx(0.6).epsilon(1e-14));
  CHECK(std::abs(*m.theta_n) <= 1e-14);
  CHECK(*exponents(0.3, 4, 2, 1.0).theta_n == doctest::Approx(0.0));

  CHECK_THROWS_AS(exponents(0.3, 4, 6), InvalidArgument);
  CHECK_THROWS_AS(exponents(0.3, 3), InvalidArgument);
  CHECK_THROWS_AS(exponents(2.5, 4), InvalidArgument);
  CHECK_THROWS_AS(exponents(0.3, 4, 0, 0.5), InvalidArgument);
}

TEST_CASE("big theta_n <= 1 iff a <= 4/5") {
  for (int i = 1; i <= 100; ++i) {
    const double a = 0.0199 * i;
    for (int n : {4, 6, 8}) CHECK((*exponents(a, n).big_theta_n <= 1.0) == (a <= 0.8));
  }
}

TEST_CASE("composition exponent sums") {
  for (int n = 2; n <= 8; n += 2) {
    for (const auto& c : even_compositions(2 * (n - 1), 4, n)) {
      int total = 0;
      for (int k : c) total += n - k;
      CHECK(total == 2 * (n + 1));
    }
  }
  CHECK(even_compositions(4, 2, 4).size() == 3);
  std::vector<int> orders{0, 2};
  auto q = proportional_exponents(4, orders, 0.5);
  REQUIRE(q.has_value());
  double sum = 0.0;
  for (double v : *q) sum += 1 - 1 / v;
  CHECK(sum == doctest::Approx(0.5));
}

TEST_CASE("admissibility flags") {
  auto a = admissibility(0.3, 4);
  CHECK(a.regularity);
  CHECK(a.moments);
  CHECK(a.short_time);
  auto b = admissibility(0.9, 4);
  CHECK_FALSE(b.regularity);
  CHECK_FALSE(b.moments);
  CHECK(b.short_time);
  CHECK(admissibility(0.8, 4).moments);
}

TEST_CASE("kinetic interpolation") {
  const double L = 2 * kPi;
  auto g = TorusGrid::create(8, L);
  std::vector<std::array<int, 3>> m{{1, 1, 1}};
  auto pw = plane_wave_state(1.0, g, m, {1.0});
  auto r = check_kinetic_interpolation(pw, 2, 0);
  CHECK(rel_err(r.lhs, std::pow(L, -3 + 9.0 / 5)) <= 1e-10);
  CHECK(rel_err(r.rhs_core, std::pow(pw.weights()[0], 0.4) * std::pow(3.0, 0.6)) <= 1e-10);
  CHECK(std::isfinite(r.ratio));

  auto s = random_mixed_state(5, 0.5, g, 3, 0.1);
  for (int n : {2, 4}) CHECK(std::abs(check_kinetic_interpolation(s, n, n).ratio - 1) <= 1e-12);
  auto j = nlohmann::json::parse(r.to_json());
  CHECK(j["id"] == "kinetic_interpolation");
  CHECK(j.contains("rhs_core"));
}

TEST_CASE("merged interpolation") {
  auto g = TorusGrid::create(16, 4 * kPi);
  std::vector<PhaseSpaceCenter> c{{{0, 0, 0}, {0, 0, 0}}};
  auto s = coherent_state_lattice(1.0, g, c, 1.0);
  auto r = check_merged_interpolation(s, 4, 0, 5.0 / 3.0);
  CHECK(r.params.at("theta_2") == doctest::Approx(0.6));
  CHECK(std::isfinite(r.ratio));
  auto d = check_merged_interpolation(s, 4, 2, 1.0);
  CHECK(d.ratio <= 1.0);
  CHECK(rel_err(d.lhs, moment(s, 2)) <= 1e-12);
  CHECK_THROWS_AS(check_merged_interpolation(s, 2, 0, 1.0), InvalidArgument);
}

TEST_CASE("weighted schatten moment") {
  const double L = 2 * kPi;
  auto g = TorusGrid::create(8, L);
  std::vector<std::array<int, 3>> m{{1, 0, 0}};
  auto pw = plane_wave_state(1.0, g, m, {1.0});
  auto r = check_weighted_schatten_moment(pw, 2, 2.0);
  const double lam = pw.weights()[0];
  CHECK(rel_err(r.lhs, std::pow(pw.h(), 1.5) * lam * 2) <= 1e-10);
  CHECK(rel_err(r.rhs_core, std::sqrt(lam) * std::sqrt(2.0)) <= 1e-10);
  CHECK(r.lhs <= r.params.at("chain") * (1 + 1e-10));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto s = random_mixed_state(seed, 1.0, g, 3, 0.1);
    auto rep = check_weighted_schatten_moment(s, 2, 3.0);
    CHECK(rep.lhs <= rep.params.at("chain") * (1 + 1e-10));
  }
  CHECK_THROWS_AS(check_weighted_schatten_moment(pw, 2, 1.5), InvalidArgument);
}

TEST_CASE("commutator traces vanish on plane waves") {
  auto g = TorusGrid::create(8, 2 * kPi);
  InteractionKernel k(g, 0.3, -1);
  std::vector<std::array<int, 3>> m{{1, 0, 0}, {0, 1, 1}};
  auto s = plane_wave_state(1.0, g, m, {2.0, 1.0});
  for (int axis = 0; axis < 3; ++axis) {
    CHECK(std::abs(commutator_trace_V_value(k, s, 2, axis)) <= 1e-12);
    CHECK(commutator_trace_V(k, s, 4, axis).lhs <= 1e-12);
    for (TraceMethod method : {TraceMethod::direct, TraceMethod::leibniz}) {
      CHECK(std::abs(commutator_trace_X_value(k, s, 2, axis, method)) <= 1e-10);
    }
  }
}

TEST_CASE("exchange commutator: direct and leibniz agree") {
  auto g = TorusGrid::create(16, 2 * kPi);
  for (double a : {0.2, 0.4}) {
    InteractionKernel k(g, a, -1);
    auto s = random_mixed_state(17, 1.0, g, 3, 0.6);
    for (int n : {2, 4}) {
      auto check = commutator_trace_X(k, s, n, n == 2 ? 0 : 2);
      CHECK(check.relative_gap <= 1e-8);
      CHECK(std::abs(check.direct) > 0.0);
      CHECK(std::isfinite(check.report.ratio));
    }
  }
}

TEST_CASE("exchange commutator mismatch raises") {
  auto g = TorusGrid::create(16, 2 * kPi);
  InteractionKernel k(g, 0.3, -1);
  auto rough = random_mixed_state(3, 1.0, g, 3, 0.05);
  CHECK_THROWS_AS(commutator_trace_X(k, rough, 4, 0), ConsistencyError);
}

TEST_CASE("weighted commutator") {
  auto g = TorusGrid::create(8, 2 * kPi);
  InteractionKernel k(g, 0.3, -1);
  std::vector<std::array<int, 3>> m{{1, 0, 0}};
  auto uniform = plane_wave_state(1.0, g, m, {1.0});
  auto mu = random_mixed_state(2, 1.0, g, 2, 0.1);
  auto zero = check_weighted_commutator(k, uniform, mu, 1, 0);
  CHECK(zero.force.lhs <= 1e-12);
  CHECK(zero.potential.lhs <= 1e-12);
  auto s = random_mixed_state(3, 1.0, g, 2, 0.1);
  auto r = check_weighted_commutator(k, s, mu, 2, 1);
  CHECK(r.force.lhs > 0.0);
  CHECK(std::isfinite(r.force.ratio));
  CHECK(r.potential.rhs_core > r.force.rhs_core);
}

TEST_CASE("moment growth") {
  auto g = TorusGrid::create(8, 2 * kPi);
  InteractionKernel free(g, 0.3, 0);
  auto s = random_mixed_state(3, 1.0, g, 2, 0.1);
  CHECK(moment_growth_rhs(s, 4, 0.4) > 0.0);
  CHECK_THROWS_AS(moment_growth_rhs(s, 2, 0.4), InvalidArgument);
  CHECK(std::abs(moment_time_derivative(free, s, 4, Mode::hartree_fock)) == 0.0);

  InteractionKernel k(g, 0.3, -1);
  PropagatorConfig cfg;
  cfg.dt = 5e-4;
  const double d = moment_time_derivative(k, s, 2, Mode::hartree_fock);
  auto plus = evolve(k, s, 1e-3, cfg, 2).state;
  const double fd = (moment(plus, 2) - moment(s, 2)) / 1e-3;
  CHECK(std::abs(fd - d) <= 1e-2 * std::abs(d) + 1e-12);
}

TEST_CASE("gronwall envelope") {
  const double dt = 1e-3;
  std::vector<double> zero(1001, 0.0), one(1001, 1.0);
  auto flat = gronwall_envelope(zero, dt, 0.7, 2.0);
  CHECK(flat.back() == 2.0);
  auto ex = gronwall_envelope(one, dt, 1.0, 1.5);
  CHECK(rel_err(ex.back(), 1.5 * std::exp(1.0)) <= 1e-6);
  auto half = gronwall_envelope(one, dt, 0.5, 1.5);
  CHECK(rel_err(half.back(), std::pow(std::sqrt(1.5) + 0.5, 2)) <= 1e-6);
  CHECK_THROWS_AS(gronwall_envelope(one, dt, 0.5, 0.0), InvalidArgument);
  CHECK_THROWS_AS(gronwall_envelope(one, dt, 1.5, 1.0), InvalidArgument);
}

TEST_CASE("ensemble aggregate") {
  std::vector<IneqReport> reports(3);
  for (int i = 0; i < 3; ++i) {
    reports[i].id = "x";
    reports[i].ratio = 1.0 + i;
    reports[i].hbar = 0.5;
  }
  auto agg = aggregate(reports);
  CHECK(agg.count == 3);
  CHECK(agg.max_ratio == 3.0);
  CHECK(agg.median_ratio == 2.0);
  CHECK(agg.all_finite);
}
