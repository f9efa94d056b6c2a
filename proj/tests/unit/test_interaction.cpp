#include "common.hpp"

#include "hflab/errors.hpp"
#include "hflab/interaction.hpp"
#include "hflab/observables.hpp"

using namespace hflab;
using namespace hflab::test;

TEST_CASE("riesz constant") {
  CHECK(rel_err(riesz_constant(1.0), 4 * kPi) <= 1e-14);
  CHECK(rel_err(riesz_constant(1.5) * riesz_constant(1.5), std::pow(2 * kPi, 3)) <= 1e-13);
  for (double a : {0.4, 0.9, 2.2}) {
    CHECK(rel_err(riesz_constant(a) * riesz_constant(3 - a), std::pow(2 * kPi, 3)) <= 1e-13);
  }
  // |x|^-a tends to 1 as a -> 0, whose transform is concentrated at xi = 0: the constant
  // vanishes in the limit and increases on (0, 1/2].
  double previous = 0.0;
  for (double a : {0.1, 0.2, 0.3, 0.4, 0.5}) {
    CHECK(riesz_constant(a) > previous);
    previous = riesz_constant(a);
  }
  CHECK(riesz_constant(1e-6) < 1e-4);
  CHECK_THROWS_AS(riesz_constant(0.0), InvalidArgument);
  CHECK_THROWS_AS(riesz_constant(3.0), InvalidArgument);
}

TEST_CASE("kernel symbol") {
  auto g = TorusGrid::create(8, 2 * kPi);
  InteractionKernel k(g, 0.3, -1);
  auto sym = k.symbol_values();
  CHECK(sym[0] == 0.0);
  for (std::size_t i = 1; i < sym.size(); ++i) {
    const double expected = -riesz_constant(0.3) * std::pow(g->xi_norm2()[i], (0.3 - 3) / 2);
    CHECK(rel_err(sym[i], expected) <= 1e-14);
  }
  CHECK_THROWS_AS(InteractionKernel(g, 2.0, 1), InvalidArgument);
  CHECK_THROWS_AS(InteractionKernel(g, 0.3, 2), InvalidArgument);
  InteractionKernel dealiased(g, 0.3, 1, true);
  CHECK(dealiased.symbol_values()[g->index(0, 0, 4)] == 0.0);
}

TEST_CASE("mean field of uniform and single-cosine densities") {
  const double L = 3.0, eps = 0.01, a = 0.3;
  auto g = TorusGrid::create(16, L);
  InteractionKernel k(g, a, 1);
  auto uniform = ScalarField::from_function(g, [&](double, double, double) { return cplx(1 / (L * L * L), 0); });
  CHECK(max_abs(mean_field(k, uniform)) <= 1e-14);
  auto forces = force_field(k, uniform);
  for (const auto& f : forces) CHECK(max_abs(f) <= 1e-14);

  const double q = 2 * kPi / L;
  auto cosine = ScalarField::from_function(
      g, [&](double x, double, double) { return cplx(1 / (L * L * L) + eps * std::cos(q * x), 0); });
  const double amp = riesz_constant(a) * std::pow(q, a - 3) * eps;
  auto expected_v = ScalarField::from_function(g, [&](double x, double, double) { return cplx(amp * std::cos(q * x), 0); });
  CHECK(max_diff(mean_field(k, cosine), expected_v) <= 1e-12 * amp);
  auto e = force_field(k, cosine);
  auto expected_e = ScalarField::from_function(g, [&](double x, double, double) { return cplx(amp * q * std::sin(q * x), 0); });
  CHECK(max_diff(e[0], expected_e) <= 1e-12 * amp * q);
  CHECK(max_abs(e[1]) <= 1e-14);

  InteractionKernel flipped(g, a, -1);
  CHECK(max_diff(mean_field(flipped, cosine), -1.0 * expected_v) <= 1e-12 * amp);
}

TEST_CASE("force is minus the gradient of the mean field") {
  auto g = TorusGrid::create(16, 2 * kPi);
  InteractionKernel k(g, 0.4, -1);
  auto s = random_mixed_state(2, 1.0, g, 3, 0.3);
  auto rho = spatial_density(s);
  auto v = mean_field(k, rho);
  auto grad = gradient(v);
  auto e = force_field(k, rho);
  for (int l = 0; l < 3; ++l) {
    double worst = 0.0;
    for (std::size_t i = 0; i < e[l].size(); ++i) worst = std::max(worst, std::abs(e[l][i] + grad[l][i].real()));
    CHECK(worst <= 1e-12 * max_abs(e[l]));
  }
}

TEST_CASE("coulomb potential of a gaussian") {
  const double L = 16.0, s = 0.6;
  auto g = TorusGrid::create(64, L);
  InteractionKernel k(g, 1.0, 1);
  const double norm_c = std::pow(2 * kPi * s * s, -1.5);
  auto rho = ScalarField::from_function(g, [&](double x, double y, double z) {
    return cplx(norm_c * std::exp(-(x * x + y * y + z * z) / (2 * s * s)), 0);
  });
  auto v = mean_field_values(k, rho);
  // Periodic potential with neutralizing background: erf(r / (sqrt2 s)) / r + 2 pi r^2 / (3 L^3) + const
  // up to cubic-harmonic corrections of order r^4 / L^5, small in the inner quarter of the box.
  auto reference = [&](double r) {
    const double core = r < 1e-12 ? std::sqrt(2 / kPi) / s : std::erf(r / (std::sqrt(2.0) * s)) / r;
    return core + 2 * kPi * r * r / (3 * L * L * L);
  };
  const std::size_t origin = g->index(32, 32, 32);
  const double offset = v[origin] - reference(0.0);
  double worst = 0.0;
  for (std::size_t i = 0; i < g->size(); ++i) {
    const double r = std::sqrt(g->x(0)[i] * g->x(0)[i] + g->x(1)[i] * g->x(1)[i] + g->x(2)[i] * g->x(2)[i]);
    if (r > L / 8) continue;
    worst = std::max(worst, std::abs(v[i] - offset - reference(r)));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("exchange closed forms") {
  const double L = 2 * kPi, a = 0.3;
  auto g = TorusGrid::create(8, L);
  InteractionKernel k(g, a, -1);
  std::vector<std::array<int, 3>> m1{{1, 0, 0}};
  auto s = plane_wave_state(1.0, g, m1, {1.0});
  const double lambda = s.weights()[0];
  CHECK(max_abs(apply_exchange(k, s, s.orbital(0))) <= 1e-12 * lambda);
  auto psi2 = plane_wave(g, {0, 2, -1});
  const double khat = -riesz_constant(a) * std::pow(std::sqrt(1.0 + 4.0 + 1.0) * 2 * kPi / L, a - 3);
  auto x2 = apply_exchange(k, s, psi2);
  CHECK(max_diff(x2, lambda * khat / (L * L * L) * psi2) <= 1e-12 * lambda * std::abs(khat));

  double sum = 0.0;
  for (const double v : k.symbol_values()) sum += v * v;
  const double expected = lambda / (L * L * L) * std::sqrt(sum);
  CHECK(rel_err(exchange_hs_norm(k, s), expected) <= 1e-10);
  CHECK_THROWS_AS(exchange_hs_norm(InteractionKernel(g, 1.5, 1), s), InvalidArgument);
}

TEST_CASE("exchange is linear, self-adjoint and odd in the sign") {
  auto g = TorusGrid::create(8, 2 * kPi);
  InteractionKernel k(g, 0.3, 1), kneg(g, 0.3, -1);
  auto s = random_mixed_state(4, 1.0, g, 3, 0.1);
  auto f1 = random_field(g, 10), f2 = random_field(g, 11);
  const cplx lhs = inner(f1, apply_exchange(k, s, f2));
  const cplx rhs = std::conj(inner(f2, apply_exchange(k, s, f1)));
  CHECK(std::abs(lhs - rhs) <= 1e-10 * std::abs(lhs));
  const cplx c(0.5, 2.0);
  auto lin = apply_exchange(k, s, f1 + c * f2) - apply_exchange(k, s, f1) - c * apply_exchange(k, s, f2);
  CHECK(max_abs(lin) <= 1e-12 * max_abs(apply_exchange(k, s, f1)));
  CHECK(max_abs(apply_exchange(k, s, f1) + apply_exchange(kneg, s, f1)) == 0.0);

  const double hs = exchange_hs_norm(k, s);
  auto doubled = new_mixed_state(s.hbar() / std::cbrt(2.0), s.grid_ptr(), s.weights(), s.orbitals());
  CHECK(rel_err(doubled.weights()[0], 2 * s.weights()[0]) <= 1e-14);
  CHECK(rel_err(exchange_hs_norm(k, doubled), 2 * hs) <= 1e-12);
  CHECK(rel_err(exchange_hs_norm(kneg, s), hs) <= 1e-14);
}
