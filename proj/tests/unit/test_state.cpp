#include "common.hpp"

#include <filesystem>

#include "hflab/errors.hpp"
#include "hflab/observables.hpp"

using namespace hflab;
using namespace hflab::test;

namespace {

ScalarField normalized(ScalarField f) {
  f *= 1.0 / norm(f);
  return f;
}

}  // namespace

TEST_CASE("new_mixed_state normalizes and sorts") {
  auto g = TorusGrid::create(8, 2 * kPi);
  std::vector<ScalarField> orbitals{plane_wave(g, {1, 0, 0}), plane_wave(g, {0, 1, 0})};
  auto created = MixedState::create(0.5, g, {1.0, 3.0}, orbitals);
  const auto& s = created.state;
  CHECK(s.weights()[0] > s.weights()[1]);
  CHECK(s.normalized_trace() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(created.weight_scale * 4.0 * s.h3() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(max_diff(s.orbital(0), orbitals[1]) == 0.0);
}

TEST_CASE("new_mixed_state rejects bad input") {
  auto g = TorusGrid::create(8, 2 * kPi);
  auto pw = plane_wave(g, {1, 0, 0});
  CHECK_THROWS_AS(new_mixed_state(1.0, g, {1.0, 1.0}, {pw, pw}), OrthonormalityError);
  CHECK_THROWS_AS(new_mixed_state(1.0, g, {1.0}, {2.0 * pw}), OrthonormalityError);
  CHECK_THROWS_AS(new_mixed_state(1.0, g, {-1.0}, {pw}), InvalidArgument);
  CHECK_THROWS_AS(new_mixed_state(1.0, g, {1.0, 1.0}, {pw}), InvalidArgument);
  CHECK_THROWS_AS(new_mixed_state(0.0, g, {1.0}, {pw}), InvalidArgument);
}

TEST_CASE("lowdin four gaussians") {
  auto g = TorusGrid::create(32, 2 * kPi);
  std::vector<ScalarField> f;
  for (int i = 0; i < 4; ++i) f.push_back(gaussian(g, 0.6, {0.5 * i - 0.75, 0.2 * i, 0.0}));
  auto out = lowdin_orthonormalize(f);
  CHECK(orthonormality_error(out) <= 1e-10);
}

TEST_CASE("lowdin 2x2 closed form") {
  auto g = TorusGrid::create(16, 2 * kPi);
  auto f1 = normalized(gaussian(g, 0.7, {-0.4, 0, 0}));
  auto f2 = normalized(gaussian(g, 0.7, {0.4, 0, 0}));
  const double s = inner(f1, f2).real();
  REQUIRE(s > 0.3);
  std::vector<ScalarField> in{f1, f2};
  auto out = lowdin_orthonormalize(in);
  const double alpha = 0.5 * (1 / std::sqrt(1 + s) + 1 / std::sqrt(1 - s));
  const double beta = 0.5 * (1 / std::sqrt(1 + s) - 1 / std::sqrt(1 - s));
  CHECK(max_diff(out[0], alpha * f1 + beta * f2) <= 1e-12);
  CHECK(max_diff(out[1], beta * f1 + alpha * f2) <= 1e-12);
  CHECK(std::abs(inner(out[0], out[1])) <= 1e-13);
}

TEST_CASE("lowdin is permutation equivariant and rejects dependence") {
  auto g = TorusGrid::create(8, 2 * kPi);
  std::vector<ScalarField> f{random_field(g, 1), random_field(g, 2), random_field(g, 3)};
  auto out = lowdin_orthonormalize(f);
  std::vector<ScalarField> perm{f[2], f[0], f[1]};
  auto out_perm = lowdin_orthonormalize(perm);
  CHECK(max_diff(out_perm[0], out[2]) <= 1e-12);
  CHECK(max_diff(out_perm[1], out[0]) <= 1e-12);
  std::vector<ScalarField> dep{f[0], f[1], f[0] + f[1]};
  CHECK_THROWS_AS(lowdin_orthonormalize(dep), OrthonormalityError);
}

TEST_CASE("coherent state moments") {
  const double L = 2 * kPi, sigma = 0.5, hbar = 1.0;
  auto g = TorusGrid::create(32, L);
  std::vector<PhaseSpaceCenter> c{{{0, 0, 0}, {0, 0, 0}}};
  auto s = coherent_state_lattice(hbar, g, c, sigma);
  const double m2 = 3 * hbar * hbar / (2 * sigma * sigma);
  CHECK(rel_err(moment(s, 2), m2) <= 1e-10);
  c[0].velocity = {0.5, -1.0, 0.25};
  auto moving = coherent_state_lattice(hbar, g, c, sigma);
  CHECK(rel_err(moment(moving, 2), m2 + 0.25 + 1.0 + 0.0625) <= 1e-10);

  // rho is the normalized Gaussian bump |x|^2 / sigma^2 for a unit-trace state
  auto rho = spatial_density_values(s);
  const double peak = std::pow(kPi * sigma * sigma, -1.5);
  CHECK(rel_err(rho[g->index(16, 16, 16)], peak) <= 1e-10);
}

TEST_CASE("coherent state validation") {
  auto g = TorusGrid::create(16, 2 * kPi);
  std::vector<PhaseSpaceCenter> bad{{{2.5, 0, 0}, {0, 0, 0}}};
  CHECK_THROWS_AS(coherent_state_lattice(1.0, g, bad, 0.5), InvalidArgument);
  std::vector<PhaseSpaceCenter> twice{{{0, 0, 0}, {0, 0, 0}}, {{0, 0, 0}, {0, 0, 0}}};
  CHECK_THROWS_AS(coherent_state_lattice(1.0, g, twice, 0.5), OrthonormalityError);
  CHECK(default_coherent_width(1.0, *g) == doctest::Approx(2 * kPi / 8));
}

TEST_CASE("well separated centers keep equal weights") {
  const double L = 8 * kPi;
  auto g = TorusGrid::create(32, L);
  std::vector<PhaseSpaceCenter> c{{{-5, 0, 0}, {0, 0, 0}}, {{5, 0, 0}, {0, 0, 0}}};
  auto s = coherent_state_lattice(1.0, g, c, 1.0);
  CHECK(rel_err(s.weights()[1], s.weights()[0]) <= 1e-10);
  CHECK(std::abs(inner(s.orbital(0), s.orbital(1))) <= 1e-10);
}

TEST_CASE("random states") {
  auto g = TorusGrid::create(8, 2 * kPi);
  auto a = random_mixed_state(42, 1.0, g, 3, 0.1);
  auto b = random_mixed_state(42, 1.0, g, 3, 0.1);
  CHECK(encode_snapshot(a) == encode_snapshot(b));
  CHECK(encode_snapshot(a) != encode_snapshot(random_mixed_state(43, 1.0, g, 3, 0.1)));
  CHECK(a.orthonormality_error() <= 1e-12);
  const double ratio = a.weights()[1] / a.weights()[0];
  CHECK(ratio >= 0.3);
  CHECK(ratio <= 0.9);
  CHECK(rel_err(a.weights()[2] / a.weights()[1], ratio) <= 1e-12);

  auto single = random_mixed_state(5, 0.5, g, 1, 0.1);
  CHECK(rel_err(single.operator_norm(), 1.0 / single.h3()) <= 1e-14);

  double previous = kInfinity;
  for (double beta : {1.0, 2.0, 5.0, 10.0}) {
    const double m4 = moment(random_mixed_state(9, 1.0, g, 1, beta), 4);
    CHECK(m4 < previous);
    previous = m4;
  }
  CHECK(previous < 0.2);
  CHECK_THROWS_AS(random_mixed_state(1, 1.0, g, 0, 0.1), InvalidArgument);
}

TEST_CASE("spatial density") {
  const double L = 3.0;
  auto g = TorusGrid::create(8, L);
  std::vector<std::array<int, 3>> one{{1, 2, 0}};
  auto rho1 = spatial_density_values(plane_wave_state(1.0, g, one, {1.0}));
  std::vector<std::array<int, 3>> two{{1, 0, 0}, {0, -1, 2}};
  auto rho2 = spatial_density_values(plane_wave_state(1.0, g, two, {1.0, 1.0}));
  double worst = 0.0;
  for (std::size_t i = 0; i < rho1.size(); ++i) {
    worst = std::max({worst, std::abs(rho1[i] * L * L * L - 1), std::abs(rho2[i] * L * L * L - 1)});
  }
  CHECK(worst <= 1e-12);

  auto s = random_mixed_state(3, 0.5, g, 4, 0.1);
  CHECK(lebesgue_norm(spatial_density_values(s), g->cell_volume(), 1.0) ==
        doctest::Approx(1.0).epsilon(1e-10));

  auto orbitals = s.orbitals();
  orbitals[1] *= std::polar(1.0, 0.7);
  auto rotated = MixedState::restore(s.hbar(), s.grid_ptr(), s.weights(), orbitals);
  auto a = spatial_density_values(s), b = spatial_density_values(rotated);
  double phase = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) phase = std::max(phase, std::abs(a[i] - b[i]));
  CHECK(phase <= 1e-14 * *std::max_element(a.begin(), a.end()));
}

TEST_CASE("snapshot round trip is bit exact") {
  auto g = TorusGrid::create(8, 2.5);
  auto s = random_mixed_state(11, 0.25, g, 2, 0.2);
  auto path = std::filesystem::temp_directory_path() / "hflab_unit_snapshot.hfls";
  write_snapshot(s, path);
  auto back = read_snapshot(path);
  std::filesystem::remove(path);
  CHECK(back.hbar() == s.hbar());
  CHECK(back.grid().box_length() == s.grid().box_length());
  CHECK(back.weights() == s.weights());
  for (int j = 0; j < s.rank(); ++j) CHECK(back.orbital(j).values() == s.orbital(j).values());
  auto bytes = encode_snapshot(s);
  bytes[0] = 'X';
  CHECK_THROWS_AS(decode_snapshot(bytes), FormatError);
  bytes = encode_snapshot(s);
  bytes.resize(bytes.size() - 1);
  CHECK_THROWS_AS(decode_snapshot(bytes), FormatError);
}
