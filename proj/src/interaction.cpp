#include "hflab/interaction.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hflab/errors.hpp"

namespace hflab {

namespace {

std::vector<double> riesz_table(const TorusGrid& grid, double a, int sign, bool dealias) {
  std::vector<double> t(grid.size(), 0.0);
  if (sign == 0) return t;
  const double c = sign * riesz_constant(a);
  const auto k2 = grid.xi_norm2();
  const int n = grid.points_per_axis();
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (k2[i] == 0.0) continue;
    if (dealias) {
      const auto m = grid.multi_index(i);
      bool keep = true;
      for (int l = 0; l < 3; ++l) keep = keep && 3 * std::abs(grid.signed_mode(m[l])) <= n;
      if (!keep) continue;
    }
    t[i] = c * std::pow(k2[i], 0.5 * (a - 3.0));
  }
  return t;
}

double checked_exponent(double a, int sign) {
  if (!(a > 0.0 && a < 2.0)) throw InvalidArgument("interaction exponent must lie in (0, 2)");
  if (sign < -1 || sign > 1) throw InvalidArgument("interaction sign must be -1, 0 or +1");
  return a;
}

std::vector<cplx> to_complex(const std::vector<double>& v) { return {v.begin(), v.end()}; }

std::vector<double> real_part_checked(const ScalarField& f, const char* what) {
  double re_max = 0.0, im_max = 0.0;
  std::vector<double> out(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    out[i] = f[i].real();
    re_max = std::max(re_max, std::abs(f[i].real()));
    im_max = std::max(im_max, std::abs(f[i].imag()));
  }
  if (im_max > 1e-12 * re_max + 1e-300 && im_max > 1e-14) {
    throw ConsistencyError(std::string(what) + ": imaginary part " + std::to_string(im_max) +
                           " exceeds 1e-12 of the real part");
  }
  return out;
}

}  // namespace

double riesz_constant(double a) {
  if (!(a > 0.0 && a < 3.0)) throw InvalidArgument("riesz_constant: a must lie in (0, 3)");
  return std::pow(2.0, 3.0 - a) * std::pow(std::numbers::pi, 1.5) * std::tgamma(0.5 * (3.0 - a)) /
         std::tgamma(0.5 * a);
}

InteractionKernel::InteractionKernel(GridPtr grid, double a, int sign, bool dealias)
    : grid_(std::move(grid)), a_(a), sign_(sign), dealias_(dealias),
      real_symbol_(riesz_table(*grid_, checked_exponent(a, sign), sign, dealias)),
      symbol_(Multiplier::from_table(grid_, to_complex(real_symbol_))) {}

ScalarField InteractionKernel::convolve(const ScalarField& f) const {
  return apply_multiplier(f, symbol_);
}

std::vector<double> InteractionKernel::periodized_kernel() const {
  FieldData work(real_symbol_.begin(), real_symbol_.end());
  grid_->fft_backward(work.data());
  std::vector<double> out(work.size());
  const double inv_vol = 1.0 / grid_->box_volume();
  for (std::size_t i = 0; i < work.size(); ++i) out[i] = work[i].real() * inv_vol;
  return out;
}

Multiplier InteractionKernel::differentiated_symbol(int axis, int m, double hbar) const {
  return momentum_component_power_symbol(grid_, axis, m, hbar) * symbol_;
}

ScalarField mean_field(const InteractionKernel& kernel, const ScalarField& rho) {
  const auto v = mean_field_values(kernel, rho);
  ScalarField out(rho.grid_ptr());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i];
  return out;
}

std::vector<double> mean_field_values(const InteractionKernel& kernel, const ScalarField& rho) {
  if (!rho.grid().same_as(kernel.grid())) throw InvalidArgument("mean_field: grid mismatch");
  real_part_checked(rho, "mean_field input");
  return real_part_checked(kernel.convolve(rho), "mean_field");
}

std::array<ScalarField, 3> force_field(const InteractionKernel& kernel, const ScalarField& rho) {
  if (!rho.grid().same_as(kernel.grid())) throw InvalidArgument("force_field: grid mismatch");
  const ScalarField v = kernel.convolve(rho);
  std::array<ScalarField, 3> out{ScalarField(rho.grid_ptr()), ScalarField(rho.grid_ptr()),
                                 ScalarField(rho.grid_ptr())};
  for (int l = 0; l < 3; ++l) {
    ScalarField g = partial(v, l);
    for (std::size_t i = 0; i < g.size(); ++i) out[l][i] = -g[i].real();
  }
  return out;
}

ScalarField apply_exchange(const InteractionKernel& kernel, const MixedState& state,
                           const ScalarField& phi) {
  if (!phi.grid().same_as(kernel.grid()) || !state.grid().same_as(kernel.grid())) {
    throw InvalidArgument("apply_exchange: grid mismatch");
  }
  ScalarField out(phi.grid_ptr());
  for (int k = 0; k < state.rank(); ++k) {
    const ScalarField& psi = state.orbital(k);
    const ScalarField conv = kernel.convolve(conj_multiply(psi, phi));
    const double w = state.weights()[k];
    auto& o = out.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += w * psi[i] * conv[i];
  }
  return out;
}

double exchange_hs_norm(const InteractionKernel& kernel, const MixedState& state) {
  if (!(kernel.exponent() < 1.5)) {
    throw InvalidArgument("exchange_hs_norm requires a < 3/2 (|K|^2 locally integrable)");
  }
  const TorusGrid& grid = kernel.grid();
  const auto k_per = kernel.periodized_kernel();
  FieldData w(k_per.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = k_per[i] * k_per[i];
  grid.fft_forward(w.data());
  std::vector<cplx> symbol(w.size());
  const double dv = grid.cell_volume();
  for (std::size_t i = 0; i < w.size(); ++i) symbol[i] = w[i].real() * dv;
  const Multiplier w_hat = Multiplier::from_table(kernel.grid_ptr(), std::move(symbol));

  double total = 0.0;
  for (int j = 0; j < state.rank(); ++j) {
    for (int k = 0; k < state.rank(); ++k) {
      const ScalarField g = conj_multiply(state.orbital(j), state.orbital(k));
      total += state.weights()[j] * state.weights()[k] * quadratic_form(g, w_hat).real();
    }
  }
  return std::sqrt(std::max(0.0, total));
}

}  // namespace hflab
