#pragma once

#include <array>
#include <vector>

#include "hflab/grid.hpp"
#include "hflab/state.hpp"

namespace hflab {

/// c_{3,a} = 2^{3-a} pi^{3/2} Gamma((3-a)/2) / Gamma(a/2), the constant of the Fourier pair
/// |x|^-a <-> c |xi|^{a-3} in three dimensions. Requires a in (0, 3).
double riesz_constant(double a);

/// Interaction K(x) = sign * |x|^-a on the torus, defined through its Fourier symbol
/// restricted to the lattice, with the zero mode removed.
///
/// sign is +1 (repulsive), -1 (attractive) or 0 (free evolution).
class InteractionKernel {
 public:
  /// `dealias` zeroes the symbol outside the 2/3 cube |m_l| <= N/3.
  InteractionKernel(GridPtr grid, double a, int sign, bool dealias = false);

  double exponent() const noexcept { return a_; }
  int sign() const noexcept { return sign_; }
  bool dealiased() const noexcept { return dealias_; }
  const TorusGrid& grid() const noexcept { return *grid_; }
  const GridPtr& grid_ptr() const noexcept { return grid_; }
  /// K_hat on the frequency lattice (flat FFT order).
  const Multiplier& symbol() const noexcept { return symbol_; }
  std::span<const double> symbol_values() const noexcept { return real_symbol_; }

  /// K * f for any field (physical space in, physical space out).
  ScalarField convolve(const ScalarField& f) const;

  /// Real-space periodized kernel at the lattice offsets z = j dx, j in [0, N)^3 (flat order),
  /// i.e. L^-3 sum_xi K_hat(xi) e^{i xi.z}.
  std::vector<double> periodized_kernel() const;

  /// Symbol (hbar xi_l)^m K_hat(xi), the multiplier of p_l^m applied to K.
  Multiplier differentiated_symbol(int axis, int m, double hbar) const;

 private:
  GridPtr grid_;
  double a_;
  int sign_;
  bool dealias_;
  std::vector<double> real_symbol_;
  Multiplier symbol_;
};

/// V = K * rho. The input must be real up to 1e-12; the output is real.
ScalarField mean_field(const InteractionKernel& kernel, const ScalarField& rho);
/// Same as a plain real table.
std::vector<double> mean_field_values(const InteractionKernel& kernel, const ScalarField& rho);

/// E_j = -(d_j K) * rho, equal to minus the gradient of the mean field.
std::array<ScalarField, 3> force_field(const InteractionKernel& kernel, const ScalarField& rho);

/// (X phi)(x) = sum_k lambda_k psi_k(x) (K * (conj(psi_k) phi))(x). Note: unscaled by h^3.
ScalarField apply_exchange(const InteractionKernel& kernel, const MixedState& state,
                           const ScalarField& phi);

/// Hilbert-Schmidt norm of the exchange operator with kernel K(x-y) Gamma(x,y), evaluated with
/// the grid-exact symbol of |K_per|^2. Requires a < 3/2.
double exchange_hs_norm(const InteractionKernel& kernel, const MixedState& state);

}  // namespace hflab
