#pragma once

#include <Eigen/Dense>

#include <optional>
#include <vector>

#include "hflab/dynamics.hpp"
#include "hflab/grid.hpp"
#include "hflab/interaction.hpp"
#include "hflab/observables.hpp"
#include "hflab/state.hpp"

namespace hflab {

/// Largest grid the dense reference accepts (N^3 = 512 rows).
inline constexpr int kDenseMaxPoints = 8;

/// An operator on a tiny grid as an N^3 x N^3 matrix in the orthonormal point basis
/// e_x = delta_x / sqrt(dx^3). An integral kernel A(x, y) corresponds to the matrix dx^3 A(x, y),
/// so traces, products and singular values are those of the operator.
struct DenseOperator {
  GridPtr grid;
  Eigen::MatrixXcd matrix;

  /// max |A - A^dagger|.
  double hermiticity_error() const;
  /// Throws ConsistencyError if hermiticity_error() > tolerance.
  void require_hermitian(double tolerance = 1e-12) const;
};

/// Throws InvalidArgument for grids with N > 8.
void require_dense_grid(const TorusGrid& grid);

/// Gamma_{xy} = sum lambda_j psi_j(x) conj(psi_j(y)) (h^3 dx^3 trace = 1).
DenseOperator densify(const MixedState& state);
/// sum_i |u_i><v_i|.
DenseOperator densify(const LowRankOperator& op);

/// Matrix of a Fourier multiplier, one transform per basis column.
DenseOperator dense_multiplier(const Multiplier& symbol);
/// Diagonal matrix of a real table.
DenseOperator dense_diagonal(const GridPtr& grid, std::span<const double> values);
/// hbar^2 |xi|^2 / 2.
DenseOperator dense_kinetic(const GridPtr& grid, double hbar);
/// Mean field K * rho with rho(x) = h^3 Gamma(x, x), evaluated as a dense lattice convolution
/// against the periodized real-space kernel.
std::vector<double> dense_mean_field(const InteractionKernel& kernel, const DenseOperator& gamma,
                                     double hbar);
/// Exchange operator, entrywise K_per(x - y) Gamma(x, y) (unscaled by h^3).
DenseOperator dense_exchange(const InteractionKernel& kernel, const DenseOperator& gamma);
/// T + V - c X with c = h^3 in hartree_fock mode.
DenseOperator dense_hamiltonian(const InteractionKernel& kernel, const DenseOperator& gamma,
                                double hbar, Mode mode);

/// h^3 trace.
double dense_normalized_trace(const DenseOperator& gamma, double hbar);

struct DenseEvolveResult {
  DenseOperator gamma;
  int steps = 0;
  double max_trace_drift = 0.0;
};
/// Classical RK4 for i hbar Gamma' = [H_Gamma, Gamma], H rebuilt at every stage. Stable for
/// dt ||H|| / hbar below about 2.8; a relative trace drift above 1e-6 throws DriftAlarm.
DenseEvolveResult dense_evolve_rk4(const InteractionKernel& kernel, const DenseOperator& gamma,
                                   double hbar, double final_time, double dt, Mode mode);

/// Singular values, descending.
std::vector<double> dense_singular_values(const DenseOperator& a);
/// Eigenvalues of a hermitian operator, descending.
std::vector<double> dense_eigenvalues(const DenseOperator& a);
/// h^{3/p} ||A||_{S^p}.
double dense_schatten(const DenseOperator& a, double p, double hbar);
/// ||Gamma m_n||_{L^p}, real weight order s (s = 0 gives the scalar weight 2).
double dense_weighted(const DenseOperator& gamma, double s, double p, double hbar);
/// ||[B, Gamma m_n]||_{L^q} for one direction.
double dense_sobolev_direction(const DenseOperator& gamma, Direction direction, int n, double q,
                               double hbar);
/// Sum of the base term and all six directions, matching sobolev_norm.
SobolevNorm dense_sobolev(const DenseOperator& gamma, int n, double q, double hbar);

enum class TraceOperator { V, X };
/// (h^3 / (i hbar)) Tr([A, p_l^n] Gamma) with A = V, or A = h^3 X.
double dense_commutator_trace(const InteractionKernel& kernel, const DenseOperator& gamma, int n,
                              int axis, TraceOperator which, double hbar);
/// (1/hbar) ||[F, p_j^n] mu||_{L^2} with F the force component E_j (use_force) or the
/// potential V of gamma.
double dense_weighted_commutator(const InteractionKernel& kernel, const DenseOperator& gamma,
                                 const DenseOperator& mu, int n, int axis, bool use_force,
                                 double hbar);

/// ||A - B||_HS.
double dense_frobenius_distance(const DenseOperator& a, const DenseOperator& b);

}  // namespace hflab
