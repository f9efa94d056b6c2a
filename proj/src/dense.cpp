#include "hflab/dense.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hflab/errors.hpp"

namespace hflab {

namespace {

using Matrix = Eigen::MatrixXcd;

double h3_of(double hbar) {
  const double h = 2.0 * std::numbers::pi * hbar;
  return h * h * h;
}

Eigen::Index dim(const TorusGrid& grid) { return static_cast<Eigen::Index>(grid.size()); }

DenseOperator make(const GridPtr& grid, Matrix m) { return DenseOperator{grid, std::move(m)}; }

void require_same_grid(const DenseOperator& a, const DenseOperator& b) {
  if (!a.grid->same_as(*b.grid)) throw InvalidArgument("dense operators live on different grids");
}

double schatten_of(const std::vector<double>& s, double p, double hbar) {
  return semiclassical_schatten(s, p, hbar);
}

// Flat index of the lattice difference x_i - x_j (periodic).
std::vector<std::size_t> difference_table(const TorusGrid& grid) {
  const int n = grid.points_per_axis();
  const std::size_t size = grid.size();
  std::vector<std::size_t> table(size * size);
  for (std::size_t i = 0; i < size; ++i) {
    const auto a = grid.multi_index(i);
    for (std::size_t j = 0; j < size; ++j) {
      const auto b = grid.multi_index(j);
      table[i * size + j] =
          grid.index((a[0] - b[0] + n) % n, (a[1] - b[1] + n) % n, (a[2] - b[2] + n) % n);
    }
  }
  return table;
}

double direction_schatten(const DenseOperator& gamma_w, Direction d, double q, double hbar) {
  const GridPtr& grid = gamma_w.grid;
  const int idx = static_cast<int>(d);
  Matrix c;
  if (idx < 3) {
    std::vector<cplx> sym(grid->size());
    const auto xi = grid->xi(idx);
    for (std::size_t i = 0; i < sym.size(); ++i) sym[i] = {0.0, xi[i]};
    const Matrix b = dense_multiplier(Multiplier::from_table(grid, std::move(sym))).matrix;
    c = b * gamma_w.matrix - gamma_w.matrix * b;
  } else {
    const auto x = grid->x(idx - 3);
    const cplx f{0.0, -1.0 / hbar};
    c = gamma_w.matrix;
    const Eigen::Index m = dim(*grid);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) c(i, j) *= f * (x[i] - x[j]);
    }
  }
  return schatten_of(dense_singular_values(make(grid, std::move(c))), q, hbar);
}

Matrix weight_matrix(const GridPtr& grid, double s, double hbar) {
  if (s == 0.0) return Matrix::Identity(dim(*grid), dim(*grid)) * 2.0;
  return dense_multiplier(weight_symbol(grid, s, hbar)).matrix;
}

}  // namespace

double DenseOperator::hermiticity_error() const { return (matrix - matrix.adjoint()).cwiseAbs().maxCoeff(); }

void DenseOperator::require_hermitian(double tolerance) const {
  const double e = hermiticity_error();
  if (e > tolerance) throw ConsistencyError("dense operator is not hermitian: " + std::to_string(e));
}

void require_dense_grid(const TorusGrid& grid) {
  if (grid.points_per_axis() > kDenseMaxPoints) {
    throw InvalidArgument("dense reference needs N <= 8, got N = " +
                          std::to_string(grid.points_per_axis()));
  }
}

DenseOperator densify(const MixedState& state) {
  require_dense_grid(state.grid());
  const Eigen::Index m = dim(state.grid());
  const double dv = state.grid().cell_volume();
  Matrix g = Matrix::Zero(m, m);
  for (int j = 0; j < state.rank(); ++j) {
    const auto& v = state.orbital(j).values();
    const Eigen::Map<const Eigen::VectorXcd> psi(v.data(), m);
    g.noalias() += (state.weights()[j] * dv) * psi * psi.adjoint();
  }
  DenseOperator out = make(state.grid_ptr(), std::move(g));
  const double tr = dense_normalized_trace(out, state.hbar());
  if (std::abs(tr - 1.0) > 1e-10) {
    throw ConsistencyError("densified state has normalized trace " + std::to_string(tr));
  }
  return out;
}

DenseOperator densify(const LowRankOperator& op) {
  op.validate();
  const GridPtr& grid = op.left.front().grid_ptr();
  require_dense_grid(*grid);
  const Eigen::Index m = dim(*grid);
  Matrix a = Matrix::Zero(m, m);
  for (std::size_t i = 0; i < op.rank(); ++i) {
    const Eigen::Map<const Eigen::VectorXcd> u(op.left[i].values().data(), m);
    const Eigen::Map<const Eigen::VectorXcd> v(op.right[i].values().data(), m);
    a.noalias() += grid->cell_volume() * u * v.adjoint();
  }
  return make(grid, std::move(a));
}

DenseOperator dense_multiplier(const Multiplier& symbol) {
  const GridPtr& grid = symbol.grid_ptr();
  require_dense_grid(*grid);
  const Eigen::Index m = dim(*grid);
  Matrix a(m, m);
  ScalarField e(grid);
  for (Eigen::Index j = 0; j < m; ++j) {
    std::fill(e.values().begin(), e.values().end(), cplx{0.0, 0.0});
    e[j] = 1.0;
    const ScalarField col = apply_multiplier(e, symbol);
    for (Eigen::Index i = 0; i < m; ++i) a(i, j) = col[i];
  }
  return make(grid, std::move(a));
}

DenseOperator dense_diagonal(const GridPtr& grid, std::span<const double> values) {
  require_dense_grid(*grid);
  if (values.size() != grid->size()) throw InvalidArgument("diagonal table size mismatch");
  Eigen::VectorXcd d(dim(*grid));
  for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = values[i];
  return make(grid, d.asDiagonal());
}

DenseOperator dense_kinetic(const GridPtr& grid, double hbar) {
  const auto k2 = grid->xi_norm2();
  std::vector<cplx> t(k2.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.5 * hbar * hbar * k2[i];
  return dense_multiplier(Multiplier::from_table(grid, std::move(t)));
}

std::vector<double> dense_mean_field(const InteractionKernel& kernel, const DenseOperator& gamma,
                                     double hbar) {
  const TorusGrid& grid = *gamma.grid;
  if (!grid.same_as(kernel.grid())) throw InvalidArgument("dense_mean_field: grid mismatch");
  const std::size_t size = grid.size();
  const auto kper = kernel.periodized_kernel();
  const auto diff = difference_table(grid);
  // V(x) = dx^3 sum_y K(x - y) rho(y), rho(y) = h^3 Gamma(y, y) = h^3 M_yy / dx^3.
  const double h3 = h3_of(hbar);
  std::vector<double> v(size, 0.0);
  for (std::size_t i = 0; i < size; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < size; ++j) {
      acc += kper[diff[i * size + j]] * gamma.matrix(j, j).real();
    }
    v[i] = h3 * acc;
  }
  return v;
}

DenseOperator dense_exchange(const InteractionKernel& kernel, const DenseOperator& gamma) {
  const TorusGrid& grid = *gamma.grid;
  if (!grid.same_as(kernel.grid())) throw InvalidArgument("dense_exchange: grid mismatch");
  const std::size_t size = grid.size();
  const auto kper = kernel.periodized_kernel();
  const auto diff = difference_table(grid);
  Matrix x(gamma.matrix.rows(), gamma.matrix.cols());
  for (std::size_t j = 0; j < size; ++j) {
    for (std::size_t i = 0; i < size; ++i) {
      x(i, j) = kper[diff[i * size + j]] * gamma.matrix(i, j);
    }
  }
  return make(gamma.grid, std::move(x));
}

DenseOperator dense_hamiltonian(const InteractionKernel& kernel, const DenseOperator& gamma,
                                double hbar, Mode mode) {
  Matrix h = dense_kinetic(gamma.grid, hbar).matrix;
  const auto v = dense_mean_field(kernel, gamma, hbar);
  for (Eigen::Index i = 0; i < h.rows(); ++i) h(i, i) += v[i];
  if (mode == Mode::hartree_fock) h -= h3_of(hbar) * dense_exchange(kernel, gamma).matrix;
  return make(gamma.grid, std::move(h));
}

double dense_normalized_trace(const DenseOperator& gamma, double hbar) {
  return h3_of(hbar) * gamma.matrix.trace().real();
}

DenseEvolveResult dense_evolve_rk4(const InteractionKernel& kernel, const DenseOperator& gamma,
                                   double hbar, double final_time, double dt, Mode mode) {
  require_dense_grid(*gamma.grid);
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  if (!(final_time >= 0.0)) throw InvalidArgument("final time must be >= 0");
  const double ratio = final_time / dt;
  const long long steps = std::llround(ratio);
  if (std::abs(ratio - static_cast<double>(steps)) > 1e-9 * std::max(1.0, ratio)) {
    throw InvalidArgument("final time is not an integer multiple of dt");
  }
  gamma.require_hermitian(1e-12);

  // Kinetic part and the kernel matrix K_per(x - y) are fixed; only V and X change.
  // Everything runs on real and imaginary parts so each stage costs three real products.
  using Real = Eigen::MatrixXd;
  const Matrix t = dense_kinetic(gamma.grid, hbar).matrix;
  const Real t_re = t.real();
  const Real t_im = t.imag();
  const auto kper = kernel.periodized_kernel();
  const auto diff = difference_table(*gamma.grid);
  const Eigen::Index m = t.rows();
  Real kmat(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) kmat(i, j) = kper[diff[i * m + j]];
  }
  const double h3 = h3_of(hbar);
  const bool exchange = mode == Mode::hartree_fock;

  Real h_re(m, m), h_im(m, m), p1(m, m), p2(m, m), p3(m, m), sum(m, m);
  Eigen::VectorXd v(m);
  // Gamma' = -(i / hbar) (H Gamma - (H Gamma)^dagger), written into (d_re, d_im).
  auto rhs = [&](const Real& g_re, const Real& g_im, Real& d_re, Real& d_im) {
    h_re = t_re;
    h_im = t_im;
    if (exchange) {
      h_re -= h3 * kmat.cwiseProduct(g_re);
      h_im -= h3 * kmat.cwiseProduct(g_im);
    }
    v.noalias() = h3 * (kmat * g_re.diagonal());
    h_re.diagonal() += v;
    p1.noalias() = h_re * g_re;
    p2.noalias() = h_im * g_im;
    h_re += h_im;
    sum = g_re + g_im;
    p3.noalias() = h_re * sum;
    // p3 <- Im(H Gamma), p1 <- Re(H Gamma)
    p3 -= p1;
    p3 -= p2;
    p1 -= p2;
    d_re = (p3 + p3.transpose()) / hbar;
    d_im = (p1.transpose() - p1) / hbar;
  };

  DenseEvolveResult result{gamma, static_cast<int>(steps), 0.0};
  const double tr0 = dense_normalized_trace(gamma, hbar);
  Real g_re = gamma.matrix.real(), g_im = gamma.matrix.imag();
  Real y_re(m, m), y_im(m, m), k_re(m, m), k_im(m, m), acc_re(m, m), acc_im(m, m);
  for (long long s = 0; s < steps; ++s) {
    rhs(g_re, g_im, k_re, k_im);
    acc_re = k_re;
    acc_im = k_im;
    for (const double c : {0.5, 0.5, 1.0}) {
      y_re = g_re + (c * dt) * k_re;
      y_im = g_im + (c * dt) * k_im;
      rhs(y_re, y_im, k_re, k_im);
      const double w = c == 1.0 ? 1.0 : 2.0;
      acc_re += w * k_re;
      acc_im += w * k_im;
    }
    g_re += (dt / 6.0) * acc_re;
    g_im += (dt / 6.0) * acc_im;
    const double drift = std::abs(h3 * g_re.trace() - tr0) / std::abs(tr0);
    result.max_trace_drift = std::max(result.max_trace_drift, drift);
    if (!(drift <= 1e-6)) {
      throw DriftAlarm("dense RK4 trace drift " + std::to_string(drift) + " exceeds 1e-6", drift);
    }
  }
  result.gamma.matrix.real() = g_re;
  result.gamma.matrix.imag() = g_im;
  return result;
}

std::vector<double> dense_singular_values(const DenseOperator& a) {
  Eigen::BDCSVD<Matrix> svd(a.matrix);
  const auto& s = svd.singularValues();
  return std::vector<double>(s.data(), s.data() + s.size());
}

std::vector<double> dense_eigenvalues(const DenseOperator& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a.matrix, Eigen::EigenvaluesOnly);
  const auto& e = es.eigenvalues();
  std::vector<double> out(e.data(), e.data() + e.size());
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

double dense_schatten(const DenseOperator& a, double p, double hbar) {
  return schatten_of(dense_singular_values(a), p, hbar);
}

double dense_weighted(const DenseOperator& gamma, double s, double p, double hbar) {
  if (!(s >= 0.0)) throw InvalidArgument("weight order must be >= 0");
  const Matrix w = weight_matrix(gamma.grid, s, hbar);
  return dense_schatten(make(gamma.grid, gamma.matrix * w), p, hbar);
}

double dense_sobolev_direction(const DenseOperator& gamma, Direction direction, int n, double q,
                               double hbar) {
  if (n < 0 || n % 2 != 0) throw InvalidArgument("weight order must be 0 or a positive even integer");
  const Matrix w = weight_matrix(gamma.grid, n, hbar);
  return direction_schatten(make(gamma.grid, gamma.matrix * w), direction, q, hbar);
}

SobolevNorm dense_sobolev(const DenseOperator& gamma, int n, double q, double hbar) {
  if (n < 0 || n % 2 != 0) throw InvalidArgument("weight order must be 0 or a positive even integer");
  const DenseOperator gw = make(gamma.grid, gamma.matrix * weight_matrix(gamma.grid, n, hbar));
  SobolevNorm out;
  out.base = dense_schatten(gw, q, hbar);
  for (Direction d : kAllDirections) {
    out.directions[static_cast<int>(d)] = direction_schatten(gw, d, q, hbar);
  }
  return out;
}

double dense_commutator_trace(const InteractionKernel& kernel, const DenseOperator& gamma, int n,
                              int axis, TraceOperator which, double hbar) {
  if (axis < 0 || axis > 2) throw InvalidArgument("momentum axis must be 0, 1 or 2");
  if (n < 1) throw InvalidArgument("commutator order must be >= 1");
  const double h3 = h3_of(hbar);
  Matrix a;
  if (which == TraceOperator::V) {
    a = dense_diagonal(gamma.grid, dense_mean_field(kernel, gamma, hbar)).matrix;
  } else {
    a = h3 * dense_exchange(kernel, gamma).matrix;
  }
  const Matrix p = dense_multiplier(momentum_component_power_symbol(gamma.grid, axis, n, hbar)).matrix;
  const Matrix c = a * p - p * a;
  const cplx tr = (c * gamma.matrix).trace();
  return (h3 / cplx{0.0, hbar} * tr).real();
}

double dense_weighted_commutator(const InteractionKernel& kernel, const DenseOperator& gamma,
                                 const DenseOperator& mu, int n, int axis, bool use_force,
                                 double hbar) {
  require_same_grid(gamma, mu);
  if (axis < 0 || axis > 2) throw InvalidArgument("momentum axis must be 0, 1 or 2");
  const auto v = dense_mean_field(kernel, gamma, hbar);
  std::vector<double> field = v;
  if (use_force) {
    // E_j = -d_j V, spectral derivative of the dense mean field.
    ScalarField vf(gamma.grid);
    for (std::size_t i = 0; i < v.size(); ++i) vf[i] = v[i];
    const ScalarField d = partial(vf, axis);
    for (std::size_t i = 0; i < v.size(); ++i) field[i] = -d[i].real();
  }
  const Matrix e = dense_diagonal(gamma.grid, field).matrix;
  const Matrix p = dense_multiplier(momentum_component_power_symbol(gamma.grid, axis, n, hbar)).matrix;
  const Matrix c = (e * p - p * e) * mu.matrix;
  return dense_schatten(make(gamma.grid, c), 2.0, hbar) / hbar;
}

double dense_frobenius_distance(const DenseOperator& a, const DenseOperator& b) {
  require_same_grid(a, b);
  return (a.matrix - b.matrix).norm();
}

}  // namespace hflab
