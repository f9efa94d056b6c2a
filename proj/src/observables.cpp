#include "hflab/observables.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstdio>
#include <numbers>

#include "hflab/errors.hpp"

namespace hflab {

namespace {

Eigen::MatrixXcd factor_matrix(std::span<const ScalarField> fields) {
  const TorusGrid& grid = fields.front().grid();
  const Eigen::Index rows = static_cast<Eigen::Index>(grid.size());
  Eigen::MatrixXcd m(rows, static_cast<Eigen::Index>(fields.size()));
  const double scale = std::sqrt(grid.cell_volume());
  for (std::size_t j = 0; j < fields.size(); ++j) {
    const auto& v = fields[j].values();
    for (Eigen::Index i = 0; i < rows; ++i) m(i, static_cast<Eigen::Index>(j)) = scale * v[i];
  }
  return m;
}

// Upper-triangular R with F = Q R, so R^* R is the Gram matrix of the columns.
Eigen::MatrixXcd gram_root(std::span<const ScalarField> fields) {
  const Eigen::MatrixXcd f = factor_matrix(fields);
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    if (!std::isfinite(f.data()[i].real()) || !std::isfinite(f.data()[i].imag())) {
      throw InvalidArgument("low-rank factor contains non-finite values");
    }
  }
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(f);
  const Eigen::Index m = f.cols();
  const Eigen::Index k = std::min(f.rows(), m);
  Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(k, m);
  r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  return r;
}

double h_of(double hbar) { return 2.0 * std::numbers::pi * hbar; }

std::string format_p(double p) {
  if (std::isinf(p)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", p);
  return buf;
}

Multiplier position_free_weight(const GridPtr& grid, int n, double hbar) {
  if (n == 0) return Multiplier::from_table(grid, std::vector<cplx>(grid->size(), 2.0));
  if (n < 0 || n % 2 != 0) throw InvalidArgument("weight order must be 0 or a positive even integer");
  return weight_symbol(grid, n, hbar);
}

ScalarField apply_direction(const ScalarField& f, Direction d, double hbar) {
  const int idx = static_cast<int>(d);
  if (idx < 3) return partial(f, idx);
  // x_l / (i hbar) = -i x_l / hbar
  ScalarField out = multiply(f, f.grid().x(idx - 3));
  out *= cplx{0.0, -1.0 / hbar};
  return out;
}

}  // namespace

void LowRankOperator::validate() const {
  if (left.size() != right.size()) throw InvalidArgument("factor counts differ");
  if (left.empty()) throw InvalidArgument("low-rank operator needs at least one factor pair");
  const TorusGrid& g = left.front().grid();
  for (std::size_t i = 0; i < left.size(); ++i) {
    if (!left[i].grid().same_as(g) || !right[i].grid().same_as(g)) {
      throw InvalidArgument("factors live on different grids");
    }
  }
}

std::vector<double> low_rank_singular_values(const LowRankOperator& op) {
  op.validate();
  const Eigen::MatrixXcd ru = gram_root(op.left);
  const Eigen::MatrixXcd rv = gram_root(op.right);
  const Eigen::MatrixXcd core = ru * rv.adjoint();
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(core);
  const Eigen::VectorXd s = svd.singularValues();
  std::vector<double> out(op.rank(), 0.0);
  for (Eigen::Index i = 0; i < s.size(); ++i) out[static_cast<std::size_t>(i)] = s(i);
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

double semiclassical_schatten(std::span<const double> singular_values, double p, double hbar) {
  if (!(p >= 1.0)) throw InvalidArgument("Schatten exponent must be >= 1");
  if (singular_values.empty()) return 0.0;
  if (std::isinf(p)) return *std::max_element(singular_values.begin(), singular_values.end());
  const double smax = *std::max_element(singular_values.begin(), singular_values.end());
  if (smax == 0.0) return 0.0;
  double acc = 0.0;
  for (double s : singular_values) acc += std::pow(s / smax, p);
  const double h = h_of(hbar);
  return std::pow(h, 3.0 / p) * smax * std::pow(acc, 1.0 / p);
}

ScalarField moment_density(const MixedState& state, int k) {
  if (k < 0 || k % 2 != 0) throw InvalidArgument("moment density order must be even and >= 0");
  if (k == 0) return spatial_density(state);
  ScalarField out(state.grid_ptr());
  const double h3 = state.h3();
  for (int j = 0; j < state.rank(); ++j) {
    const ScalarField f = momentum_power(state.orbital(j), 0.5 * k, state.hbar());
    const double w = h3 * state.weights()[j];
    for (std::size_t i = 0; i < f.size(); ++i) out[i] += w * std::norm(f[i]);
  }
  return out;
}

double moment(const MixedState& state, int n) {
  if (n < 0 || n % 2 != 0) throw InvalidArgument("moment order must be even and >= 0");
  const ScalarField rho = moment_density(state, n);
  double physical = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) physical += rho[i].real();
  physical *= state.grid().cell_volume();
  const double spectral = moment_real(state, n);
  if (std::abs(physical - spectral) > 1e-12 * std::max(std::abs(physical), std::abs(spectral)) +
                                          1e-300) {
    throw ConsistencyError("moment routes disagree: " + std::to_string(physical) + " vs " +
                           std::to_string(spectral));
  }
  return physical;
}

double moment_real(const MixedState& state, double s) {
  const Multiplier sym = momentum_power_symbol(state.grid_ptr(), s, state.hbar());
  double acc = 0.0;
  for (int j = 0; j < state.rank(); ++j) {
    acc += state.weights()[j] * quadratic_form(state.orbital(j), sym).real();
  }
  return state.h3() * acc;
}

double schatten_lp(const MixedState& state, double p) {
  return semiclassical_schatten(state.weights(), p, state.hbar());
}

LowRankOperator weighted_factors(const MixedState& state, const Multiplier& weight) {
  LowRankOperator op;
  op.left.reserve(state.rank());
  op.right.reserve(state.rank());
  for (int j = 0; j < state.rank(); ++j) {
    op.left.push_back(cplx{state.weights()[j]} * state.orbital(j));
    op.right.push_back(apply_multiplier(state.orbital(j), weight));
  }
  return op;
}

double weighted_schatten(const MixedState& state, const Multiplier& weight, double p) {
  return semiclassical_schatten(low_rank_singular_values(weighted_factors(state, weight)), p,
                                state.hbar());
}

double weighted_schatten(const MixedState& state, int n, double p) {
  if (n <= 0 || n % 2 != 0) throw InvalidArgument("weight order must be a positive even integer");
  return weighted_schatten(state, weight_symbol(state.grid_ptr(), n, state.hbar()), p);
}

double weighted_schatten_real(const MixedState& state, double s, double p) {
  return weighted_schatten(state, weight_symbol(state.grid_ptr(), s, state.hbar()), p);
}

std::string to_string(Direction d) {
  static const char* names[] = {"x1", "x2", "x3", "xi1", "xi2", "xi3"};
  return names[static_cast<int>(d)];
}

LowRankOperator sobolev_factors(const MixedState& state, Direction direction,
                                const std::optional<Multiplier>& weight,
                                const SobolevOptions& options) {
  if (static_cast<int>(direction) >= 3 && options.check_localization) {
    const double mass = central_mass(state);
    if (mass < options.localization_threshold) {
      throw LocalizationError("density mass in the central half box is " + std::to_string(mass) +
                                  ", below the localization threshold",
                              mass);
    }
  }
  const double hbar = state.hbar();
  LowRankOperator op;
  const int r = state.rank();
  op.left.reserve(2 * r);
  op.right.reserve(2 * r);
  // [B, Gamma W] = sum |lambda B psi><W psi| + |lambda psi><B W psi| for anti-self-adjoint B.
  for (int j = 0; j < r; ++j) {
    const ScalarField& psi = state.orbital(j);
    const cplx w{state.weights()[j]};
    const ScalarField wpsi = weight ? apply_multiplier(psi, *weight) : psi;
    op.left.push_back(w * apply_direction(psi, direction, hbar));
    op.right.push_back(wpsi);
    op.left.push_back(w * psi);
    op.right.push_back(apply_direction(wpsi, direction, hbar));
  }
  return op;
}

double SobolevNorm::homogeneous() const noexcept {
  double s = 0.0;
  for (double d : directions) s += d;
  return s;
}

SobolevNorm sobolev_norm(const MixedState& state, int n, double q, const SobolevOptions& options) {
  const Multiplier w = position_free_weight(state.grid_ptr(), n, state.hbar());
  SobolevNorm out;
  out.base = weighted_schatten(state, w, q);
  for (Direction d : kAllDirections) {
    const auto s = low_rank_singular_values(sobolev_factors(state, d, w, options));
    out.directions[static_cast<int>(d)] = semiclassical_schatten(s, q, state.hbar());
  }
  return out;
}

double lp_pm_eps(const MixedState& state, double s, double r, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw InvalidArgument("eps must lie in (0, 1)");
  if (!(r - eps >= 1.0)) throw InvalidArgument("r - eps must be >= 1");
  const Multiplier w = weight_symbol(state.grid_ptr(), s, state.hbar());
  const auto sv = low_rank_singular_values(weighted_factors(state, w));
  return semiclassical_schatten(sv, r + eps, state.hbar()) +
         semiclassical_schatten(sv, r - eps, state.hbar());
}

double lebesgue_norm(std::span<const double> values, double cell_volume, double p) {
  if (!(p >= 1.0)) throw InvalidArgument("Lebesgue exponent must be >= 1");
  double vmax = 0.0;
  for (double v : values) vmax = std::max(vmax, std::abs(v));
  if (std::isinf(p) || vmax == 0.0) return vmax;
  double acc = 0.0;
  for (double v : values) acc += std::pow(std::abs(v) / vmax, p);
  return vmax * std::pow(cell_volume * acc, 1.0 / p);
}

double lebesgue_norm(const ScalarField& f, double p) {
  std::vector<double> a(f.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::abs(f[i]);
  return lebesgue_norm(a, f.grid().cell_volume(), p);
}

// ---------------------------------------------------------------------------
// Observation battery

double ObservableRecord::value(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return values[i];
  }
  throw InvalidArgument("no observable column named " + name);
}

std::vector<std::string> observable_columns(const ObservableConfig& config) {
  std::vector<std::string> cols;
  for (int n : config.moments) cols.push_back("M_" + std::to_string(n));
  for (double p : config.schatten_p) cols.push_back("Lp_" + format_p(p));
  for (double p : config.weighted_p) {
    cols.push_back("Lp_m" + std::to_string(config.weight_n) + "_" + format_p(p));
  }
  if (config.sobolev) {
    cols.push_back("W1" + format_p(config.sobolev_q) + "_m" + std::to_string(config.weight_n));
  }
  if (config.lr_pm_eps) cols.push_back("Lr_pm_eps");
  for (const auto& [k, p] : config.density_norms) {
    cols.push_back("rho" + std::to_string(k) + "_L" + format_p(p));
  }
  if (config.energy) cols.push_back("energy");
  cols.push_back("trace_err");
  cols.push_back("gram_err");
  return cols;
}

ObservableRecord observe(const ObservableConfig& config, const InteractionKernel& kernel,
                         const MixedState& state, Mode mode, double time,
                         std::optional<double> exchange_coefficient) {
  ObservableRecord rec;
  rec.time = time;
  rec.names = observable_columns(config);
  auto& v = rec.values;
  for (int n : config.moments) v.push_back(moment(state, n));
  for (double p : config.schatten_p) v.push_back(schatten_lp(state, p));
  if (!config.weighted_p.empty()) {
    const auto sv = low_rank_singular_values(
        weighted_factors(state, position_free_weight(state.grid_ptr(), config.weight_n, state.hbar())));
    for (double p : config.weighted_p) v.push_back(semiclassical_schatten(sv, p, state.hbar()));
  }
  if (config.sobolev) {
    SobolevOptions opt;
    opt.check_localization = config.check_localization;
    try {
      v.push_back(sobolev_norm(state, config.weight_n, config.sobolev_q, opt).total());
    } catch (const LocalizationError&) {
      rec.localization_lost = true;
      v.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  if (config.lr_pm_eps) {
    const double a = kernel.exponent();
    const double r = 3.0 / (1.0 - a);
    v.push_back(a < 1.0 ? lp_pm_eps(state, config.weight_n + a + 1.0 + config.delta, r, config.eps)
                        : std::numeric_limits<double>::quiet_NaN());
  }
  for (const auto& [k, p] : config.density_norms) {
    v.push_back(lebesgue_norm(moment_density(state, k), p));
  }
  if (config.energy) v.push_back(hf_energy(kernel, state, mode, exchange_coefficient));
  v.push_back(std::abs(state.normalized_trace() - 1.0));
  v.push_back(state.orthonormality_error());
  return rec;
}

}  // namespace hflab
