#include "hflab/inequality.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>

#include "hflab/errors.hpp"

namespace hflab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double conj_exponent_inverse(double p) { return std::isinf(p) ? 1.0 : 1.0 - 1.0 / p; }

IneqReport make_report(std::string id, const MixedState& state, double lhs, double rhs) {
  IneqReport r;
  r.id = std::move(id);
  r.lhs = lhs;
  r.rhs_core = rhs;
  r.hbar = state.hbar();
  if (lhs == 0.0) {
    r.ratio = 0.0;
  } else {
    r.ratio = rhs > 0.0 ? lhs / rhs : kNaN;
  }
  return r;
}

void require_axis(int axis) {
  if (axis < 0 || axis > 2) throw InvalidArgument("momentum axis must be 0, 1 or 2");
}

void require_even_order(int n, const char* what) {
  if (n < 2 || n % 2 != 0) throw InvalidArgument(std::string(what) + ": n must be even and >= 2");
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Norms ||rho_k||_{L^q}, memoized per order.
class DensityNorms {
 public:
  explicit DensityNorms(const MixedState& state) : state_(state) {}
  double operator()(int k, double q) {
    auto it = densities_.find(k);
    if (it == densities_.end()) {
      const ScalarField rho = moment_density(state_, k);
      std::vector<double> v(rho.size());
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = rho[i].real();
      it = densities_.emplace(k, std::move(v)).first;
    }
    return lebesgue_norm(it->second, state_.grid().cell_volume(), q);
  }

 private:
  const MixedState& state_;
  std::map<int, std::vector<double>> densities_;
};

// sup over the given density-order tuples of prod ||rho_{k_i}||_{q_i}^{1/2}.
double product_sup(DensityNorms& norms, int n, const std::vector<std::vector<int>>& tuples,
                   double target, int* feasible_count) {
  double best = -1.0;
  int feasible = 0;
  for (const auto& orders : tuples) {
    const auto q = proportional_exponents(n, orders, target);
    if (!q) continue;
    ++feasible;
    double prod = 1.0;
    for (std::size_t i = 0; i < orders.size(); ++i) prod *= std::sqrt(norms(orders[i], (*q)[i]));
    best = std::max(best, prod);
  }
  if (feasible_count) *feasible_count = feasible;
  return feasible > 0 ? best : kNaN;
}

}  // namespace

ExponentTable exponents(double a, int n, int k, double p) {
  if (!(a > 0.0 && a < 2.0)) throw InvalidArgument("exponents: a must lie in (0, 2)");
  if (n < 2 || n % 2 != 0) throw InvalidArgument("exponents: n must be even and >= 2");
  if (k < 0) throw InvalidArgument("exponents: k must be >= 0");
  if (k > n) throw InvalidArgument("exponents: k must not exceed n");
  if (!(p >= 1.0)) throw InvalidArgument("exponents: p must be >= 1");
  ExponentTable t;
  t.a = a;
  t.n = n;
  t.k = k;
  t.p = p;
  t.b = 3.0 / (a + 1.0);
  t.r = a < 1.0 ? 3.0 / (1.0 - a) : kInfinity;
  t.p_nk = (3.0 + n) / (3.0 + k);
  t.p_nk_conj = k == n ? kInfinity : (3.0 + n) / static_cast<double>(n - k);
  if (n > 2) {
    const double inv_pc = conj_exponent_inverse(p);
    const double d = n - 2.0;
    t.theta_2 = (n - k) / d - (3.0 + n) / d * inv_pc;
    t.theta_n = (k - 2.0) / d + 5.0 / d * inv_pc;
    // 5/b - 3 = (5a - 4)/3 keeps Theta_n = 1 exact at a = 4/5.
    t.big_theta_2 = (n + 1.0) / d - (n + 3.0) * (a + 1.0) / (3.0 * d);
    t.big_theta_n = 1.0 + (5.0 * a - 4.0) / (3.0 * d);
  }
  t.a_n = 2.0 * n / (n + 3.0);
  t.n_a = 3.0 * a / (2.0 - a);
  t.q_star = 6.0 / (1.0 + 2.0 * a);
  t.theta = a + 0.5;
  return t;
}

Admissibility admissibility(double a, int n) {
  Admissibility adm;
  adm.regularity = a > 0.0 && a < 0.5;
  adm.moments = a > 0.0 && a <= 0.8;
  adm.short_time = a > 0.0 && a <= 2.0 * n / (n + 3.0);
  return adm;
}

std::string IneqReport::to_json() const {
  nlohmann::json j;
  j["id"] = id;
  j["params"] = params;
  j["lhs"] = lhs;
  j["rhs_core"] = rhs_core;
  j["ratio"] = ratio;
  j["seed"] = seed;
  j["t"] = t;
  j["hbar"] = hbar;
  return j.dump();
}

EnsembleAggregate aggregate(std::span<const IneqReport> reports) {
  EnsembleAggregate agg;
  if (reports.empty()) return agg;
  agg.id = reports.front().id;
  agg.hbar = reports.front().hbar;
  agg.count = reports.size();
  std::vector<double> ratios;
  for (const auto& r : reports) {
    if (std::isfinite(r.ratio)) {
      ratios.push_back(r.ratio);
    } else {
      agg.all_finite = false;
    }
  }
  if (!ratios.empty()) {
    std::sort(ratios.begin(), ratios.end());
    agg.max_ratio = ratios.back();
    const std::size_t m = ratios.size() / 2;
    agg.median_ratio = ratios.size() % 2 ? ratios[m] : 0.5 * (ratios[m - 1] + ratios[m]);
  } else {
    agg.max_ratio = agg.median_ratio = kNaN;
  }
  return agg;
}

// ---------------------------------------------------------------------------
// Interpolation and Schatten estimates

IneqReport check_kinetic_interpolation(const MixedState& state, int n, int k) {
  if (k < 0 || k > n || k % 2 != 0 || n % 2 != 0) {
    throw InvalidArgument("kinetic interpolation needs even 0 <= k <= n");
  }
  const double p = (3.0 + n) / (3.0 + k);
  const double inv_pc = (n - k) / (3.0 + n);
  const double lhs = lebesgue_norm(moment_density(state, k), p);
  const double rhs = std::pow(schatten_lp(state, kInfinity), inv_pc) * std::pow(moment(state, n), 1.0 / p);
  IneqReport r = make_report("kinetic_interpolation", state, lhs, rhs);
  r.params = {{"n", n}, {"k", k}, {"p", p}};
  return r;
}

IneqReport check_merged_interpolation(const MixedState& state, int n, int k, double p) {
  if (n < 4 || n % 2 != 0) throw InvalidArgument("merged interpolation needs even n >= 4");
  if (k < 0 || k > n || k % 2 != 0) throw InvalidArgument("merged interpolation needs even k in [0, n]");
  const double p_nk = (3.0 + n) / (3.0 + k);
  if (!(p >= 1.0 && p <= p_nk * (1.0 + 1e-15))) {
    throw InvalidArgument("merged interpolation needs p in [1, p_{n,k}]");
  }
  const ExponentTable e = exponents(0.5, n, k, p);
  const double lhs = lebesgue_norm(moment_density(state, k), p);
  const double rhs = std::pow(schatten_lp(state, kInfinity), conj_exponent_inverse(p)) *
                     std::pow(1.0 + moment(state, 2), *e.theta_2) *
                     std::pow(1.0 + moment(state, n), *e.theta_n);
  IneqReport r = make_report("merged_interpolation", state, lhs, rhs);
  r.params = {{"n", n}, {"k", k}, {"p", p}, {"theta_2", *e.theta_2}, {"theta_n", *e.theta_n}};
  return r;
}

IneqReport check_weighted_schatten_moment(const MixedState& state, int n, double p) {
  if (n <= 0 || n % 2 != 0) throw InvalidArgument("weight order must be a positive even integer");
  if (!(p >= 2.0) || std::isinf(p)) throw InvalidArgument("Schatten-moment check needs p in [2, inf)");
  const double np = n * p;
  if (std::abs(np - std::round(np)) > 1e-12 || static_cast<long>(std::round(np)) % 2 != 0) {
    throw InvalidArgument("Schatten-moment check needs n p even");
  }
  const double lhs = weighted_schatten(state, n, p);
  const double norm_inf = schatten_lp(state, kInfinity);
  const double hbar = state.hbar();
  std::vector<cplx> sym(state.grid().size());
  const auto k2 = state.grid().xi_norm2();
  for (std::size_t i = 0; i < sym.size(); ++i) {
    sym[i] = std::pow(1.0 + std::pow(hbar * hbar * k2[i], 0.5 * n), p);
  }
  const Multiplier mp = Multiplier::from_table(state.grid_ptr(), std::move(sym));
  double trace = 0.0;
  for (int j = 0; j < state.rank(); ++j) {
    trace += state.weights()[j] * quadratic_form(state.orbital(j), mp).real();
  }
  trace *= state.h3();
  const double prefactor = std::pow(norm_inf, 1.0 - 1.0 / p);
  const double chain = prefactor * std::pow(trace, 1.0 / p);
  if (lhs > chain * (1.0 + 1e-10)) {
    throw ConsistencyError("weighted Schatten norm exceeds its trace bound: " +
                           std::to_string(lhs) + " > " + std::to_string(chain));
  }
  const double rhs = prefactor * std::pow(1.0 + moment(state, static_cast<int>(std::round(np))), 1.0 / p);
  IneqReport r = make_report("weighted_schatten_moment", state, lhs, rhs);
  r.params = {{"n", n}, {"p", p}, {"chain", chain}};
  return r;
}

// ---------------------------------------------------------------------------
// Commutator traces

double commutator_trace_V_value(const InteractionKernel& kernel, const MixedState& state, int n,
                                int axis) {
  require_even_order(n, "commutator_trace_V");
  require_axis(axis);
  const auto v = mean_field_values(kernel, spatial_density(state));
  const Multiplier pn = momentum_component_power_symbol(state.grid_ptr(), axis, n, state.hbar());
  double acc = 0.0;
  for (int j = 0; j < state.rank(); ++j) {
    const ScalarField& psi = state.orbital(j);
    acc += state.weights()[j] * inner(multiply(psi, v), apply_multiplier(psi, pn)).imag();
  }
  return 2.0 * state.h3() / state.hbar() * acc;
}

IneqReport commutator_trace_V(const InteractionKernel& kernel, const MixedState& state, int n,
                              int axis) {
  const double lhs = std::abs(commutator_trace_V_value(kernel, state, n, axis));
  const double inv_b = (kernel.exponent() + 1.0) / 3.0;
  std::vector<std::vector<int>> tuples;
  for (const auto& c : even_compositions(n - 2, 3, n)) tuples.push_back(c);
  DensityNorms norms(state);
  int feasible = 0;
  const double sup = product_sup(norms, n, tuples, inv_b, &feasible);
  const double rhs = std::sqrt(moment(state, n)) * sup;
  IneqReport r = make_report("commutator_trace_V", state, lhs, rhs);
  r.params = {{"n", n}, {"l", axis + 1}, {"a", kernel.exponent()}, {"tuples", feasible}};
  return r;
}

double commutator_trace_X_value(const InteractionKernel& kernel, const MixedState& state, int n,
                                int axis, TraceMethod method) {
  if (n < 1) throw InvalidArgument("commutator_trace_X: n must be >= 1");
  require_axis(axis);
  const double hbar = state.hbar();
  const double h6 = state.h3() * state.h3();
  const int r = state.rank();
  const auto& lambda = state.weights();

  if (method == TraceMethod::direct) {
    const Multiplier pn = momentum_component_power_symbol(state.grid_ptr(), axis, n, hbar);
    double acc = 0.0;
    for (int j = 0; j < r; ++j) {
      const ScalarField& psi = state.orbital(j);
      acc += lambda[j] *
             inner(apply_exchange(kernel, state, psi), apply_multiplier(psi, pn)).imag();
    }
    return 2.0 * h6 / hbar * acc;
  }

  // Tr([X, p^n] Gamma) = -sum_{i,j} sum_{k<n} C(n,k) l_i l_j
  //                      int ((p^{n-k} K) * (conj(psi_i) psi_j)) (p^k psi_i) conj(psi_j)
  std::vector<Multiplier> dk;
  std::vector<std::vector<ScalarField>> pk_psi(n);
  for (int k = 0; k < n; ++k) {
    dk.push_back(kernel.differentiated_symbol(axis, n - k, hbar));
    const Multiplier pk = momentum_component_power_symbol(state.grid_ptr(), axis, k, hbar);
    for (int i = 0; i < r; ++i) pk_psi[k].push_back(apply_multiplier(state.orbital(i), pk));
  }
  cplx total{0.0, 0.0};
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < r; ++j) {
      const ScalarField g = conj_multiply(state.orbital(i), state.orbital(j));
      // sum_x conj(psi_j) (p^k psi_i) conv = <psi_j, (p^k psi_i) conv>
      cplx pair{0.0, 0.0};
      for (int k = 0; k < n; ++k) {
        const ScalarField conv = apply_multiplier(g, dk[k]);
        pair += binomial(n, k) * inner(state.orbital(j), multiply(pk_psi[k][i], conv));
      }
      total -= lambda[i] * lambda[j] * pair;
    }
  }
  // (h^6 / (i hbar)) * total
  const cplx value = h6 / cplx{0.0, hbar} * total;
  return value.real();
}

ExchangeTraceCheck commutator_trace_X(const InteractionKernel& kernel, const MixedState& state,
                                      int n, int axis, double tolerance) {
  ExchangeTraceCheck out;
  out.direct = commutator_trace_X_value(kernel, state, n, axis, TraceMethod::direct);
  out.leibniz = commutator_trace_X_value(kernel, state, n, axis, TraceMethod::leibniz);
  const double scale = std::max(std::abs(out.direct), std::abs(out.leibniz));
  const double gap = std::abs(out.direct - out.leibniz);
  out.relative_gap = scale > 0.0 ? gap / scale : 0.0;
  // Absolute floor for states where both routes vanish up to rounding.
  const double floor = 1e-13 * state.h3() * state.h3() / state.hbar() *
                       std::pow(state.hbar() * std::sqrt(*std::max_element(
                                    state.grid().xi_norm2().begin(), state.grid().xi_norm2().end())),
                                n) *
                       schatten_lp(state, kInfinity) * schatten_lp(state, kInfinity);
  if (gap > tolerance * scale && gap > floor) {
    throw ConsistencyError("exchange commutator routes disagree: direct " +
                           std::to_string(out.direct) + ", leibniz " + std::to_string(out.leibniz));
  }
  const double inv_b = (kernel.exponent() + 1.0) / 3.0;
  DensityNorms norms(state);
  int feasible = 0;
  const double sup =
      product_sup(norms, n, even_compositions(2 * (n - 1), 4, n), 2.0 * inv_b, &feasible);
  out.report = make_report("commutator_trace_X", state, std::abs(out.direct), sup);
  out.report.params = {{"n", n},
                       {"l", axis + 1},
                       {"a", kernel.exponent()},
                       {"leibniz", out.leibniz},
                       {"relative_gap", out.relative_gap},
                       {"tuples", feasible}};
  return out;
}

std::optional<std::vector<double>> proportional_exponents(int n, std::span<const int> orders,
                                                          double target) {
  std::vector<double> inv_pc(orders.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < orders.size(); ++i) {
    if (orders[i] < 0 || orders[i] > n) throw InvalidArgument("density order outside [0, n]");
    inv_pc[i] = (n - orders[i]) / (n + 3.0);
    sum += inv_pc[i];
  }
  if (sum == 0.0) {
    if (target != 0.0) return std::nullopt;
    return std::vector<double>(orders.size(), 1.0);
  }
  const double s = target / sum;
  if (s > 1.0 + 1e-12) return std::nullopt;
  std::vector<double> q(orders.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double inv_qc = std::min(s, 1.0) * inv_pc[i];
    q[i] = 1.0 / (1.0 - inv_qc);
  }
  return q;
}

std::vector<std::vector<int>> even_compositions(int total, int parts, int n) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur;
  std::function<void(int, int)> rec = [&](int remaining, int slots) {
    if (slots == 0) {
      if (remaining == 0) out.push_back(cur);
      return;
    }
    for (int k = 0; k <= std::min(n, remaining); k += 2) {
      cur.push_back(k);
      rec(remaining - k, slots - 1);
      cur.pop_back();
    }
  };
  if (total >= 0 && parts > 0) rec(total, parts);
  return out;
}

WeightedCommutatorReports check_weighted_commutator(const InteractionKernel& kernel,
                                                    const MixedState& gamma, const MixedState& mu,
                                                    int n, int axis, double delta, double eps) {
  if (n < 1) throw InvalidArgument("weighted commutator: n must be >= 1");
  require_axis(axis);
  if (!gamma.grid().same_as(mu.grid())) throw InvalidArgument("weighted commutator: grid mismatch");
  const double a = kernel.exponent();
  if (!(a < 1.0)) throw InvalidArgument("weighted commutator needs a < 1 (finite r)");
  if (!(delta > 0.0)) throw InvalidArgument("delta must be positive");
  const double hbar = gamma.hbar();
  const double r = 3.0 / (1.0 - a);
  const double n1 = n + a + 1.0 + delta;

  const ScalarField rho = spatial_density(gamma);
  const auto force = force_field(kernel, rho);
  std::vector<double> e(rho.size()), v = mean_field_values(kernel, rho);
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = force[axis][i].real();
  const Multiplier pn = momentum_component_power_symbol(gamma.grid_ptr(), axis, n, hbar);

  auto commutator_norm = [&](const std::vector<double>& field) {
    LowRankOperator op;
    for (int k = 0; k < mu.rank(); ++k) {
      const ScalarField& phi = mu.orbital(k);
      ScalarField u = multiply(apply_multiplier(phi, pn), field);
      u -= apply_multiplier(multiply(phi, field), pn);
      u *= mu.weights()[k];
      op.left.push_back(std::move(u));
      op.right.push_back(phi);
    }
    return semiclassical_schatten(low_rank_singular_values(op), 2.0, hbar) / hbar;
  };

  const double gamma_norm = lp_pm_eps(gamma, n1, r, eps);
  const double mu_norm = weighted_schatten_real(mu, n, 2.0);
  WeightedCommutatorReports out;
  out.force = make_report("weighted_commutator_E", gamma, commutator_norm(e), gamma_norm * mu_norm);
  out.potential = make_report("weighted_commutator_V", gamma, commutator_norm(v),
                              (gamma_norm + moment(gamma, 0)) * mu_norm);
  for (auto* rep : {&out.force, &out.potential}) {
    rep->params = {{"n", n}, {"j", axis + 1}, {"a", a}, {"n1", n1}, {"r", r}, {"eps", eps}};
  }
  return out;
}

double moment_growth_rhs(const MixedState& state, int n, double a) {
  if (n < 4 || n % 2 != 0) throw InvalidArgument("moment_growth_rhs needs even n >= 4");
  const ExponentTable e = exponents(a, n);
  return std::pow(schatten_lp(state, kInfinity), 1.0 / e.b) *
         std::pow(1.0 + moment(state, 2), *e.big_theta_2) *
         std::pow(1.0 + moment(state, n), *e.big_theta_n);
}

double moment_time_derivative(const InteractionKernel& kernel, const MixedState& state, int n,
                              Mode mode, std::optional<double> exchange_coefficient) {
  if (n < 0 || n % 2 != 0) throw InvalidArgument("moment order must be even and >= 0");
  const double c = mode == Mode::hartree ? 0.0 : exchange_coefficient.value_or(state.h3());
  const FrozenInteraction a(kernel, state, mode, c);
  double acc = 0.0;
  for (int j = 0; j < state.rank(); ++j) {
    const ScalarField& psi = state.orbital(j);
    acc += state.weights()[j] *
           inner(a.apply(psi), momentum_power(psi, static_cast<double>(n), state.hbar())).imag();
  }
  return -2.0 * state.h3() / state.hbar() * acc;
}

std::vector<double> gronwall_envelope(std::span<const double> coefficient, double dt, double exponent,
                                      double y0) {
  if (!(y0 > 0.0)) throw InvalidArgument("gronwall_envelope: y0 must be positive");
  if (!(exponent > 0.0 && exponent <= 1.0)) throw InvalidArgument("gronwall_envelope: exponent must lie in (0, 1]");
  if (!(dt > 0.0)) throw InvalidArgument("gronwall_envelope: dt must be positive");
  std::vector<double> y(coefficient.size());
  if (y.empty()) return y;
  y[0] = y0;
  for (std::size_t i = 0; i + 1 < y.size(); ++i) {
    const double f0 = coefficient[i] * std::pow(y[i], exponent);
    const double pred = y[i] + dt * f0;
    const double f1 = coefficient[i + 1] * std::pow(std::max(pred, 0.0), exponent);
    y[i + 1] = y[i] + 0.5 * dt * (f0 + f1);
  }
  return y;
}

}  // namespace hflab
