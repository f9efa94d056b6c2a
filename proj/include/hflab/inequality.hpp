#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hflab/interaction.hpp"
#include "hflab/observables.hpp"
#include "hflab/state.hpp"

namespace hflab {

/// Exponents appearing in the moment and regularity estimates for interaction exponent a,
/// moment orders k <= n and a Lebesgue exponent p.
struct ExponentTable {
  double a = 0.0;
  int n = 0;
  int k = 0;
  double p = 1.0;
  double b = 0.0;            // 3 / (a + 1), weak Lebesgue exponent of |x|^-a
  double r = 0.0;            // 3 / (1 - a), infinite for a >= 1
  double p_nk = 0.0;         // (3 + n) / (3 + k)
  double p_nk_conj = 0.0;    // (3 + n) / (n - k), infinite for k = n
  std::optional<double> theta_2;  // undefined for n = 2
  std::optional<double> theta_n;
  std::optional<double> big_theta_2;
  std::optional<double> big_theta_n;
  double a_n = 0.0;          // 2n / (n + 3)
  double n_a = 0.0;          // 3a / (2 - a)
  double q_star = 0.0;       // 6 / (1 + 2a)
  double theta = 0.0;        // a + 1/2
};

/// Requires a in (0, 2), n even and >= 2, 0 <= k <= n, p >= 1.
ExponentTable exponents(double a, int n, int k = 0, double p = 1.0);

/// Parameter ranges (for the interaction exponent) in which the propagation results apply.
struct Admissibility {
  bool regularity = false;     // a in (0, 1/2)
  bool moments = false;        // a in (0, 4/5]
  bool short_time = false;     // a <= a_n for the requested n
};
Admissibility admissibility(double a, int n);

/// One two-sided evaluation of an estimate.
struct IneqReport {
  std::string id;
  std::map<std::string, double> params;
  double lhs = 0.0;
  double rhs_core = 0.0;
  double ratio = 0.0;
  std::uint64_t seed = 0;
  double t = 0.0;
  double hbar = 0.0;

  /// {id, params, lhs, rhs_core, ratio, seed, t, hbar} as one JSON line.
  std::string to_json() const;
};

struct EnsembleAggregate {
  std::string id;
  double hbar = 0.0;
  std::size_t count = 0;
  double max_ratio = 0.0;
  double median_ratio = 0.0;
  bool all_finite = true;
};
EnsembleAggregate aggregate(std::span<const IneqReport> reports);

/// ||rho_k||_{L^p} <= C ||Gamma||_inf^{1/p'} M_n^{1/p}, p = (3+n)/(3+k).
IneqReport check_kinetic_interpolation(const MixedState& state, int n, int k);

/// ||rho_k||_{L^p} <= C ||Gamma||_inf^{1/p'} (1+M_2)^theta_2 (1+M_n)^theta_n, n >= 4.
IneqReport check_merged_interpolation(const MixedState& state, int n, int k, double p);

/// ||Gamma m_n||_{L^p} <= ||Gamma||_inf^{1/p'} (h^3 Tr(Gamma m_n^p))^{1/p}
///                     <= C ||Gamma||_inf^{1/p'} (1 + M_{np})^{1/p}, p >= 2.
/// The first step holds exactly; a violation beyond rounding throws ConsistencyError.
/// params["chain"] holds the intermediate value.
IneqReport check_weighted_schatten_moment(const MixedState& state, int n, double p);

/// (h^3 / hbar) Tr(i^-1 [V, p_l^n] Gamma) as a real number; l in {0, 1, 2}.
double commutator_trace_V_value(const InteractionKernel& kernel, const MixedState& state, int n,
                                int axis);
/// |h^3 Tr([V, p_l^n] Gamma) / (i hbar)| against M_n^{1/2} sup_{j+k+l = n/2-1} of products of
/// ||rho_{2j}||_alpha^{1/2} ... with Hoelder exponents allocated proportionally.
IneqReport commutator_trace_V(const InteractionKernel& kernel, const MixedState& state, int n,
                              int axis);

enum class TraceMethod { direct, leibniz };

/// (h^3 / (i hbar)) Tr([h^3 X, p_l^n] Gamma), real. Direct route applies X and p_l^n to the
/// orbitals; the Leibniz route expands the derivatives onto the kernel.
double commutator_trace_X_value(const InteractionKernel& kernel, const MixedState& state, int n,
                                int axis, TraceMethod method);

struct ExchangeTraceCheck {
  double direct = 0.0;
  double leibniz = 0.0;
  double relative_gap = 0.0;
  IneqReport report;
};
/// Evaluates both routes, throws ConsistencyError if they differ by more than `tolerance`
/// (relative), and reports |value| against the sup over compositions of 2(n-1).
ExchangeTraceCheck commutator_trace_X(const InteractionKernel& kernel, const MixedState& state,
                                      int n, int axis, double tolerance = 1e-8);

/// Hoelder exponents q_i for density orders k_i with sum 1/q_i' = target, proportional to
/// 1/p'_{n,k_i} and capped at q_i <= p_{n,k_i}. Returns nullopt when the cap makes the target
/// unreachable.
std::optional<std::vector<double>> proportional_exponents(int n, std::span<const int> orders,
                                                          double target);
/// All ordered tuples of `parts` even integers in [0, n] summing to `total`.
std::vector<std::vector<int>> even_compositions(int total, int parts, int n);

struct WeightedCommutatorReports {
  IneqReport force;      // [E_j, p_j^n] mu
  IneqReport potential;  // [V, p_j^n] mu
};
/// (1/hbar) ||[E_j, p_j^n] mu||_{L^2} against ||Gamma m_{n1}||_{L^{r+-eps}} ||mu m_n||_{L^2} and
/// the V analogue (plus M_0). n1 = n + a + 1 + delta.
WeightedCommutatorReports check_weighted_commutator(const InteractionKernel& kernel,
                                                    const MixedState& gamma, const MixedState& mu,
                                                    int n, int axis, double delta = 0.5,
                                                    double eps = 0.5);

/// ||Gamma||_inf^{1/b} (1 + M_2)^Theta_2 (1 + M_n)^Theta_n, n >= 4.
double moment_growth_rhs(const MixedState& state, int n, double a);

/// d/dt M_n along the flow: -(2 h^3 / hbar) sum lambda Im <A psi, |p|^n psi> with
/// A = V - c X the interaction part of H.
double moment_time_derivative(const InteractionKernel& kernel, const MixedState& state, int n,
                              Mode mode, std::optional<double> exchange_coefficient = std::nullopt);

/// Explicit trapezoidal solution of y' = c(t) y^Theta on a uniform grid with spacing dt.
std::vector<double> gronwall_envelope(std::span<const double> coefficient, double dt, double exponent,
                                      double y0);

}  // namespace hflab
