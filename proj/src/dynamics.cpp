#include "hflab/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hflab/errors.hpp"

namespace hflab {

namespace {

// Multiplies every orbital by exp(-i hbar |xi|^2 tau / 2) in frequency space.
std::vector<ScalarField> kinetic_flow(const MixedState& state, double tau) {
  const TorusGrid& grid = state.grid();
  const auto k2 = grid.xi_norm2();
  std::vector<cplx> phase(grid.size());
  const double hbar = state.hbar();
  for (std::size_t i = 0; i < phase.size(); ++i) {
    const double angle = -0.5 * hbar * k2[i] * tau;
    phase[i] = {std::cos(angle), std::sin(angle)};
  }
  const Multiplier m = Multiplier::from_table(state.grid_ptr(), std::move(phase));
  std::vector<ScalarField> out;
  out.reserve(state.rank());
  for (const auto& psi : state.orbitals()) out.push_back(apply_multiplier(psi, m));
  return out;
}

// psi' = -(i/hbar) A psi, one classical RK4 step of size tau per orbital.
std::vector<ScalarField> rk4_flow(const FrozenInteraction& op, std::span<const ScalarField> psi,
                                  double tau, double hbar) {
  const cplx f{0.0, -1.0 / hbar};
  std::vector<ScalarField> out;
  out.reserve(psi.size());
  for (const auto& y : psi) {
    ScalarField k1 = op.apply(y);
    k1 *= f;
    ScalarField y2 = y;
    y2.add_scaled(0.5 * tau, k1);
    ScalarField k2 = op.apply(y2);
    k2 *= f;
    ScalarField y3 = y;
    y3.add_scaled(0.5 * tau, k2);
    ScalarField k3 = op.apply(y3);
    k3 *= f;
    ScalarField y4 = y;
    y4.add_scaled(tau, k3);
    ScalarField k4 = op.apply(y4);
    k4 *= f;
    ScalarField next = y;
    next.add_scaled(tau / 6.0, k1);
    next.add_scaled(tau / 3.0, k2);
    next.add_scaled(tau / 3.0, k3);
    next.add_scaled(tau / 6.0, k4);
    out.push_back(std::move(next));
  }
  return out;
}

}  // namespace

Mode parse_mode(const std::string& name) {
  if (name == "hartree") return Mode::hartree;
  if (name == "hartree_fock") return Mode::hartree_fock;
  throw InvalidArgument("unknown mode '" + name + "' (expected hartree or hartree_fock)");
}

std::string to_string(Mode mode) { return mode == Mode::hartree ? "hartree" : "hartree_fock"; }

void PropagatorConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("dt must be positive");
  if (corrector_iterations < 0) throw InvalidArgument("corrector_iterations must be >= 0");
  if (exchange_coefficient && !std::isfinite(*exchange_coefficient)) {
    throw InvalidArgument("exchange coefficient must be finite");
  }
  if (!(drift_abort > 0.0)) throw InvalidArgument("drift_abort must be positive");
}

double exchange_coefficient(const PropagatorConfig& config, const MixedState& state) {
  if (config.mode == Mode::hartree) return 0.0;
  return config.exchange_coefficient.value_or(state.h3());
}

// ---------------------------------------------------------------------------

FrozenInteraction::FrozenInteraction(const InteractionKernel& kernel, const MixedState& source,
                                     Mode mode, double exchange_coefficient)
    : kernel_(&kernel), source_(source), mode_(mode), coefficient_(exchange_coefficient),
      potential_(mean_field_values(kernel, spatial_density(source))) {}

ScalarField FrozenInteraction::apply(const ScalarField& phi) const {
  ScalarField out = multiply(phi, potential_);
  if (mode_ == Mode::hartree_fock) out.add_scaled(-coefficient_, apply_exchange(*kernel_, source_, phi));
  return out;
}

double FrozenInteraction::potential_sup() const noexcept {
  double m = 0.0;
  for (double v : potential_) m = std::max(m, std::abs(v));
  return m;
}

ScalarField apply_hamiltonian(const InteractionKernel& kernel, const MixedState& state,
                              const ScalarField& phi, Mode mode) {
  const double hbar = state.hbar();
  const auto k2 = state.grid().xi_norm2();
  std::vector<cplx> t(k2.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.5 * hbar * hbar * k2[i];
  ScalarField out = apply_multiplier(phi, Multiplier::from_table(state.grid_ptr(), std::move(t)));
  const FrozenInteraction a(kernel, state, mode, mode == Mode::hartree ? 0.0 : state.h3());
  out += a.apply(phi);
  return out;
}

MixedState strang_step(const InteractionKernel& kernel, const MixedState& state,
                       const PropagatorConfig& config, StepReport* report) {
  config.validate();
  if (!state.grid().same_as(kernel.grid())) throw InvalidArgument("strang_step: grid mismatch");
  const double dt = config.dt;
  const double hbar = state.hbar();
  const double coefficient = exchange_coefficient(config, state);

  const MixedState after_kinetic = state.with_orbitals(kinetic_flow(state, 0.5 * dt));
  FrozenInteraction frozen(kernel, after_kinetic, config.mode, coefficient);
  for (int it = 0; it < config.corrector_iterations; ++it) {
    const MixedState midpoint =
        state.with_orbitals(rk4_flow(frozen, after_kinetic.orbitals(), 0.5 * dt, hbar));
    frozen = FrozenInteraction(kernel, midpoint, config.mode, coefficient);
  }
  const MixedState after_interaction =
      state.with_orbitals(rk4_flow(frozen, after_kinetic.orbitals(), dt, hbar));
  MixedState next = state.with_orbitals(kinetic_flow(after_interaction, 0.5 * dt));

  const double drift = next.orthonormality_error();
  if (report) report->orthonormality_drift = drift;
  if (!(drift <= config.drift_abort)) {
    throw DriftAlarm("orthonormality drift " + std::to_string(drift) + " exceeds " +
                         std::to_string(config.drift_abort) + " at dt = " + std::to_string(dt) +
                         "; suggested dt <= " +
                         std::to_string(suggested_time_step(kernel, state)),
                     drift);
  }
  return next;
}

EvolveResult evolve(const InteractionKernel& kernel, const MixedState& initial, double final_time,
                    const PropagatorConfig& config, int cadence, const Observer& observer) {
  config.validate();
  if (!(final_time >= 0.0)) throw InvalidArgument("final time must be >= 0");
  if (cadence < 1) throw InvalidArgument("cadence must be >= 1");
  const double ratio = final_time / config.dt;
  const long long steps = std::llround(ratio);
  if (std::abs(ratio - static_cast<double>(steps)) > 1e-9 * std::max(1.0, ratio)) {
    throw InvalidArgument("final time is not an integer multiple of dt");
  }
  if (steps % cadence != 0) throw InvalidArgument("cadence must divide the step count");

  EvolveResult result{initial, static_cast<int>(steps), initial.orthonormality_error()};
  if (observer) observer(0, 0.0, result.state);
  for (long long s = 1; s <= steps; ++s) {
    StepReport rep;
    result.state = strang_step(kernel, result.state, config, &rep);
    result.max_drift = std::max(result.max_drift, rep.orthonormality_drift);
    if (observer && s % cadence == 0) observer(static_cast<int>(s), s * config.dt, result.state);
  }
  return result;
}

double hf_energy(const InteractionKernel& kernel, const MixedState& state, Mode mode,
                 std::optional<double> exchange_coefficient) {
  const double hbar = state.hbar();
  const double h3 = state.h3();
  const auto k2 = state.grid().xi_norm2();
  std::vector<cplx> t(k2.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.5 * hbar * hbar * k2[i];
  const Multiplier kinetic = Multiplier::from_table(state.grid_ptr(), std::move(t));

  double e_kin = 0.0;
  for (int j = 0; j < state.rank(); ++j) {
    e_kin += state.weights()[j] * quadratic_form(state.orbital(j), kinetic).real();
  }
  e_kin *= h3;

  const ScalarField rho = spatial_density(state);
  const double e_direct = 0.5 * quadratic_form(rho, kernel.symbol()).real();

  double e_exchange = 0.0;
  if (mode == Mode::hartree_fock) {
    const double c = exchange_coefficient.value_or(h3);
    double acc = 0.0;
    for (int j = 0; j < state.rank(); ++j) {
      for (int k = 0; k < state.rank(); ++k) {
        const ScalarField g = conj_multiply(state.orbital(j), state.orbital(k));
        acc += state.weights()[j] * state.weights()[k] *
               quadratic_form(g, kernel.symbol()).real();
      }
    }
    e_exchange = -0.5 * c * h3 * acc;
  }
  return e_kin + e_direct + e_exchange;
}

double suggested_time_step(const InteractionKernel& kernel, const MixedState& state) {
  const double hbar = state.hbar();
  const auto k2 = state.grid().xi_norm2();
  const double k2max = *std::max_element(k2.begin(), k2.end());
  const auto v = mean_field_values(kernel, spatial_density(state));
  double vmax = 0.0;
  for (double x : v) vmax = std::max(vmax, std::abs(x));
  return 0.5 * hbar / (0.5 * hbar * hbar * k2max + vmax);
}

double frobenius_norm(const MixedState& state) {
  double s = 0.0;
  for (double w : state.weights()) s += w * w;
  return std::sqrt(s);
}

double frobenius_distance(const MixedState& lhs, const MixedState& rhs) {
  if (!lhs.grid().same_as(rhs.grid())) throw InvalidArgument("frobenius_distance: grid mismatch");
  double cross = 0.0;
  for (int i = 0; i < lhs.rank(); ++i) {
    for (int j = 0; j < rhs.rank(); ++j) {
      cross += lhs.weights()[i] * rhs.weights()[j] *
               std::norm(inner(lhs.orbital(i), rhs.orbital(j)));
    }
  }
  const double a = frobenius_norm(lhs);
  const double b = frobenius_norm(rhs);
  return std::sqrt(std::max(0.0, a * a + b * b - 2.0 * cross));
}

double orbital_distance(const MixedState& lhs, const MixedState& rhs) {
  if (lhs.rank() != rhs.rank()) throw InvalidArgument("orbital_distance: rank mismatch");
  double s = 0.0;
  for (int j = 0; j < lhs.rank(); ++j) {
    const double d = norm(lhs.orbital(j) - rhs.orbital(j));
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace hflab
