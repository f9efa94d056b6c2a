#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hflab/interaction.hpp"
#include "hflab/state.hpp"

namespace hflab {

enum class Mode { hartree, hartree_fock };

Mode parse_mode(const std::string& name);
std::string to_string(Mode mode);

struct PropagatorConfig {
  Mode mode = Mode::hartree_fock;
  double dt = 1e-3;
  /// Midpoint corrector passes for the frozen fields; 0 freezes at the post-kinetic state.
  int corrector_iterations = 1;
  /// Prefactor of the exchange term in H; defaults to h^3 of the propagated state.
  std::optional<double> exchange_coefficient;
  /// Orthonormality drift above which a step aborts.
  double drift_abort = 1e-6;

  void validate() const;
};

/// Exchange prefactor actually used for `state`: 0 in Hartree mode, h^3 unless overridden.
double exchange_coefficient(const PropagatorConfig& config, const MixedState& state);

/// Frozen interaction part A = V - c X of the Hamiltonian, sampled from one state.
class FrozenInteraction {
 public:
  FrozenInteraction(const InteractionKernel& kernel, const MixedState& source, Mode mode,
                    double exchange_coefficient);

  ScalarField apply(const ScalarField& phi) const;
  std::span<const double> potential() const noexcept { return potential_; }
  double potential_sup() const noexcept;

 private:
  const InteractionKernel* kernel_;
  MixedState source_;
  Mode mode_;
  double coefficient_;
  std::vector<double> potential_;
};

/// H phi = (hbar^2 |xi|^2 / 2) phi + V phi - h^3 X phi; the exchange term is dropped in Hartree mode.
ScalarField apply_hamiltonian(const InteractionKernel& kernel, const MixedState& state,
                              const ScalarField& phi, Mode mode = Mode::hartree_fock);

struct StepReport {
  double orthonormality_drift = 0.0;
};

/// One Strang step: exact kinetic half step, RK4 interaction step with fields frozen at a
/// corrected midpoint, exact kinetic half step. Weights are carried over unchanged.
/// Throws DriftAlarm when the orbital Gram matrix leaves the identity by more than
/// config.drift_abort.
MixedState strang_step(const InteractionKernel& kernel, const MixedState& state,
                       const PropagatorConfig& config, StepReport* report = nullptr);

using Observer = std::function<void(int step, double t, const MixedState& state)>;

struct EvolveResult {
  MixedState state;
  int steps = 0;
  double max_drift = 0.0;
};

/// Runs round(T/dt) steps (T must be an integer multiple of dt); the observer fires at step 0
/// and after every `cadence` steps.
EvolveResult evolve(const InteractionKernel& kernel, const MixedState& initial, double final_time,
                    const PropagatorConfig& config, int cadence, const Observer& observer = {});

/// Mean-field energy; the exchange term uses the same prefactor as the propagator.
double hf_energy(const InteractionKernel& kernel, const MixedState& state,
                 Mode mode = Mode::hartree_fock,
                 std::optional<double> exchange_coefficient = std::nullopt);

/// Suggested step 0.5 hbar / (hbar^2 |xi_max|^2 / 2 + sup |V|).
double suggested_time_step(const InteractionKernel& kernel, const MixedState& state);

/// Hilbert-Schmidt distance between two states with hbar on the same grid. Loses relative
/// accuracy below about 1e-7 of the norms.
double frobenius_distance(const MixedState& lhs, const MixedState& rhs);
double frobenius_norm(const MixedState& state);
/// sqrt(sum_j ||psi_j - phi_j||^2) for states evolved from the same data.
double orbital_distance(const MixedState& lhs, const MixedState& rhs);

}  // namespace hflab
