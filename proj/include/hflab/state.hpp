#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hflab/grid.hpp"

namespace hflab {

/// Gram matrix G_jk = <f_j, f_k> stored row-major (R x R).
std::vector<cplx> gram_matrix(std::span<const ScalarField> fields);
/// max_jk |G_jk - delta_jk|
double orthonormality_error(std::span<const ScalarField> fields);

/// Low-rank density operator Gamma = sum_j lambda_j |psi_j><psi_j| at a fixed hbar.
///
/// Weights are strictly positive, sorted descending and normalized so that h^3 sum lambda = 1
/// with h = 2 pi hbar. Values are immutable; operations produce new states.
class MixedState {
 public:
  struct Created;

  /// Validates the orbitals and rescales the weights by one global factor.
  /// Orbitals are never repaired: a Gram entry off by more than 1e-6 is rejected.
  static Created create(double hbar, GridPtr grid, std::vector<double> weights,
                        std::vector<ScalarField> orbitals);

  /// Rebuilds a stored state without touching the weights (they must already be normalized
  /// to 1e-10 and sorted). Used by snapshot decoding.
  static MixedState restore(double hbar, GridPtr grid, std::vector<double> weights,
                            std::vector<ScalarField> orbitals);

  /// Replaces the orbitals, keeping hbar and weights bit-for-bit. Used by propagators;
  /// checks only shape, not orthonormality.
  MixedState with_orbitals(std::vector<ScalarField> orbitals) const;

  double hbar() const noexcept { return hbar_; }
  /// Planck constant h = 2 pi hbar.
  double h() const noexcept;
  /// h^3, the semiclassical trace prefactor.
  double h3() const noexcept;
  const TorusGrid& grid() const noexcept { return *grid_; }
  const GridPtr& grid_ptr() const noexcept { return grid_; }
  int rank() const noexcept { return static_cast<int>(weights_.size()); }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const std::vector<ScalarField>& orbitals() const noexcept { return orbitals_; }
  const ScalarField& orbital(int j) const { return orbitals_.at(j); }

  /// Operator norm, the largest weight.
  double operator_norm() const noexcept { return weights_.front(); }
  /// h^3 sum lambda_j (1 after construction).
  double normalized_trace() const noexcept;
  double orthonormality_error() const;

 private:
  MixedState(double hbar, GridPtr grid, std::vector<double> weights,
             std::vector<ScalarField> orbitals);

  double hbar_;
  GridPtr grid_;
  std::vector<double> weights_;
  std::vector<ScalarField> orbitals_;
};

struct MixedState::Created {
  MixedState state;
  /// Factor applied to the supplied weights.
  double weight_scale;
};

inline MixedState new_mixed_state(double hbar, GridPtr grid, std::vector<double> weights,
                                  std::vector<ScalarField> orbitals) {
  return MixedState::create(hbar, std::move(grid), std::move(weights), std::move(orbitals)).state;
}

/// Symmetric orthonormalization: returns F G^{-1/2}, the orthonormal set closest to the input
/// in the least-squares sense. Throws OrthonormalityError when the Gram condition number
/// exceeds 1e12.
std::vector<ScalarField> lowdin_orthonormalize(std::span<const ScalarField> fields);

struct PhaseSpaceCenter {
  std::array<double, 3> position{0.0, 0.0, 0.0};
  std::array<double, 3> velocity{0.0, 0.0, 0.0};
};

/// Default coherent-state width: sqrt(hbar) * L / 8.
double default_coherent_width(double hbar, const TorusGrid& grid);

/// Equal-weight mixture of Lowdin-orthonormalized Gaussians
/// exp(-|x - x_c|^2 / (2 sigma^2) + i v_c.x / hbar), one per center.
/// Every center must sit at least 4 sigma from the box faces.
MixedState coherent_state_lattice(double hbar, GridPtr grid,
                                  std::span<const PhaseSpaceCenter> centers, double sigma);

/// Seeded random state: Fourier coefficients with independent normal real and imaginary parts
/// and envelope exp(-decay (hbar |xi|)^2), Lowdin-orthonormalized, geometric weights with a
/// seeded ratio in [0.3, 0.9]. Deterministic in the seed.
MixedState random_mixed_state(std::uint64_t seed, double hbar, GridPtr grid, int rank,
                              double decay);

/// Orthonormal plane waves L^{-3/2} exp(i (2 pi / L) m.x) with the given integer modes.
MixedState plane_wave_state(double hbar, GridPtr grid, std::span<const std::array<int, 3>> modes,
                            std::vector<double> weights);
ScalarField plane_wave(const GridPtr& grid, const std::array<int, 3>& mode);

/// rho(x) = h^3 sum_j lambda_j |psi_j(x)|^2 as a real-valued field.
ScalarField spatial_density(const MixedState& state);
/// Same density as a plain table of reals.
std::vector<double> spatial_density_values(const MixedState& state);

/// Mass of rho inside the central half box |x_l| <= L/4.
double central_mass(const MixedState& state);

/// Binary snapshot: magic "HFLS", u32 version, u64 N, f64 L, f64 hbar, u64 R, R f64 weights,
/// then R orbitals as interleaved (re, im) f64 pairs in row-major grid order. Little endian.
void write_snapshot(const MixedState& state, const std::filesystem::path& path);
MixedState read_snapshot(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_snapshot(const MixedState& state);
MixedState decode_snapshot(std::span<const std::uint8_t> bytes);

}  // namespace hflab
