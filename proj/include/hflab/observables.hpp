#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hflab/dynamics.hpp"
#include "hflab/grid.hpp"
#include "hflab/interaction.hpp"
#include "hflab/state.hpp"

namespace hflab {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// A = sum_i |u_i><v_i| on one grid.
struct LowRankOperator {
  std::vector<ScalarField> left;
  std::vector<ScalarField> right;

  std::size_t rank() const noexcept { return left.size(); }
  void validate() const;
};

/// Nonzero singular values of A (padded with zeros to the factor count), descending.
/// Square-root factors of the two Gram matrices come from Householder QR of the factor
/// matrices, so exactly cancelling terms stay at rounding level.
std::vector<double> low_rank_singular_values(const LowRankOperator& op);

/// h^{3/p} ||s||_p, or max s for p = inf.
double semiclassical_schatten(std::span<const double> singular_values, double p, double hbar);

/// rho_k(x) = h^3 sum lambda_j ||p|^{k/2} psi_j(x)|^2 for even k >= 0 (real field).
ScalarField moment_density(const MixedState& state, int k);

/// M_n = h^3 Tr(|p|^n Gamma), n even. Evaluated in physical and frequency space and the two
/// cross-checked to 1e-12 (ConsistencyError otherwise).
double moment(const MixedState& state, int n);
/// h^3 Tr(|p|^s Gamma) for any real s >= 0 (frequency-space route only).
double moment_real(const MixedState& state, double s);

/// ||Gamma||_{L^p} = h^{3/p} ||lambda||_p for p in [1, inf].
double schatten_lp(const MixedState& state, double p);

/// Factors of Gamma W = sum |lambda_j psi_j><W psi_j| for a self-adjoint multiplier W.
LowRankOperator weighted_factors(const MixedState& state, const Multiplier& weight);
/// ||Gamma W||_{L^p} for an arbitrary real symbol W.
double weighted_schatten(const MixedState& state, const Multiplier& weight, double p);
/// ||Gamma m_n||_{L^p} with m_n = 1 + |p|^n, n a positive even integer.
double weighted_schatten(const MixedState& state, int n, double p);
/// Real-order weight 1 + |p|^s, s >= 0 (s = 0 gives the scalar weight 2).
double weighted_schatten_real(const MixedState& state, double s, double p);

/// Derivative directions of the quantum Sobolev norm: x_l is [d_l, .], xi_l is [x_l/(i hbar), .].
enum class Direction { x1, x2, x3, xi1, xi2, xi3 };
inline constexpr std::array<Direction, 6> kAllDirections{Direction::x1,  Direction::x2,
                                                         Direction::x3,  Direction::xi1,
                                                         Direction::xi2, Direction::xi3};
std::string to_string(Direction d);

struct SobolevOptions {
  /// Mass required in |x_l| <= L/4 before any xi-direction commutator is formed.
  double localization_threshold = 1.0 - 1e-6;
  bool check_localization = true;
};

/// Factors of D(Gamma W) = [B, Gamma W] for B = d_l or x_l/(i hbar): rank 2R.
/// Without a weight this is D Gamma itself.
LowRankOperator sobolev_factors(const MixedState& state, Direction direction,
                                const std::optional<Multiplier>& weight = std::nullopt,
                                const SobolevOptions& options = {});

struct SobolevNorm {
  double base = 0.0;                   // ||Gamma m_n||_{L^q}
  std::array<double, 6> directions{};  // ||D_d(Gamma m_n)||_{L^q}
  double homogeneous() const noexcept;
  double total() const noexcept { return base + homogeneous(); }
};

/// ||Gamma m_n||_{L^q} + sum over the six directions of ||D(Gamma m_n)||_{L^q}.
/// n = 0 uses the scalar weight m_0 = 2; any other n must be even. Throws LocalizationError
/// when the guard fails.
SobolevNorm sobolev_norm(const MixedState& state, int n, double q,
                         const SobolevOptions& options = {});

/// ||Gamma m_s||_{L^{r+eps}} + ||Gamma m_s||_{L^{r-eps}} for a real weight order s.
double lp_pm_eps(const MixedState& state, double s, double r, double eps);

/// (dx^3 sum |f|^p)^{1/p}, or max |f| for p = inf.
double lebesgue_norm(const ScalarField& f, double p);
double lebesgue_norm(std::span<const double> values, double cell_volume, double p);

/// Which quantities an observation records; the CSV column set is a function of this alone.
struct ObservableConfig {
  std::vector<int> moments{0, 2, 4};
  std::vector<double> schatten_p{kInfinity};
  /// Weighted norms ||Gamma m_n||_{L^p}, one column per (n, p).
  int weight_n = 2;
  std::vector<double> weighted_p{kInfinity, 2.0};
  /// Quantum Sobolev norm N_q at weight_n.
  bool sobolev = true;
  double sobolev_q = 2.0;
  bool check_localization = true;
  /// ||Gamma m_{n1}||_{L^{r +- eps}} with n1 = weight_n + a + 1 + delta, r = 3/(1-a).
  bool lr_pm_eps = true;
  double eps = 0.5;
  double delta = 0.5;
  /// ||rho_k||_{L^p} table entries.
  std::vector<std::pair<int, double>> density_norms{};
  bool energy = true;
};

struct ObservableRecord {
  double time = 0.0;
  std::vector<std::string> names;
  std::vector<double> values;
  /// The localization guard failed for this sample; the Sobolev columns hold NaN.
  bool localization_lost = false;

  double value(const std::string& name) const;
};

/// Column names (after "t") produced by `observe` for a configuration.
std::vector<std::string> observable_columns(const ObservableConfig& config);

ObservableRecord observe(const ObservableConfig& config, const InteractionKernel& kernel,
                         const MixedState& state, Mode mode, double time,
                         std::optional<double> exchange_coefficient = std::nullopt);

}  // namespace hflab
