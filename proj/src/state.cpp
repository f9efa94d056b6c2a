#include "hflab/state.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "hflab/errors.hpp"

namespace hflab {

namespace {

constexpr std::uint32_t kSnapshotMagic = 0x534C4648u;  // "HFLS" in little-endian byte order
constexpr std::uint32_t kSnapshotVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "snapshot encoding assumes a little-endian host");

double planck_cubed(double hbar) {
  const double h = 2.0 * std::numbers::pi * hbar;
  return h * h * h;
}

// splitmix64-seeded 64-bit engine with a portable normal sampler, so seeded states are
// identical across standard libraries.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : engine_(seed) {}

  double uniform() {
    // 53 random bits in (0, 1)
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Eigen::MatrixXcd gram_eigen(std::span<const ScalarField> fields) {
  const int r = static_cast<int>(fields.size());
  Eigen::MatrixXcd g(r, r);
  for (int j = 0; j < r; ++j) {
    for (int k = j; k < r; ++k) {
      g(j, k) = inner(fields[j], fields[k]);
      g(k, j) = std::conj(g(j, k));
    }
  }
  return g;
}

void require_same_grid(const GridPtr& grid, std::span<const ScalarField> orbitals) {
  for (const auto& f : orbitals) {
    if (!f.grid().same_as(*grid)) throw InvalidArgument("orbital lives on a different grid");
    if (f.space() != Space::physical) throw InvalidArgument("orbitals must be in physical space");
  }
}

template <class T>
void put(std::vector<std::uint8_t>& out, const T& value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

template <class T>
T take(std::span<const std::uint8_t> bytes, std::size_t& offset) {
  if (offset + sizeof(T) > bytes.size()) throw FormatError("snapshot truncated");
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  offset += sizeof(T);
  return value;
}

}  // namespace

std::vector<cplx> gram_matrix(std::span<const ScalarField> fields) {
  const Eigen::MatrixXcd g = gram_eigen(fields);
  const int r = static_cast<int>(fields.size());
  std::vector<cplx> out(static_cast<std::size_t>(r) * r);
  for (int j = 0; j < r; ++j)
    for (int k = 0; k < r; ++k) out[static_cast<std::size_t>(j) * r + k] = g(j, k);
  return out;
}

double orthonormality_error(std::span<const ScalarField> fields) {
  const Eigen::MatrixXcd g = gram_eigen(fields);
  double err = 0.0;
  for (int j = 0; j < g.rows(); ++j)
    for (int k = 0; k < g.cols(); ++k)
      err = std::max(err, std::abs(g(j, k) - (j == k ? cplx{1.0} : cplx{0.0})));
  return err;
}

// ---------------------------------------------------------------------------
// MixedState

MixedState::MixedState(double hbar, GridPtr grid, std::vector<double> weights,
                       std::vector<ScalarField> orbitals)
    : hbar_(hbar), grid_(std::move(grid)), weights_(std::move(weights)),
      orbitals_(std::move(orbitals)) {}

MixedState::Created MixedState::create(double hbar, GridPtr grid, std::vector<double> weights,
                                       std::vector<ScalarField> orbitals) {
  if (!(hbar > 0.0) || !std::isfinite(hbar)) throw InvalidArgument("hbar must be positive");
  if (weights.empty()) throw InvalidArgument("a state needs at least one orbital");
  if (weights.size() != orbitals.size()) {
    throw InvalidArgument("weights and orbitals differ in length");
  }
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw InvalidArgument("weights must be positive and finite");
  }
  require_same_grid(grid, orbitals);

  const Eigen::MatrixXcd g = gram_eigen(orbitals);
  for (int j = 0; j < g.rows(); ++j) {
    for (int k = 0; k < g.cols(); ++k) {
      const double dev = std::abs(g(j, k) - (j == k ? cplx{1.0} : cplx{0.0}));
      if (dev > 1e-6) {
        std::ostringstream msg;
        msg << "orbitals are not orthonormal: Gram(" << j << ", " << k << ") = " << g(j, k);
        throw OrthonormalityError(msg.str(), j, k, std::abs(g(j, k)));
      }
    }
  }

  // Sort by descending weight, carrying orbitals along.
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });
  std::vector<double> sorted_w;
  std::vector<ScalarField> sorted_f;
  sorted_w.reserve(order.size());
  sorted_f.reserve(order.size());
  for (std::size_t i : order) {
    sorted_w.push_back(weights[i]);
    sorted_f.push_back(std::move(orbitals[i]));
  }

  const double total = std::accumulate(sorted_w.begin(), sorted_w.end(), 0.0);
  const double scale = 1.0 / (planck_cubed(hbar) * total);
  for (double& w : sorted_w) w *= scale;
  return {MixedState(hbar, std::move(grid), std::move(sorted_w), std::move(sorted_f)), scale};
}

MixedState MixedState::restore(double hbar, GridPtr grid, std::vector<double> weights,
                               std::vector<ScalarField> orbitals) {
  if (!(hbar > 0.0)) throw FormatError("stored hbar is not positive");
  if (weights.empty() || weights.size() != orbitals.size()) {
    throw FormatError("stored weights and orbitals are inconsistent");
  }
  for (std::size_t j = 0; j < weights.size(); ++j) {
    if (!(weights[j] > 0.0)) throw FormatError("stored weight is not positive");
    if (j > 0 && weights[j] > weights[j - 1]) throw FormatError("stored weights are not sorted");
  }
  require_same_grid(grid, orbitals);
  const double trace = planck_cubed(hbar) * std::accumulate(weights.begin(), weights.end(), 0.0);
  if (std::abs(trace - 1.0) > 1e-10) throw FormatError("stored weights are not normalized");
  return MixedState(hbar, std::move(grid), std::move(weights), std::move(orbitals));
}

MixedState MixedState::with_orbitals(std::vector<ScalarField> orbitals) const {
  if (orbitals.size() != orbitals_.size()) throw InvalidArgument("with_orbitals: rank changed");
  require_same_grid(grid_, orbitals);
  return MixedState(hbar_, grid_, weights_, std::move(orbitals));
}

double MixedState::h() const noexcept { return 2.0 * std::numbers::pi * hbar_; }
double MixedState::h3() const noexcept { return planck_cubed(hbar_); }

double MixedState::normalized_trace() const noexcept {
  return h3() * std::accumulate(weights_.begin(), weights_.end(), 0.0);
}

double MixedState::orthonormality_error() const { return hflab::orthonormality_error(orbitals_); }

// ---------------------------------------------------------------------------
// Constructors

std::vector<ScalarField> lowdin_orthonormalize(std::span<const ScalarField> fields) {
  if (fields.empty()) return {};
  const Eigen::MatrixXcd g = gram_eigen(fields);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(g);
  const Eigen::VectorXd& e = eig.eigenvalues();  // ascending
  const double emax = e.maxCoeff();
  const double emin = e.minCoeff();
  if (!(emin > 0.0) || emax / emin > 1e12) {
    throw OrthonormalityError("fields are numerically dependent (Gram condition number " +
                              std::to_string(emin > 0.0 ? emax / emin : INFINITY) + ")");
  }
  const Eigen::MatrixXcd& u = eig.eigenvectors();
  const Eigen::MatrixXcd inv_sqrt =
      u * e.cwiseSqrt().cwiseInverse().asDiagonal() * u.adjoint();

  const int r = static_cast<int>(fields.size());
  std::vector<ScalarField> out;
  out.reserve(r);
  for (int k = 0; k < r; ++k) {
    ScalarField acc(fields[0].grid_ptr());
    for (int j = 0; j < r; ++j) acc.add_scaled(inv_sqrt(j, k), fields[j]);
    out.push_back(std::move(acc));
  }
  return out;
}

double default_coherent_width(double hbar, const TorusGrid& grid) {
  return std::sqrt(hbar) * grid.box_length() / 8.0;
}

MixedState coherent_state_lattice(double hbar, GridPtr grid,
                                  std::span<const PhaseSpaceCenter> centers, double sigma) {
  if (centers.empty()) throw InvalidArgument("coherent_state_lattice needs at least one center");
  if (!(sigma > 0.0)) throw InvalidArgument("coherent-state width must be positive");
  if (!(hbar > 0.0)) throw InvalidArgument("hbar must be positive");
  const double half = 0.5 * grid->box_length();
  for (const auto& c : centers) {
    for (int a = 0; a < 3; ++a) {
      if (std::abs(c.position[a]) + 4.0 * sigma > half * (1.0 + 1e-12)) {
        throw InvalidArgument("coherent-state center closer than 4 sigma to the box boundary");
      }
    }
  }
  std::vector<ScalarField> raw;
  raw.reserve(centers.size());
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  for (const auto& c : centers) {
    raw.push_back(ScalarField::from_function(grid, [&](double x1, double x2, double x3) {
      const double d1 = x1 - c.position[0], d2 = x2 - c.position[1], d3 = x3 - c.position[2];
      const double phase = (c.velocity[0] * x1 + c.velocity[1] * x2 + c.velocity[2] * x3) / hbar;
      return std::exp(cplx{-(d1 * d1 + d2 * d2 + d3 * d3) * inv2s2, phase});
    }));
  }
  auto orbitals = lowdin_orthonormalize(raw);
  std::vector<double> weights(centers.size(), 1.0);
  return new_mixed_state(hbar, std::move(grid), std::move(weights), std::move(orbitals));
}

MixedState random_mixed_state(std::uint64_t seed, double hbar, GridPtr grid, int rank,
                              double decay) {
  if (rank < 1) throw InvalidArgument("rank must be >= 1");
  if (!(hbar > 0.0)) throw InvalidArgument("hbar must be positive");
  if (!(decay >= 0.0)) throw InvalidArgument("decay rate must be >= 0");
  NormalSampler rng(seed);
  const auto k2 = grid->xi_norm2();
  std::vector<ScalarField> raw;
  raw.reserve(rank);
  for (int j = 0; j < rank; ++j) {
    ScalarField coeffs(grid, Space::frequency);
    for (std::size_t i = 0; i < grid->size(); ++i) {
      const double envelope = std::exp(-decay * hbar * hbar * k2[i]);
      const double re = rng.normal();
      const double im = rng.normal();
      coeffs[i] = envelope * cplx{re, im};
    }
    raw.push_back(inverse_transform(coeffs));
  }
  std::vector<ScalarField> orbitals;
  try {
    orbitals = lowdin_orthonormalize(raw);
  } catch (const OrthonormalityError& e) {
    throw InvalidArgument("rank " + std::to_string(rank) +
                          " exceeds what the decay envelope supports: " + e.what());
  }
  const double ratio = 0.3 + 0.6 * rng.uniform();
  std::vector<double> weights(rank);
  double w = 1.0;
  for (int j = 0; j < rank; ++j, w *= ratio) weights[j] = w;
  return new_mixed_state(hbar, std::move(grid), std::move(weights), std::move(orbitals));
}

ScalarField plane_wave(const GridPtr& grid, const std::array<int, 3>& mode) {
  const double k = 2.0 * std::numbers::pi / grid->box_length();
  const double amp = 1.0 / std::sqrt(grid->box_volume());
  return ScalarField::from_function(grid, [&](double x1, double x2, double x3) {
    const double phase = k * (mode[0] * x1 + mode[1] * x2 + mode[2] * x3);
    return amp * cplx{std::cos(phase), std::sin(phase)};
  });
}

MixedState plane_wave_state(double hbar, GridPtr grid, std::span<const std::array<int, 3>> modes,
                            std::vector<double> weights) {
  std::vector<ScalarField> orbitals;
  orbitals.reserve(modes.size());
  for (const auto& m : modes) orbitals.push_back(plane_wave(grid, m));
  return new_mixed_state(hbar, std::move(grid), std::move(weights), std::move(orbitals));
}

std::vector<double> spatial_density_values(const MixedState& state) {
  std::vector<double> rho(state.grid().size(), 0.0);
  const double h3 = state.h3();
  for (int j = 0; j < state.rank(); ++j) {
    const double w = h3 * state.weights()[j];
    const auto& psi = state.orbital(j).values();
    for (std::size_t i = 0; i < rho.size(); ++i) rho[i] += w * std::norm(psi[i]);
  }
  return rho;
}

ScalarField spatial_density(const MixedState& state) {
  const auto rho = spatial_density_values(state);
  ScalarField out(state.grid_ptr());
  for (std::size_t i = 0; i < rho.size(); ++i) out[i] = rho[i];
  return out;
}

double central_mass(const MixedState& state) {
  const auto rho = spatial_density_values(state);
  const TorusGrid& g = state.grid();
  const double quarter = 0.25 * g.box_length() * (1.0 + 1e-12);
  double mass = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    if (std::abs(g.x(0)[i]) <= quarter && std::abs(g.x(1)[i]) <= quarter &&
        std::abs(g.x(2)[i]) <= quarter) {
      mass += rho[i];
    }
  }
  return mass * g.cell_volume();
}

// ---------------------------------------------------------------------------
// Snapshots

std::vector<std::uint8_t> encode_snapshot(const MixedState& state) {
  const TorusGrid& g = state.grid();
  std::vector<std::uint8_t> out;
  out.reserve(40 + state.rank() * (8 + 16 * g.size()));
  put(out, kSnapshotMagic);
  put(out, kSnapshotVersion);
  put(out, static_cast<std::uint64_t>(g.points_per_axis()));
  put(out, g.box_length());
  put(out, state.hbar());
  put(out, static_cast<std::uint64_t>(state.rank()));
  for (double w : state.weights()) put(out, w);
  for (const auto& psi : state.orbitals()) {
    for (const auto& v : psi.values()) {
      put(out, v.real());
      put(out, v.imag());
    }
  }
  return out;
}

MixedState decode_snapshot(std::span<const std::uint8_t> bytes) {
  std::size_t off = 0;
  if (take<std::uint32_t>(bytes, off) != kSnapshotMagic) throw FormatError("not a state snapshot");
  const auto version = take<std::uint32_t>(bytes, off);
  if (version != kSnapshotVersion) {
    throw FormatError("unsupported snapshot version " + std::to_string(version));
  }
  const auto n = take<std::uint64_t>(bytes, off);
  const double length = take<double>(bytes, off);
  const double hbar = take<double>(bytes, off);
  const auto rank = take<std::uint64_t>(bytes, off);
  if (n > 1024 || rank == 0 || rank > 4096) throw FormatError("implausible snapshot header");
  auto grid = TorusGrid::create(static_cast<int>(n), length);
  const std::size_t expected = off + rank * 8 + rank * grid->size() * 16;
  if (bytes.size() != expected) throw FormatError("snapshot size does not match its header");
  std::vector<double> weights(rank);
  for (auto& w : weights) w = take<double>(bytes, off);
  std::vector<ScalarField> orbitals;
  orbitals.reserve(rank);
  for (std::uint64_t j = 0; j < rank; ++j) {
    ScalarField psi(grid);
    for (std::size_t i = 0; i < grid->size(); ++i) {
      const double re = take<double>(bytes, off);
      const double im = take<double>(bytes, off);
      psi[i] = {re, im};
    }
    orbitals.push_back(std::move(psi));
  }
  return MixedState::restore(hbar, std::move(grid), std::move(weights), std::move(orbitals));
}

void write_snapshot(const MixedState& state, const std::filesystem::path& path) {
  const auto bytes = encode_snapshot(state);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing " + path.string());
}

MixedState read_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_snapshot(bytes);
}

}  // namespace hflab
