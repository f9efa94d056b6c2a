#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <optional>
#include <span>
#include <vector>

namespace hflab {

using cplx = std::complex<double>;

/// Allocator handing out 64-byte aligned blocks so every field buffer has the
/// alignment the transform plans were created with.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() noexcept = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), alignment));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using FieldData = std::vector<cplx, AlignedAllocator<cplx>>;
using Frequency = std::array<double, 3>;

enum class Space { physical, frequency };

/// Periodic cube [-L/2, L/2)^3 sampled with N points per axis.
///
/// Grid points are x_j = -L/2 + j*dx and the dual lattice is (2*pi/L)*{-N/2, ..., N/2-1}^3.
/// Flat indices are row-major, (i, j, k) -> (i*N + j)*N + k; frequency-space data uses the
/// same flat index with the usual FFT ordering of modes (m >= N/2 stands for m - N).
///
/// The grid owns the transform plans and is shared between fields through GridPtr.
class TorusGrid {
 public:
  static std::shared_ptr<const TorusGrid> create(int points_per_axis, double box_length);

  TorusGrid(const TorusGrid&) = delete;
  TorusGrid& operator=(const TorusGrid&) = delete;
  ~TorusGrid();

  int points_per_axis() const noexcept { return n_; }
  double box_length() const noexcept { return length_; }
  double box_volume() const noexcept { return length_ * length_ * length_; }
  double spacing() const noexcept { return length_ / n_; }
  double cell_volume() const noexcept {
    const double dx = spacing();
    return dx * dx * dx;
  }
  std::size_t size() const noexcept { return size_; }

  std::size_t index(int i, int j, int k) const noexcept {
    return (static_cast<std::size_t>(i) * n_ + j) * n_ + k;
  }
  std::array<int, 3> multi_index(std::size_t flat) const noexcept;

  /// 1D coordinate of lattice index j.
  double coordinate(int j) const noexcept { return -0.5 * length_ + j * spacing(); }
  /// Signed mode number of FFT index m, in [-N/2, N/2).
  int signed_mode(int m) const noexcept { return m < n_ / 2 ? m : m - n_; }
  double wavenumber(int m) const noexcept;

  /// Per-point tables over the flat index.
  std::span<const double> x(int axis) const noexcept { return coords_[axis]; }
  std::span<const double> xi(int axis) const noexcept { return xi_[axis]; }
  std::span<const double> xi_norm2() const noexcept { return xi_norm2_; }

  /// Raw unnormalized in-place DFTs on 64-byte aligned buffers of length size().
  void fft_forward(cplx* data) const;
  void fft_backward(cplx* data) const;

  bool same_as(const TorusGrid& other) const noexcept { return this == &other; }

 private:
  TorusGrid(int n, double length);

  int n_;
  double length_;
  std::size_t size_;
  std::array<std::vector<double>, 3> coords_;
  std::array<std::vector<double>, 3> xi_;
  std::vector<double> xi_norm2_;
  void* forward_plan_ = nullptr;
  void* backward_plan_ = nullptr;
};

using GridPtr = std::shared_ptr<const TorusGrid>;

/// Complex samples on a grid, tagged with the space they live in.
class ScalarField {
 public:
  explicit ScalarField(GridPtr grid, Space space = Space::physical);
  ScalarField(GridPtr grid, FieldData values, Space space = Space::physical);

  /// Samples f(x1, x2, x3) at every grid point.
  static ScalarField from_function(GridPtr grid,
                                   const std::function<cplx(double, double, double)>& f);

  const TorusGrid& grid() const noexcept { return *grid_; }
  const GridPtr& grid_ptr() const noexcept { return grid_; }
  Space space() const noexcept { return space_; }
  std::size_t size() const noexcept { return values_.size(); }

  const FieldData& values() const noexcept { return values_; }
  FieldData& values() noexcept { return values_; }
  cplx operator[](std::size_t i) const noexcept { return values_[i]; }
  cplx& operator[](std::size_t i) noexcept { return values_[i]; }

  ScalarField& operator+=(const ScalarField& other);
  ScalarField& operator-=(const ScalarField& other);
  ScalarField& operator*=(cplx factor);
  /// this += factor * other
  ScalarField& add_scaled(cplx factor, const ScalarField& other);

 private:
  void require_compatible(const ScalarField& other) const;

  GridPtr grid_;
  FieldData values_;
  Space space_;
};

ScalarField operator+(ScalarField lhs, const ScalarField& rhs);
ScalarField operator-(ScalarField lhs, const ScalarField& rhs);
ScalarField operator*(cplx factor, ScalarField f);

/// dx^3 * sum conj(f) g
cplx inner(const ScalarField& f, const ScalarField& g);
double norm(const ScalarField& f);
/// Pointwise f * g.
ScalarField multiply(const ScalarField& f, const ScalarField& g);
/// Pointwise conj(f) * g.
ScalarField conj_multiply(const ScalarField& f, const ScalarField& g);
/// Pointwise product with a real table (potentials, coordinates).
ScalarField multiply(const ScalarField& f, std::span<const double> table);
double max_abs(const ScalarField& f);

/// A Fourier multiplier tabulated on the frequency lattice.
class Multiplier {
 public:
  /// Evaluates `symbol` on every lattice frequency. When `zero_value` is given the symbol is
  /// not evaluated at xi = 0. Throws InvalidArgument on any non-finite value.
  static Multiplier from_function(GridPtr grid, const std::function<cplx(const Frequency&)>& symbol,
                                  std::optional<cplx> zero_value = std::nullopt);
  static Multiplier from_table(GridPtr grid, std::vector<cplx> table);

  const TorusGrid& grid() const noexcept { return *grid_; }
  const GridPtr& grid_ptr() const noexcept { return grid_; }
  const std::vector<cplx>& table() const noexcept { return table_; }

  /// Pointwise product of symbols.
  Multiplier operator*(const Multiplier& other) const;

 private:
  Multiplier(GridPtr grid, std::vector<cplx> table) : grid_(std::move(grid)), table_(std::move(table)) {}
  GridPtr grid_;
  std::vector<cplx> table_;
};

/// f_hat(xi) = dx^3 sum_x f(x) exp(-i xi.x)
ScalarField forward_transform(const ScalarField& f);
/// f(x) = L^-3 sum_xi f_hat(xi) exp(i xi.x)
ScalarField inverse_transform(const ScalarField& f_hat);

ScalarField apply_multiplier(const ScalarField& f, const Multiplier& symbol);
ScalarField apply_multiplier(const ScalarField& f,
                             const std::function<cplx(const Frequency&)>& symbol,
                             std::optional<cplx> zero_value = std::nullopt);

/// Symbol (hbar |xi|)^s, equal to 1 at xi = 0 when s == 0 and 0 otherwise.
Multiplier momentum_power_symbol(const GridPtr& grid, double s, double hbar);
/// Symbol 1 + (hbar |xi|)^s for any real s >= 0.
Multiplier weight_symbol(const GridPtr& grid, double s, double hbar);
/// Symbol (hbar xi_l)^n for one momentum component.
Multiplier momentum_component_power_symbol(const GridPtr& grid, int axis, int n, double hbar);

/// |p|^s f with p = -i hbar grad.
ScalarField momentum_power(const ScalarField& f, double s, double hbar);
/// (1 + |p|^n) f for even n > 0.
ScalarField weight_m_n(const ScalarField& f, int n, double hbar);
/// Real-order weight (1 + |p|^s) f, s >= 0.
ScalarField weight_real(const ScalarField& f, double s, double hbar);
std::array<ScalarField, 3> gradient(const ScalarField& f);
/// Spectral derivative along one axis.
ScalarField partial(const ScalarField& f, int axis);

/// <f, sigma(p) f> evaluated in frequency space.
cplx quadratic_form(const ScalarField& f, const Multiplier& symbol);

}  // namespace hflab
