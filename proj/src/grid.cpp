#include "hflab/grid.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>
#include <string>

#include "hflab/errors.hpp"

namespace hflab {

namespace {

// The FFTW planner is not reentrant; execution is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

fftw_complex* as_fftw(cplx* p) { return reinterpret_cast<fftw_complex*>(p); }

// Applies a symbol given as a callable over the flat frequency index.
template <class SymbolAt>
ScalarField apply_indexed(const ScalarField& f, SymbolAt&& symbol_at) {
  if (f.space() != Space::physical) {
    throw InvalidArgument("multiplier expects a physical-space field");
  }
  const TorusGrid& grid = f.grid();
  ScalarField out = f;
  cplx* data = out.values().data();
  grid.fft_forward(data);
  const double inv = 1.0 / static_cast<double>(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    data[i] *= symbol_at(i) * inv;
  }
  grid.fft_backward(data);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// TorusGrid

std::shared_ptr<const TorusGrid> TorusGrid::create(int points_per_axis, double box_length) {
  if (points_per_axis < 4 || points_per_axis % 2 != 0) {
    throw InvalidArgument("points_per_axis must be even and >= 4, got " +
                          std::to_string(points_per_axis));
  }
  if (!(box_length > 0.0) || !std::isfinite(box_length)) {
    throw InvalidArgument("box_length must be positive and finite");
  }
  return std::shared_ptr<const TorusGrid>(new TorusGrid(points_per_axis, box_length));
}

TorusGrid::TorusGrid(int n, double length)
    : n_(n), length_(length), size_(static_cast<std::size_t>(n) * n * n) {
  for (auto& c : coords_) c.resize(size_);
  for (auto& c : xi_) c.resize(size_);
  xi_norm2_.resize(size_);
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < n_; ++j) {
      for (int k = 0; k < n_; ++k) {
        const std::size_t idx = index(i, j, k);
        const std::array<int, 3> m{i, j, k};
        double norm2 = 0.0;
        for (int a = 0; a < 3; ++a) {
          coords_[a][idx] = coordinate(m[a]);
          const double w = wavenumber(m[a]);
          xi_[a][idx] = w;
          norm2 += w * w;
        }
        xi_norm2_[idx] = norm2;
      }
    }
  }

  // FFTW_ESTIMATE keeps the plan choice independent of timing, so transforms are bitwise
  // reproducible run to run.
  FieldData scratch(size_);
  std::lock_guard<std::mutex> lock(planner_mutex());
  forward_plan_ = fftw_plan_dft_3d(n_, n_, n_, as_fftw(scratch.data()), as_fftw(scratch.data()),
                                   FFTW_FORWARD, FFTW_ESTIMATE);
  backward_plan_ = fftw_plan_dft_3d(n_, n_, n_, as_fftw(scratch.data()), as_fftw(scratch.data()),
                                    FFTW_BACKWARD, FFTW_ESTIMATE);
  if (forward_plan_ == nullptr || backward_plan_ == nullptr) {
    throw std::runtime_error("FFTW planning failed");
  }
}

TorusGrid::~TorusGrid() {
  std::lock_guard<std::mutex> lock(planner_mutex());
  if (forward_plan_) fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
  if (backward_plan_) fftw_destroy_plan(static_cast<fftw_plan>(backward_plan_));
}

std::array<int, 3> TorusGrid::multi_index(std::size_t flat) const noexcept {
  const int k = static_cast<int>(flat % n_);
  flat /= n_;
  const int j = static_cast<int>(flat % n_);
  const int i = static_cast<int>(flat / n_);
  return {i, j, k};
}

double TorusGrid::wavenumber(int m) const noexcept {
  return 2.0 * std::numbers::pi / length_ * signed_mode(m);
}

void TorusGrid::fft_forward(cplx* data) const {
  fftw_execute_dft(static_cast<fftw_plan>(forward_plan_), as_fftw(data), as_fftw(data));
}

void TorusGrid::fft_backward(cplx* data) const {
  fftw_execute_dft(static_cast<fftw_plan>(backward_plan_), as_fftw(data), as_fftw(data));
}

// ---------------------------------------------------------------------------
// ScalarField

ScalarField::ScalarField(GridPtr grid, Space space)
    : grid_(std::move(grid)), values_(grid_->size(), cplx{0.0, 0.0}), space_(space) {}

ScalarField::ScalarField(GridPtr grid, FieldData values, Space space)
    : grid_(std::move(grid)), values_(std::move(values)), space_(space) {
  if (values_.size() != grid_->size()) {
    throw InvalidArgument("field has " + std::to_string(values_.size()) +
                          " values, grid expects " + std::to_string(grid_->size()));
  }
}

ScalarField ScalarField::from_function(GridPtr grid,
                                       const std::function<cplx(double, double, double)>& f) {
  ScalarField out(grid);
  const auto x1 = grid->x(0), x2 = grid->x(1), x3 = grid->x(2);
  for (std::size_t i = 0; i < grid->size(); ++i) out[i] = f(x1[i], x2[i], x3[i]);
  return out;
}

void ScalarField::require_compatible(const ScalarField& other) const {
  if (!grid_->same_as(*other.grid_)) throw InvalidArgument("fields live on different grids");
  if (space_ != other.space_) throw InvalidArgument("fields live in different spaces");
}

ScalarField& ScalarField::operator+=(const ScalarField& other) {
  require_compatible(other);
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

ScalarField& ScalarField::operator-=(const ScalarField& other) {
  require_compatible(other);
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

ScalarField& ScalarField::operator*=(cplx factor) {
  for (auto& v : values_) v *= factor;
  return *this;
}

ScalarField& ScalarField::add_scaled(cplx factor, const ScalarField& other) {
  require_compatible(other);
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += factor * other.values_[i];
  return *this;
}

ScalarField operator+(ScalarField lhs, const ScalarField& rhs) { return lhs += rhs; }
ScalarField operator-(ScalarField lhs, const ScalarField& rhs) { return lhs -= rhs; }
ScalarField operator*(cplx factor, ScalarField f) { return f *= factor; }

cplx inner(const ScalarField& f, const ScalarField& g) {
  if (!f.grid().same_as(g.grid())) throw InvalidArgument("inner: fields live on different grids");
  if (f.size() != g.size()) throw InvalidArgument("inner: size mismatch");
  // Fixed sequential order keeps the reduction bitwise reproducible.
  double re = 0.0, im = 0.0;
  const cplx* a = f.values().data();
  const cplx* b = g.values().data();
  for (std::size_t i = 0; i < f.size(); ++i) {
    re += a[i].real() * b[i].real() + a[i].imag() * b[i].imag();
    im += a[i].real() * b[i].imag() - a[i].imag() * b[i].real();
  }
  return cplx{re, im} * f.grid().cell_volume();
}

double norm(const ScalarField& f) { return std::sqrt(std::max(0.0, inner(f, f).real())); }

ScalarField multiply(const ScalarField& f, const ScalarField& g) {
  if (!f.grid().same_as(g.grid())) throw InvalidArgument("multiply: fields live on different grids");
  ScalarField out = f;
  for (std::size_t i = 0; i < f.size(); ++i) out[i] *= g[i];
  return out;
}

ScalarField conj_multiply(const ScalarField& f, const ScalarField& g) {
  if (!f.grid().same_as(g.grid())) throw InvalidArgument("multiply: fields live on different grids");
  ScalarField out = g;
  for (std::size_t i = 0; i < f.size(); ++i) out[i] *= std::conj(f[i]);
  return out;
}

ScalarField multiply(const ScalarField& f, std::span<const double> table) {
  if (table.size() != f.size()) throw InvalidArgument("multiply: table size mismatch");
  ScalarField out = f;
  for (std::size_t i = 0; i < f.size(); ++i) out[i] *= table[i];
  return out;
}

double max_abs(const ScalarField& f) {
  double m = 0.0;
  for (const auto& v : f.values()) m = std::max(m, std::abs(v));
  return m;
}

// ---------------------------------------------------------------------------
// Multipliers

Multiplier Multiplier::from_function(GridPtr grid,
                                     const std::function<cplx(const Frequency&)>& symbol,
                                     std::optional<cplx> zero_value) {
  std::vector<cplx> table(grid->size());
  const auto k1 = grid->xi(0), k2 = grid->xi(1), k3 = grid->xi(2);
  for (std::size_t i = 0; i < grid->size(); ++i) {
    if (i == 0 && zero_value) {
      table[i] = *zero_value;
    } else {
      table[i] = symbol({k1[i], k2[i], k3[i]});
    }
    if (!std::isfinite(table[i].real()) || !std::isfinite(table[i].imag())) {
      const auto m = grid->multi_index(i);
      throw InvalidArgument("symbol is not finite at lattice mode (" +
                            std::to_string(grid->signed_mode(m[0])) + ", " +
                            std::to_string(grid->signed_mode(m[1])) + ", " +
                            std::to_string(grid->signed_mode(m[2])) + ")");
    }
  }
  return Multiplier(std::move(grid), std::move(table));
}

Multiplier Multiplier::from_table(GridPtr grid, std::vector<cplx> table) {
  if (table.size() != grid->size()) throw InvalidArgument("symbol table size mismatch");
  for (const auto& v : table) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
      throw InvalidArgument("symbol table contains non-finite values");
    }
  }
  return Multiplier(std::move(grid), std::move(table));
}

Multiplier Multiplier::operator*(const Multiplier& other) const {
  if (!grid_->same_as(*other.grid_)) throw InvalidArgument("symbols live on different grids");
  std::vector<cplx> t(table_.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = table_[i] * other.table_[i];
  return Multiplier(grid_, std::move(t));
}

ScalarField forward_transform(const ScalarField& f) {
  if (f.space() != Space::physical) throw InvalidArgument("forward_transform expects physical space");
  const TorusGrid& grid = f.grid();
  ScalarField out(f.grid_ptr(), f.values(), Space::frequency);
  grid.fft_forward(out.values().data());
  // The box starts at -L/2, giving a (-1)^(m1+m2+m3) phase relative to the raw DFT.
  const double dv = grid.cell_volume();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto m = grid.multi_index(i);
    const double sign = ((m[0] + m[1] + m[2]) % 2 == 0) ? 1.0 : -1.0;
    out[i] *= sign * dv;
  }
  return out;
}

ScalarField inverse_transform(const ScalarField& f_hat) {
  if (f_hat.space() != Space::frequency) {
    throw InvalidArgument("inverse_transform expects frequency space");
  }
  const TorusGrid& grid = f_hat.grid();
  ScalarField out(f_hat.grid_ptr(), f_hat.values(), Space::physical);
  const double scale = 1.0 / grid.box_volume();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto m = grid.multi_index(i);
    const double sign = ((m[0] + m[1] + m[2]) % 2 == 0) ? 1.0 : -1.0;
    out[i] *= sign * scale;
  }
  grid.fft_backward(out.values().data());
  return out;
}

ScalarField apply_multiplier(const ScalarField& f, const Multiplier& symbol) {
  if (!f.grid().same_as(symbol.grid())) throw InvalidArgument("symbol and field grids differ");
  const auto& t = symbol.table();
  return apply_indexed(f, [&](std::size_t i) { return t[i]; });
}

ScalarField apply_multiplier(const ScalarField& f,
                             const std::function<cplx(const Frequency&)>& symbol,
                             std::optional<cplx> zero_value) {
  return apply_multiplier(f, Multiplier::from_function(f.grid_ptr(), symbol, zero_value));
}

Multiplier momentum_power_symbol(const GridPtr& grid, double s, double hbar) {
  if (!(s >= 0.0)) throw InvalidArgument("momentum power must be >= 0");
  std::vector<cplx> t(grid->size());
  const auto k2 = grid->xi_norm2();
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (s == 0.0) {
      t[i] = 1.0;
    } else {
      t[i] = std::pow(hbar * std::sqrt(k2[i]), s);  // 0 at xi = 0
    }
  }
  return Multiplier::from_table(grid, std::move(t));
}

Multiplier weight_symbol(const GridPtr& grid, double s, double hbar) {
  if (!(s >= 0.0)) throw InvalidArgument("weight order must be >= 0");
  std::vector<cplx> t(grid->size());
  const auto k2 = grid->xi_norm2();
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = 1.0 + (s == 0.0 ? 1.0 : std::pow(hbar * std::sqrt(k2[i]), s));
  }
  return Multiplier::from_table(grid, std::move(t));
}

Multiplier momentum_component_power_symbol(const GridPtr& grid, int axis, int n, double hbar) {
  if (axis < 0 || axis > 2) throw InvalidArgument("axis must be 0, 1 or 2");
  if (n < 0) throw InvalidArgument("component power must be >= 0");
  std::vector<cplx> t(grid->size());
  const auto k = grid->xi(axis);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::pow(hbar * k[i], n);
  return Multiplier::from_table(grid, std::move(t));
}

ScalarField momentum_power(const ScalarField& f, double s, double hbar) {
  if (!(s >= 0.0)) throw InvalidArgument("momentum_power: s must be >= 0");
  if (s == 0.0) return f;
  const auto k2 = f.grid().xi_norm2();
  return apply_indexed(f, [&](std::size_t i) { return cplx{std::pow(hbar * std::sqrt(k2[i]), s)}; });
}

ScalarField weight_m_n(const ScalarField& f, int n, double hbar) {
  if (n <= 0 || n % 2 != 0) {
    throw InvalidArgument("weight_m_n: n must be a positive even integer, got " + std::to_string(n));
  }
  const auto k2 = f.grid().xi_norm2();
  const int half = n / 2;
  return apply_indexed(f, [&](std::size_t i) {
    return cplx{1.0 + std::pow(hbar * hbar * k2[i], half)};
  });
}

ScalarField weight_real(const ScalarField& f, double s, double hbar) {
  return apply_multiplier(f, weight_symbol(f.grid_ptr(), s, hbar));
}

ScalarField partial(const ScalarField& f, int axis) {
  if (axis < 0 || axis > 2) throw InvalidArgument("axis must be 0, 1 or 2");
  const auto k = f.grid().xi(axis);
  return apply_indexed(f, [&](std::size_t i) { return cplx{0.0, k[i]}; });
}

std::array<ScalarField, 3> gradient(const ScalarField& f) {
  return {partial(f, 0), partial(f, 1), partial(f, 2)};
}

cplx quadratic_form(const ScalarField& f, const Multiplier& symbol) {
  if (f.space() != Space::physical) throw InvalidArgument("quadratic_form expects physical space");
  const TorusGrid& grid = f.grid();
  FieldData work = f.values();
  grid.fft_forward(work.data());
  const auto& t = symbol.table();
  cplx acc{0.0, 0.0};
  for (std::size_t i = 0; i < grid.size(); ++i) acc += t[i] * std::norm(work[i]);
  // Parseval under the Riemann-sum convention: L^-3 sum |f_hat|^2 = dx^3 / N^3 sum |DFT f|^2.
  return acc * (grid.cell_volume() / static_cast<double>(grid.size()));
}

}  // namespace hflab
