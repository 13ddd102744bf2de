#pragma once

// Discrete flat torus C/Lambda, R^3-valued grid fields, spectral calculus,
// quadrature and Sobolev / C^k norms.
//
// Grid point (ix, iy) sits at z = (ix/N) omega1 + (iy/N) omega2 and is stored
// at flat index iy * N + ix. Transforms are unnormalized forward r2c and
// 1/N^2-normalized inverse c2r (FFTW conventions), so that
//   integral f = cell_area * sum_j f_j = (area / N^2) * fhat(0).
// Spectral derivatives use the dual-lattice wave vector of each mode; any mode
// carrying a Nyquist index is assigned wave vector zero, which keeps D_x, D_y
// real antisymmetric matrices. The Laplacian keeps the full symbol -|k|^2 on
// Nyquist modes (averaged over the +-N/2 aliases so it stays real symmetric);
// it equals D_x^2 + D_y^2 on fields without Nyquist content. Without this the
// Nyquist modes would be undamped by -Delta and J would acquire spurious
// negative eigenvalues of size max |grad psi|^2.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <fftw3.h>

#include "lumpflow/errors.hpp"

namespace lumpflow {

using cplx = std::complex<double>;
using Vec3 = Eigen::Vector3d;

struct LatticeSpec {
  cplx omega1{1.0, 0.0};
  cplx omega2{0.0, 1.0};
  int grid_n = 64;

  void validate() const {
    if (!(omega1.imag() == 0.0 && omega1.real() > 0.0))
      throw ConfigError("omega1 must be real and positive");
    if (!((omega2 / omega1).imag() > 0.0))
      throw ConfigError("Im(omega2/omega1) must be positive");
    if (grid_n < 8 || grid_n % 2 != 0)
      throw ConfigError("grid_n must be even and at least 8, got " + std::to_string(grid_n));
  }

  [[nodiscard]] double area() const { return omega1.real() * omega2.imag(); }
  [[nodiscard]] double cell_area() const { return area() / (double(grid_n) * grid_n); }

  [[nodiscard]] cplx point(int ix, int iy) const {
    return (double(ix) * omega1 + double(iy) * omega2) / double(grid_n);
  }

  /// Smallest distance between neighbouring grid points; drives the CFL bound.
  [[nodiscard]] double spacing_min() const {
    const double n = grid_n;
    return std::min({std::abs(omega1), std::abs(omega2), std::abs(omega1 - omega2),
                     std::abs(omega1 + omega2)}) / n;
  }

  [[nodiscard]] LatticeSpec with_grid(int n) const {
    LatticeSpec s = *this;
    s.grid_n = n;
    return s;
  }

  bool operator==(const LatticeSpec&) const = default;
};

enum class Direction { x, y };

/// Shared spectral machinery for one (lattice, grid) pair. Immutable after
/// construction; transforms are safe to call from several threads.
class Torus {
public:
  static std::shared_ptr<const Torus> make(const LatticeSpec& spec) {
    spec.validate();
    static std::mutex registry_mutex;
    static std::map<std::tuple<double, double, double, int>, std::weak_ptr<const Torus>> registry;
    std::lock_guard lock(registry_mutex);
    auto key = std::make_tuple(spec.omega1.real(), spec.omega2.real(), spec.omega2.imag(),
                               spec.grid_n);
    if (auto found = registry[key].lock()) return found;
    std::shared_ptr<const Torus> torus(new Torus(spec));
    registry[key] = torus;
    return torus;
  }

  ~Torus() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(r2c_);
    fftw_destroy_plan(c2r_);
  }

  Torus(const Torus&) = delete;
  Torus& operator=(const Torus&) = delete;

  [[nodiscard]] const LatticeSpec& lattice() const { return spec_; }
  [[nodiscard]] int n() const { return spec_.grid_n; }
  [[nodiscard]] std::size_t size() const { return std::size_t(n()) * n(); }
  [[nodiscard]] std::size_t spectral_size() const { return std::size_t(n()) * (n() / 2 + 1); }
  [[nodiscard]] double area() const { return spec_.area(); }
  [[nodiscard]] double cell_area() const { return spec_.cell_area(); }
  [[nodiscard]] cplx point(std::size_t flat) const {
    return spec_.point(int(flat % n()), int(flat / n()));
  }

  void forward(std::span<const double> in, std::span<cplx> out) const {
    fftw_execute_dft_r2c(r2c_, const_cast<double*>(in.data()),
                         reinterpret_cast<fftw_complex*>(out.data()));
  }

  /// Inverse transform including the 1/N^2 factor. Overwrites `in`.
  void backward(std::span<cplx> in, std::span<double> out) const {
    fftw_execute_dft_c2r(c2r_, reinterpret_cast<fftw_complex*>(in.data()), out.data());
    const double scale = 1.0 / double(size());
    for (double& v : out) v *= scale;
  }

  /// Physical wave-vector components per half-spectrum mode (zero on Nyquist).
  [[nodiscard]] std::span<const double> kx() const { return kx_; }
  [[nodiscard]] std::span<const double> ky() const { return ky_; }
  /// |k|^2 per mode, alias-averaged on Nyquist modes.
  [[nodiscard]] std::span<const double> k2() const { return k2_; }
  /// Multiplicity of each half-spectrum mode in Parseval sums (1 or 2).
  [[nodiscard]] std::span<const double> mode_weight() const { return weight_; }
  /// Signed integer mode indices (k_u, k_v) of each half-spectrum slot.
  [[nodiscard]] std::pair<int, int> mode_index(std::size_t slot) const {
    const int half = n() / 2 + 1;
    const int ku = int(slot % half);
    int kv = int(slot / half);
    if (kv > n() / 2) kv -= n();
    return {ku, kv};
  }
  [[nodiscard]] bool is_nyquist(std::size_t slot) const {
    auto [ku, kv] = mode_index(slot);
    return ku == n() / 2 || kv == n() / 2 || kv == -n() / 2;
  }

private:
  explicit Torus(const LatticeSpec& spec) : spec_(spec) {
    const int N = spec.grid_n;
    const int half = N / 2 + 1;
    std::vector<double> rbuf(size());
    std::vector<cplx> cbuf(spectral_size());
    {
      std::lock_guard lock(planner_mutex());
      const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
      r2c_ = fftw_plan_dft_r2c_2d(N, N, rbuf.data(), reinterpret_cast<fftw_complex*>(cbuf.data()),
                                  flags);
      c2r_ = fftw_plan_dft_c2r_2d(N, N, reinterpret_cast<fftw_complex*>(cbuf.data()), rbuf.data(),
                                  flags);
    }
    // u = lattice coordinate along omega1, v along omega2:
    //   d/dx = (1/w1) d/du,  d/dy = -(Re w2)/(w1 Im w2) d/du + (1/Im w2) d/dv
    const double w1 = spec.omega1.real();
    const double w2r = spec.omega2.real();
    const double w2i = spec.omega2.imag();
    kx_.resize(spectral_size());
    ky_.resize(spectral_size());
    k2_.resize(spectral_size());
    weight_.resize(spectral_size());
    auto wave = [&](int ku, int kv) {
      const double tu = 2.0 * M_PI * ku;
      const double tv = 2.0 * M_PI * kv;
      return std::make_pair(tu / w1, -tu * w2r / (w1 * w2i) + tv / w2i);
    };
    for (std::size_t s = 0; s < spectral_size(); ++s) {
      auto [ku, kv] = mode_index(s);
      weight_[s] = (ku == 0 || ku == N / 2) ? 1.0 : 2.0;
      if (is_nyquist(s)) {
        kx_[s] = ky_[s] = 0.0;
        const bool nu = ku == N / 2;
        const bool nv = std::abs(kv) == N / 2;
        double acc = 0.0;
        int count = 0;
        for (int su : {1, -1}) {
          if (!nu && su < 0) continue;
          for (int sv : {1, -1}) {
            if (!nv && sv < 0) continue;
            auto [a, b] = wave(nu ? su * N / 2 : ku, nv ? sv * N / 2 : kv);
            acc += a * a + b * b;
            ++count;
          }
        }
        k2_[s] = acc / count;
        continue;
      }
      std::tie(kx_[s], ky_[s]) = wave(ku, kv);
      k2_[s] = kx_[s] * kx_[s] + ky_[s] * ky_[s];
    }
    (void)half;
  }

  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }

  LatticeSpec spec_;
  fftw_plan r2c_ = nullptr;
  fftw_plan c2r_ = nullptr;
  std::vector<double> kx_, ky_, k2_, weight_;
};

using TorusPtr = std::shared_ptr<const Torus>;

inline void require_same(const TorusPtr& a, const TorusPtr& b) {
  if (a != b && !(a && b && a->lattice() == b->lattice())) throw LatticeMismatch();
}

/// Real-valued grid function.
class ScalarField {
public:
  ScalarField() = default;
  explicit ScalarField(TorusPtr torus, double fill = 0.0)
      : torus_(std::move(torus)), v_(torus_->size(), fill) {}
  ScalarField(TorusPtr torus, std::vector<double> values) : torus_(std::move(torus)), v_(std::move(values)) {
    if (v_.size() != torus_->size()) throw ConfigError("scalar field size does not match grid");
  }

  template <class F>
  static ScalarField from_function(const TorusPtr& torus, F&& f) {
    ScalarField s(torus);
    for (std::size_t i = 0; i < s.size(); ++i) s.v_[i] = f(torus->point(i));
    return s;
  }

  [[nodiscard]] const TorusPtr& torus() const { return torus_; }
  [[nodiscard]] std::size_t size() const { return v_.size(); }
  [[nodiscard]] std::span<const double> values() const { return v_; }
  [[nodiscard]] std::span<double> values() { return v_; }
  double& operator[](std::size_t i) { return v_[i]; }
  double operator[](std::size_t i) const { return v_[i]; }

  [[nodiscard]] bool is_finite() const {
    return std::all_of(v_.begin(), v_.end(), [](double x) { return std::isfinite(x); });
  }
  [[nodiscard]] double max_abs() const {
    double m = 0.0;
    for (double x : v_) m = std::max(m, std::abs(x));
    return m;
  }

  ScalarField& operator+=(const ScalarField& o) {
    require_same(torus_, o.torus_);
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] += o.v_[i];
    return *this;
  }
  ScalarField& operator-=(const ScalarField& o) {
    require_same(torus_, o.torus_);
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] -= o.v_[i];
    return *this;
  }
  ScalarField& operator*=(double s) {
    for (double& x : v_) x *= s;
    return *this;
  }
  /// Pointwise product.
  ScalarField& operator*=(const ScalarField& o) {
    require_same(torus_, o.torus_);
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] *= o.v_[i];
    return *this;
  }

  friend ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
  friend ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
  friend ScalarField operator*(ScalarField a, double s) { return a *= s; }
  friend ScalarField operator*(double s, ScalarField a) { return a *= s; }
  friend ScalarField operator*(ScalarField a, const ScalarField& b) { return a *= b; }

private:
  TorusPtr torus_;
  std::vector<double> v_;
};

/// R^3-valued grid function: maps into S^2, sections of psi^{-1}R^3, etc.
class Field {
public:
  Field() = default;
  explicit Field(const TorusPtr& torus)
      : c_{ScalarField(torus), ScalarField(torus), ScalarField(torus)} {}
  Field(ScalarField a, ScalarField b, ScalarField c) : c_{std::move(a), std::move(b), std::move(c)} {
    require_same(c_[0].torus(), c_[1].torus());
    require_same(c_[0].torus(), c_[2].torus());
  }

  template <class F>
  static Field from_function(const TorusPtr& torus, F&& f) {
    Field out(torus);
    for (std::size_t i = 0; i < out.size(); ++i) out.set(i, f(torus->point(i)));
    return out;
  }

  [[nodiscard]] const TorusPtr& torus() const { return c_[0].torus(); }
  [[nodiscard]] std::size_t size() const { return c_[0].size(); }
  ScalarField& operator[](int k) { return c_[k]; }
  const ScalarField& operator[](int k) const { return c_[k]; }

  [[nodiscard]] Vec3 at(std::size_t i) const { return {c_[0][i], c_[1][i], c_[2][i]}; }
  void set(std::size_t i, const Vec3& v) {
    c_[0][i] = v[0];
    c_[1][i] = v[1];
    c_[2][i] = v[2];
  }

  [[nodiscard]] bool is_finite() const {
    return c_[0].is_finite() && c_[1].is_finite() && c_[2].is_finite();
  }

  Field& operator+=(const Field& o) {
    for (int k = 0; k < 3; ++k) c_[k] += o.c_[k];
    return *this;
  }
  Field& operator-=(const Field& o) {
    for (int k = 0; k < 3; ++k) c_[k] -= o.c_[k];
    return *this;
  }
  Field& operator*=(double s) {
    for (auto& c : c_) c *= s;
    return *this;
  }
  /// this += s * o
  Field& axpy(double s, const Field& o) {
    require_same(torus(), o.torus());
    for (int k = 0; k < 3; ++k) {
      auto dst = c_[k].values();
      auto src = o.c_[k].values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
    }
    return *this;
  }

  friend Field operator+(Field a, const Field& b) { return a += b; }
  friend Field operator-(Field a, const Field& b) { return a -= b; }
  friend Field operator*(Field a, double s) { return a *= s; }
  friend Field operator*(double s, Field a) { return a *= s; }
  /// Scalar-weighted section: (alpha Y)(p) = alpha(p) Y(p).
  friend Field operator*(const ScalarField& alpha, Field y) {
    for (int k = 0; k < 3; ++k) y.c_[k] *= alpha;
    return y;
  }

private:
  std::array<ScalarField, 3> c_;
};

// ---------------------------------------------------------------- pointwise

inline ScalarField dot(const Field& a, const Field& b) {
  require_same(a.torus(), b.torus());
  ScalarField out(a.torus());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a[0][i] * b[0][i] + a[1][i] * b[1][i] + a[2][i] * b[2][i];
  return out;
}

inline Field cross(const Field& a, const Field& b) {
  require_same(a.torus(), b.torus());
  Field out(a.torus());
  for (std::size_t i = 0; i < out.size(); ++i) out.set(i, a.at(i).cross(b.at(i)));
  return out;
}

inline ScalarField pointwise_norm(const Field& a) {
  ScalarField out = dot(a, a);
  for (double& v : out.values()) v = std::sqrt(v);
  return out;
}

// ---------------------------------------------------------------- spectral

namespace detail {

template <class Multiplier>
ScalarField apply_multiplier(const ScalarField& f, Multiplier&& m) {
  const Torus& t = *f.torus();
  std::vector<cplx> spec(t.spectral_size());
  t.forward(f.values(), spec);
  for (std::size_t s = 0; s < spec.size(); ++s) spec[s] *= m(s);
  ScalarField out(f.torus());
  t.backward(spec, out.values());
  return out;
}

}  // namespace detail

inline ScalarField deriv(const ScalarField& f, Direction d) {
  const Torus& t = *f.torus();
  auto k = d == Direction::x ? t.kx() : t.ky();
  return detail::apply_multiplier(f, [&](std::size_t s) { return cplx(0.0, k[s]); });
}

inline Field deriv(const Field& f, Direction d) {
  return {deriv(f[0], d), deriv(f[1], d), deriv(f[2], d)};
}

/// Both first derivatives from a single forward transform.
inline std::pair<ScalarField, ScalarField> gradient(const ScalarField& f) {
  const Torus& t = *f.torus();
  std::vector<cplx> spec(t.spectral_size()), work(t.spectral_size());
  t.forward(f.values(), spec);
  ScalarField fx(f.torus()), fy(f.torus());
  for (std::size_t s = 0; s < spec.size(); ++s) work[s] = spec[s] * cplx(0.0, t.kx()[s]);
  t.backward(work, fx.values());
  for (std::size_t s = 0; s < spec.size(); ++s) work[s] = spec[s] * cplx(0.0, t.ky()[s]);
  t.backward(work, fy.values());
  return {std::move(fx), std::move(fy)};
}

inline std::pair<Field, Field> gradient(const Field& f) {
  auto [ax, ay] = gradient(f[0]);
  auto [bx, by] = gradient(f[1]);
  auto [cx, cy] = gradient(f[2]);
  return {Field(std::move(ax), std::move(bx), std::move(cx)),
          Field(std::move(ay), std::move(by), std::move(cy))};
}

inline ScalarField laplacian(const ScalarField& f) {
  const Torus& t = *f.torus();
  return detail::apply_multiplier(f, [&](std::size_t s) { return cplx(-t.k2()[s], 0.0); });
}

inline Field laplacian(const Field& f) { return {laplacian(f[0]), laplacian(f[1]), laplacian(f[2])}; }

/// 2/3-rule truncation: zero every mode with |k_u| or |k_v| above N/3.
inline ScalarField dealias(const ScalarField& f) {
  const Torus& t = *f.torus();
  const int cut = t.n() / 3;
  return detail::apply_multiplier(f, [&](std::size_t s) {
    auto [ku, kv] = t.mode_index(s);
    return (std::abs(ku) > cut || std::abs(kv) > cut) ? cplx(0.0) : cplx(1.0);
  });
}

inline Field dealias(const Field& f) { return {dealias(f[0]), dealias(f[1]), dealias(f[2])}; }

// ---------------------------------------------------------------- quadrature

/// Trapezoid rule on the periodic grid: cell area times the sum of samples.
inline double integrate(const ScalarField& f) {
  double sum = 0.0;
  for (double v : f.values()) sum += v;
  return sum * f.torus()->cell_area();
}

inline double l2_inner(const ScalarField& a, const ScalarField& b) {
  require_same(a.torus(), b.torus());
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum * a.torus()->cell_area();
}

inline double l2_inner(const Field& a, const Field& b) {
  require_same(a.torus(), b.torus());
  double sum = 0.0;
  for (int k = 0; k < 3; ++k) {
    auto x = a[k].values();
    auto y = b[k].values();
    for (std::size_t i = 0; i < x.size(); ++i) sum += x[i] * y[i];
  }
  return sum * a.torus()->cell_area();
}

inline double l2_norm(const Field& a) { return std::sqrt(l2_inner(a, a)); }
inline double l2_norm(const ScalarField& a) { return std::sqrt(l2_inner(a, a)); }

/// ||Y||_k = ( sum_{a+b<=k} ||D_x^a D_y^b Y||^2 )^{1/2}, k in 0..3, evaluated
/// through Parseval with the same wave vectors as `deriv`.
inline double sobolev_norm(const Field& y, int k) {
  if (k < 0 || k > 3) throw ConfigError("sobolev_norm: k must lie in 0..3");
  const Torus& t = *y.torus();
  std::vector<cplx> spec(t.spectral_size());
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    t.forward(y[c].values(), spec);
    for (std::size_t s = 0; s < spec.size(); ++s) {
      const double kx2 = t.kx()[s] * t.kx()[s];
      const double ky2 = t.ky()[s] * t.ky()[s];
      double mult = 0.0;
      for (int a = 0; a <= k; ++a) {
        double xa = std::pow(kx2, a);
        for (int b = 0; a + b <= k; ++b) mult += xa * std::pow(ky2, b);
      }
      total += t.mode_weight()[s] * mult * std::norm(spec[s]);
    }
  }
  const double n2 = double(t.size());
  return std::sqrt(total * t.area() / (n2 * n2));
}

/// Grid sup-norm of |Y| (k = 0) or of |Y|, |Y_x|, |Y_y| (k = 1).
inline double ck_norm(const Field& y, int k) {
  if (k < 0 || k > 1) throw ConfigError("ck_norm: k must be 0 or 1");
  double m = pointwise_norm(y).max_abs();
  if (k == 1) {
    auto [yx, yy] = gradient(y);
    m = std::max({m, pointwise_norm(yx).max_abs(), pointwise_norm(yy).max_abs()});
  }
  return m;
}

}  // namespace lumpflow
