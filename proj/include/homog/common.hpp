#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace homog {

inline constexpr const char* kVersion = "0.1.0";

template <int Dim> using Vec = Eigen::Matrix<double, Dim, 1>;
template <int Dim> using Mat = Eigen::Matrix<double, Dim, Dim>;

// Error taxonomy mirrored by the CLI exit codes: configuration/validation
// errors exit 2, solver non-convergence exits 3, failed checks exit 1.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct ConvergenceError : Error {
  ConvergenceError(const std::string& msg, double last_residual, int iterations)
      : Error(msg), last_residual(last_residual), iterations(iterations) {}
  double last_residual;
  int iterations;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError(msg);
}

// A scalar moment value that may carry a divergence flag. Divergent values
// serialize as the literal "+inf".
struct MomentValue {
  double value = 0.0;
  bool divergent = false;

  static MomentValue infinite() {
    return {std::numeric_limits<double>::infinity(), true};
  }
};

/// Fixed-order pairwise (tree) reduction of f(0..n-1). Every voxel/element
/// sum in the library goes through this so that results are bit-stable and
/// independent of thread count or accumulation order.
template <class F>
double pairwise_sum(std::size_t begin, std::size_t end, F&& f) {
  const std::size_t n = end - begin;
  if (n <= 32) {
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += f(i);
    return s;
  }
  const std::size_t mid = begin + n / 2;
  return pairwise_sum(begin, mid, f) + pairwise_sum(mid, end, f);
}

template <class F>
double pairwise_sum(std::size_t n, F&& f) {
  return pairwise_sum<F>(0, n, std::forward<F>(f));
}

inline bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Fractional part in [0,1); maps a macro coordinate x/eps onto the unit cell.
inline double unit_frac(double x) {
  double f = x - std::floor(x);
  if (f >= 1.0) f = 0.0;
  return f;
}

// Axis-aligned box, used for measurement subdomains D and config regions.
template <int Dim>
struct Box {
  Vec<Dim> lo = Vec<Dim>::Zero();
  Vec<Dim> hi = Vec<Dim>::Zero();

  bool contains(const Vec<Dim>& x) const {
    for (int a = 0; a < Dim; ++a)
      if (x[a] < lo[a] || x[a] > hi[a]) return false;
    return true;
  }
  double measure() const {
    double m = 1.0;
    for (int a = 0; a < Dim; ++a) m *= hi[a] - lo[a];
    return m;
  }
};

// Centered box at half the extents: the default measurement subdomain.
template <int Dim>
Box<Dim> centered_box(const Vec<Dim>& extents) {
  Box<Dim> b;
  b.lo = 0.25 * extents;
  b.hi = 0.75 * extents;
  return b;
}

}  // namespace homog
