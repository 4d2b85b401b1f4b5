#pragma once

#include <homog/quadrature.hpp>
#include <homog/schulgasser_cell.hpp>

namespace homog {

/// Threshold exponent p_c = 3 / (2 (1 - lambda2)); lies in (3, inf) for
/// lambda2 in (1/2, 1).
inline double critical_exponent(double lambda2) {
  require(lambda2 > 0.5 && lambda2 < 1.0, "critical_exponent: lambda2 must lie in (1/2, 1)");
  return 3.0 / (2.0 * (1.0 - lambda2));
}

////////////////////////////////////////////////////////////////////////////
//  Closed-form cell fields for the crystallite dispersion. Outside every
//  ball the temperature is the linear probe y_i and the corrector is the
//  identity; inside ball l the fields follow the radial power law with
//  exponent alpha - 1, so the corrector gradient blows up at the center.
////////////////////////////////////////////////////////////////////////////

/// Cell temperature Phi^i(y) for the unit probe gradient e^i.
inline double analytic_temperature(const SchulgasserCell& cell, int i, const Vec<3>& y) {
  require(i >= 0 && i < 3, "analytic_temperature: direction out of range");
  const int l = cell.containing_ball(y);
  if (l < 0) return y[i];
  const Ball& b = cell.crystallites[l];
  const Vec<3> d = y - b.center;
  const double s = d.norm();
  if (s == 0.0) throw ConfigError("analytic_temperature: singular at a ball center");
  const double a = cell.alpha();
  return std::pow(b.radius, 1.0 - a) * std::pow(s, a - 1.0) * d[i] + b.center[i];
}

/// Corrector matrix P(y); identity outside all balls.
inline Mat<3> analytic_corrector(const SchulgasserCell& cell, const Vec<3>& y) {
  const int l = cell.containing_ball(y);
  if (l < 0) return Mat<3>::Identity();
  const Ball& b = cell.crystallites[l];
  const Vec<3> d = y - b.center;
  const double s = d.norm();
  if (s == 0.0) throw ConfigError("analytic_corrector: singular at a ball center");
  const Vec<3> n = d / s;
  const double a = cell.alpha();
  const double radial = std::pow(b.radius, 1.0 - a) * std::pow(s, a - 1.0);
  return radial * (Mat<3>::Identity() + (a - 1.0) * (n * n.transpose()));
}

namespace detail {

// Radial profile of the smallest eigenvalue of P^T P inside a ball.
inline double lambda_radial(double alpha, double radius, double s) {
  return alpha * alpha * std::pow(radius, 2.0 * (1.0 - alpha)) *
         std::pow(s, 2.0 * (alpha - 1.0));
}

}  // namespace detail

/// Smallest eigenvalue of P^T P; equals 1 outside the balls.
inline double analytic_lambda(const SchulgasserCell& cell, const Vec<3>& y) {
  const int l = cell.containing_ball(y);
  if (l < 0) return 1.0;
  const Ball& b = cell.crystallites[l];
  const double s = (y - b.center).norm();
  if (s == 0.0) throw ConfigError("analytic_lambda: singular at a ball center");
  return detail::lambda_radial(cell.alpha(), b.radius, s);
}

/// The dispersion homogenizes to the identity for every admissible cell.
inline Mat<3> analytic_effective(const SchulgasserCell& cell) {
  cell.validate();
  return Mat<3>::Identity();
}

namespace detail {

// Exact ball factor of the lambda moment: the 1D radial integral
//   int_0^r (alpha^2 r^{2(1-alpha)} s^{2(alpha-1)})^{p/2} 4 pi s^2 ds
// is finite iff p < p_c and evaluates to vol(B) * alpha^p * p_c/(p_c - p).
inline double ball_moment_factor(double alpha, double p, double p_c) {
  return std::pow(alpha, p) * p_c / (p_c - p);
}

}  // namespace detail

/// Cell factor int_Q lambda(y)^{p/2} dy of the L^p lower bound, by exact
/// radial integration. Divergent (+inf) for p >= p_c.
inline MomentValue lambda_moment(const SchulgasserCell& cell, double p) {
  cell.validate();
  require(p >= 2.0, "lambda_moment: p must be >= 2");
  const double p_c = critical_exponent(cell.lambda2);
  if (p >= p_c) return MomentValue::infinite();
  double value = 1.0 - cell.theta();
  for (const auto& b : cell.crystallites)
    value += b.volume() * detail::ball_moment_factor(cell.alpha(), p, p_c);
  return {value, false};
}

/// Phase-restricted lambda moment: phase 0 is the matrix, phase 1 the
/// crystallite aggregate. The two pieces sum to lambda_moment exactly.
inline MomentValue lambda_moment_phase(const SchulgasserCell& cell, double p, int phase) {
  cell.validate();
  require(p >= 2.0, "lambda_moment_phase: p must be >= 2");
  require(phase == 0 || phase == 1, "lambda_moment_phase: phase must be 0 or 1");
  if (phase == 0) return {1.0 - cell.theta(), false};
  const double p_c = critical_exponent(cell.lambda2);
  if (p >= p_c) return MomentValue::infinite();
  double value = 0.0;
  for (const auto& b : cell.crystallites)
    value += b.volume() * detail::ball_moment_factor(cell.alpha(), p, p_c);
  return {value, false};
}

/// Multiplicative factor LB on ||grad u^H||_{L^p(D)} implied by the lambda
/// bound: lambda_moment^{1/p}, +inf propagating.
inline MomentValue lb_factor(const SchulgasserCell& cell, double p) {
  const MomentValue m = lambda_moment(cell, p);
  if (m.divergent) return m;
  return {std::pow(m.value, 1.0 / p), false};
}

////////////////////////////////////////////////////////////////////////////
//  Independent quadrature cross-checks. These integrate the pointwise
//  closed-form fields numerically and never reuse the closed-form radial
//  integrals above, so they can catch transcription mistakes in either
//  route.
////////////////////////////////////////////////////////////////////////////

/// Numeric int_Q A(y) P(y) dy by radial-angular quadrature over each ball
/// plus the exact identity contribution of the matrix phase.
inline Mat<3> effective_tensor_quadrature(const SchulgasserCell& cell,
                                          double rel_tol = 1e-10) {
  cell.validate();
  Mat<3> result = (1.0 - cell.theta()) * Mat<3>::Identity();
  const auto sphere = sphere_quadrature(8, 16);
  for (const auto& b : cell.crystallites) {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        auto radial = [&](double s) {
          double acc = 0.0;
          for (const auto& q : sphere) {
            const Vec<3> y = b.center + s * q.n;
            acc += q.weight * (cell.tensor_at(y) * analytic_corrector(cell, y))(i, j);
          }
          return acc * s * s;
        };
        const QuadResult qr =
            adaptive_gauss_kronrod(radial, 0.0, b.radius, 1e-13, rel_tol);
        result(i, j) += qr.value;
      }
  }
  return result;
}

/// Numeric int_Q lambda(y)^{p/2} dy: adaptive radial quadrature of the
/// pointwise eigenvalue profile (the angular dependence is trivial), with
/// the rule refining into the integrable endpoint singularity at the ball
/// centers. Reports non-convergence when p >= p_c makes the integral blow
/// up faster than the interval budget. Stays independent of the closed-form
/// radial integral in lambda_moment; the pointwise profile itself is
/// checked against P^T P eigenvalues elsewhere.
inline QuadResult lambda_moment_quadrature(const SchulgasserCell& cell, double p,
                                           double rel_tol = 1e-9) {
  cell.validate();
  require(p >= 2.0, "lambda_moment_quadrature: p must be >= 2");
  QuadResult total;
  total.value = 1.0 - cell.theta();
  total.converged = true;
  const double alpha = cell.alpha();
  for (const auto& b : cell.crystallites) {
    // lambda(s)^{p/2} * s^2 with the powers of s combined up front; the raw
    // eigenvalue overflows near the center before the s^2 factor tames it.
    const double scale = std::pow(alpha * alpha * std::pow(b.radius, 2.0 * (1.0 - alpha)), 0.5 * p);
    const double exponent = (alpha - 1.0) * p + 2.0;
    auto radial = [&](double s) { return 4.0 * M_PI * scale * std::pow(s, exponent); };
    const QuadResult qr = adaptive_gauss_kronrod(radial, 0.0, b.radius, 1e-13, rel_tol);
    total.value += qr.value;
    total.error += qr.error;
    total.intervals += qr.intervals;
    total.converged = total.converged && qr.converged;
  }
  return total;
}

}  // namespace homog
