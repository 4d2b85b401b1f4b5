#pragma once

#include <homog/common.hpp>

#include <algorithm>
#include <functional>
#include <utility>
#include <vector>

namespace homog {

struct QuadResult {
  double value = 0.0;
  double error = 0.0;
  bool converged = false;
  int intervals = 0;
};

namespace detail {

// 15-point Kronrod extension of 7-point Gauss (QUADPACK dqk15 constants).
inline constexpr double kKronrodNodes[8] = {
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000};
inline constexpr double kKronrodWeights[8] = {
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714};
// Gauss weights for nodes 1, 3, 5, 7 (odd Kronrod indices).
inline constexpr double kGaussWeights[4] = {
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327};

template <class F>
std::pair<double, double> gauss_kronrod_15(F&& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  double fv[15];
  for (int i = 0; i < 7; ++i) {
    fv[i] = f(c - h * kKronrodNodes[i]);
    fv[14 - i] = f(c + h * kKronrodNodes[i]);
  }
  fv[7] = f(c);
  double kron = kKronrodWeights[7] * fv[7];
  double gauss = kGaussWeights[3] * fv[7];
  for (int i = 0; i < 7; ++i) kron += kKronrodWeights[i] * (fv[i] + fv[14 - i]);
  for (int i = 0; i < 4; ++i) {
    const int j = 2 * i + 1;
    if (j < 7) gauss += kGaussWeights[i] * (fv[j] + fv[14 - j]);
  }
  kron *= h;
  gauss *= h;
  return {kron, std::abs(kron - gauss)};
}

}  // namespace detail

////////////////////////////////////////////////////////////////////////////
/*! Globally adaptive Gauss-Kronrod integration on [a, b].
//
//  Keeps a worst-first queue of subintervals and bisects the one with the
//  largest error estimate until the total estimate drops below
//  max(abs_tol, rel_tol * |value|). The rule never evaluates the integrand
//  at interval endpoints, so integrable endpoint singularities (the radial
//  moment integrands) are handled by refinement toward the endpoint.
*///////////////////////////////////////////////////////////////////////////
template <class F>
QuadResult adaptive_gauss_kronrod(F&& f, double a, double b, double abs_tol = 1e-12,
                                  double rel_tol = 1e-10, int max_intervals = 200000) {
  struct Interval {
    double a, b, value, error;
    bool operator<(const Interval& o) const { return error < o.error; }
  };
  std::vector<Interval> heap;
  auto push = [&](double lo, double hi) {
    auto [v, e] = detail::gauss_kronrod_15(f, lo, hi);
    heap.push_back({lo, hi, v, e});
    std::push_heap(heap.begin(), heap.end());
  };
  push(a, b);

  QuadResult r;
  while (true) {
    double total = 0.0, err = 0.0;
    for (const auto& iv : heap) {
      total += iv.value;
      err += iv.error;
    }
    r.value = total;
    r.error = err;
    r.intervals = static_cast<int>(heap.size());
    if (err <= std::max(abs_tol, rel_tol * std::abs(total))) {
      r.converged = true;
      return r;
    }
    if (static_cast<int>(heap.size()) >= max_intervals) return r;

    std::pop_heap(heap.begin(), heap.end());
    const Interval worst = heap.back();
    heap.pop_back();
    const double mid = 0.5 * (worst.a + worst.b);
    if (mid <= worst.a || mid >= worst.b) {
      heap.push_back(worst);  // interval at floating-point resolution
      std::push_heap(heap.begin(), heap.end());
      r.converged = r.error <= std::max(abs_tol, rel_tol * std::abs(r.value));
      return r;
    }
    push(worst.a, mid);
    push(mid, worst.b);
  }
}

/// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration on P_n.
inline void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      pp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    nodes[i] = -x;
    nodes[n - 1 - i] = x;
    weights[i] = 2.0 / ((1.0 - x * x) * pp * pp);
    weights[n - 1 - i] = weights[i];
  }
}

struct SpherePoint {
  Vec<3> n;
  double weight;  // weights sum to 4*pi
};

/// Product quadrature on the unit sphere: Gauss-Legendre in cos(theta)
/// crossed with a uniform azimuthal rule. Exact for spherical polynomials
/// of degree <= min(2*n_mu - 1, n_phi - 1).
inline std::vector<SpherePoint> sphere_quadrature(int n_mu = 8, int n_phi = 16) {
  std::vector<double> mu, wmu;
  gauss_legendre(n_mu, mu, wmu);
  std::vector<SpherePoint> pts;
  pts.reserve(static_cast<std::size_t>(n_mu) * n_phi);
  for (int i = 0; i < n_mu; ++i) {
    const double s = std::sqrt(std::max(0.0, 1.0 - mu[i] * mu[i]));
    for (int j = 0; j < n_phi; ++j) {
      const double phi = 2.0 * M_PI * j / n_phi;
      SpherePoint p;
      p.n = Vec<3>(s * std::cos(phi), s * std::sin(phi), mu[i]);
      p.weight = wmu[i] * (2.0 * M_PI / n_phi);
      pts.push_back(p);
    }
  }
  return pts;
}

}  // namespace homog
