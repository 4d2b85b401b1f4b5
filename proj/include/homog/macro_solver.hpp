#pragma once

#include <homog/cell_solver.hpp>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <functional>
#include <map>
#include <vector>

namespace homog {

template <int Dim>
struct VectorField {
  std::size_t nv = 0;
  std::vector<double> data;  // nv * Dim

  VectorField() = default;
  explicit VectorField(std::size_t n) : nv(n), data(n * Dim, 0.0) {}
  Vec<Dim> at(std::size_t v) const {
    Vec<Dim> r;
    for (int a = 0; a < Dim; ++a) r[a] = data[v * Dim + a];
    return r;
  }
  void set(std::size_t v, const Vec<Dim>& x) {
    for (int a = 0; a < Dim; ++a) data[v * Dim + a] = x[a];
  }
};

enum class BcType { Dirichlet, Neumann };

struct FaceCondition {
  BcType type = BcType::Dirichlet;
  double g = 0.0;  // face-wise constant Neumann flux, ignored for Dirichlet
};

////////////////////////////////////////////////////////////////////////////
//  Structured multilinear (Q1) mesh on the box [0, extents]. Nodes and
//  elements are indexed row-major with the last axis fastest. Face f of the
//  box: axis f/2, low side for even f, high side for odd f.
////////////////////////////////////////////////////////////////////////////
template <int Dim>
struct StructuredMesh {
  Vec<Dim> extents = Vec<Dim>::Ones();
  std::array<int, Dim> resolution{};

  int nodes_per_axis(int a) const { return resolution[a] + 1; }
  double spacing(int a) const { return extents[a] / resolution[a]; }

  std::size_t num_elements() const {
    std::size_t n = 1;
    for (int a = 0; a < Dim; ++a) n *= static_cast<std::size_t>(resolution[a]);
    return n;
  }
  std::size_t num_nodes() const {
    std::size_t n = 1;
    for (int a = 0; a < Dim; ++a) n *= static_cast<std::size_t>(resolution[a] + 1);
    return n;
  }

  std::array<int, Dim> element_coords(std::size_t e) const {
    std::array<int, Dim> c{};
    for (int a = Dim - 1; a >= 0; --a) {
      c[a] = static_cast<int>(e % resolution[a]);
      e /= resolution[a];
    }
    return c;
  }
  std::size_t element_index(const std::array<int, Dim>& c) const {
    std::size_t e = 0;
    for (int a = 0; a < Dim; ++a) e = e * resolution[a] + c[a];
    return e;
  }
  std::size_t node_index(const std::array<int, Dim>& c) const {
    std::size_t n = 0;
    for (int a = 0; a < Dim; ++a) n = n * (resolution[a] + 1) + c[a];
    return n;
  }
  std::array<int, Dim> node_coords(std::size_t n) const {
    std::array<int, Dim> c{};
    for (int a = Dim - 1; a >= 0; --a) {
      c[a] = static_cast<int>(n % (resolution[a] + 1));
      n /= (resolution[a] + 1);
    }
    return c;
  }

  Vec<Dim> node_position(std::size_t n) const {
    const auto c = node_coords(n);
    Vec<Dim> x;
    for (int a = 0; a < Dim; ++a) x[a] = c[a] * spacing(a);
    return x;
  }
  Vec<Dim> element_center(std::size_t e) const {
    const auto c = element_coords(e);
    Vec<Dim> x;
    for (int a = 0; a < Dim; ++a) x[a] = (c[a] + 0.5) * spacing(a);
    return x;
  }
  double element_volume() const {
    double v = 1.0;
    for (int a = 0; a < Dim; ++a) v *= spacing(a);
    return v;
  }

  static constexpr int kCorners = 1 << Dim;

  // Global node id of corner c (bit a set = high side along axis a).
  std::size_t element_node(std::size_t e, int corner) const {
    auto c = element_coords(e);
    for (int a = 0; a < Dim; ++a)
      if (corner & (1 << a)) ++c[a];
    return node_index(c);
  }

  // Shape value / gradient at reference point t in [0,1]^Dim.
  static double shape(int corner, const Vec<Dim>& t) {
    double s = 1.0;
    for (int a = 0; a < Dim; ++a) s *= (corner & (1 << a)) ? t[a] : 1.0 - t[a];
    return s;
  }
  Vec<Dim> shape_grad(int corner, const Vec<Dim>& t) const {
    Vec<Dim> g;
    for (int a = 0; a < Dim; ++a) {
      double d = (corner & (1 << a)) ? 1.0 : -1.0;
      for (int b = 0; b < Dim; ++b) {
        if (b == a) continue;
        d *= (corner & (1 << b)) ? t[b] : 1.0 - t[b];
      }
      g[a] = d / spacing(a);
    }
    return g;
  }

  // Element containing a point (clamped to the valid range).
  std::size_t element_at(const Vec<Dim>& x) const {
    std::array<int, Dim> c{};
    for (int a = 0; a < Dim; ++a) {
      int i = static_cast<int>(std::floor(x[a] / spacing(a)));
      c[a] = std::min(std::max(i, 0), resolution[a] - 1);
    }
    return element_index(c);
  }

  // Multilinear interpolation of a nodal field.
  double interpolate(const std::vector<double>& u, const Vec<Dim>& x) const {
    const std::size_t e = element_at(x);
    const auto c = element_coords(e);
    Vec<Dim> t;
    for (int a = 0; a < Dim; ++a) t[a] = x[a] / spacing(a) - c[a];
    double s = 0.0;
    for (int corner = 0; corner < kCorners; ++corner)
      s += u[element_node(e, corner)] * shape(corner, t);
    return s;
  }

  bool node_on_face(std::size_t n, int face) const {
    const auto c = node_coords(n);
    const int axis = face / 2;
    return (face % 2 == 0) ? c[axis] == 0 : c[axis] == resolution[axis];
  }
};

////////////////////////////////////////////////////////////////////////////
/*! Homogenized boundary-value problem on a structured macro mesh.
//
//  -div(A^E(x) grad u) = f with u = 0 on Dirichlet faces and
//  n . A^E grad u = g on Neumann faces. A^E is piecewise constant per
//  subdomain; subdomain boundaries align with element faces because the
//  partition is stored per element. f is element-wise constant, g face-wise
//  constant.
*///////////////////////////////////////////////////////////////////////////
template <int Dim>
struct MacroProblem {
  StructuredMesh<Dim> mesh;
  std::vector<int> partition;           // element -> subdomain id
  std::map<int, Mat<Dim>> tensors;      // subdomain -> effective tensor
  std::vector<double> f;                // element-wise source
  std::array<FaceCondition, 2 * Dim> bc{};

  void validate() const {
    for (int a = 0; a < Dim; ++a) {
      require(mesh.resolution[a] >= 1, "MacroProblem: empty mesh axis");
      require(mesh.extents[a] > 0.0, "MacroProblem: non-positive extent");
    }
    require(partition.size() == mesh.num_elements(), "MacroProblem: partition size mismatch");
    require(f.size() == mesh.num_elements(), "MacroProblem: source size mismatch");
    for (int id : partition)
      require(tensors.count(id) == 1,
              "MacroProblem: no tensor for subdomain " + std::to_string(id));
    for (const auto& [id, A] : tensors) require_spd<Dim>(A, "subdomain " + std::to_string(id));
  }

  bool has_dirichlet() const {
    for (const auto& c : bc)
      if (c.type == BcType::Dirichlet) return true;
    return false;
  }
};

template <int Dim>
struct MacroSolution {
  std::vector<double> u;         // nodal potential
  std::vector<Vec<Dim>> grad;    // element-midpoint gradients
  double residual = 0.0;         // relative algebraic residual
  // Discrete conservation diagnostics.
  double energy_lhs = 0.0;       // u^T K u
  double energy_rhs = 0.0;       // u^T b
  double flux_imbalance = 0.0;   // reactions + applied loads
};

namespace detail {

template <int Dim>
MacroSolution<Dim> solve_structured(
    const StructuredMesh<Dim>& mesh,
    const std::function<Mat<Dim>(std::size_t)>& elem_tensor,
    const std::function<double(std::size_t)>& elem_source,
    const std::array<FaceCondition, 2 * Dim>& bc, double tol) {
  constexpr int kC = StructuredMesh<Dim>::kCorners;
  const std::size_t ne = mesh.num_elements();
  const std::size_t nn = mesh.num_nodes();
  const double vol = mesh.element_volume();

  // 2-point Gauss per axis: exact for Q1 stiffness entries on a box.
  std::array<Vec<Dim>, kC> gauss;
  for (int gp = 0; gp < kC; ++gp)
    for (int a = 0; a < Dim; ++a)
      gauss[gp][a] = 0.5 + ((gp >> a) & 1 ? 1.0 : -1.0) * 0.5 / std::sqrt(3.0);
  const double gw = vol / kC;

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(ne * kC * kC);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(nn);

  std::array<Vec<Dim>, kC> gr;
  for (std::size_t e = 0; e < ne; ++e) {
    const Mat<Dim> A = elem_tensor(e);
    double K[kC][kC] = {};
    for (int gp = 0; gp < kC; ++gp) {
      for (int c = 0; c < kC; ++c) gr[c] = mesh.shape_grad(c, gauss[gp]);
      for (int c = 0; c < kC; ++c) {
        const Vec<Dim> Agc = A * gr[c];
        for (int d = 0; d <= c; ++d) {
          const double k = gw * Agc.dot(gr[d]);
          K[c][d] += k;
          if (d != c) K[d][c] += k;
        }
      }
    }
    std::size_t ids[kC];
    for (int c = 0; c < kC; ++c) ids[c] = mesh.element_node(e, c);
    for (int c = 0; c < kC; ++c) {
      for (int d = 0; d < kC; ++d)
        trips.emplace_back(static_cast<int>(ids[c]), static_cast<int>(ids[d]), K[c][d]);
      b[ids[c]] += elem_source(e) * vol / kC;  // exact for element-constant f
    }
  }

  // Neumann loads: g * faceArea / nodesPerFace on each boundary face patch.
  for (int face = 0; face < 2 * Dim; ++face) {
    if (bc[face].type != BcType::Neumann || bc[face].g == 0.0) continue;
    const int axis = face / 2;
    double area = 1.0;
    for (int a = 0; a < Dim; ++a)
      if (a != axis) area *= mesh.spacing(a);
    const double load = bc[face].g * area / (1 << (Dim - 1));
    for (std::size_t e = 0; e < ne; ++e) {
      const auto c = mesh.element_coords(e);
      if ((face % 2 == 0 && c[axis] != 0) ||
          (face % 2 == 1 && c[axis] != mesh.resolution[axis] - 1))
        continue;
      for (int corner = 0; corner < kC; ++corner) {
        const bool high = (corner >> axis) & 1;
        if (high == (face % 2 == 1)) b[mesh.element_node(e, corner)] += load;
      }
    }
  }

  Eigen::SparseMatrix<double> Kfull(nn, nn);
  Kfull.setFromTriplets(trips.begin(), trips.end());

  std::vector<char> constrained(nn, 0);
  bool any_dirichlet = false;
  for (int face = 0; face < 2 * Dim; ++face) {
    if (bc[face].type != BcType::Dirichlet) continue;
    any_dirichlet = true;
    for (std::size_t n = 0; n < nn; ++n)
      if (mesh.node_on_face(n, face)) constrained[n] = 1;
  }

  Eigen::VectorXd u = Eigen::VectorXd::Zero(nn);
  double residual = 0.0;

  if (any_dirichlet) {
    std::vector<int> dof(nn, -1);
    int nfree = 0;
    for (std::size_t n = 0; n < nn; ++n)
      if (!constrained[n]) dof[n] = nfree++;
    std::vector<Eigen::Triplet<double>> red;
    red.reserve(trips.size());
    for (const auto& t : trips)
      if (dof[t.row()] >= 0 && dof[t.col()] >= 0)
        red.emplace_back(dof[t.row()], dof[t.col()], t.value());
    Eigen::SparseMatrix<double> Kr(nfree, nfree);
    Kr.setFromTriplets(red.begin(), red.end());
    Eigen::VectorXd br(nfree);
    for (std::size_t n = 0; n < nn; ++n)
      if (dof[n] >= 0) br[dof[n]] = b[n];

    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(Kr);
    if (solver.info() != Eigen::Success)
      throw ConvergenceError("solve_homogenized: factorization failed", 1.0, 0);
    Eigen::VectorXd ur = solver.solve(br);
    const double bn = br.norm();
    residual = bn > 0.0 ? (Kr * ur - br).norm() / bn : 0.0;
    for (std::size_t n = 0; n < nn; ++n)
      if (dof[n] >= 0) u[n] = ur[dof[n]];
  } else {
    // Pure Neumann: solvable only for compatible data; fix the kernel with a
    // volume-weighted mean-zero constraint.
    const double comp = b.sum();
    const double scale = b.cwiseAbs().sum();
    if (std::abs(comp) > 1e-8 * std::max(scale, 1.0))
      throw ConfigError(
          "solve_homogenized: pure-Neumann data violates the compatibility "
          "condition (sum f + sum g = " +
          std::to_string(comp) + ")");
    Eigen::SparseMatrix<double> Kaug(nn + 1, nn + 1);
    std::vector<Eigen::Triplet<double>> aug = trips;
    for (std::size_t n = 0; n < nn; ++n) {
      aug.emplace_back(static_cast<int>(nn), static_cast<int>(n), 1.0);
      aug.emplace_back(static_cast<int>(n), static_cast<int>(nn), 1.0);
    }
    Kaug.setFromTriplets(aug.begin(), aug.end());
    Eigen::VectorXd baug(nn + 1);
    baug.head(nn) = b;
    baug[nn] = 0.0;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> solver(Kaug);
    if (solver.info() != Eigen::Success)
      throw ConvergenceError("solve_homogenized: singular pure-Neumann system", 1.0, 0);
    Eigen::VectorXd ua = solver.solve(baug);
    u = ua.head(nn);
    const double bn = b.norm();
    residual = bn > 0.0 ? (Kfull * u - b).norm() / bn : 0.0;
  }

  if (!(residual <= tol))
    throw ConvergenceError("solve_homogenized: algebraic residual " +
                               std::to_string(residual) + " exceeds tol",
                           residual, 0);

  MacroSolution<Dim> sol;
  sol.u.assign(u.data(), u.data() + nn);
  sol.residual = residual;
  sol.energy_lhs = u.dot(Kfull * u);
  sol.energy_rhs = u.dot(b);

  // Reactions at constrained nodes balance the applied loads.
  Eigen::VectorXd R = Kfull * u - b;
  double reactions = 0.0;
  for (std::size_t n = 0; n < nn; ++n)
    if (constrained[n]) reactions += R[n];
  sol.flux_imbalance = reactions + b.sum();

  // Element-midpoint gradients.
  sol.grad.resize(ne);
  const Vec<Dim> center = Vec<Dim>::Constant(0.5);
  for (std::size_t e = 0; e < ne; ++e) {
    Vec<Dim> g = Vec<Dim>::Zero();
    for (int c = 0; c < kC; ++c) g += u[mesh.element_node(e, c)] * mesh.shape_grad(c, center);
    sol.grad[e] = g;
  }
  return sol;
}

}  // namespace detail

/// Solves the homogenized problem with piecewise-constant A^E per subdomain.
template <int Dim>
MacroSolution<Dim> solve_homogenized(const MacroProblem<Dim>& problem, double tol = 1e-10) {
  problem.validate();
  return detail::solve_structured<Dim>(
      problem.mesh,
      [&](std::size_t e) { return problem.tensors.at(problem.partition[e]); },
      [&](std::size_t e) { return problem.f[e]; }, problem.bc, tol);
}

/// Local two-scale gradient y -> P(y) grad u^H(x_e) on the element's cell
/// grid: the field every moment functional integrates.
template <int Dim>
VectorField<Dim> two_scale_reconstruction(
    const MacroProblem<Dim>& problem, const MacroSolution<Dim>& macro,
    const std::map<int, const CorrectorSolution<Dim>*>& cell_data, std::size_t element) {
  require(element < problem.mesh.num_elements(), "two_scale_reconstruction: bad element");
  const int sub = problem.partition[element];
  auto it = cell_data.find(sub);
  if (it == cell_data.end() || it->second == nullptr)
    throw ConfigError("two_scale_reconstruction: no cell data for subdomain " +
                      std::to_string(sub));
  const CorrectorSolution<Dim>& cs = *it->second;
  const Vec<Dim> xi = macro.grad[element];
  VectorField<Dim> field(cs.P.nv);
  for (std::size_t v = 0; v < cs.P.nv; ++v) field.set(v, cs.P.apply(v, xi));
  return field;
}

}  // namespace homog
