#pragma once

#include <homog/common.hpp>

#include <cstdint>
#include <memory>
#include <vector>

namespace homog {

/// Checks that a conductivity tensor is symmetric; returns its eigenvalues.
template <int Dim>
Vec<Dim> symmetric_eigenvalues(const Mat<Dim>& a, const std::string& what) {
  const double scale = a.cwiseAbs().maxCoeff();
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1.0))
    throw ConfigError(what + ": tensor is not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat<Dim>> es;
  es.computeDirect(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

template <int Dim>
void require_spd(const Mat<Dim>& a, const std::string& what) {
  if (symmetric_eigenvalues<Dim>(a, what).minCoeff() <= 0.0)
    throw ConfigError(what + ": tensor is not positive definite");
}

////////////////////////////////////////////////////////////////////////////
/*! Periodic voxel raster of a unit-cell microstructure.
//
//  Voxels live at centers (i + 1/2) * h, h = 1/resolution, indexed
//  row-major with the last axis fastest. Indices wrap modulo the
//  resolution, so the grid is periodic by construction. Tensors are stored
//  per voxel in symmetric upper-triangle layout; phase labels partition the
//  cell. The grid is immutable once built and safe to share across threads.
*///////////////////////////////////////////////////////////////////////////
template <int Dim>
class CellGrid {
 public:
  static_assert(Dim == 2 || Dim == 3, "CellGrid supports dim 2 and 3");
  static constexpr int kTensorComps = Dim * (Dim + 1) / 2;

  CellGrid(int resolution, int num_phases)
      : res_(resolution), num_phases_(num_phases) {
    require(is_power_of_two(resolution), "CellGrid: resolution must be a power of two");
    require(num_phases >= 1 && num_phases <= 255, "CellGrid: 1..255 phases");
    nv_ = 1;
    for (int a = 0; a < Dim; ++a) nv_ *= static_cast<std::size_t>(res_);
    tensors_.assign(nv_ * kTensorComps, 0.0);
    phase_.assign(nv_, 0);
  }

  int resolution() const { return res_; }
  int num_phases() const { return num_phases_; }
  std::size_t num_voxels() const { return nv_; }
  double spacing() const { return 1.0 / res_; }
  double voxel_volume() const { return 1.0 / static_cast<double>(nv_); }

  std::size_t index(std::array<int, Dim> idx) const {
    std::size_t v = 0;
    for (int a = 0; a < Dim; ++a) {
      int w = idx[a] % res_;
      if (w < 0) w += res_;
      v = v * res_ + static_cast<std::size_t>(w);
    }
    return v;
  }

  std::array<int, Dim> coords(std::size_t v) const {
    std::array<int, Dim> idx{};
    for (int a = Dim - 1; a >= 0; --a) {
      idx[a] = static_cast<int>(v % res_);
      v /= res_;
    }
    return idx;
  }

  // Voxel center, offset half a voxel from the lattice points.
  Vec<Dim> voxel_center(std::size_t v) const {
    const auto idx = coords(v);
    Vec<Dim> y;
    for (int a = 0; a < Dim; ++a) y[a] = (idx[a] + 0.5) * spacing();
    return y;
  }

  Mat<Dim> tensor(std::size_t v) const {
    Mat<Dim> m;
    const double* t = &tensors_[v * kTensorComps];
    int c = 0;
    for (int i = 0; i < Dim; ++i)
      for (int j = i; j < Dim; ++j) {
        m(i, j) = t[c];
        m(j, i) = t[c];
        ++c;
      }
    return m;
  }

  void set_tensor(std::size_t v, const Mat<Dim>& m) {
    double* t = &tensors_[v * kTensorComps];
    int c = 0;
    for (int i = 0; i < Dim; ++i)
      for (int j = i; j < Dim; ++j) t[c++] = 0.5 * (m(i, j) + m(j, i));
  }

  std::uint8_t phase(std::size_t v) const { return phase_[v]; }
  void set_phase(std::size_t v, std::uint8_t p) { phase_[v] = p; }
  const std::vector<std::uint8_t>& phase_labels() const { return phase_; }
  const std::vector<double>& tensor_data() const { return tensors_; }
  std::vector<double>& tensor_data() { return tensors_; }
  std::vector<std::uint8_t>& phase_labels() { return phase_; }

  // Voxel volume fraction of one phase.
  double phase_fraction(int p) const {
    return pairwise_sum(nv_, [&](std::size_t v) {
             return phase_[v] == p ? 1.0 : 0.0;
           }) /
           static_cast<double>(nv_);
  }

 private:
  int res_;
  int num_phases_;
  std::size_t nv_ = 0;
  std::vector<double> tensors_;
  std::vector<std::uint8_t> phase_;
};

struct CoercivityBounds {
  double alpha_min;  // infimum of smallest voxel eigenvalues
  double beta_max;   // supremum of largest voxel eigenvalues
};

/// Scans every voxel tensor and returns the coercivity window (alpha, beta).
/// Fails with the offending voxel index if any eigenvalue is non-positive.
template <int Dim>
CoercivityBounds validate_coercivity(const CellGrid<Dim>& grid) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Mat<Dim>> es;
  for (std::size_t v = 0; v < grid.num_voxels(); ++v) {
    es.computeDirect(grid.tensor(v), Eigen::EigenvaluesOnly);
    const double emin = es.eigenvalues().minCoeff();
    const double emax = es.eigenvalues().maxCoeff();
    if (emin <= 0.0)
      throw ConfigError("coercivity violation: non-positive eigenvalue " +
                        std::to_string(emin) + " at voxel " + std::to_string(v));
    lo = std::min(lo, emin);
    hi = std::max(hi, emax);
  }
  return {lo, hi};
}

/// Assembles a grid from per-phase indicator masks and tensors. The masks
/// must partition every voxel exactly once.
template <int Dim>
std::shared_ptr<CellGrid<Dim>> build_multiphase(
    const std::vector<std::vector<std::uint8_t>>& phase_masks,
    const std::vector<Mat<Dim>>& phase_tensors, int resolution) {
  require(!phase_masks.empty(), "build_multiphase: no phases");
  require(phase_masks.size() == phase_tensors.size(),
          "build_multiphase: mask/tensor list lengths differ");
  const int n = static_cast<int>(phase_masks.size());
  for (int p = 0; p < n; ++p)
    require_spd<Dim>(phase_tensors[p], "phase " + std::to_string(p));

  auto grid = std::make_shared<CellGrid<Dim>>(resolution, n);
  const std::size_t nv = grid->num_voxels();
  for (int p = 0; p < n; ++p)
    require(phase_masks[p].size() == nv,
            "build_multiphase: mask size mismatch for phase " + std::to_string(p));

  for (std::size_t v = 0; v < nv; ++v) {
    int owner = -1;
    for (int p = 0; p < n; ++p) {
      if (!phase_masks[p][v]) continue;
      if (owner >= 0)
        throw ConfigError("partition error: voxel " + std::to_string(v) +
                          " claimed by phases " + std::to_string(owner) + " and " +
                          std::to_string(p));
      owner = p;
    }
    if (owner < 0)
      throw ConfigError("partition error: voxel " + std::to_string(v) +
                        " not covered by any mask");
    grid->set_phase(v, static_cast<std::uint8_t>(owner));
    grid->set_tensor(v, phase_tensors[owner]);
  }
  return grid;
}

/// Layered test fixture: layers stacked along normal_axis, periodic. Layer
/// boundaries must land exactly on voxel boundaries.
template <int Dim>
std::shared_ptr<CellGrid<Dim>> build_laminate(int normal_axis,
                                              const std::vector<double>& fractions,
                                              const std::vector<Mat<Dim>>& conductivities,
                                              int resolution) {
  require(normal_axis >= 0 && normal_axis < Dim, "build_laminate: bad axis");
  require(!fractions.empty() && fractions.size() == conductivities.size(),
          "build_laminate: fraction/tensor list lengths differ");
  double total = 0.0;
  for (double f : fractions) {
    require(f > 0.0, "build_laminate: fractions must be positive");
    total += f;
  }
  require(std::abs(total - 1.0) <= 1e-12, "build_laminate: fractions must sum to 1");

  // Slab edges in voxel units; each must be an integer.
  std::vector<int> edges{0};
  double acc = 0.0;
  for (double f : fractions) {
    acc += f;
    const double edge = acc * resolution;
    const double rounded = std::round(edge);
    if (std::abs(edge - rounded) > 1e-9)
      throw ConfigError("build_laminate: layer boundary at fraction " +
                        std::to_string(acc) + " does not land on a voxel boundary");
    edges.push_back(static_cast<int>(rounded));
  }

  const int n = static_cast<int>(fractions.size());
  for (int p = 0; p < n; ++p)
    require_spd<Dim>(conductivities[p], "layer " + std::to_string(p));

  auto grid = std::make_shared<CellGrid<Dim>>(resolution, n);
  for (std::size_t v = 0; v < grid->num_voxels(); ++v) {
    const int slab = grid->coords(v)[normal_axis];
    int p = 0;
    while (slab >= edges[p + 1]) ++p;
    grid->set_phase(v, static_cast<std::uint8_t>(p));
    grid->set_tensor(v, conductivities[p]);
  }
  return grid;
}

}  // namespace homog
