#pragma once

#include <homog/cell_grid.hpp>

#include <memory>
#include <vector>

namespace homog {

struct Ball {
  Vec<3> center;
  double radius;
  double volume() const { return 4.0 / 3.0 * M_PI * radius * radius * radius; }
};

////////////////////////////////////////////////////////////////////////////
/*! A periodic dispersion of uniaxial crystallites in a unit matrix.
//
//  Each crystallite occupies a ball and conducts lambda1 radially and
//  lambda2 tangentially about its own center, with lambda1 = 1/(2*lambda2-1)
//  so that the aggregate homogenizes to the identity. The balls must be
//  pairwise disjoint and contained in the open unit cell, so the piecewise
//  closed forms of the oracle are globally valid. 3D only.
*///////////////////////////////////////////////////////////////////////////
struct SchulgasserCell {
  std::vector<Ball> crystallites;
  double lambda2 = 0.75;

  double alpha() const { return 2.0 * lambda2 - 1.0; }
  double lambda1() const { return 1.0 / alpha(); }
  double theta() const {
    double t = 0.0;
    for (const auto& b : crystallites) t += b.volume();
    return t;
  }

  // Crystallite tensor at a point inside ball l; identity outside all balls.
  Mat<3> tensor_at(const Vec<3>& y) const {
    const int l = containing_ball(y);
    if (l < 0) return Mat<3>::Identity();
    const Vec<3> d = y - crystallites[l].center;
    const double s = d.norm();
    if (s == 0.0) throw ConfigError("SchulgasserCell: tensor undefined at a ball center");
    const Vec<3> n = d / s;
    return lambda1() * (n * n.transpose()) +
           lambda2 * (Mat<3>::Identity() - n * n.transpose());
  }

  // Index of the ball whose open interior contains y, or -1.
  int containing_ball(const Vec<3>& y) const {
    for (std::size_t l = 0; l < crystallites.size(); ++l)
      if ((y - crystallites[l].center).norm() < crystallites[l].radius)
        return static_cast<int>(l);
    return -1;
  }

  void validate() const {
    require(lambda2 > 0.5 && lambda2 < 1.0, "SchulgasserCell: lambda2 must lie in (1/2, 1)");
    for (std::size_t l = 0; l < crystallites.size(); ++l) {
      const auto& b = crystallites[l];
      require(b.radius > 0.0, "SchulgasserCell: ball radius must be positive");
      for (int a = 0; a < 3; ++a)
        require(b.center[a] - b.radius > 0.0 && b.center[a] + b.radius < 1.0,
                "SchulgasserCell: ball " + std::to_string(l) +
                    " not contained in the open unit cell");
      for (std::size_t m = l + 1; m < crystallites.size(); ++m)
        require((b.center - crystallites[m].center).norm() >
                    b.radius + crystallites[m].radius,
                "SchulgasserCell: balls " + std::to_string(l) + " and " +
                    std::to_string(m) + " overlap");
    }
    require(theta() < 1.0, "SchulgasserCell: crystallite volume fraction must be < 1");
  }
};

/// Rasterizes the crystallite dispersion onto a voxel grid. Voxel centers
/// carry the half-voxel offset, so for even resolutions no sample can land
/// on a ball center. Phase 0 is the matrix, phase 1 the crystallite
/// aggregate. Sharp interfaces: no tensor averaging at phase boundaries.
inline std::shared_ptr<CellGrid<3>> rasterize_schulgasser(const SchulgasserCell& cell,
                                                          int resolution) {
  cell.validate();
  require(resolution >= 16, "rasterize_schulgasser: resolution must be >= 16");
  require(is_power_of_two(resolution),
          "rasterize_schulgasser: resolution must be an even power of two");

  auto grid = std::make_shared<CellGrid<3>>(resolution, 2);
  for (std::size_t v = 0; v < grid->num_voxels(); ++v) {
    const Vec<3> y = grid->voxel_center(v);
    const int l = cell.containing_ball(y);
    if (l < 0) {
      grid->set_phase(v, 0);
      grid->set_tensor(v, Mat<3>::Identity());
    } else {
      grid->set_phase(v, 1);
      grid->set_tensor(v, cell.tensor_at(y));
    }
  }
  return grid;
}

}  // namespace homog
