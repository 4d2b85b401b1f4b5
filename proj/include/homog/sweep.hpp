#pragma once

#include <homog/concentration.hpp>

#include <algorithm>
#include <functional>
#include <future>
#include <string>
#include <vector>

namespace homog {

////////////////////////////////////////////////////////////////////////////
//  Desk-scale fine-solver harness (2D): solves the oscillatory problem at
//  eps = 1/k by tiling the cell raster onto a refined mesh, and measures
//  L^p gradient norms, empirical distribution functions, localization
//  residuals and Caratheodory limits against the two-scale predictions.
////////////////////////////////////////////////////////////////////////////

struct SweepConfig {
  std::shared_ptr<const CellGrid<2>> cell;
  MacroProblem<2> macro;
  std::vector<double> epsilons;       // each 1/k, sorted descending
  std::vector<double> p_list{2.0};
  std::vector<double> t_grid;
  Box<2> D;
  int elements_per_period = 8;
  double fem_tol = 1e-10;
  double cell_tol = 1e-10;

  void validate() const {
    require(cell != nullptr, "SweepConfig: no cell");
    macro.validate();
    require(!epsilons.empty(), "SweepConfig: empty epsilon ladder");
    for (double eps : epsilons) {
      require(eps > 0.0 && eps <= 1.0, "SweepConfig: epsilon out of range");
      const double k = 1.0 / eps;
      require(std::abs(k - std::round(k)) < 1e-9,
              "SweepConfig: epsilon must be 1/k for integer k");
      for (int a = 0; a < 2; ++a) {
        const double periods = macro.mesh.extents[a] / eps;
        require(std::abs(periods - std::round(periods)) < 1e-9,
                "SweepConfig: domain extent must hold whole periods");
      }
    }
    require(elements_per_period >= 8,
            "SweepConfig: under-resolved (need >= 8 fine elements per period)");
    for (double p : p_list) require(p >= 2.0, "SweepConfig: p must be >= 2");
    // One cell tiles the whole domain, so the partition must be uniform.
    for (int id : macro.partition)
      require(id == macro.partition[0], "SweepConfig: sweep requires a single subdomain");
    for (int a = 0; a < 2; ++a)
      require(D.lo[a] > 0.0 && D.hi[a] < macro.mesh.extents[a] && D.lo[a] < D.hi[a],
              "SweepConfig: D must lie compactly inside the domain");
  }
};

struct FineSolution {
  StructuredMesh<2> mesh;
  std::vector<double> u;
  std::vector<Vec<2>> grad;            // element-midpoint gradients
  std::vector<std::uint8_t> phase;     // tiled phase label per element
  double epsilon = 0.0;
  double residual = 0.0;
};

/// Solves the oscillatory problem at one epsilon: coefficients are the cell
/// raster tiled periodically, sampled at fine element centers.
inline FineSolution solve_fine(const SweepConfig& config, double epsilon) {
  config.validate();
  const CellGrid<2>& cell = *config.cell;
  FineSolution fine;
  fine.epsilon = epsilon;
  fine.mesh.extents = config.macro.mesh.extents;
  for (int a = 0; a < 2; ++a) {
    const double periods = fine.mesh.extents[a] / epsilon;
    fine.mesh.resolution[a] =
        static_cast<int>(std::round(periods)) * config.elements_per_period;
  }

  const std::size_t ne = fine.mesh.num_elements();
  fine.phase.resize(ne);
  std::vector<std::size_t> voxel_of(ne);
  for (std::size_t e = 0; e < ne; ++e) {
    const Vec<2> x = fine.mesh.element_center(e);
    std::array<int, 2> idx;
    for (int a = 0; a < 2; ++a) {
      const double y = unit_frac(x[a] / epsilon);
      idx[a] = std::min(static_cast<int>(y * cell.resolution()), cell.resolution() - 1);
    }
    voxel_of[e] = cell.index(idx);
    fine.phase[e] = cell.phase(voxel_of[e]);
  }

  const auto& macro_mesh = config.macro.mesh;
  auto solution = detail::solve_structured<2>(
      fine.mesh, [&](std::size_t e) { return cell.tensor(voxel_of[e]); },
      [&](std::size_t e) {
        return config.macro.f[macro_mesh.element_at(fine.mesh.element_center(e))];
      },
      config.macro.bc, config.fem_tol);
  fine.u = std::move(solution.u);
  fine.grad = std::move(solution.grad);
  fine.residual = solution.residual;
  return fine;
}

/// Element-midpoint quadrature of ||grad u^eps||_{L^p(D)}.
inline double lp_norm_gradient(const FineSolution& fine, double p, const Box<2>& D) {
  require(p >= 2.0, "lp_norm_gradient: p must be >= 2");
  const double vol = fine.mesh.element_volume();
  const double s = pairwise_sum(fine.mesh.num_elements(), [&](std::size_t e) {
    if (!D.contains(fine.mesh.element_center(e))) return 0.0;
    return vol * std::pow(fine.grad[e].norm(), p);
  });
  return std::pow(s, 1.0 / p);
}

/// Distribution function lambda_i(D, t): the measure of D intersected with
/// phase i where |grad u^eps| > t, for each t in the grid.
inline std::vector<double> empirical_distribution(const FineSolution& fine, int phase,
                                                  const Box<2>& D,
                                                  const std::vector<double>& t_grid) {
  const double vol = fine.mesh.element_volume();
  std::vector<double> out;
  out.reserve(t_grid.size());
  for (double t : t_grid) {
    out.push_back(pairwise_sum(fine.mesh.num_elements(), [&](std::size_t e) {
      if (fine.phase[e] != phase) return 0.0;
      if (!D.contains(fine.mesh.element_center(e))) return 0.0;
      return fine.grad[e].norm() > t ? vol : 0.0;
    }));
  }
  return out;
}

/// Volume-median of |grad u^eps| over D (elements have equal volume).
inline double median_gradient(const FineSolution& fine, const Box<2>& D) {
  std::vector<double> mags;
  for (std::size_t e = 0; e < fine.mesh.num_elements(); ++e)
    if (D.contains(fine.mesh.element_center(e))) mags.push_back(fine.grad[e].norm());
  require(!mags.empty(), "median_gradient: D contains no elements");
  std::sort(mags.begin(), mags.end());
  return mags[mags.size() / 2];
}

struct TrendRow {
  double epsilon;
  double lhs;
  double prediction;
  double abs_residual;
  double rel_residual;
};

namespace detail {

// Two-scale prediction int_D avg_y q(x, y) |P(y) grad u^H(x)|^2 dy dx with
// element-midpoint macro quadrature.
inline double localization_prediction(const MacroProblem<2>& problem,
                                      const MacroSolution<2>& macro,
                                      const CorrectorSolution<2>& cell_sol, const Box<2>& D,
                                      const std::function<double(const Vec<2>&, const Vec<2>&)>& q) {
  const auto& mesh = problem.mesh;
  const CellGrid<2>& cell = *cell_sol.grid;
  const double vol = mesh.element_volume();
  double acc = 0.0;
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    const Vec<2> x = mesh.element_center(e);
    if (!D.contains(x)) continue;
    const Vec<2> xi = macro.grad[e];
    const double cell_avg = pairwise_sum(cell.num_voxels(), [&](std::size_t v) {
      const Vec<2> py = cell_sol.P.apply(v, xi);
      return q(x, cell.voxel_center(v)) * py.squaredNorm();
    }) / static_cast<double>(cell.num_voxels());
    acc += vol * cell_avg;
  }
  return acc;
}

}  // namespace detail

/// Localization-lemma check: compares int_D q(x, x/eps) |grad u^eps|^2
/// against the two-scale prediction for every solved epsilon. Rows come
/// back ordered by decreasing epsilon.
inline std::vector<TrendRow> localization_check(
    const std::vector<FineSolution>& fines, const MacroProblem<2>& problem,
    const MacroSolution<2>& macro, const CorrectorSolution<2>& cell_sol, const Box<2>& D,
    const std::function<double(const Vec<2>&, const Vec<2>&)>& q) {
  std::vector<TrendRow> rows;
  for (const auto& fine : fines) {
    const double vol = fine.mesh.element_volume();
    const double lhs = pairwise_sum(fine.mesh.num_elements(), [&](std::size_t e) {
      const Vec<2> x = fine.mesh.element_center(e);
      if (!D.contains(x)) return 0.0;
      Vec<2> y;
      for (int a = 0; a < 2; ++a) y[a] = unit_frac(x[a] / fine.epsilon);
      return vol * q(x, y) * fine.grad[e].squaredNorm();
    });
    const double pred = detail::localization_prediction(problem, macro, cell_sol, D, q);
    const double denom = std::abs(pred) > 0.0 ? std::abs(pred) : 1.0;
    rows.push_back({fine.epsilon, lhs, pred, std::abs(lhs - pred), std::abs(lhs - pred) / denom});
  }
  std::sort(rows.begin(), rows.end(),
            [](const TrendRow& a, const TrendRow& b) { return a.epsilon > b.epsilon; });
  return rows;
}

/// Caratheodory-functional check for psi with |psi(x, eta)| <= |eta|^p:
/// int_D psi(x, grad u^eps) against int_D avg_y psi(x, P(y) grad u^H).
/// Every sampled evaluation is validated against the growth bound.
inline std::vector<TrendRow> caratheodory_check(
    const std::vector<FineSolution>& fines, const MacroProblem<2>& problem,
    const MacroSolution<2>& macro, const CorrectorSolution<2>& cell_sol, const Box<2>& D,
    const std::function<double(const Vec<2>&, const Vec<2>&)>& psi, double p) {
  require(p >= 1.0, "caratheodory_check: p must be >= 1");
  auto checked = [&](const Vec<2>& x, const Vec<2>& eta) {
    const double val = psi(x, eta);
    if (std::abs(val) > std::pow(eta.norm(), p) + 1e-12)
      throw ConfigError("caratheodory_check: psi violates the growth bound |psi| <= |eta|^p");
    return val;
  };

  std::vector<TrendRow> rows;
  const auto& mesh = problem.mesh;
  const CellGrid<2>& cell = *cell_sol.grid;
  const double mvol = mesh.element_volume();
  double pred = 0.0;
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    const Vec<2> x = mesh.element_center(e);
    if (!D.contains(x)) continue;
    const Vec<2> xi = macro.grad[e];
    const double cell_avg = pairwise_sum(cell.num_voxels(), [&](std::size_t v) {
      return checked(x, cell_sol.P.apply(v, xi));
    }) / static_cast<double>(cell.num_voxels());
    pred += mvol * cell_avg;
  }
  for (const auto& fine : fines) {
    const double vol = fine.mesh.element_volume();
    const double lhs = pairwise_sum(fine.mesh.num_elements(), [&](std::size_t e) {
      const Vec<2> x = fine.mesh.element_center(e);
      if (!D.contains(x)) return 0.0;
      return vol * checked(x, fine.grad[e]);
    });
    const double denom = std::abs(pred) > 0.0 ? std::abs(pred) : 1.0;
    rows.push_back({fine.epsilon, lhs, pred, std::abs(lhs - pred), std::abs(lhs - pred) / denom});
  }
  std::sort(rows.begin(), rows.end(),
            [](const TrendRow& a, const TrendRow& b) { return a.epsilon > b.epsilon; });
  return rows;
}

/// Corrector mismatch ||grad u^eps - P(x/eps) grad u^H||_{L^r(D)}.
inline double corrector_mismatch(const FineSolution& fine, const MacroProblem<2>& problem,
                                 const MacroSolution<2>& macro,
                                 const CorrectorSolution<2>& cell_sol, double r,
                                 const Box<2>& D) {
  require(r >= 1.0, "corrector_mismatch: r must be >= 1");
  const CellGrid<2>& cell = *cell_sol.grid;
  const double vol = fine.mesh.element_volume();
  const double s = pairwise_sum(fine.mesh.num_elements(), [&](std::size_t e) {
    const Vec<2> x = fine.mesh.element_center(e);
    if (!D.contains(x)) return 0.0;
    std::array<int, 2> idx;
    for (int a = 0; a < 2; ++a) {
      const double y = unit_frac(x[a] / fine.epsilon);
      idx[a] = std::min(static_cast<int>(y * cell.resolution()), cell.resolution() - 1);
    }
    const Vec<2> xi = macro.grad[problem.mesh.element_at(x)];
    const Vec<2> two_scale = cell_sol.P.apply(cell.index(idx), xi);
    return vol * std::pow((fine.grad[e] - two_scale).norm(), r);
  });
  return std::pow(s, 1.0 / r);
}

/// ||u^eps - u^H||_{L^2(Omega)} by midpoint quadrature on the fine mesh.
inline double homogenized_error_L2(const FineSolution& fine, const MacroProblem<2>& problem,
                                   const MacroSolution<2>& macro) {
  const double vol = fine.mesh.element_volume();
  const double s = pairwise_sum(fine.mesh.num_elements(), [&](std::size_t e) {
    const Vec<2> x = fine.mesh.element_center(e);
    const double ue = fine.mesh.interpolate(fine.u, x);
    const double uh = problem.mesh.interpolate(macro.u, x);
    return vol * (ue - uh) * (ue - uh);
  });
  return std::sqrt(s);
}

////////////////////////////////////////////////////////////////////////////
//  Full sweep driver: shared by the CLI and the acceptance suite.
////////////////////////////////////////////////////////////////////////////

struct SweepRow {
  double epsilon;
  std::string quantity;
  double p_or_t;
  int phase;  // -1 when not phase-resolved
  double value;
};

struct Verdict {
  std::string name;
  bool pass;
  std::string detail;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  std::vector<Verdict> verdicts;
  double smallest_epsilon = 0.0;
};

/// Runs the whole ladder: cell solve, homogenized solve with the computed
/// effective tensor, fine solves per epsilon (independent, optionally
/// concurrent), measurements, and the sandwich verdicts.
inline SweepReport run_sweep(const SweepConfig& config, int threads = 1) {
  config.validate();
  auto cell_sol = solve_corrector<2>(config.cell, config.cell_tol);
  const Mat<2> aeff = effective_tensor(cell_sol).entries;

  MacroProblem<2> problem = config.macro;
  for (auto& [id, tensor] : problem.tensors) tensor = aeff;
  const MacroSolution<2> macro = solve_homogenized(problem, config.fem_tol);

  std::vector<double> eps = config.epsilons;
  std::sort(eps.begin(), eps.end(), std::greater<>());

  std::vector<FineSolution> fines(eps.size());
  if (threads <= 1) {
    for (std::size_t i = 0; i < eps.size(); ++i) fines[i] = solve_fine(config, eps[i]);
  } else {
    // Independent deterministic solves; joined in ladder order.
    std::vector<std::future<FineSolution>> futs;
    for (std::size_t i = 0; i < eps.size(); ++i)
      futs.push_back(std::async(std::launch::async,
                                [&config, e = eps[i]] { return solve_fine(config, e); }));
    for (std::size_t i = 0; i < eps.size(); ++i) fines[i] = futs[i].get();
  }

  SweepReport report;
  report.smallest_epsilon = eps.back();
  const double measure_D = config.D.measure();
  const int num_phases = config.cell->num_phases();

  std::map<int, const CorrectorSolution<2>*> cell_data{{problem.partition[0], &cell_sol}};

  for (const auto& fine : fines) {
    for (double p : config.p_list)
      report.rows.push_back({fine.epsilon, "lp_norm_gradient", p, -1,
                             lp_norm_gradient(fine, p, config.D)});
    for (int i = 0; i < num_phases; ++i) {
      const auto dist = empirical_distribution(fine, i, config.D, config.t_grid);
      for (std::size_t ti = 0; ti < config.t_grid.size(); ++ti)
        report.rows.push_back({fine.epsilon, "distribution", config.t_grid[ti], i, dist[ti]});
    }
    report.rows.push_back({fine.epsilon, "corrector_mismatch_L1", 1.0, -1,
                           corrector_mismatch(fine, problem, macro, cell_sol, 1.0, config.D)});
    report.rows.push_back({fine.epsilon, "corrector_mismatch_L2", 2.0, -1,
                           corrector_mismatch(fine, problem, macro, cell_sol, 2.0, config.D)});
    report.rows.push_back(
        {fine.epsilon, "homogenized_error_L2", 0.0, -1, homogenized_error_L2(fine, problem, macro)});
    report.rows.push_back({fine.epsilon, "median_gradient", 0.0, -1,
                           median_gradient(fine, config.D)});
  }

  auto one = [](const Vec<2>&, const Vec<2>&) { return 1.0; };
  const auto loc = localization_check(fines, problem, macro, cell_sol, config.D, one);
  for (const auto& row : loc)
    report.rows.push_back({row.epsilon, "localization_residual", 0.0, -1, row.rel_residual});
  for (int i = 0; i < num_phases; ++i) {
    const CellGrid<2>& cell = *config.cell;
    auto chi = [&cell, i](const Vec<2>&, const Vec<2>& y) {
      std::array<int, 2> idx;
      for (int a = 0; a < 2; ++a)
        idx[a] = std::min(static_cast<int>(y[a] * cell.resolution()), cell.resolution() - 1);
      return cell.phase(cell.index(idx)) == i ? 1.0 : 0.0;
    };
    const auto loci = localization_check(fines, problem, macro, cell_sol, config.D, chi);
    for (const auto& row : loci)
      report.rows.push_back({row.epsilon, "localization_residual_phase", 0.0, i, row.rel_residual});
  }

  // Verdict: localization residual decreasing down the ladder, final <= 5%.
  {
    bool decreasing = true;
    for (std::size_t i = 1; i < loc.size(); ++i)
      decreasing = decreasing && loc[i].rel_residual < loc[i - 1].rel_residual;
    const bool final_ok = loc.back().rel_residual <= 0.05;
    report.verdicts.push_back({"localization_trend", decreasing && final_ok,
                               "final relative residual " + std::to_string(loc.back().rel_residual)});
  }

  // Verdict: lower-bound sandwich at the smallest epsilon with 5% slack.
  {
    const FineSolution& fine = fines.back();
    bool pass = true;
    std::string detail;
    for (double p : config.p_list) {
      const double lhs = lp_norm_gradient(fine, p, config.D);
      const MomentValue bound = lower_bound_Lp(problem, macro, cell_data, p, config.D);
      if (bound.divergent || lhs < 0.95 * bound.value) pass = false;
      detail += "p=" + std::to_string(p) + ": norm=" + std::to_string(lhs) +
                " bound=" + std::to_string(bound.value) + "; ";
    }
    report.verdicts.push_back({"lower_bound_sandwich", pass, detail});
  }

  // Verdict: Chebyshev sandwich at the smallest epsilon for t above the
  // median gradient, 10% slack.
  {
    const FineSolution& fine = fines.back();
    const double med = median_gradient(fine, config.D);
    const double p = config.p_list.front();
    bool pass = true;
    std::string detail = "median=" + std::to_string(med);
    for (int i = 0; i < num_phases; ++i) {
      const MomentValue bound_norm = lower_bound_Lp(problem, macro, cell_data, p, config.D, i);
      const double bound_value = std::pow(bound_norm.value, p);
      const auto dist = empirical_distribution(fine, i, config.D, config.t_grid);
      for (std::size_t ti = 0; ti < config.t_grid.size(); ++ti) {
        const double t = config.t_grid[ti];
        if (t < med) continue;
        const double cap = chebyshev_tail(bound_value, p, t, measure_D);
        if (dist[ti] > 1.10 * cap + 1e-12) {
          pass = false;
          detail += " phase " + std::to_string(i) + " t=" + std::to_string(t) +
                    " empirical=" + std::to_string(dist[ti]) + " > bound=" + std::to_string(cap);
        }
      }
    }
    report.verdicts.push_back({"chebyshev_sandwich", pass, detail});
  }

  return report;
}

}  // namespace homog
