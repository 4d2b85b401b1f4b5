#pragma once

#include <homog/io.hpp>
#include <homog/schulgasser_oracle.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <variant>

namespace homog::cli {

namespace fs = std::filesystem;

struct LoadedConfig {
  json doc;
  fs::path dir;        // config paths resolve relative to this
  std::string raw;     // exact bytes, hashed into provenance
};

inline LoadedConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  LoadedConfig cfg;
  cfg.raw = ss.str();
  cfg.doc = json::parse(cfg.raw, nullptr, false);
  require(!cfg.doc.is_discarded(), "config is not valid JSON: " + path.string());
  cfg.dir = fs::absolute(path).parent_path();
  return cfg;
}

inline void validate_keys(const json& obj, std::initializer_list<const char*> allowed,
                          const std::string& where) {
  require(obj.is_object(), where + ": expected a JSON object");
  for (const auto& [k, v] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (k == a) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

template <int Dim>
Vec<Dim> parse_vec(const json& j, const std::string& where) {
  require(j.is_array() && j.size() == Dim, where + ": expected an array of " +
                                               std::to_string(Dim) + " numbers");
  Vec<Dim> v;
  for (int a = 0; a < Dim; ++a) v[a] = j[a].get<double>();
  return v;
}

template <int Dim>
Mat<Dim> parse_tensor(const json& j, const std::string& where) {
  require(j.is_array() && j.size() == Dim, where + ": expected a " + std::to_string(Dim) +
                                               "x" + std::to_string(Dim) + " matrix");
  Mat<Dim> m;
  for (int i = 0; i < Dim; ++i) {
    require(j[i].is_array() && j[i].size() == Dim, where + ": bad matrix row");
    for (int k = 0; k < Dim; ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

////////////////////////////////////////////////////////////////////////////
//  Geometry section.
////////////////////////////////////////////////////////////////////////////

inline void validate_geometry(const json& g) {
  validate_keys(g, {"type", "dim", "tensor", "normal_axis", "fractions", "tensors",
                    "phase_file", "balls", "lambda2", "lambda1"},
                "geometry");
  require(g.contains("type"), "geometry: missing 'type'");
}

inline int geometry_dim(const json& g) {
  const std::string type = g.at("type").get<std::string>();
  if (type == "schulgasser") return 3;
  require(g.contains("dim"), "geometry: missing 'dim'");
  const int dim = g.at("dim").get<int>();
  require(dim == 2 || dim == 3, "geometry: dim must be 2 or 3");
  return dim;
}

inline SchulgasserCell parse_schulgasser(const json& g) {
  SchulgasserCell cell;
  cell.lambda2 = g.at("lambda2").get<double>();
  for (const auto& b : g.at("balls")) {
    validate_keys(b, {"center", "radius"}, "geometry.balls");
    cell.crystallites.push_back(
        {parse_vec<3>(b.at("center"), "ball center"), b.at("radius").get<double>()});
  }
  cell.validate();
  return cell;
}

template <int Dim>
std::shared_ptr<CellGrid<Dim>> build_grid(const json& g, int resolution, const fs::path& dir) {
  validate_geometry(g);
  const std::string type = g.at("type").get<std::string>();
  if (type == "homogeneous") {
    std::vector<std::vector<std::uint8_t>> mask(1);
    CellGrid<Dim> probe(resolution, 1);
    mask[0].assign(probe.num_voxels(), 1);
    return build_multiphase<Dim>(mask, {parse_tensor<Dim>(g.at("tensor"), "geometry.tensor")},
                                 resolution);
  }
  if (type == "laminate") {
    std::vector<double> fractions = g.at("fractions").get<std::vector<double>>();
    std::vector<Mat<Dim>> tensors;
    for (const auto& t : g.at("tensors")) tensors.push_back(parse_tensor<Dim>(t, "geometry.tensors"));
    return build_laminate<Dim>(g.value("normal_axis", 0), fractions, tensors, resolution);
  }
  if (type == "multiphase_file") {
    const fs::path path = dir / g.at("phase_file").get<std::string>();
    const VoxelFile f = read_voxel_file(path);
    require(f.header.at("dim").get<int>() == Dim, "phase_file: dimension mismatch");
    const int res = f.header.at("resolution").get<int>();
    require(res == resolution, "phase_file: resolution mismatch with solver section");
    std::vector<Mat<Dim>> tensors;
    for (const auto& t : g.at("tensors")) tensors.push_back(parse_tensor<Dim>(t, "geometry.tensors"));
    require(!f.phases.empty(), "phase_file: no phase labels present");
    std::vector<std::vector<std::uint8_t>> masks(tensors.size());
    for (auto& m : masks) m.assign(f.phases.size(), 0);
    for (std::size_t v = 0; v < f.phases.size(); ++v) {
      require(f.phases[v] < tensors.size(), "phase_file: label out of range");
      masks[f.phases[v]][v] = 1;
    }
    return build_multiphase<Dim>(masks, tensors, resolution);
  }
  if (type == "schulgasser") {
    if constexpr (Dim == 3) return rasterize_schulgasser(parse_schulgasser(g), resolution);
    throw ConfigError("geometry: schulgasser cells are 3D");
  }
  throw ConfigError("geometry: unknown type '" + type + "'");
}

////////////////////////////////////////////////////////////////////////////
//  Solver / analysis sections.
////////////////////////////////////////////////////////////////////////////

struct SolverSection {
  int resolution = 64;
  double tol = 1e-8;
  int max_iter = 0;
  bool refinement_check = false;
  std::vector<int> ladder;
};

inline SolverSection parse_solver(const json& doc) {
  SolverSection s;
  if (!doc.contains("solver")) return s;
  const json& j = doc.at("solver");
  validate_keys(j, {"resolution", "tol", "max_iter", "refinement_check", "ladder"}, "solver");
  s.resolution = j.value("resolution", s.resolution);
  s.tol = j.value("tol", s.tol);
  s.max_iter = j.value("max_iter", 0);
  s.refinement_check = j.value("refinement_check", false);
  if (j.contains("ladder")) s.ladder = j.at("ladder").get<std::vector<int>>();
  require(s.tol > 0.0, "solver: tol must be positive");
  return s;
}

struct AnalysisSection {
  std::vector<double> p_grid{2.0, 3.0, 4.0};
  std::vector<int> phases;
  std::vector<double> xi;
  std::vector<double> t_grid;
  double divergence_factor = 2.0;
  std::string source = "numeric";
};

inline AnalysisSection parse_analysis(const json& doc) {
  AnalysisSection a;
  if (!doc.contains("analysis")) return a;
  const json& j = doc.at("analysis");
  validate_keys(j, {"p_grid", "phases", "xi", "t_grid", "divergence_factor", "source"},
                "analysis");
  if (j.contains("p_grid")) a.p_grid = j.at("p_grid").get<std::vector<double>>();
  if (j.contains("phases")) a.phases = j.at("phases").get<std::vector<int>>();
  if (j.contains("xi")) a.xi = j.at("xi").get<std::vector<double>>();
  if (j.contains("t_grid")) a.t_grid = j.at("t_grid").get<std::vector<double>>();
  a.divergence_factor = j.value("divergence_factor", 2.0);
  a.source = j.value("source", "numeric");
  require(a.source == "numeric" || a.source == "analytic",
          "analysis: source must be 'numeric' or 'analytic'");
  return a;
}

////////////////////////////////////////////////////////////////////////////
//  Macro section.
////////////////////////////////////////////////////////////////////////////

template <int Dim>
FaceCondition parse_face(const json& j, const std::string& where) {
  validate_keys(j, {"type", "g"}, where);
  FaceCondition c;
  const std::string type = j.at("type").get<std::string>();
  if (type == "dirichlet") {
    c.type = BcType::Dirichlet;
  } else if (type == "neumann") {
    c.type = BcType::Neumann;
    c.g = j.value("g", 0.0);
  } else {
    throw ConfigError(where + ": type must be 'dirichlet' or 'neumann'");
  }
  return c;
}

template <int Dim>
MacroProblem<Dim> parse_macro(const json& doc, Box<Dim>& D_out, bool& tensors_from_cell) {
  require(doc.contains("macro"), "missing 'macro' section");
  const json& m = doc.at("macro");
  validate_keys(m, {"extents", "resolution", "subdomains", "tensors", "from_cell", "f", "bc", "D"},
                "macro");
  MacroProblem<Dim> p;
  p.mesh.extents = parse_vec<Dim>(m.at("extents"), "macro.extents");
  {
    const json& r = m.at("resolution");
    require(r.is_array() && r.size() == Dim, "macro.resolution: expected per-axis array");
    for (int a = 0; a < Dim; ++a) p.mesh.resolution[a] = r[a].get<int>();
  }

  const std::size_t ne = p.mesh.num_elements();
  p.partition.assign(ne, 0);
  if (m.contains("subdomains")) {
    for (const auto& s : m.at("subdomains")) {
      validate_keys(s, {"box", "id"}, "macro.subdomains");
      const json& bj = s.at("box");
      validate_keys(bj, {"lo", "hi"}, "macro.subdomains.box");
      Box<Dim> box{parse_vec<Dim>(bj.at("lo"), "box.lo"), parse_vec<Dim>(bj.at("hi"), "box.hi")};
      // Subdomain boundaries must align with element faces.
      for (int a = 0; a < Dim; ++a)
        for (double edge : {box.lo[a], box.hi[a]}) {
          const double t = edge / p.mesh.spacing(a);
          require(std::abs(t - std::round(t)) < 1e-9,
                  "macro.subdomains: boundary does not align with element faces");
        }
      const int id = s.at("id").get<int>();
      for (std::size_t e = 0; e < ne; ++e)
        if (box.contains(p.mesh.element_center(e))) p.partition[e] = id;
    }
  }

  tensors_from_cell = m.value("from_cell", false);
  if (m.contains("tensors")) {
    for (const auto& [key, value] : m.at("tensors").items())
      p.tensors[std::stoi(key)] = parse_tensor<Dim>(value, "macro.tensors");
  } else {
    require(tensors_from_cell, "macro: needs 'tensors' or 'from_cell': true");
    std::set<int> ids(p.partition.begin(), p.partition.end());
    for (int id : ids) p.tensors[id] = Mat<Dim>::Identity();  // placeholder until cell solve
  }

  p.f.assign(ne, 0.0);
  if (m.contains("f")) {
    const json& fj = m.at("f");
    validate_keys(fj, {"constant", "per_subdomain"}, "macro.f");
    if (fj.contains("constant")) p.f.assign(ne, fj.at("constant").get<double>());
    if (fj.contains("per_subdomain"))
      for (const auto& [key, value] : fj.at("per_subdomain").items()) {
        const int id = std::stoi(key);
        for (std::size_t e = 0; e < ne; ++e)
          if (p.partition[e] == id) p.f[e] = value.template get<double>();
      }
  }

  require(m.contains("bc"), "macro: missing 'bc'");
  const json& bc = m.at("bc");
  static const char* kFaces2[4] = {"x_lo", "x_hi", "y_lo", "y_hi"};
  static const char* kFaces3[6] = {"x_lo", "x_hi", "y_lo", "y_hi", "z_lo", "z_hi"};
  const char** names = Dim == 2 ? kFaces2 : kFaces3;
  if constexpr (Dim == 2)
    validate_keys(bc, {"x_lo", "x_hi", "y_lo", "y_hi"}, "macro.bc");
  else
    validate_keys(bc, {"x_lo", "x_hi", "y_lo", "y_hi", "z_lo", "z_hi"}, "macro.bc");
  for (int f = 0; f < 2 * Dim; ++f) {
    require(bc.contains(names[f]),
            "macro.bc: every boundary face needs exactly one condition (missing " +
                std::string(names[f]) + ")");
    p.bc[f] = parse_face<Dim>(bc.at(names[f]), "macro.bc." + std::string(names[f]));
  }

  D_out = centered_box<Dim>(p.mesh.extents);
  if (m.contains("D")) {
    const json& dj = m.at("D");
    validate_keys(dj, {"lo", "hi"}, "macro.D");
    D_out.lo = parse_vec<Dim>(dj.at("lo"), "macro.D.lo");
    D_out.hi = parse_vec<Dim>(dj.at("hi"), "macro.D.hi");
  }
  return p;
}

////////////////////////////////////////////////////////////////////////////
//  Command context and shared helpers.
////////////////////////////////////////////////////////////////////////////

struct Context {
  LoadedConfig config;
  fs::path outdir;
  int threads = 1;
};

inline void validate_root(const json& doc,
                          std::initializer_list<const char*> sections) {
  validate_keys(doc, sections, "config");
}

inline void write_provenance(const Context& ctx, const std::string& command, double tol) {
  fs::create_directories(ctx.outdir);
  json prov = provenance_block(ctx.config.raw, tol);
  prov["command"] = command;
  std::ofstream out(ctx.outdir / "provenance.json");
  out << prov.dump(2) << "\n";
}

inline fs::path resolve_outdir(const LoadedConfig& cfg, const std::string& cli_out) {
  if (!cli_out.empty()) return fs::path(cli_out);
  std::string dir = "out";
  if (cfg.doc.contains("output")) {
    validate_keys(cfg.doc.at("output"), {"directory", "formats"}, "output");
    dir = cfg.doc.at("output").value("directory", dir);
  }
  fs::path p(dir);
  return p.is_absolute() ? p : cfg.dir / p;
}

// Dimension dispatch on the geometry section.
template <class F2, class F3>
auto dispatch_dim(const json& geometry, F2&& f2, F3&& f3) {
  return geometry_dim(geometry) == 2 ? f2() : f3();
}

////////////////////////////////////////////////////////////////////////////
//  solve-cell
////////////////////////////////////////////////////////////////////////////

template <int Dim>
json solve_cell_impl(const Context& ctx) {
  const json& doc = ctx.config.doc;
  const SolverSection solver = parse_solver(doc);
  auto grid = build_grid<Dim>(doc.at("geometry"), solver.resolution, ctx.config.dir);
  auto sol = solve_corrector<Dim>(grid, solver.tol, solver.max_iter);
  const Mat<Dim> aeff = effective_tensor(sol).entries;

  json eff = json::array();
  for (int i = 0; i < Dim; ++i) {
    json row = json::array();
    for (int j = 0; j < Dim; ++j) row.push_back(aeff(i, j));
    eff.push_back(row);
  }
  json meta{{"effective_tensor", eff},
            {"provenance", provenance_block(ctx.config.raw, solver.tol)}};

  const bool is_schulgasser = doc.at("geometry").at("type") == "schulgasser";
  if (solver.refinement_check && solver.resolution / 2 >= 16) {
    auto coarse_grid =
        build_grid<Dim>(doc.at("geometry"), solver.resolution / 2, ctx.config.dir);
    auto coarse = solve_corrector<Dim>(coarse_grid, solver.tol, solver.max_iter);
    const Mat<Dim> aeff_c = effective_tensor(coarse).entries;
    json note{{"resolutions", {solver.resolution / 2, solver.resolution}},
              {"effective_tensor_delta", (aeff - aeff_c).cwiseAbs().maxCoeff()}};
    if (is_schulgasser) {
      note["error_vs_identity"] = {(aeff_c - Mat<Dim>::Identity()).cwiseAbs().maxCoeff(),
                                   (aeff - Mat<Dim>::Identity()).cwiseAbs().maxCoeff()};
    }
    meta["refinement_note"] = note;
  }

  write_corrector_solution(ctx.outdir, sol, meta);
  json summary = meta;
  summary["residual"] = sol.residual;
  summary["iterations"] = sol.iterations;
  return summary;
}

inline json cmd_solve_cell(const Context& ctx) {
  validate_root(ctx.config.doc, {"geometry", "solver", "output"});
  require(ctx.config.doc.contains("geometry"), "solve-cell: missing 'geometry'");
  const SolverSection solver = parse_solver(ctx.config.doc);
  write_provenance(ctx, "solve-cell", solver.tol);
  return dispatch_dim(ctx.config.doc.at("geometry"),
                      [&] { return solve_cell_impl<2>(ctx); },
                      [&] { return solve_cell_impl<3>(ctx); });
}

////////////////////////////////////////////////////////////////////////////
//  moments
////////////////////////////////////////////////////////////////////////////

template <int Dim>
json moments_numeric(const Context& ctx) {
  const json& doc = ctx.config.doc;
  const SolverSection solver = parse_solver(doc);
  const AnalysisSection analysis = parse_analysis(doc);

  MomentSpec<Dim> spec;
  spec.p_grid = analysis.p_grid;
  spec.phases = analysis.phases;
  if (!analysis.xi.empty()) {
    require(analysis.xi.size() == Dim, "analysis.xi: wrong dimension");
    for (int a = 0; a < Dim; ++a) spec.gradient[a] = analysis.xi[a];
  }

  auto grid = build_grid<Dim>(doc.at("geometry"), solver.resolution, ctx.config.dir);
  auto sol = solve_corrector<Dim>(grid, solver.tol, solver.max_iter);
  std::vector<const CorrectorSolution<Dim>*> sols{&sol};

  CorrectorSolution<Dim> coarse;
  if (solver.refinement_check && solver.resolution / 2 >= 2) {
    auto coarse_grid =
        build_grid<Dim>(doc.at("geometry"), solver.resolution / 2, ctx.config.dir);
    coarse = solve_corrector<Dim>(coarse_grid, solver.tol, solver.max_iter);
    sols.insert(sols.begin(), &coarse);
  }

  ConcentrationReport rep = build_concentration_report<Dim>(sols, spec, analysis.divergence_factor);
  write_concentration_csv(ctx.outdir / "moments.csv", rep);
  json out = concentration_to_json(rep);
  out["provenance"] = provenance_block(ctx.config.raw, solver.tol);
  std::ofstream jf(ctx.outdir / "moments.json");
  jf << out.dump(2) << "\n";
  return out;
}

inline json moments_analytic(const Context& ctx) {
  const json& doc = ctx.config.doc;
  const AnalysisSection analysis = parse_analysis(doc);
  const SchulgasserCell cell = parse_schulgasser(doc.at("geometry"));

  ConcentrationReport rep;
  rep.source = "analytic";
  rep.quadrature_note = "closed-form radial integrals; no grid";
  for (double p : analysis.p_grid) {
    const MomentValue whole = lambda_moment(cell, p);
    rep.rows.push_back({p, -1, whole.divergent ? whole.value : std::pow(whole.value, 1.0 / p),
                        whole.divergent, 0});
    for (int phase : {0, 1}) {
      const MomentValue mv = lambda_moment_phase(cell, p, phase);
      rep.rows.push_back({p, phase, mv.divergent ? mv.value : std::pow(mv.value, 1.0 / p),
                          mv.divergent, 0});
    }
  }
  // lambda is unbounded at the crystallite centers, so f_inf is +inf
  // whenever a crystallite is present.
  const bool singular = !cell.crystallites.empty();
  rep.rows.push_back({0.0, -1,
                      singular ? std::numeric_limits<double>::infinity() : 1.0, singular, 0});

  write_concentration_csv(ctx.outdir / "moments.csv", rep);
  json out = concentration_to_json(rep);
  out["provenance"] = provenance_block(ctx.config.raw, 0.0);
  std::ofstream jf(ctx.outdir / "moments.json");
  jf << out.dump(2) << "\n";
  return out;
}

inline json cmd_moments(const Context& ctx) {
  validate_root(ctx.config.doc, {"geometry", "solver", "analysis", "output"});
  require(ctx.config.doc.contains("geometry"), "moments: missing 'geometry'");
  const AnalysisSection analysis = parse_analysis(ctx.config.doc);
  write_provenance(ctx, "moments", parse_solver(ctx.config.doc).tol);
  if (analysis.source == "analytic") return moments_analytic(ctx);
  return dispatch_dim(ctx.config.doc.at("geometry"),
                      [&] { return moments_numeric<2>(ctx); },
                      [&] { return moments_numeric<3>(ctx); });
}

////////////////////////////////////////////////////////////////////////////
//  bound
////////////////////////////////////////////////////////////////////////////

template <int Dim>
json bound_impl(const Context& ctx) {
  const json& doc = ctx.config.doc;
  const SolverSection solver = parse_solver(doc);
  const AnalysisSection analysis = parse_analysis(doc);
  const bool analytic = analysis.source == "analytic";

  Box<Dim> D;
  bool from_cell = false;
  MacroProblem<Dim> problem = parse_macro<Dim>(doc, D, from_cell);

  // Cell data: one geometry shared by every subdomain.
  std::shared_ptr<CellGrid<Dim>> grid;
  CorrectorSolution<Dim> cell_sol;
  SchulgasserCell oracle_cell;
  if (analytic) {
    require(doc.at("geometry").at("type") == "schulgasser",
            "bound: analytic source requires schulgasser geometry");
    if constexpr (Dim != 3) throw ConfigError("bound: schulgasser analytics are 3D");
    oracle_cell = parse_schulgasser(doc.at("geometry"));
    if (from_cell)
      for (auto& [id, tensor] : problem.tensors) tensor = Mat<Dim>::Identity();
  } else {
    grid = build_grid<Dim>(doc.at("geometry"), solver.resolution, ctx.config.dir);
    cell_sol = solve_corrector<Dim>(grid, solver.tol, solver.max_iter);
    if (from_cell) {
      const Mat<Dim> aeff = effective_tensor(cell_sol).entries;
      for (auto& [id, tensor] : problem.tensors) tensor = aeff;
    }
  }

  const MacroSolution<Dim> macro = solve_homogenized(problem, 1e-10);
  const double measure_D = D.measure();

  std::map<int, const CorrectorSolution<Dim>*> cell_data;
  for (const auto& [id, tensor] : problem.tensors) cell_data[id] = &cell_sol;

  auto grad_norm_p = [&](double p) {
    const double vol = problem.mesh.element_volume();
    double acc = 0.0;
    for (std::size_t e = 0; e < problem.mesh.num_elements(); ++e)
      if (D.contains(problem.mesh.element_center(e)))
        acc += vol * std::pow(macro.grad[e].norm(), p);
    return std::pow(acc, 1.0 / p);
  };

  json bounds = json::array();
  json chebyshev = json::array();
  std::ostringstream bound_csv, cheb_csv;
  bound_csv << "p,phase,value,divergent_flag\n";
  cheb_csv << "p,phase,t,tail_bound\n";

  std::vector<int> phase_cols{-1};
  for (int ph : analysis.phases) phase_cols.push_back(ph);

  for (double p : analysis.p_grid) {
    for (int ph : phase_cols) {
      MomentValue bound;
      if (analytic) {
        const MomentValue cellf = ph < 0 ? lambda_moment(oracle_cell, p)
                                         : lambda_moment_phase(oracle_cell, p, ph);
        bound = cellf.divergent
                    ? MomentValue::infinite()
                    : MomentValue{std::pow(cellf.value, 1.0 / p) * grad_norm_p(p), false};
      } else {
        std::optional<int> phase;
        if (ph >= 0) phase = ph;
        bound = lower_bound_Lp(problem, macro, cell_data, p, D, phase);
      }
      bounds.push_back(json{{"p", p},
                            {"phase", ph},
                            {"value", bound.divergent ? json("+inf") : json(bound.value)},
                            {"divergent", bound.divergent}});
      bound_csv << format_double(p) << ',' << ph << ','
                << (bound.divergent ? "+inf" : format_double(bound.value)) << ','
                << (bound.divergent ? 1 : 0) << '\n';

      if (!analysis.t_grid.empty() && !bound.divergent) {
        const double bound_value = std::pow(bound.value, p);  // the p-th power integral
        for (double t : analysis.t_grid) {
          const double tail = chebyshev_tail(bound_value, p, t, measure_D);
          chebyshev.push_back(json{{"p", p}, {"phase", ph}, {"t", t}, {"tail_bound", tail}});
          cheb_csv << format_double(p) << ',' << ph << ',' << format_double(t) << ','
                   << format_double(tail) << '\n';
        }
      }
    }
  }

  {
    std::ofstream out(ctx.outdir / "bound.csv");
    out << bound_csv.str();
    std::ofstream cheb(ctx.outdir / "chebyshev.csv");
    cheb << cheb_csv.str();
  }
  write_macro_solution_csv(ctx.outdir, problem.mesh, macro);

  json out{{"bounds", bounds},
           {"chebyshev", chebyshev},
           {"D", {{"measure", measure_D}}},
           {"provenance", provenance_block(ctx.config.raw, solver.tol)}};
  std::ofstream jf(ctx.outdir / "bound.json");
  jf << out.dump(2) << "\n";
  return out;
}

inline json cmd_bound(const Context& ctx) {
  validate_root(ctx.config.doc, {"geometry", "solver", "analysis", "macro", "output"});
  require(ctx.config.doc.contains("geometry"), "bound: missing 'geometry'");
  require(ctx.config.doc.contains("macro"), "bound: missing 'macro'");
  write_provenance(ctx, "bound", parse_solver(ctx.config.doc).tol);
  return dispatch_dim(ctx.config.doc.at("geometry"),
                      [&] { return bound_impl<2>(ctx); },
                      [&] { return bound_impl<3>(ctx); });
}

////////////////////////////////////////////////////////////////////////////
//  verify-oracle
////////////////////////////////////////////////////////////////////////////

struct OracleCheck {
  std::string name;
  bool pass;
  std::string detail;
};

inline std::vector<OracleCheck> run_oracle_checks(const json& geometry,
                                                  const std::vector<int>& ladder,
                                                  const std::vector<double>& p_grid,
                                                  double tol) {
  std::vector<OracleCheck> checks;
  const SchulgasserCell cell = parse_schulgasser(geometry);
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  auto random_in_ball = [&](double lo_frac, double hi_frac) {
    const Ball& b = cell.crystallites[rng() % cell.crystallites.size()];
    Vec<3> n(gauss(rng), gauss(rng), gauss(rng));
    n.normalize();
    const double s = b.radius * (lo_frac + (hi_frac - lo_frac) * unit(rng));
    return (b.center + s * n).eval();
  };

  // Algebraic identity lambda1 * alpha = 1; an explicit lambda1 override in
  // the config must satisfy it too.
  {
    double lambda1 = cell.lambda1();
    if (geometry.contains("lambda1")) lambda1 = geometry.at("lambda1").get<double>();
    const double err = std::abs(lambda1 * cell.alpha() - 1.0);
    checks.push_back({"lambda-identity", err <= 1e-12,
                      "|lambda1*(2*lambda2-1) - 1| = " + format_double(err)});
  }
  {
    const double pc = critical_exponent(cell.lambda2);
    checks.push_back({"critical-exponent-range", pc > 3.0 && std::isfinite(pc),
                      "p_c = " + format_double(pc)});
  }
  if (!cell.crystallites.empty()) {
    // Both branches of the temperature agree across the crystallite surface.
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      const Ball& b = cell.crystallites[rng() % cell.crystallites.size()];
      Vec<3> n(gauss(rng), gauss(rng), gauss(rng));
      n.normalize();
      for (int i = 0; i < 3; ++i) {
        const double inside = analytic_temperature(cell, i, b.center + (1 - 1e-12) * b.radius * n);
        const double outside = analytic_temperature(cell, i, b.center + (1 + 1e-12) * b.radius * n);
        worst = std::max(worst, std::abs(inside - outside));
      }
    }
    checks.push_back({"temperature-boundary-continuity", worst <= 1e-9,
                      "max branch mismatch = " + format_double(worst)});

    // Central finite differences of Phi^i against the corrector columns.
    double worst_grad = 0.0;
    const double h = 1e-6;
    for (int trial = 0; trial < 100; ++trial) {
      const Vec<3> y = random_in_ball(0.05, 0.95);
      const Mat<3> P = analytic_corrector(cell, y);
      for (int i = 0; i < 3; ++i)
        for (int a = 0; a < 3; ++a) {
          Vec<3> yp = y, ym = y;
          yp[a] += h;
          ym[a] -= h;
          const double fd =
              (analytic_temperature(cell, i, yp) - analytic_temperature(cell, i, ym)) / (2 * h);
          worst_grad = std::max(worst_grad, std::abs(fd - P(a, i)));
        }
    }
    checks.push_back({"corrector-gradient-consistency", worst_grad <= 1e-5,
                      "max |FD grad Phi - P column| = " + format_double(worst_grad)});

    // lambda(y) against an independent eigenvalue solve of P^T P.
    double worst_lam = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const Vec<3> y = random_in_ball(0.05, 0.95);
      const Mat<3> P = analytic_corrector(cell, y);
      Eigen::SelfAdjointEigenSolver<Mat<3>> es(P.transpose() * P);
      const double lam = analytic_lambda(cell, y);
      worst_lam = std::max(worst_lam,
                           std::abs(es.eigenvalues().minCoeff() - lam) / std::max(1.0, lam));
    }
    checks.push_back({"lambda-eigenvalue-consistency", worst_lam <= 1e-12,
                      "max relative eigenvalue mismatch = " + format_double(worst_lam)});

    // div(A P e^i) = 0 away from interfaces, by finite differences.
    double worst_div = 0.0;
    const double hd = 1e-5;
    for (int trial = 0; trial < 100; ++trial) {
      const Vec<3> y = random_in_ball(0.1, 0.9);
      for (int i = 0; i < 3; ++i) {
        double div = 0.0;
        for (int a = 0; a < 3; ++a) {
          Vec<3> yp = y, ym = y;
          yp[a] += hd;
          ym[a] -= hd;
          const Vec<3> fp = cell.tensor_at(yp) * analytic_corrector(cell, yp).col(i);
          const Vec<3> fm = cell.tensor_at(ym) * analytic_corrector(cell, ym).col(i);
          div += (fp[a] - fm[a]) / (2 * hd);
        }
        worst_div = std::max(worst_div, std::abs(div));
      }
    }
    checks.push_back({"flux-divergence", worst_div <= 1e-4,
                      "max |div(A P e)| = " + format_double(worst_div)});

    // lambda(y) |eta|^2 <= |P(y) eta|^2.
    double worst_gap = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const Vec<3> y = random_in_ball(0.05, 0.95);
      Vec<3> eta(gauss(rng), gauss(rng), gauss(rng));
      const double lhs = analytic_lambda(cell, y) * eta.squaredNorm();
      const double rhs = (analytic_corrector(cell, y) * eta).squaredNorm();
      worst_gap = std::max(worst_gap, lhs - rhs);
    }
    checks.push_back({"lambda-lower-bound", worst_gap <= 1e-9,
                      "max violation = " + format_double(worst_gap)});
  }

  // Closed-form lambda moment against adaptive quadrature.
  {
    double worst = 0.0;
    bool all_converged = true;
    const double pc = critical_exponent(cell.lambda2);
    for (double p : p_grid) {
      if (p >= pc) continue;
      const MomentValue closed = lambda_moment(cell, p);
      const QuadResult quad = lambda_moment_quadrature(cell, p, 1e-10);
      all_converged = all_converged && quad.converged;
      worst = std::max(worst, std::abs(closed.value - quad.value) / std::max(1.0, closed.value));
    }
    checks.push_back({"moment-quadrature", all_converged && worst <= 1e-8,
                      "max relative mismatch = " + format_double(worst)});
  }
  {
    // The 1/p-rooted factor is a power mean over the unit cell, so it must
    // increase strictly in p below p_c (the raw integral need not).
    bool increasing = true;
    double prev = -1.0;
    const double pc = critical_exponent(cell.lambda2);
    for (double p : p_grid) {
      if (p >= pc) continue;
      const double v = lb_factor(cell, p).value;
      if (!cell.crystallites.empty() && prev >= 0.0 && v <= prev) increasing = false;
      prev = v;
    }
    checks.push_back(
        {"lb-factor-monotone-in-p", increasing, "lambda_moment^(1/p) increasing below p_c"});
  }
  {
    const Mat<3> quad = effective_tensor_quadrature(cell, 1e-10);
    const double err = (quad - Mat<3>::Identity()).cwiseAbs().maxCoeff();
    checks.push_back(
        {"effective-quadrature", err <= 1e-8, "||quad - I||_max = " + format_double(err)});
  }

  // Raster volume fractions and the effective-tensor refinement ladder.
  if (!ladder.empty()) {
    bool frac_ok = true;
    std::string frac_detail;
    std::vector<double> errors;
    for (int res : ladder) {
      auto grid = rasterize_schulgasser(cell, res);
      const double frac = grid->phase_fraction(1);
      const double err = std::abs(frac - cell.theta());
      frac_ok = frac_ok && err <= 2.0 / res;
      frac_detail += std::to_string(res) + ": " + format_double(err) + "; ";
      auto sol = solve_corrector<3>(grid, tol);
      errors.push_back(
          (effective_tensor(sol).entries - Mat<3>::Identity()).cwiseAbs().maxCoeff());
    }
    checks.push_back({"raster-volume-fraction", frac_ok, frac_detail});
    bool decreasing = true;
    std::string ladder_detail;
    for (std::size_t i = 0; i < errors.size(); ++i) {
      if (i > 0 && errors[i] >= errors[i - 1]) decreasing = false;
      ladder_detail += std::to_string(ladder[i]) + ": " + format_double(errors[i]) + "; ";
    }
    const bool final_ok = errors.back() <= 5e-2;
    checks.push_back({"effective-refinement", decreasing && final_ok, ladder_detail});
  }
  return checks;
}

inline json cmd_verify_oracle(const Context& ctx) {
  validate_root(ctx.config.doc, {"geometry", "solver", "analysis", "output"});
  require(ctx.config.doc.contains("geometry"), "verify-oracle: missing 'geometry'");
  require(ctx.config.doc.at("geometry").at("type") == "schulgasser",
          "verify-oracle: requires schulgasser geometry");
  const SolverSection solver = parse_solver(ctx.config.doc);
  const AnalysisSection analysis = parse_analysis(ctx.config.doc);
  write_provenance(ctx, "verify-oracle", solver.tol);

  std::vector<int> ladder = solver.ladder;
  const auto checks =
      run_oracle_checks(ctx.config.doc.at("geometry"), ladder, analysis.p_grid, solver.tol);

  bool all_pass = true;
  json rows = json::array();
  for (const auto& c : checks) {
    all_pass = all_pass && c.pass;
    rows.push_back(json{{"check", c.name}, {"pass", c.pass}, {"detail", c.detail}});
  }
  json out{{"checks", rows},
           {"all_pass", all_pass},
           {"provenance", provenance_block(ctx.config.raw, solver.tol)}};
  std::ofstream jf(ctx.outdir / "verify_oracle.json");
  jf << out.dump(2) << "\n";
  return out;
}

////////////////////////////////////////////////////////////////////////////
//  sweep
////////////////////////////////////////////////////////////////////////////

inline json cmd_sweep(const Context& ctx) {
  validate_root(ctx.config.doc, {"geometry", "solver", "macro", "sweep", "output"});
  const json& doc = ctx.config.doc;
  require(doc.contains("geometry"), "sweep: missing 'geometry'");
  require(doc.contains("sweep"), "sweep: missing 'sweep' section");
  require(geometry_dim(doc.at("geometry")) == 2, "sweep: 2D only");

  const SolverSection solver = parse_solver(doc);
  write_provenance(ctx, "sweep", solver.tol);

  SweepConfig cfg;
  cfg.cell = build_grid<2>(doc.at("geometry"), solver.resolution, ctx.config.dir);
  bool from_cell = false;
  cfg.macro = parse_macro<2>(doc, cfg.D, from_cell);

  const json& s = doc.at("sweep");
  validate_keys(s, {"epsilons", "elements_per_period", "p_list", "t_grid", "cell_tol"}, "sweep");
  cfg.epsilons = s.at("epsilons").get<std::vector<double>>();
  cfg.elements_per_period = s.value("elements_per_period", 8);
  if (s.contains("p_list")) cfg.p_list = s.at("p_list").get<std::vector<double>>();
  if (s.contains("t_grid")) cfg.t_grid = s.at("t_grid").get<std::vector<double>>();
  cfg.cell_tol = s.value("cell_tol", 1e-10);

  const SweepReport report = run_sweep(cfg, ctx.threads);

  write_sweep_csv(ctx.outdir / "sweep.csv", report);
  json out = sweep_to_json(report);
  out["provenance"] = provenance_block(ctx.config.raw, solver.tol);
  std::ofstream jf(ctx.outdir / "sweep.json");
  jf << out.dump(2) << "\n";
  return out;
}

}  // namespace homog::cli
