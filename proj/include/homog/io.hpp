#pragma once

#include <homog/cell_solver.hpp>
#include <homog/concentration.hpp>
#include <homog/macro_solver.hpp>
#include <homog/sweep.hpp>

#include <nlohmann/json.hpp>

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

namespace homog {

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "voxel blobs are little-endian; big-endian hosts are unsupported");

inline std::string format_double(double x) {
  if (std::isinf(x)) return x > 0 ? "+inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

// FNV-1a 64-bit hash; stamps the exact config bytes into every output.
inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline json provenance_block(const std::string& config_bytes, double tol) {
  return json{{"config_hash", fnv1a_hex(config_bytes)},
              {"version", kVersion},
              {"solver_tol", tol}};
}

////////////////////////////////////////////////////////////////////////////
//  Binary voxel files: one JSON header line terminated by '\n', then a
//  blob of 64-bit little-endian floats (voxel-major, row-major index
//  order), then - for grids - a parallel blob of uint8 phase labels.
////////////////////////////////////////////////////////////////////////////

struct VoxelFile {
  json header;
  std::vector<double> values;
  std::vector<std::uint8_t> phases;
};

inline void write_voxel_file(const std::filesystem::path& path, const json& header,
                             const std::vector<double>& values,
                             const std::vector<std::uint8_t>& phases = {}) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "write_voxel_file: cannot open " + path.string());
  const std::string h = header.dump();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  out.put('\n');
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!phases.empty())
    out.write(reinterpret_cast<const char*>(phases.data()),
              static_cast<std::streamsize>(phases.size()));
  require(out.good(), "write_voxel_file: write failed for " + path.string());
}

inline VoxelFile read_voxel_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "read_voxel_file: cannot open " + path.string());
  std::string header_line;
  std::getline(in, header_line);
  VoxelFile f;
  f.header = json::parse(header_line, nullptr, false);
  require(!f.header.is_discarded(), "read_voxel_file: bad JSON header in " + path.string());

  const int dim = f.header.at("dim").get<int>();
  const int res = f.header.at("resolution").get<int>();
  std::size_t nv = 1;
  for (int a = 0; a < dim; ++a) nv *= static_cast<std::size_t>(res);
  const int comps = f.header.value("components", 0) > 0
                        ? f.header["components"].get<int>()
                        : dim * (dim + 1) / 2;
  f.values.resize(nv * comps);
  in.read(reinterpret_cast<char*>(f.values.data()),
          static_cast<std::streamsize>(f.values.size() * sizeof(double)));
  require(in.gcount() == static_cast<std::streamsize>(f.values.size() * sizeof(double)),
          "read_voxel_file: truncated value blob in " + path.string());
  if (f.header.value("has_phases", false)) {
    f.phases.resize(nv);
    in.read(reinterpret_cast<char*>(f.phases.data()), static_cast<std::streamsize>(nv));
    require(in.gcount() == static_cast<std::streamsize>(nv),
            "read_voxel_file: truncated phase blob in " + path.string());
  }
  return f;
}

template <int Dim>
void write_cell_grid(const std::filesystem::path& path, const CellGrid<Dim>& grid) {
  json header{{"dim", Dim},
              {"resolution", grid.resolution()},
              {"num_phases", grid.num_phases()},
              {"tensor_layout", "row-major symmetric upper-triangle"},
              {"components", CellGrid<Dim>::kTensorComps},
              {"has_phases", true}};
  write_voxel_file(path, header, grid.tensor_data(), grid.phase_labels());
}

template <int Dim>
std::shared_ptr<CellGrid<Dim>> read_cell_grid(const std::filesystem::path& path) {
  const VoxelFile f = read_voxel_file(path);
  require(f.header.at("dim").get<int>() == Dim, "read_cell_grid: dimension mismatch");
  auto grid = std::make_shared<CellGrid<Dim>>(f.header.at("resolution").get<int>(),
                                              f.header.at("num_phases").get<int>());
  require(f.values.size() == grid->tensor_data().size(),
          "read_cell_grid: tensor blob size mismatch");
  grid->tensor_data() = f.values;
  require(f.phases.size() == grid->num_voxels(), "read_cell_grid: phase blob size mismatch");
  grid->phase_labels() = f.phases;
  return grid;
}

/// CorrectorSolution export: w and P in the binary voxel format plus a JSON
/// metadata record. Files land in `dir` as corrector_w.vox, corrector_P.vox,
/// cell_grid.vox and solve_cell.json.
template <int Dim>
void write_corrector_solution(const std::filesystem::path& dir,
                              const CorrectorSolution<Dim>& sol, const json& extra_meta = {}) {
  std::filesystem::create_directories(dir);
  const CellGrid<Dim>& grid = *sol.grid;
  const std::size_t nv = grid.num_voxels();

  std::vector<double> w_interleaved(nv * Dim);
  for (std::size_t v = 0; v < nv; ++v)
    for (int i = 0; i < Dim; ++i) w_interleaved[v * Dim + i] = sol.w[i][v];
  write_voxel_file(dir / "corrector_w.vox",
                   json{{"dim", Dim},
                        {"resolution", grid.resolution()},
                        {"components", Dim},
                        {"layout", "row-major"}},
                   w_interleaved);
  write_voxel_file(dir / "corrector_P.vox",
                   json{{"dim", Dim},
                        {"resolution", grid.resolution()},
                        {"components", Dim * Dim},
                        {"layout", "row-major"}},
                   sol.P.data);
  write_cell_grid(dir / "cell_grid.vox", grid);

  json meta{{"tol", sol.tol},
            {"iterations", sol.iterations},
            {"residual", sol.residual},
            {"reference_medium", sol.reference_kappa}};
  for (auto& [k, v] : extra_meta.items()) meta[k] = v;
  std::ofstream out(dir / "solve_cell.json");
  out << meta.dump(2) << "\n";
}

template <int Dim>
CorrectorSolution<Dim> read_corrector_solution(const std::filesystem::path& dir) {
  CorrectorSolution<Dim> sol;
  sol.grid = read_cell_grid<Dim>(dir / "cell_grid.vox");
  const std::size_t nv = sol.grid->num_voxels();

  const VoxelFile wf = read_voxel_file(dir / "corrector_w.vox");
  require(wf.values.size() == nv * Dim, "read_corrector_solution: bad w blob");
  for (int i = 0; i < Dim; ++i) {
    sol.w[i].resize(nv);
    for (std::size_t v = 0; v < nv; ++v) sol.w[i][v] = wf.values[v * Dim + i];
  }
  const VoxelFile pf = read_voxel_file(dir / "corrector_P.vox");
  require(pf.values.size() == nv * Dim * Dim, "read_corrector_solution: bad P blob");
  sol.P = MatrixField<Dim>(nv);
  sol.P.data = pf.values;

  std::ifstream meta_in(dir / "solve_cell.json");
  require(meta_in.good(), "read_corrector_solution: missing solve_cell.json");
  json meta = json::parse(meta_in);
  sol.tol = meta.at("tol").get<double>();
  sol.iterations = meta.at("iterations").get<int>();
  sol.residual = meta.at("residual").get<double>();
  sol.reference_kappa = meta.at("reference_medium").get<double>();
  return sol;
}

////////////////////////////////////////////////////////////////////////////
//  CSV / JSON emitters. "+inf" is the only non-numeric cell value.
////////////////////////////////////////////////////////////////////////////

inline void write_concentration_csv(const std::filesystem::path& path,
                                    const ConcentrationReport& rep) {
  std::ofstream out(path);
  require(out.good(), "write_concentration_csv: cannot open " + path.string());
  out << "p,phase,value,divergent_flag,resolution\n";
  for (const auto& r : rep.rows) {
    out << (r.p > 0.0 ? format_double(r.p) : "+inf") << ',' << r.phase << ','
        << format_double(r.value) << ',' << (r.divergent ? 1 : 0) << ',' << r.resolution
        << '\n';
  }
}

inline json concentration_to_json(const ConcentrationReport& rep) {
  json rows = json::array();
  for (const auto& r : rep.rows) {
    json row{{"phase", r.phase},
             {"divergent", r.divergent},
             {"resolution", r.resolution}};
    row["p"] = r.p > 0.0 ? json(r.p) : json("+inf");
    row["value"] = std::isinf(r.value) ? json("+inf") : json(r.value);
    rows.push_back(row);
  }
  return json{{"rows", rows},
              {"quadrature_note", rep.quadrature_note},
              {"source", rep.source}};
}

inline void write_sweep_csv(const std::filesystem::path& path, const SweepReport& rep) {
  std::ofstream out(path);
  require(out.good(), "write_sweep_csv: cannot open " + path.string());
  out << "epsilon,quantity,p_or_t,phase,value\n";
  for (const auto& r : rep.rows)
    out << format_double(r.epsilon) << ',' << r.quantity << ',' << format_double(r.p_or_t)
        << ',' << r.phase << ',' << format_double(r.value) << '\n';
}

inline json sweep_to_json(const SweepReport& rep) {
  json rows = json::array();
  for (const auto& r : rep.rows)
    rows.push_back(json{{"epsilon", r.epsilon},
                        {"quantity", r.quantity},
                        {"p_or_t", r.p_or_t},
                        {"phase", r.phase},
                        {"value", r.value}});
  json verdicts = json::array();
  for (const auto& v : rep.verdicts)
    verdicts.push_back(json{{"name", v.name}, {"pass", v.pass}, {"detail", v.detail}});
  return json{{"rows", rows},
              {"verdicts", verdicts},
              {"smallest_epsilon", rep.smallest_epsilon}};
}

template <int Dim>
void write_macro_solution_csv(const std::filesystem::path& dir, const StructuredMesh<Dim>& mesh,
                              const MacroSolution<Dim>& sol) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "macro_nodes.csv");
    out << "node";
    for (int a = 0; a < Dim; ++a) out << ",x" << a;
    out << ",u\n";
    for (std::size_t n = 0; n < mesh.num_nodes(); ++n) {
      out << n;
      const Vec<Dim> x = mesh.node_position(n);
      for (int a = 0; a < Dim; ++a) out << ',' << format_double(x[a]);
      out << ',' << format_double(sol.u[n]) << '\n';
    }
  }
  {
    std::ofstream out(dir / "macro_gradients.csv");
    out << "element";
    for (int a = 0; a < Dim; ++a) out << ",x" << a;
    for (int a = 0; a < Dim; ++a) out << ",g" << a;
    out << '\n';
    for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
      out << e;
      const Vec<Dim> x = mesh.element_center(e);
      for (int a = 0; a < Dim; ++a) out << ',' << format_double(x[a]);
      for (int a = 0; a < Dim; ++a) out << ',' << format_double(sol.grad[e][a]);
      out << '\n';
    }
  }
  // Binary export of the nodal field; resolution is per-axis node counts.
  json header{{"dim", Dim}, {"components", 1}, {"layout", "row-major"}};
  json res = json::array();
  for (int a = 0; a < Dim; ++a) res.push_back(mesh.nodes_per_axis(a));
  header["resolution"] = res;
  std::ofstream out(dir / "macro_u.vox", std::ios::binary);
  const std::string h = header.dump();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  out.put('\n');
  out.write(reinterpret_cast<const char*>(sol.u.data()),
            static_cast<std::streamsize>(sol.u.size() * sizeof(double)));
}

}  // namespace homog
