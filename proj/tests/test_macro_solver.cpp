#include <homog/macro_solver.hpp>

#include <catch2/catch_amalgamated.hpp>

using namespace homog;

namespace {

MacroProblem<2> strip_problem(int res, const Mat<2>& tensor, double g_right) {
  MacroProblem<2> p;
  p.mesh.extents = Vec<2>(1, 1);
  p.mesh.resolution = {res, res};
  p.partition.assign(p.mesh.num_elements(), 0);
  p.tensors[0] = tensor;
  p.f.assign(p.mesh.num_elements(), 0.0);
  p.bc[0] = {BcType::Dirichlet, 0.0};
  p.bc[1] = {BcType::Neumann, g_right};
  p.bc[2] = {BcType::Neumann, 0.0};
  p.bc[3] = {BcType::Neumann, 0.0};
  return p;
}

// 1D series-resistance oracle: constant flux q through layered conductors,
// per-layer gradient q / k.
double series_gradient(double flux, double k) { return flux / k; }

}  // namespace

TEST_CASE("solve_homogenized: reproduces the exact linear solution") {
  const auto prob = strip_problem(16, Mat<2>::Identity(), 1.0);
  const auto sol = solve_homogenized(prob, 1e-10);
  for (std::size_t e = 0; e < prob.mesh.num_elements(); ++e)
    REQUIRE((sol.grad[e] - Vec<2>::Unit(0)).cwiseAbs().maxCoeff() < 1e-10);
  for (std::size_t n = 0; n < prob.mesh.num_nodes(); ++n)
    REQUIRE(sol.u[n] == Catch::Approx(prob.mesh.node_position(n)[0]).margin(1e-10));
  REQUIRE(sol.residual <= 1e-10);
}

TEST_CASE("solve_homogenized: laminate effective tensor, uniform gradient") {
  Mat<2> aeff = Mat<2>::Zero();
  aeff(0, 0) = 4.0 / 3.0;
  aeff(1, 1) = 3.0 / 2.0;
  const auto prob = strip_problem(16, aeff, 1.0);
  const auto sol = solve_homogenized(prob, 1e-10);
  // Flux 1 = (4/3) d1u, so d1u = 3/4 everywhere.
  for (std::size_t e = 0; e < prob.mesh.num_elements(); ++e) {
    REQUIRE(sol.grad[e][0] == Catch::Approx(0.75).margin(1e-10));
    REQUIRE(std::abs(sol.grad[e][1]) < 1e-10);
  }
}

TEST_CASE("solve_homogenized: two-subdomain strip with continuous flux") {
  MacroProblem<2> p = strip_problem(16, Mat<2>::Identity(), 4.0 / 3.0);
  // Subdomain 1 (right half) carries 2I.
  for (std::size_t e = 0; e < p.mesh.num_elements(); ++e)
    if (p.mesh.element_center(e)[0] > 0.5) p.partition[e] = 1;
  p.tensors[1] = 2.0 * Mat<2>::Identity();

  const auto sol = solve_homogenized(p, 1e-10);
  const double flux = 4.0 / 3.0;
  for (std::size_t e = 0; e < p.mesh.num_elements(); ++e) {
    const double k = p.partition[e] == 0 ? 1.0 : 2.0;
    REQUIRE(sol.grad[e][0] == Catch::Approx(series_gradient(flux, k)).margin(1e-9));
  }
  // Frozen closed-form values: (4/3, 2/3).
  REQUIRE(series_gradient(flux, 1.0) == Catch::Approx(4.0 / 3.0));
  REQUIRE(series_gradient(flux, 2.0) == Catch::Approx(2.0 / 3.0));
}

TEST_CASE("solve_homogenized: energy identity and flux balance") {
  MacroProblem<2> p = strip_problem(32, Mat<2>::Identity(), 0.5);
  p.f.assign(p.mesh.num_elements(), 1.0);
  const auto sol = solve_homogenized(p, 1e-10);
  REQUIRE(sol.energy_lhs == Catch::Approx(sol.energy_rhs).margin(1e-9 * std::abs(sol.energy_rhs)));
  REQUIRE(std::abs(sol.flux_imbalance) < 1e-9);
}

TEST_CASE("solve_homogenized: pure Neumann needs compatible data") {
  MacroProblem<2> p = strip_problem(16, Mat<2>::Identity(), 0.0);
  p.bc[0] = {BcType::Neumann, 0.0};
  // Compatible: source integrates to zero.
  for (std::size_t e = 0; e < p.mesh.num_elements(); ++e)
    p.f[e] = p.mesh.element_center(e)[0] < 0.5 ? 1.0 : -1.0;
  const auto sol = solve_homogenized(p, 1e-10);
  double mean = 0.0;
  for (double u : sol.u) mean += u;
  REQUIRE(std::abs(mean) < 1e-8);
  REQUIRE(std::abs(sol.flux_imbalance) < 1e-9);

  // Incompatible: rejected with a diagnostic.
  p.f.assign(p.mesh.num_elements(), 1.0);
  REQUIRE_THROWS_WITH(solve_homogenized(p, 1e-10),
                      Catch::Matchers::ContainsSubstring("compatibility"));
}

TEST_CASE("MacroProblem validation") {
  MacroProblem<2> p = strip_problem(8, Mat<2>::Identity(), 1.0);
  SECTION("missing subdomain tensor") {
    p.partition[3] = 7;
    REQUIRE_THROWS_AS(solve_homogenized(p), ConfigError);
  }
  SECTION("non-SPD tensor") {
    Mat<2> bad;
    bad << 1.0, 2.0, 2.0, 1.0;
    p.tensors[0] = bad;
    REQUIRE_THROWS_AS(solve_homogenized(p), ConfigError);
  }
  SECTION("source size mismatch") {
    p.f.resize(3);
    REQUIRE_THROWS_AS(solve_homogenized(p), ConfigError);
  }
}

TEST_CASE("solve_homogenized: gradient error decreases under mesh doubling") {
  // Genuinely 2D problem: two subdomains and a y-dependent source.
  auto make = [](int res) {
    MacroProblem<2> p = strip_problem(res, Mat<2>::Identity(), 1.0);
    for (std::size_t e = 0; e < p.mesh.num_elements(); ++e) {
      const Vec<2> x = p.mesh.element_center(e);
      if (x[0] > 0.5) p.partition[e] = 1;
      p.f[e] = x[1] > 0.5 ? 1.0 : 0.0;
    }
    p.tensors[1] = 2.0 * Mat<2>::Identity();
    return p;
  };
  const auto ref_prob = make(256);
  const auto ref = solve_homogenized(ref_prob, 1e-10);

  double prev = std::numeric_limits<double>::infinity();
  for (int res : {16, 32, 64}) {
    const auto prob = make(res);
    const auto sol = solve_homogenized(prob, 1e-10);
    double err2 = 0.0;
    for (std::size_t e = 0; e < prob.mesh.num_elements(); ++e) {
      const Vec<2> x = prob.mesh.element_center(e);
      const Vec<2> g_ref = ref.grad[ref_prob.mesh.element_at(x)];
      err2 += prob.mesh.element_volume() * (sol.grad[e] - g_ref).squaredNorm();
    }
    const double err = std::sqrt(err2);
    REQUIRE(err < prev);
    prev = err;
  }
}

TEST_CASE("two_scale_reconstruction") {
  auto hom_grid = build_laminate<2>(0, {1.0}, {Mat<2>::Identity()}, 16);
  auto hom_sol = solve_corrector<2>(hom_grid, 1e-10);
  auto lam_grid = build_laminate<2>(0, {0.5, 0.5}, {Mat<2>::Identity(), 2.0 * Mat<2>::Identity()}, 32);
  auto lam_sol = solve_corrector<2>(lam_grid, 1e-10);

  Mat<2> aeff = Mat<2>::Zero();
  aeff(0, 0) = 4.0 / 3.0;
  aeff(1, 1) = 3.0 / 2.0;
  const auto prob = strip_problem(8, aeff, 4.0 / 3.0);  // grad u^H = e1
  const auto macro = solve_homogenized(prob, 1e-10);
  REQUIRE((macro.grad[0] - Vec<2>::Unit(0)).cwiseAbs().maxCoeff() < 1e-9);

  SECTION("homogeneous cell: constant field grad u^H") {
    std::map<int, const CorrectorSolution<2>*> cells{{0, &hom_sol}};
    const VectorField<2> field = two_scale_reconstruction(prob, macro, cells, 0);
    for (std::size_t v = 0; v < field.nv; ++v)
      REQUIRE((field.at(v) - macro.grad[0]).cwiseAbs().maxCoeff() < 1e-9);
  }
  SECTION("laminate cell: two-valued field by layer") {
    std::map<int, const CorrectorSolution<2>*> cells{{0, &lam_sol}};
    const VectorField<2> field = two_scale_reconstruction(prob, macro, cells, 0);
    for (std::size_t v = 0; v < field.nv; ++v) {
      const double expect = lam_grid->phase(v) == 0 ? 4.0 / 3.0 : 2.0 / 3.0;
      REQUIRE(field.at(v)[0] == Catch::Approx(expect).margin(1e-7));
      REQUIRE(std::abs(field.at(v)[1]) < 1e-7);
    }
  }
  SECTION("zero macro gradient and linearity") {
    std::map<int, const CorrectorSolution<2>*> cells{{0, &lam_sol}};
    MacroSolution<2> zero = macro;
    for (auto& g : zero.grad) g = Vec<2>::Zero();
    const VectorField<2> field = two_scale_reconstruction(prob, zero, cells, 0);
    for (std::size_t v = 0; v < field.nv; ++v)
      REQUIRE(field.at(v).cwiseAbs().maxCoeff() == 0.0);

    MacroSolution<2> scaled = macro;
    for (auto& g : scaled.grad) g *= -3.0;
    const VectorField<2> base = two_scale_reconstruction(prob, macro, cells, 0);
    const VectorField<2> tripled = two_scale_reconstruction(prob, scaled, cells, 0);
    for (std::size_t v = 0; v < base.nv; ++v)
      REQUIRE((tripled.at(v) + 3.0 * base.at(v)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SECTION("missing cell data is a configuration error") {
    std::map<int, const CorrectorSolution<2>*> empty;
    REQUIRE_THROWS_AS(two_scale_reconstruction(prob, macro, empty, 0), ConfigError);
  }
}
