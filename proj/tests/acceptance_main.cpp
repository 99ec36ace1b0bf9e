// Acceptance suite: end-to-end criteria with pinned tolerances, one pass/fail
// line per criterion. Exit status is the number of failed criteria.
#include "mspg/experiments.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace mspg;

namespace {

int worker_count()
{
  const unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::min(4u, hw == 0 ? 1u : hw));
}

std::string fmt(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

const RunRow& find_row(const std::vector<RunRow>& rows, int coarse_level, int ell)
{
  for (const auto& r : rows)
    if (r.ell == ell && std::abs(r.H - std::ldexp(1.0, -coarse_level)) < 1e-14) return r;
  throw std::runtime_error("missing sweep row H=2^-" + std::to_string(coarse_level) +
                           " ell=" + std::to_string(ell));
}

// ---------------------------------------------------------------------------
// 1. Ideal-method identity with saturated patches
// ---------------------------------------------------------------------------
std::string criterion_ideal_identity()
{
  std::ostringstream log;
  ExperimentConfig diffusion;
  diffusion.coarse_levels = {2};
  diffusion.fine_level = 5;
  diffusion.seeds = {7};
  diffusion.workers = worker_count();
  const auto d = run_ideal_check(diffusion, log);
  if (!d.diffusion_discrepancy) return "diffusion identity not evaluated";
  if (!(*d.diffusion_discrepancy <= 1e-8))
    return "diffusion discrepancy " + fmt(*d.diffusion_discrepancy) + " > 1e-8";

  ExperimentConfig helmholtz;
  helmholtz.coarse_levels = {4};
  helmholtz.fine_level = 8;
  helmholtz.kappa = 8.0; // 2^3
  helmholtz.workers = worker_count();
  helmholtz.config_problem = helmholtz_1d(8.0);
  const auto h = run_ideal_check(helmholtz, log);
  if (!h.helmholtz_discrepancy) return "helmholtz identity not evaluated";
  if (!(*h.helmholtz_discrepancy <= 1e-8))
    return "helmholtz discrepancy " + fmt(*h.helmholtz_discrepancy) + " > 1e-8";
  return {};
}

// ---------------------------------------------------------------------------
// 2. 1D homogenization pre-asymptotics
// ---------------------------------------------------------------------------
std::string criterion_homogenize1d()
{
  std::ostringstream log;
  ExperimentConfig cfg;
  cfg.coarse_levels = {3, 4, 5};
  cfg.fine_level = 12;
  cfg.ells = {2};
  cfg.eps = 1.0 / 32.0;
  cfg.workers = worker_count();
  const auto rows = run_homogenize1d(cfg, log);

  for (int lc : {3, 4, 5}) {
    const auto& row = find_row(rows, lc, 2);
    if (!(*row.err_fem_L2_rel >= 0.10))
      return "FEM L2 error " + fmt(*row.err_fem_L2_rel) + " < 0.10 at H=2^-" +
             std::to_string(lc);
  }
  const auto& ms = find_row(rows, 4, 2);
  if (!(*ms.err_L2_rel <= 0.02))
    return "MS-PG L2 error " + fmt(*ms.err_L2_rel) + " > 0.02 at H=2^-4, ell=2";
  return {};
}

// ---------------------------------------------------------------------------
// 3. 2D homogenization trends as properties
// ---------------------------------------------------------------------------
std::string criterion_homogenize2d()
{
  std::ostringstream log;
  ExperimentConfig cfg;
  cfg.coarse_levels = {1, 2, 3, 4};
  cfg.fine_level = 8;
  cfg.ells = {2};
  cfg.seeds = {7};
  cfg.workers = worker_count();
  const auto rows = run_homogenize2d(cfg, log);

  double prev = std::numeric_limits<double>::infinity();
  for (int lc : {1, 2, 3, 4}) {
    const auto& row = find_row(rows, lc, 2);
    if (!(*row.err_L2_rel <= 4.0 * *row.err_best_L2_rel))
      return "L2 error " + fmt(*row.err_L2_rel) + " beyond 4x best approximation " +
             fmt(*row.err_best_L2_rel) + " at H=2^-" + std::to_string(lc);
    if (!(*row.err_L2_rel < prev))
      return "L2 error not decreasing at H=2^-" + std::to_string(lc);
    prev = *row.err_L2_rel;
  }

  ExperimentConfig ells;
  ells.coarse_levels = {4};
  ells.fine_level = 8;
  ells.ells = {1, 3};
  ells.seeds = {7};
  ells.workers = worker_count();
  const auto lrows = run_homogenize2d(ells, log);
  const auto& l1 = find_row(lrows, 4, 1);
  const auto& l3 = find_row(lrows, 4, 3);
  if (!(*l3.err_L2_rel <= *l1.err_L2_rel))
    return "ell=3 error " + fmt(*l3.err_L2_rel) + " above ell=1 error " +
           fmt(*l1.err_L2_rel) + " at H=2^-4";
  return {};
}

// ---------------------------------------------------------------------------
// 4. Corrector decay across seeds
// ---------------------------------------------------------------------------
std::string criterion_decay()
{
  std::vector<double> rates;
  for (std::uint64_t seed : {7ull, 8ull, 9ull}) {
    auto spec = random_checkerboard(seed);
    auto hier = build_hierarchy(spec.domain, 3, 6);
    auto ih = build_interpolator(hier);
    auto d = discretize<double>(spec, hier.fine);
    CorrectorOptions opt;
    opt.ideal = true;
    opt.workers = worker_count();
    auto set = compute_correctors(d, hier, ih, opt);

    int z = -1;
    double best = 1e9;
    for (int r = 0; r < ih.n_rows(); ++r) {
      const auto& p = hier.coarse.nodes[ih.free_nodes[r]];
      const double dd = std::hypot(p[0] - 0.5, p[1] - 0.5);
      if (dd < best) {
        best = dd;
        z = ih.free_nodes[r];
      }
    }
    RealVector phi = RealVector(set.phi[ih.row_of_node[z]]);
    const auto prof = decay_profile(phi, z, hier, d);
    if (!(prof.rate_c > 0.0))
      return "seed " + std::to_string(seed) + ": fitted rate " + fmt(prof.rate_c) +
             " is not positive";
    if (!(prof.max_ratio <= 0.7))
      return "seed " + std::to_string(seed) + ": per-layer tail ratio " +
             fmt(prof.max_ratio) + " > 0.7";
    rates.push_back(prof.rate_c);
  }
  const double lo = *std::min_element(rates.begin(), rates.end());
  const double hi = *std::max_element(rates.begin(), rates.end());
  const double mean = (rates[0] + rates[1] + rates[2]) / 3.0;
  if (!((hi - lo) / mean <= 0.20))
    return "decay rate varies " + fmt(100.0 * (hi - lo) / mean) + "% (> 20%) across seeds";
  return {};
}

// ---------------------------------------------------------------------------
// 5. 1D Helmholtz pollution and recovery
// ---------------------------------------------------------------------------
std::string criterion_helmholtz1d()
{
  const auto fem = helmholtz_fem_vs_exact(128.0, 7, 12);
  if (!(fem.v_rel >= 0.5))
    return "standard FEM V-error " + fmt(fem.v_rel) + " < 0.5 at kappa h = 1";

  std::ostringstream log;
  ExperimentConfig cfg;
  cfg.coarse_levels = {7};
  cfg.fine_level = 12;
  cfg.ells = {5};
  cfg.kappa = 128.0; // 2^7
  cfg.workers = worker_count();
  const auto rows = run_helmholtz1d(cfg, log);
  const auto& row = find_row(rows, 7, 5);
  if (!(*row.err_V_rel <= 2.0 * *row.err_best_V_rel))
    return "MS-PG V-error " + fmt(*row.err_V_rel) + " beyond 2x best approximation " +
           fmt(*row.err_best_V_rel);
  return {};
}

// ---------------------------------------------------------------------------
// 6. 2D scattering trends (desk-scale wave number)
// ---------------------------------------------------------------------------
std::string criterion_scatter2d()
{
  std::ostringstream log;
  ExperimentConfig cfg;
  cfg.coarse_levels = {5, 6};
  cfg.fine_level = 8;
  cfg.ells = {1, 2, 3};
  cfg.kappa = 32.0; // 2^5
  cfg.workers = worker_count();
  const auto rows = run_scatter2d(cfg, log);

  for (int lc : {5, 6}) {
    const double e1 = *find_row(rows, lc, 1).err_V_rel;
    const double e2 = *find_row(rows, lc, 2).err_V_rel;
    const double e3 = *find_row(rows, lc, 3).err_V_rel;
    if (!(e2 <= e1 * 1.02 && e3 <= e2 * 1.02 && e3 < e1))
      return "V-errors not decreasing in ell at H=2^-" + std::to_string(lc) + " (" +
             fmt(e1) + ", " + fmt(e2) + ", " + fmt(e3) + ")";
  }
  const auto& row = find_row(rows, 5, 3);
  if (!(*row.err_V_rel <= 0.5 * *row.err_fem_V_rel))
    return "MS-PG V-error " + fmt(*row.err_V_rel) + " above half the FEM error " +
           fmt(*row.err_fem_V_rel) + " at H=2^-5, ell=3";
  return {};
}

// ---------------------------------------------------------------------------
// 7. Invariant bundle
// ---------------------------------------------------------------------------
std::string criterion_invariants()
{
  // interpolation idempotence
  {
    auto hier = build_hierarchy(DomainSpec::square(), 2, 5);
    auto ih = build_interpolator(hier);
    auto p = prolongation(hier);
    std::vector<int> all(hier.fine.n_nodes());
    for (int i = 0; i < hier.fine.n_nodes(); ++i) all[i] = i;
    auto pf = submatrix(p, all, ih.free_nodes);
    RealSparse composed = ih.op * pf;
    for (int r = 0; r < composed.rows(); ++r)
      for (RealSparse::InnerIterator it(composed, r); it; ++it)
        if (std::abs(it.value() - (it.col() == r ? 1.0 : 0.0)) > 1e-12)
          return "interpolation idempotence violated";
  }

  // assembly symmetry and dyadic scaling, bit-exact
  {
    auto hier = build_hierarchy(DomainSpec::square(), 1, 4);
    std::vector<double> coeff(hier.fine.n_elements());
    SplitMix64 rng(19);
    for (auto& c : coeff) c = 1.0 + 9.0 * rng.next_unit();
    auto k = assemble_stiffness(hier.fine, coeff);
    RealSparse diff = RealSparse(k.transpose()) - k;
    if (diff.coeffs().abs().maxCoeff() != 0.0) return "stiffness asymmetric";
    std::vector<double> doubled(coeff);
    for (auto& c : doubled) c *= 2.0;
    RealSparse sdiff = assemble_stiffness(hier.fine, doubled) - RealSparse(2.0 * k);
    if (sdiff.coeffs().abs().maxCoeff() != 0.0) return "stiffness scaling not exact";
  }

  // kernel constraint, I_H Lambda = lambda, ideal coarse symmetry
  {
    auto spec = random_checkerboard(7, 1.0, 10.0, 3);
    auto hier = build_hierarchy(spec.domain, 2, 5);
    auto ih = build_interpolator(hier);
    auto d = discretize<double>(spec, hier.fine);
    CorrectorOptions opt;
    opt.ideal = true;
    opt.workers = worker_count();
    auto set = compute_correctors(d, hier, ih, opt);
    for (int r = 0; r < ih.n_rows(); ++r) {
      RealVector phi = RealVector(set.phi[r]);
      if ((ih.op * phi).lpNorm<Eigen::Infinity>() >
          1e-9 * std::max(1.0, phi.lpNorm<Eigen::Infinity>()))
        return "kernel constraint violated";
      RealVector lam = test_basis(hier, ih, set, ih.free_nodes[r]);
      RealVector coarse = ih.apply(lam);
      coarse[r] -= 1.0;
      if (coarse.lpNorm<Eigen::Infinity>() > 1e-9) return "I_H Lambda_z != lambda_z";
    }
    auto lambda = test_basis_matrix(hier, ih, set);
    auto sys = assemble_coarse(d, hier, ih, lambda);
    DenseMatrix m(sys.matrix);
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9 * m.cwiseAbs().maxCoeff())
      return "ideal coarse matrix not symmetric";
  }

  // cache round trip, bit-exact
  {
    auto spec = random_checkerboard(7, 1.0, 10.0, 3);
    auto hier = build_hierarchy(spec.domain, 2, 4);
    auto ih = build_interpolator(hier);
    auto d = discretize<double>(spec, hier.fine);
    CorrectorOptions opt;
    opt.ell = 2;
    auto set = compute_correctors(d, hier, ih, opt);
    set.key = corrector_cache_key(spec, 2, 4, 2, false, Orientation::Primal);
    const auto path =
        (std::filesystem::temp_directory_path() / "mspg_acceptance_cache.cor").string();
    save_correctors(set, path);
    auto loaded = load_correctors<double>(path, set.key);
    std::filesystem::remove(path);
    if (!loaded) return "cache reload missed";
    for (std::size_t r = 0; r < set.phi.size(); ++r) {
      RealVector a = RealVector(set.phi[r]);
      RealVector b = RealVector(loaded->phi[r]);
      if (a.size() != b.size()) return "cache reload changed sizes";
      for (int i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) return "cache reload not bit-exact";
    }
  }

  // worker-count determinism of a full sweep
  {
    ExperimentConfig cfg;
    cfg.coarse_levels = {2, 3};
    cfg.fine_level = 5;
    cfg.ells = {1};
    cfg.seeds = {7};
    cfg.config_problem = random_checkerboard(7, 1.0, 10.0, 4);
    std::ostringstream sink;
    cfg.workers = 1;
    auto rows1 = run_homogenize2d(cfg, sink);
    cfg.workers = 4;
    auto rows4 = run_homogenize2d(cfg, sink);
    auto strip = [](const std::vector<RunRow>& rows) {
      std::string s;
      for (const auto& r : rows) {
        auto line = csv_line(r);
        auto cut = line.rfind(',');
        cut = line.rfind(',', cut - 1);
        s += line.substr(0, cut) + "\n";
      }
      return s;
    };
    if (strip(rows1) != strip(rows4)) return "outputs depend on the worker count";
  }
  return {};
}

} // namespace

int main(int argc, char** argv)
{
  struct Criterion {
    int id;
    const char* name;
    std::function<std::string()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "ideal-method identity (diffusion 2D, Helmholtz 1D)", criterion_ideal_identity},
      {2, "1D homogenization pre-asymptotics", criterion_homogenize1d},
      {3, "2D homogenization trends", criterion_homogenize2d},
      {4, "corrector decay rate", criterion_decay},
      {5, "1D Helmholtz pollution and recovery", criterion_helmholtz1d},
      {6, "2D scattering trends", criterion_scatter2d},
      {7, "invariant suite", criterion_invariants},
  };

  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() &&
        std::find(selected.begin(), selected.end(), c.id) == selected.end())
      continue;
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    try {
      detail = c.run();
    } catch (const std::exception& err) {
      detail = std::string("exception: ") + err.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char line[256];
    if (detail.empty()) {
      std::snprintf(line, sizeof(line), "PASS  %d  %s  (%.1f s)", c.id, c.name, secs);
    } else {
      std::snprintf(line, sizeof(line), "FAIL  %d  %s  (%.1f s): %s", c.id, c.name, secs,
                    detail.c_str());
      ++failures;
    }
    std::cout << line << std::endl;
  }
  return failures;
}
