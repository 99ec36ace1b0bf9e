// mspg: experiment runner for the multiscale Petrov-Galerkin method.
//
// Subcommands reproduce the library's benchmark studies as CSV tables plus
// optional plot-ready field/mesh dumps. Outputs are deterministic for a fixed
// configuration (timing columns excluded).
#include <CLI11.hpp>

#include "mspg/experiments.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

// grid lists: "3", "1,2,3" or "1..5"
std::vector<long long> parse_list(const std::string& text)
{
  std::vector<long long> out;
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const long long lo = std::stoll(text.substr(0, dots));
    const long long hi = std::stoll(text.substr(dots + 2));
    if (hi < lo) throw CLI::ValidationError("range '" + text + "' is empty");
    for (long long v = lo; v <= hi; ++v) out.push_back(v);
    return out;
  }
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto comma = text.find(',', pos);
    const auto tok = text.substr(pos, comma == std::string::npos ? std::string::npos
                                                                 : comma - pos);
    if (!tok.empty()) out.push_back(std::stoll(tok));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.empty()) throw CLI::ValidationError("empty list '" + text + "'");
  return out;
}

struct CliOptions {
  std::string coarse_levels = "2";
  int fine_level = 8;
  std::string ells = "2";
  double kappa = 0.0;
  double eps = 0.0;
  std::string seeds = "7";
  std::string cache_dir;
  std::string out_dir = ".";
  int workers = 4;
  std::string config_file;
  bool dump_mesh = false;
  bool dump_fields = false;
  bool dump_matrix = false;
};

void add_common_flags(CLI::App* cmd, CliOptions& opt)
{
  cmd->add_option("--coarse-levels", opt.coarse_levels,
                  "coarse mesh levels, e.g. 3 or 1,2,3 or 1..5");
  cmd->add_option("--fine-level", opt.fine_level, "fine (reference) mesh level");
  cmd->add_option("--ell", opt.ells, "oversampling orders, 0 = ideal (saturated patches)");
  cmd->add_option("--kappa", opt.kappa, "wave number");
  cmd->add_option("--eps", opt.eps, "periodic coefficient length scale");
  cmd->add_option("--seed", opt.seeds, "checkerboard seeds, e.g. 7 or 7,8,9");
  cmd->add_option("--cache-dir", opt.cache_dir,
                  "corrector cache directory (default: $MSPG_CACHE_DIR)");
  cmd->add_option("--out", opt.out_dir, "output directory");
  cmd->add_option("--workers", opt.workers, "worker threads for corrector problems");
  cmd->add_option("--config", opt.config_file, "problem config file ([problem] key = value)");
  cmd->add_flag("--dump-mesh", opt.dump_mesh, "write mesh dumps");
  cmd->add_flag("--dump-fields", opt.dump_fields, "write nodal field samples");
  cmd->add_flag("--dump-matrix", opt.dump_matrix, "write the fine operator as triplets (debug)");
}

mspg::ExperimentConfig to_config(const CliOptions& opt)
{
  mspg::ExperimentConfig cfg;
  for (long long v : parse_list(opt.coarse_levels)) cfg.coarse_levels.push_back(static_cast<int>(v));
  cfg.fine_level = opt.fine_level;
  cfg.ells.clear();
  for (long long v : parse_list(opt.ells)) cfg.ells.push_back(static_cast<int>(v));
  cfg.kappa = opt.kappa;
  cfg.eps = opt.eps;
  cfg.seeds.clear();
  for (long long v : parse_list(opt.seeds)) cfg.seeds.push_back(static_cast<std::uint64_t>(v));
  cfg.cache_dir = opt.cache_dir;
  if (cfg.cache_dir.empty())
    if (const char* env = std::getenv("MSPG_CACHE_DIR")) cfg.cache_dir = env;
  cfg.out_dir = opt.out_dir;
  cfg.workers = opt.workers;
  cfg.dump_mesh = opt.dump_mesh;
  cfg.dump_fields = opt.dump_fields;
  cfg.dump_matrix = opt.dump_matrix;
  if (!opt.config_file.empty()) {
    std::ifstream is(opt.config_file);
    if (!is) throw CLI::ValidationError("cannot open config file " + opt.config_file);
    cfg.config_problem = mspg::parse_problem_config(is);
  }
  return cfg;
}

void emit_csv(const std::vector<mspg::RunRow>& rows, const mspg::ExperimentConfig& cfg,
              const std::string& name)
{
  std::filesystem::create_directories(cfg.out_dir);
  const std::string path = cfg.out_dir + "/" + name + ".csv";
  std::ofstream os(path);
  mspg::write_csv(rows, os);
  std::cout << "wrote " << path << " (" << rows.size() << " rows)\n";
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"multiscale Petrov-Galerkin experiments"};
  app.require_subcommand(1);

  CliOptions opt;
  auto* homogenize1d = app.add_subcommand("homogenize1d", "1D periodic diffusion study");
  auto* homogenize2d = app.add_subcommand("homogenize2d", "2D random checkerboard study");
  auto* helmholtz1d = app.add_subcommand("helmholtz1d", "1D Helmholtz pollution study");
  auto* scatter2d = app.add_subcommand("scatter2d", "2D sound-soft scattering study");
  auto* decay = app.add_subcommand("decay", "corrector decay profile study");
  auto* ideal = app.add_subcommand("ideal-check", "ideal-method identity check");
  for (auto* cmd : {homogenize1d, homogenize2d, helmholtz1d, scatter2d, decay, ideal})
    add_common_flags(cmd, opt);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = to_config(opt);
    if (homogenize1d->parsed()) {
      emit_csv(mspg::run_homogenize1d(cfg, std::cout), cfg, "homogenize1d");
    } else if (homogenize2d->parsed()) {
      emit_csv(mspg::run_homogenize2d(cfg, std::cout), cfg, "homogenize2d");
    } else if (helmholtz1d->parsed()) {
      emit_csv(mspg::run_helmholtz1d(cfg, std::cout), cfg, "helmholtz1d");
    } else if (scatter2d->parsed()) {
      emit_csv(mspg::run_scatter2d(cfg, std::cout), cfg, "scatter2d");
    } else if (decay->parsed()) {
      emit_csv(mspg::run_decay(cfg, std::cout), cfg, "decay");
    } else if (ideal->parsed()) {
      const auto result = mspg::run_ideal_check(cfg, std::cout);
      bool ok = true;
      if (result.diffusion_discrepancy) {
        std::cout << "ideal-mode identity discrepancy (diffusion): "
                  << *result.diffusion_discrepancy << "\n";
        ok = ok && *result.diffusion_discrepancy <= 1e-8;
      }
      if (result.helmholtz_discrepancy) {
        std::cout << "ideal-mode identity discrepancy (helmholtz): "
                  << *result.helmholtz_discrepancy << "\n";
        ok = ok && *result.helmholtz_discrepancy <= 1e-8;
      }
      if (!ok) {
        std::cerr << "ideal-mode identity exceeded the 1e-8 tolerance\n";
        return 2;
      }
    }
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
