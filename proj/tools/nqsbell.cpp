// nqsbell: train RBM wavefunctions on Bell operators, diagonalize them
// exactly, certify classical bounds and run parameter scans.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "nqsbell/commands.hpp"

using namespace nqsbell;

namespace {

// Flags shared by every subcommand. Each one, when given, overrides the
// matching field of the config document.
struct Flags {
  std::string config;
  std::optional<std::string> ineq, scheme, out, solver, move;
  std::optional<int> n, alpha, range, iters, chains, warmup, sector, restarts;
  std::optional<double> delta, Delta, eps, eta, lambda0;
  std::optional<std::string> theta;  // may be written with pi
  std::optional<std::size_t> samples, final_samples;
  std::optional<std::uint64_t> seed, settings_seed;
  bool wall_time = false;
  bool no_stagger = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON config file (flags override its fields)");
    app->add_option("--ineq", ineq, "inequality")->check(CLI::IsMember({"i1", "i2", "i3"}));
    app->add_option("--n", n, "number of parties / sites");
    app->add_option("--delta", delta, "I1 dimerization delta");
    app->add_option("--Delta", Delta, "I1 anisotropy Delta");
    app->add_option("--theta", theta, "measurement angle (e.g. 0.5, pi/2, 2pi/3)");
    app->add_option("--eps", eps, "I2 angle spread");
    app->add_option("--settings-seed", settings_seed, "I2 seed for the random angles");
    app->add_option("--scheme", scheme, "tying scheme")
        ->check(CLI::IsMember({"dense", "short_range", "perm_symmetric", "partial_symmetric"}));
    app->add_option("--alpha", alpha, "hidden units per site");
    app->add_option("--range", range, "short_range coupling range R");
    app->add_flag("--no-stagger", no_stagger, "do not add the staggered sign to the I1 initial state");
    app->add_option("--iters", iters, "SR iterations");
    app->add_option("--samples", samples, "samples per iteration");
    app->add_option("--final-samples", final_samples, "samples for the final estimate (0: 4x samples)");
    app->add_option("--eta", eta, "initial learning rate");
    app->add_option("--lambda0", lambda0, "initial diagonal shift");
    app->add_option("--restarts", restarts, "independent training runs; the lowest final estimate is kept");
    app->add_option("--solver", solver, "SR solver")->check(CLI::IsMember({"auto", "dense_direct", "iterative"}));
    app->add_option("--chains", chains, "Markov chains");
    app->add_option("--warmup", warmup, "warm-up sweeps per iteration");
    app->add_option("--move", move, "Metropolis move")->check(CLI::IsMember({"single_flip", "pair_exchange"}));
    app->add_option("--sector", sector, "fixed total sigma-z (pair_exchange only)");
    app->add_option("--seed", seed, "global seed");
    app->add_flag("--wall-time", wall_time, "record wall-clock time in the curve (breaks byte-identical output)");
    app->add_option("--out", out, std::string("output directory (default: $") + kOutEnv + " or ./nqsbell_out)");
  }

  nlohmann::json overrides() const {
    nlohmann::json j = nlohmann::json::object();
    if (ineq) j["ineq"] = *ineq;
    if (n) j["N"] = *n;
    if (seed) j["seed"] = *seed;
    if (out) j["out"] = *out;
    if (delta) j["params"]["delta"] = *delta;
    if (Delta) j["params"]["Delta"] = *Delta;
    if (theta) j["params"]["theta"] = parse_scalar(*theta);
    if (eps) j["params"]["eps"] = *eps;
    if (settings_seed) j["params"]["settings_seed"] = *settings_seed;
    if (scheme) j["rbm"]["scheme"] = *scheme;
    if (alpha) j["rbm"]["alpha"] = *alpha;
    if (range) j["rbm"]["R"] = *range;
    if (no_stagger) j["rbm"]["staggered_sign"] = false;
    if (iters) j["sr"]["iterations"] = *iters;
    if (samples) j["sr"]["samples"] = *samples;
    if (final_samples) j["sr"]["final_samples"] = *final_samples;
    if (eta) j["sr"]["eta0"] = *eta;
    if (lambda0) j["sr"]["lambda0"] = *lambda0;
    if (solver) j["sr"]["solver"] = *solver;
    if (restarts) j["sr"]["restarts"] = *restarts;
    if (wall_time) j["sr"]["record_wall_time"] = true;
    if (chains) j["sampler"]["chains"] = *chains;
    if (warmup) j["sampler"]["warmup_sweeps"] = *warmup;
    if (move) j["sampler"]["move"] = *move;
    if (sector) j["sampler"]["sector"] = *sector;
    return j;
  }

  RunConfig resolve() const {
    nlohmann::json file = nlohmann::json::object();
    if (!config.empty()) file = read_json_file(config);
    // A flag whose key does not exist for the chosen inequality is a usage error.
    return parse_config(resolve_config(file, overrides()));
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural-network quantum states for many-body Bell operators"};
  app.require_subcommand(1);
  Flags flags;
  auto* train = app.add_subcommand("train", "train an RBM and write curve.jsonl, checkpoint.json, summary.json");
  auto* ed = app.add_subcommand("ed", "exact lowest eigenvalue, written to ed.json");
  auto* bound = app.add_subcommand("bound", "formula and brute-force classical bound, written to bound.json");
  auto* scan = app.add_subcommand("scan", "sweep one parameter, written to scan.csv");
  for (auto* sub : {train, ed, bound, scan}) flags.attach(sub);
  std::string axis = "theta", grid;
  bool no_train = false, no_ed = false;
  scan->add_option("--axis", axis, "Delta, theta or N")->check(CLI::IsMember({"Delta", "theta", "N"}));
  scan->add_option("--grid", grid, "comma list or start:stop:count")->required();
  scan->add_flag("--no-train", no_train, "exact diagonalization only");
  scan->add_flag("--no-ed", no_ed, "skip exact diagonalization");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    auto cfg = flags.resolve();
    if (*train) {
      cmd_train(cfg, std::cout);
    } else if (*ed) {
      cmd_ed(cfg, std::cout);
    } else if (*bound) {
      auto j = cmd_bound(cfg, std::cout);
      if (j["match"] == false) return kExitNumeric;
    } else {
      ScanOptions opt{scan_axis_from_string(axis), parse_grid(grid), !no_train, !no_ed};
      return cmd_scan(cfg, opt, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kExitOk;
}
