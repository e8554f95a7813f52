#pragma once

// Experiment configuration: JSON document with per-inequality defaults,
// overridden by a config file and then by command-line fields.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>

#include <json.hpp>

#include "nqsbell/bell_model.hpp"
#include "nqsbell/errors.hpp"
#include "nqsbell/rbm.hpp"
#include "nqsbell/sampler.hpp"
#include "nqsbell/sr.hpp"

namespace nqsbell {

inline constexpr const char* kOutEnv = "NQSBELL_OUT";

struct RunConfig {
  std::string ineq;  // "i1", "i2" or "i3"
  int n = 0;
  std::uint64_t seed = 1;
  // Inequality parameters; only those of `ineq` are meaningful.
  double delta = 0.0, Delta = 0.0, theta = 0.0, eps = 0.0;
  std::uint64_t settings_seed = 1;
  TyingKind scheme = TyingKind::dense;
  int alpha = 2;
  int range = 0;
  bool staggered_sign = false;
  SrConfig sr;
  int restarts = 1;  // independent runs; the lowest final estimate is kept
  SamplerConfig sampler;
  std::string out;
  nlohmann::json resolved;  // the document this was parsed from
};

namespace detail {

inline nlohmann::json defaults_for(const std::string& ineq) {
  nlohmann::json j;
  j["ineq"] = ineq;
  j["N"] = 8;
  j["seed"] = 1;
  if (ineq == "i1")
    j["params"] = {{"delta", 0.9}, {"Delta", 2.0}};
  else if (ineq == "i2")
    j["params"] = {{"theta", 2.0 * std::numbers::pi / 3.0}, {"eps", 0.1}, {"settings_seed", 1}};
  else if (ineq == "i3")
    j["params"] = {{"theta", 0.0}};
  else
    throw DomainError("unknown inequality '" + ineq + "' (expected i1, i2 or i3)");
  j["rbm"] = {{"scheme", nullptr}, {"alpha", nullptr}, {"R", nullptr},
              {"init_scale", kDefaultInitScale}, {"staggered_sign", nullptr}};
  j["sr"] = {{"iterations", 300},   {"samples", 1000},     {"final_samples", 0},   {"eta0", 0.05},
             {"eta_decay", 0.995},  {"lambda0", 100.0},    {"lambda_decay", 0.9},  {"lambda_min", 1e-4},
             {"solver", "auto"},    {"shift", "relative"}, {"cg_tolerance", 1e-8}, {"cg_max_iterations", 1000},
             {"record_wall_time", false}, {"restarts", 1}};
  j["sampler"] = {{"chains", 4},        {"sweeps_per_sample", 1}, {"warmup_sweeps", 20},
                  {"move", nullptr},    {"sector", nullptr},      {"parallel", true}};
  const char* env = std::getenv(kOutEnv);
  j["out"] = (env && *env) ? env : "nqsbell_out";
  return j;
}

// Every key of `patch` must exist in `base`, recursively.
inline void check_known_keys(const nlohmann::json& base, const nlohmann::json& patch, const std::string& where) {
  if (!patch.is_object()) throw FormatError("config: '" + where + "' must be an object");
  for (const auto& [k, v] : patch.items()) {
    if (!base.contains(k)) throw FormatError("config: unknown key '" + where + k + "'");
    if (base[k].is_object()) check_known_keys(base[k], v, where + k + ".");
  }
}

}  // namespace detail

/// Merges defaults <- file <- overrides and fills the inequality-dependent
/// choices (scheme, alpha, R, move, sector). The result has no nulls.
inline nlohmann::json resolve_config(const nlohmann::json& file, const nlohmann::json& overrides) {
  if (!file.is_object() || !overrides.is_object()) throw FormatError("config: top level must be an object");
  std::string ineq = "i3";
  if (file.contains("ineq")) ineq = file["ineq"].get<std::string>();
  if (overrides.contains("ineq")) ineq = overrides["ineq"].get<std::string>();
  auto j = detail::defaults_for(ineq);
  detail::check_known_keys(j, file, "");
  detail::check_known_keys(j, overrides, "");
  j.merge_patch(file);
  j.merge_patch(overrides);
  // merge_patch drops keys whose patch value is null; put them back.
  auto base = detail::defaults_for(ineq);
  for (const char* sec : {"rbm", "sampler"})
    for (const auto& [k, v] : base[sec].items())
      if (!j[sec].contains(k)) j[sec][k] = v;

  auto& rbm = j["rbm"];
  if (rbm["scheme"].is_null()) {
    if (ineq == "i1")
      rbm["scheme"] = "short_range";
    else if (ineq == "i2")
      rbm["scheme"] = j["params"]["eps"].get<double>() == 0.0 ? "perm_symmetric" : "dense";
    else
      rbm["scheme"] = "partial_symmetric";
  }
  auto kind = tying_kind_from_string(rbm["scheme"].get<std::string>());
  if (rbm["alpha"].is_null()) rbm["alpha"] = kind == TyingKind::short_range ? 4 : 2;
  if (kind == TyingKind::short_range) {
    if (rbm["R"].is_null()) rbm["R"] = 2;
  } else {
    if (!rbm["R"].is_null()) throw DomainError("config: R applies to short_range only");
    rbm.erase("R");
  }
  if (rbm["staggered_sign"].is_null()) rbm["staggered_sign"] = (ineq == "i1" && kind != TyingKind::perm_symmetric &&
                                                                 kind != TyingKind::partial_symmetric);
  auto& smp = j["sampler"];
  if (smp["move"].is_null()) smp["move"] = ineq == "i1" ? "pair_exchange" : "single_flip";
  if (smp["sector"].is_null() && smp["move"] == "pair_exchange") smp["sector"] = 0;
  return j;
}

/// Typed view of a resolved document, with range checks.
inline RunConfig parse_config(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.ineq = j.at("ineq").get<std::string>();
    c.n = j.at("N").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    const auto& p = j.at("params");
    if (c.ineq == "i1") {
      c.delta = p.at("delta").get<double>();
      c.Delta = p.at("Delta").get<double>();
      check_i1_domain(c.n, c.delta, c.Delta);
    } else if (c.ineq == "i2") {
      c.theta = p.at("theta").get<double>();
      c.eps = p.at("eps").get<double>();
      c.settings_seed = p.at("settings_seed").get<std::uint64_t>();
      if (c.n < 2) throw DomainError("config: I2 needs N >= 2");
      if (!(c.eps >= 0.0)) throw DomainError("config: eps must be >= 0");
    } else {
      c.theta = p.at("theta").get<double>();
      if (c.n < 2) throw DomainError("config: I3 needs N >= 2");
    }
    const auto& rbm = j.at("rbm");
    c.scheme = tying_kind_from_string(rbm.at("scheme").get<std::string>());
    c.alpha = rbm.at("alpha").get<int>();
    if (c.alpha < 1) throw DomainError("config: alpha must be >= 1");
    if (c.scheme == TyingKind::short_range) c.range = rbm.at("R").get<int>();
    c.staggered_sign = rbm.at("staggered_sign").get<bool>();
    c.sr.init_scale = rbm.at("init_scale").get<double>();

    const auto& sr = j.at("sr");
    c.sr.iterations = sr.at("iterations").get<int>();
    c.sr.samples = sr.at("samples").get<std::size_t>();
    c.sr.final_samples = sr.at("final_samples").get<std::size_t>();
    c.sr.eta0 = sr.at("eta0").get<double>();
    c.sr.eta_decay = sr.at("eta_decay").get<double>();
    c.sr.lambda0 = sr.at("lambda0").get<double>();
    c.sr.lambda_decay = sr.at("lambda_decay").get<double>();
    c.sr.lambda_min = sr.at("lambda_min").get<double>();
    auto solver = sr.at("solver").get<std::string>();
    if (solver != "auto") c.sr.solver.kind = solver_kind_from_string(solver);
    c.sr.solver.shift = shift_kind_from_string(sr.at("shift").get<std::string>());
    c.sr.solver.cg_tolerance = sr.at("cg_tolerance").get<double>();
    c.sr.solver.cg_max_iterations = sr.at("cg_max_iterations").get<int>();
    c.sr.record_wall_time = sr.at("record_wall_time").get<bool>();
    c.restarts = sr.at("restarts").get<int>();
    if (c.restarts < 1) throw DomainError("config: restarts must be >= 1");
    c.sr.seed = c.seed;
    c.sr.validate();

    const auto& s = j.at("sampler");
    c.sampler.n_chains = s.at("chains").get<int>();
    c.sampler.sweeps_per_sample = s.at("sweeps_per_sample").get<int>();
    c.sampler.warmup_sweeps = s.at("warmup_sweeps").get<int>();
    c.sampler.move = move_kind_from_string(s.at("move").get<std::string>());
    if (!s.at("sector").is_null()) c.sampler.sector = s.at("sector").get<int>();
    c.sampler.parallel = s.at("parallel").get<bool>();
    c.sampler.validate(c.n);

    c.out = j.at("out").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  c.resolved = j;
  return c;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config file '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("config file '" + path + "': " + e.what());
  }
}

/// The Bell operator and classical bound a config describes.
struct Problem {
  WeightedPauliSum op;
  double classical_bound;
  std::optional<BellInequality> inequality;  // absent for I1
};

inline Problem build_problem(const RunConfig& c) {
  if (c.ineq == "i1") return {build_i1_hamiltonian(c.n, c.delta, c.Delta), classical_bound_i1(c.n, c.delta, c.Delta), {}};
  if (c.ineq == "i2") {
    auto ineq = build_i2(c.n);
    auto op = compile(ineq, i2_settings_random(c.n, c.theta, c.eps, c.settings_seed));
    return {std::move(op), ineq.classical_bound, ineq};
  }
  auto ineq = build_i3(c.n);
  auto op = compile(ineq, i3_settings(c.n, c.theta));
  return {std::move(op), ineq.classical_bound, ineq};
}

inline SchemePtr build_scheme(const RunConfig& c) { return make_scheme(c.scheme, c.n, c.alpha * c.n, c.alpha, c.range); }

}  // namespace nqsbell
