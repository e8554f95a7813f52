#pragma once

// The train / ed / bound / scan commands behind the command-line tool. Each
// writes its artifacts into the configured output directory.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nqsbell/ed.hpp"
#include "nqsbell/run_config.hpp"
#include "nqsbell/sr.hpp"

namespace nqsbell {

enum ExitCode { kExitOk = 0, kExitUsage = 2, kExitNumeric = 3, kExitCapacity = 4 };

/// Exit status for an exception escaping a command.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const CapacityError*>(&e)) return kExitCapacity;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  return kExitUsage;
}

namespace detail {

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

inline std::filesystem::path prepare_out(const std::string& dir) {
  std::filesystem::path p(dir);
  std::filesystem::create_directories(p);
  return p;
}

// Shortest text that reads back to the same double; locale independent.
inline std::string fmt_double(double x) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

}  // namespace detail

// --- ed

struct EdOutcome {
  double min_eigenvalue;
  double residual;
  std::optional<int> sector;
  std::uint64_t dim;
};

/// Lowest eigenvalue of the configured Bell operator. I1 conserves total
/// sigma-z and is symmetric under a global flip, so its sectors m >= 0 are
/// searched one at a time.
inline EdOutcome ground_energy(const RunConfig& c, const WeightedPauliSum& op) {
  if (c.n > kMaxEdSites)
    throw CapacityError("ed: N = " + std::to_string(c.n) + " exceeds " + std::to_string(kMaxEdSites));
  if (c.ineq != "i1") {
    auto r = min_eigenpair(op);
    return {r.min_eigenvalue, r.residual, std::nullopt, r.basis.dim()};
  }
  std::optional<EdOutcome> best;
  for (int m = c.n % 2; m <= c.n; m += 2) {
    auto r = min_eigenpair(op, m);
    if (!best || r.min_eigenvalue < best->min_eigenvalue) best = EdOutcome{r.min_eigenvalue, r.residual, m, r.basis.dim()};
  }
  return *best;
}

/// ED counts as a violation only beyond round-off: at the bound itself (I3 at
/// theta = pi/2) Lanczos can land a few ulps below it.
inline bool ed_violation(double e0, double bound) { return e0 < bound - 1e-9 * std::max(1.0, std::abs(bound)); }

inline nlohmann::json cmd_ed(const RunConfig& c, std::ostream& log) {
  auto dir = detail::prepare_out(c.out);
  auto problem = build_problem(c);
  auto e = ground_energy(c, problem.op);
  nlohmann::json j{{"min_eigenvalue", e.min_eigenvalue},
                   {"residual", e.residual},
                   {"sector", e.sector ? nlohmann::json(*e.sector) : nlohmann::json(nullptr)},
                   {"dim", e.dim},
                   {"classical_bound", problem.classical_bound},
                   {"violated", ed_violation(e.min_eigenvalue, problem.classical_bound)},
                   {"config", c.resolved}};
  detail::write_json(dir / "ed.json", j);
  log << "ed: min eigenvalue " << detail::fmt_double(e.min_eigenvalue) << " (bound "
      << detail::fmt_double(problem.classical_bound) << ")\n";
  return j;
}

// --- bound

inline constexpr double kBoundMismatchTol = 1e-9;

/// Formula bound and, for I2/I3, the brute-force minimum over deterministic
/// strategies. Returns the document; "match" is false on a mismatch.
inline nlohmann::json cmd_bound(const RunConfig& c, std::ostream& log) {
  auto dir = detail::prepare_out(c.out);
  nlohmann::json j{{"ineq", c.ineq}, {"N", c.n}, {"config", c.resolved}};
  if (c.ineq == "i1") {
    double f = classical_bound_i1(c.n, c.delta, c.Delta);
    j["formula"] = f;
    j["brute_force"] = nullptr;
    j["formula_only"] = true;
    j["match"] = nullptr;
    log << "bound: formula " << detail::fmt_double(f) << " [formula-only: correlator form not enumerated]\n";
  } else {
    auto ineq = c.ineq == "i2" ? build_i2(c.n) : build_i3(c.n);
    double bf = brute_force_classical_min(ineq);
    bool match = std::abs(bf - ineq.classical_bound) <= kBoundMismatchTol;
    j["formula"] = ineq.classical_bound;
    j["brute_force"] = bf;
    j["formula_only"] = false;
    j["match"] = match;
    log << "bound: formula " << detail::fmt_double(ineq.classical_bound) << " brute force " << detail::fmt_double(bf)
        << (match ? "" : "  MISMATCH") << "\n";
  }
  detail::write_json(dir / "bound.json", j);
  return j;
}

// --- train

struct TrainOutcome {
  double qv;
  double stderr_;
  double classical_bound;
  bool violated;
};

/// qv + 3 stderr below the bound.
inline bool is_violation(double qv, double stderr_, double bound) { return qv + 3.0 * stderr_ < bound; }

inline RbmParams initial_params(const RunConfig& c) {
  auto p = random_init(build_scheme(c), c.sr.init_scale, c.sr.seed);
  if (c.staggered_sign) add_staggered_sign(p);
  return p;
}

// One training run from seed `seed`, streaming its curve to `curve_path`.
inline TrainResult train_once(const RunConfig& c, const Problem& problem, std::uint64_t seed,
                              const std::filesystem::path& curve_path, std::ostream& log) {
  RunConfig rc = c;
  rc.sr.seed = seed;
  auto init = initial_params(rc);
  std::ofstream curve(curve_path, std::ios::binary);
  if (!curve) throw FormatError("cannot write " + curve_path.string());
  const int every = std::max(1, c.sr.iterations / 10);
  auto on_iter = [&](const CurveRecord& r) {
    curve << to_json(r).dump() << '\n';
    curve.flush();
    if (r.iteration % every == 0)
      log << "iter " << r.iteration << "  qv " << detail::fmt_double(r.estimate.mean) << " +- "
          << detail::fmt_double(r.estimate.std_error) << '\n';
  };
  try {
    return train(problem.op, build_scheme(rc), rc.sr, rc.sampler, init, on_iter);
  } catch (const TrainingAborted& e) {
    detail::write_json(curve_path.parent_path() / "checkpoint_last_good.json", checkpoint_to_json(e.last_good(), seed));
    log << "train aborted at iteration " << e.iteration() << ": " << e.what()
        << "\nlast finite parameters saved to checkpoint_last_good.json\n";
    throw;
  }
}

/// Trains `restarts` times from seeds seed, seed + 1, ... and keeps the run
/// with the lowest final estimate (variational selection; no exact data).
/// Writes curve.jsonl, checkpoint.json and summary.json for the kept run.
inline TrainOutcome cmd_train(const RunConfig& c, std::ostream& log) {
  auto dir = detail::prepare_out(c.out);
  auto problem = build_problem(c);
  std::optional<TrainResult> best;
  std::uint64_t best_seed = c.seed;
  std::size_t best_index = 0;
  nlohmann::json candidates = nlohmann::json::array();
  std::optional<TrainingAborted> last_abort;
  for (int r = 0; r < c.restarts; ++r) {
    std::uint64_t seed = c.seed + static_cast<std::uint64_t>(r);
    auto curve = c.restarts == 1 ? dir / "curve.jsonl" : dir / ("curve_restart" + std::to_string(r) + ".jsonl");
    if (c.restarts > 1) log << "restart " << r << " (seed " << seed << ")\n";
    try {
      auto res = train_once(c, problem, seed, curve, log);
      candidates.push_back({{"seed", seed}, {"qv", res.final_estimate.mean}, {"stderr", res.final_estimate.std_error}});
      if (!best || res.final_estimate.mean < best->final_estimate.mean) {
        best = std::move(res);
        best_seed = seed;
        best_index = static_cast<std::size_t>(r);
      }
    } catch (const TrainingAborted& e) {
      if (c.restarts == 1) throw;
      candidates.push_back({{"seed", seed}, {"qv", nullptr}, {"error", e.what()}});
      last_abort = e;
    }
  }
  if (!best) throw *last_abort;
  if (c.restarts > 1)
    std::filesystem::copy_file(dir / ("curve_restart" + std::to_string(best_index) + ".jsonl"), dir / "curve.jsonl",
                               std::filesystem::copy_options::overwrite_existing);
  const auto& res = *best;
  detail::write_json(dir / "checkpoint.json", checkpoint_to_json(res.params, best_seed));
  const auto& f = res.final_estimate;
  bool violated = is_violation(f.mean, f.std_error, problem.classical_bound);
  nlohmann::json acceptance = nlohmann::json::array();
  for (const auto& ch : res.chains) acceptance.push_back(ch.acceptance_rate());
  nlohmann::json s{{"qv_final", f.mean},
                   {"stderr", f.std_error},
                   {"var", std::max(0.0, f.variance)},
                   {"samples", f.n_samples},
                   {"reliable", f.reliable},
                   {"classical_bound", problem.classical_bound},
                   {"violated", violated},
                   {"margin", problem.classical_bound - f.mean},
                   {"n_free", res.params.n_free()},
                   {"acceptance", acceptance},
                   {"seeds", {{"global", c.seed}, {"init", best_seed}, {"chains", best_seed}}},
                   {"config", c.resolved}};
  if (c.ineq == "i2") s["seeds"]["settings"] = c.settings_seed;
  if (c.restarts > 1) s["restarts"] = candidates;
  detail::write_json(dir / "summary.json", s);
  log << "final qv " << detail::fmt_double(f.mean) << " +- " << detail::fmt_double(f.std_error) << "  bound "
      << detail::fmt_double(problem.classical_bound) << (violated ? "  VIOLATED" : "  not violated") << '\n';
  return {f.mean, f.std_error, problem.classical_bound, violated};
}

// --- scan

enum class ScanAxis { Delta, theta, N };

inline ScanAxis scan_axis_from_string(const std::string& s) {
  if (s == "Delta") return ScanAxis::Delta;
  if (s == "theta") return ScanAxis::theta;
  if (s == "N") return ScanAxis::N;
  throw DomainError("unknown scan axis '" + s + "' (expected Delta, theta or N)");
}

/// A number, optionally written with pi: "1.5", "pi", "2pi", "pi/2", "2pi/3".
inline double parse_scalar(const std::string& text) {
  auto bad = [&] { return DomainError("cannot read '" + text + "' as a number"); };
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    double v;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      throw bad();
    }
    if (used != s.size()) throw bad();
    return v;
  };
  auto pos = text.find("pi");
  if (pos == std::string::npos) return number(text);
  double k = pos == 0 ? 1.0 : number(text.substr(0, pos));
  std::string rest = text.substr(pos + 2);
  double d = 1.0;
  if (!rest.empty()) {
    if (rest[0] != '/') throw bad();
    d = number(rest.substr(1));
  }
  return k * std::numbers::pi / d;
}

/// "a,b,c" or "start:stop:count" (inclusive, evenly spaced).
inline std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 3) throw DomainError("grid range must be start:stop:count");
    double a = parse_scalar(parts[0]), b = parse_scalar(parts[1]);
    double cnt = parse_scalar(parts[2]);
    if (cnt < 1 || cnt != std::floor(cnt)) throw DomainError("grid count must be a positive integer");
    int n = static_cast<int>(cnt);
    for (int i = 0; i < n; ++i) out.push_back(n == 1 ? a : a + (b - a) * i / (n - 1));
  } else {
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ',');)
      if (!p.empty()) out.push_back(parse_scalar(p));
  }
  if (out.empty()) throw DomainError("scan grid is empty");
  return out;
}

struct ScanOptions {
  ScanAxis axis = ScanAxis::theta;
  std::vector<double> grid;
  bool train = true;
  bool ed = true;
};

struct ScanRow {
  double axis;
  std::optional<double> qv, stderr_, ed;
  std::optional<double> bound;
  std::optional<bool> violated;
  int status = kExitOk;
};

/// Config document with the scanned field replaced and its own output dir.
inline nlohmann::json scan_point_document(const nlohmann::json& base, ScanAxis axis, double value,
                                          const std::string& point_dir) {
  auto j = base;
  switch (axis) {
    case ScanAxis::Delta:
      if (j["ineq"] != "i1") throw DomainError("scan: Delta axis applies to i1 only");
      j["params"]["Delta"] = value;
      break;
    case ScanAxis::theta:
      if (j["ineq"] == "i1") throw DomainError("scan: theta axis applies to i2 and i3");
      j["params"]["theta"] = value;
      break;
    case ScanAxis::N:
      if (value != std::floor(value)) throw DomainError("scan: N values must be integers");
      j["N"] = static_cast<int>(value);
      break;
  }
  j["out"] = point_dir;
  return j;
}

/// Runs each grid point, continues past failures, and writes scan.csv.
/// Returns 0 when every point succeeded, otherwise the first failure's code.
inline int cmd_scan(const RunConfig& c, const ScanOptions& opt, std::ostream& log,
                    std::vector<ScanRow>* rows_out = nullptr) {
  if (opt.grid.empty()) throw DomainError("scan grid is empty");
  if (!opt.train && !opt.ed) throw DomainError("scan: nothing to do with both training and ED disabled");
  auto dir = detail::prepare_out(c.out);
  // Validate the axis before running anything.
  scan_point_document(c.resolved, opt.axis, opt.axis == ScanAxis::N ? c.n : opt.grid.front(), c.out);
  std::ofstream csv(dir / "scan.csv", std::ios::binary);
  if (!csv) throw FormatError("cannot write scan.csv");
  csv << "axis,qv,stderr,ed,bound,violated\n";
  auto opt_str = [](const std::optional<double>& v) { return v ? detail::fmt_double(*v) : std::string(); };
  int status = kExitOk;
  std::vector<ScanRow> rows;
  for (std::size_t i = 0; i < opt.grid.size(); ++i) {
    ScanRow row{opt.grid[i], {}, {}, {}, {}, {}, kExitOk};
    char name[32];
    std::snprintf(name, sizeof name, "point_%03zu", i);
    log << "scan point " << i << ": " << detail::fmt_double(row.axis) << '\n';
    try {
      auto pc = parse_config(scan_point_document(c.resolved, opt.axis, row.axis, (dir / name).string()));
      auto problem = build_problem(pc);
      row.bound = problem.classical_bound;
      if (opt.ed && pc.n <= kMaxEdSites) {
        auto e = cmd_ed(pc, log);
        row.ed = e["min_eigenvalue"].get<double>();
      }
      if (opt.train) {
        auto t = cmd_train(pc, log);
        row.qv = t.qv;
        row.stderr_ = t.stderr_;
        row.violated = t.violated;
      } else if (row.ed) {
        row.violated = ed_violation(*row.ed, *row.bound);
      }
    } catch (const std::exception& e) {
      row.status = exit_code_for(e);
      if (status == kExitOk) status = row.status;
      log << "scan point " << i << " failed: " << e.what() << '\n';
    }
    csv << detail::fmt_double(row.axis) << ',' << opt_str(row.qv) << ',' << opt_str(row.stderr_) << ','
        << opt_str(row.ed) << ',' << opt_str(row.bound) << ','
        << (row.violated ? (*row.violated ? "true" : "false") : "") << '\n';
    csv.flush();
    rows.push_back(row);
  }
  if (rows_out) *rows_out = std::move(rows);
  return status;
}

}  // namespace nqsbell
