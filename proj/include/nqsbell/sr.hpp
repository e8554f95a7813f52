#pragma once

// Stochastic reconfiguration: natural-gradient descent of <op> over the RBM
// free parameters,
//
//   F_k  = <E_loc O_k*> - <E_loc><O_k*>
//   S_kk' = <O_k* O_k'> - <O_k*><O_k'>
//   (S + lambda D) delta = F,   Omega <- Omega - eta delta,
//
// where D is either the identity or diag(max(S_kk, eps)).

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "nqsbell/errors.hpp"
#include "nqsbell/estimator.hpp"
#include "nqsbell/rbm.hpp"
#include "nqsbell/sampler.hpp"
#include "nqsbell/spin_pauli.hpp"

namespace nqsbell {

enum class SolverKind { dense_direct, iterative };
enum class ShiftKind { relative_diagonal, identity };

inline std::string to_string(SolverKind s) { return s == SolverKind::dense_direct ? "dense_direct" : "iterative"; }
inline SolverKind solver_kind_from_string(const std::string& s) {
  if (s == "dense_direct" || s == "dense") return SolverKind::dense_direct;
  if (s == "iterative" || s == "iterative_matrix_free" || s == "cg") return SolverKind::iterative;
  throw FormatError("unknown solver '" + s + "'");
}
inline std::string to_string(ShiftKind s) { return s == ShiftKind::relative_diagonal ? "relative" : "identity"; }
inline ShiftKind shift_kind_from_string(const std::string& s) {
  if (s == "relative" || s == "relative_diagonal") return ShiftKind::relative_diagonal;
  if (s == "identity") return ShiftKind::identity;
  throw FormatError("unknown diagonal shift '" + s + "'");
}

/// Dense solves are used up to this many free parameters unless overridden.
inline constexpr int kDenseSolverLimit = 4000;

struct SolverOptions {
  std::optional<SolverKind> kind;  // empty: pick by size
  ShiftKind shift = ShiftKind::relative_diagonal;
  double shift_floor = 1e-10;
  double cg_tolerance = 1e-8;
  int cg_max_iterations = 1000;

  SolverKind resolve(int n_free) const {
    return kind.value_or(n_free <= kDenseSolverLimit ? SolverKind::dense_direct : SolverKind::iterative);
  }
};

struct SrConfig {
  int iterations = 300;
  std::size_t samples = 1000;
  std::size_t final_samples = 0;  // 0: four times `samples`
  double eta0 = 0.05;
  double eta_decay = 0.995;
  double lambda0 = 100.0;
  double lambda_decay = 0.9;
  double lambda_min = 1e-4;
  SolverOptions solver;
  std::uint64_t seed = 1;
  double init_scale = kDefaultInitScale;
  bool record_wall_time = true;

  void validate() const {
    if (iterations < 1) throw DomainError("sr: iterations must be >= 1");
    if (samples < 2) throw DomainError("sr: need at least 2 samples per iteration");
    if (!(eta_decay > 0.0 && eta_decay <= 1.0)) throw DomainError("sr: eta_decay must be in (0, 1]");
    if (!(lambda_min > 0.0)) throw DomainError("sr: lambda_min must be positive");
    if (!(eta0 > 0.0)) throw DomainError("sr: eta0 must be positive");
    if (!(lambda0 > 0.0) || !(lambda_decay > 0.0)) throw DomainError("sr: lambda schedule must be positive");
  }

  std::size_t resolved_final_samples() const { return final_samples ? final_samples : 4 * samples; }
};

/// Learning rate and regularization for iteration p, computed recursively so
/// consecutive ratios are exactly the decay factors.
class Schedule {
 public:
  explicit Schedule(const SrConfig& c) : cfg_(c), eta_(c.eta0), lambda_raw_(c.lambda0) {}
  double eta() const { return eta_; }
  double lambda() const { return std::max(lambda_raw_, cfg_.lambda_min); }
  void advance() {
    eta_ *= cfg_.eta_decay;
    lambda_raw_ *= cfg_.lambda_decay;
  }

 private:
  SrConfig cfg_;
  double eta_;
  double lambda_raw_;
};

/// Derivatives and local estimators of a batch of configurations with
/// normalized weights (uniform for Monte Carlo samples, |Phi|^2 for
/// enumeration).
struct SampleBatch {
  cmat O;          // rows: samples, columns: free parameters
  cvec eloc;
  Eigen::VectorXd weights;
};

inline SampleBatch make_batch(const LocalOperator& op, const RbmParams& params, std::span<const SpinConfig> samples) {
  const auto ns = static_cast<Eigen::Index>(samples.size());
  SampleBatch b{cmat(ns, params.n_free()), cvec(ns), Eigen::VectorXd::Constant(ns, 1.0 / static_cast<double>(ns))};
  for (Eigen::Index i = 0; i < ns; ++i) {
    auto lk = make_lookup(params, samples[static_cast<std::size_t>(i)]);
    b.O.row(i) = derivatives(params, lk).transpose();
    b.eloc[i] = local_estimator(op, params, lk);
  }
  return b;
}

/// Every configuration (of the sector) weighted by its exact |Phi|^2.
inline SampleBatch exact_batch(const WeightedPauliSum& op, const RbmParams& params,
                               std::optional<int> sector = std::nullopt) {
  auto dist = exact_distribution(params, sector);
  std::vector<SpinConfig> configs;
  configs.reserve(dist.states.size());
  for (auto s : dist.states) configs.push_back(SpinConfig::from_bits(s, dist.n_sites));
  auto b = make_batch(LocalOperator(op), params, configs);
  for (std::size_t i = 0; i < dist.prob.size(); ++i) b.weights[static_cast<Eigen::Index>(i)] = dist.prob[i];
  return b;
}

inline cvec weighted_mean_rows(const SampleBatch& b) {
  return (b.O.transpose() * b.weights.cast<complex>());
}

inline cvec compute_forces(const SampleBatch& b) {
  if (b.O.rows() < 2) throw DomainError("compute_forces: need at least 2 samples");
  cvec w = b.weights.cast<complex>();
  complex e_mean = (w.array() * b.eloc.array()).sum();
  cvec o_mean = weighted_mean_rows(b);
  cvec we = w.array() * b.eloc.array();
  return b.O.adjoint() * we - e_mean * o_mean.conjugate();
}

/// Covariance of the log-derivatives, held as the centered, weight-scaled
/// derivative matrix X so that S = X^H X.
class SrMetric {
 public:
  explicit SrMetric(const SampleBatch& b) {
    cvec o_mean = weighted_mean_rows(b);
    centered_ = b.O.rowwise() - o_mean.transpose();
    centered_.array().colwise() *= b.weights.array().sqrt().cast<complex>();
  }

  int size() const { return static_cast<int>(centered_.cols()); }
  cvec apply(const cvec& v) const { return centered_.adjoint() * (centered_ * v); }
  cmat dense() const {
    cmat s = cmat::Zero(size(), size());
    s.selfadjointView<Eigen::Lower>().rankUpdate(centered_.adjoint());
    return s.selfadjointView<Eigen::Lower>();
  }
  Eigen::VectorXd diagonal() const { return centered_.colwise().squaredNorm().transpose(); }

 private:
  cmat centered_;
};

inline SrMetric compute_metric(const SampleBatch& b) {
  if (b.O.rows() < 2) throw DomainError("compute_metric: need at least 2 samples");
  return SrMetric(b);
}

namespace detail {

inline Eigen::VectorXd shift_diagonal(const SrMetric& s, const SolverOptions& opt) {
  if (opt.shift == ShiftKind::identity) return Eigen::VectorXd::Ones(s.size());
  return s.diagonal().cwiseMax(opt.shift_floor);
}

inline std::optional<cvec> solve_dense(const SrMetric& s, const cvec& f, double lambda, const SolverOptions& opt) {
  cmat a = s.dense();
  a.diagonal() += (lambda * shift_diagonal(s, opt)).cast<complex>();
  Eigen::LLT<cmat> llt(a);
  if (llt.info() != Eigen::Success) return std::nullopt;
  cvec x = llt.solve(f);
  if (!x.allFinite()) return std::nullopt;
  return x;
}

/// Jacobi-preconditioned conjugate gradient on S + lambda D.
inline std::optional<cvec> solve_iterative(const SrMetric& s, const cvec& f, double lambda, const SolverOptions& opt) {
  Eigen::VectorXd shift = lambda * shift_diagonal(s, opt);
  Eigen::VectorXd precond = (s.diagonal() + shift).cwiseInverse();
  auto apply = [&](const cvec& v) -> cvec { return s.apply(v) + (shift.cast<complex>().array() * v.array()).matrix(); };
  const double fnorm = f.norm();
  cvec x = cvec::Zero(f.size());
  cvec r = f;
  cvec z = precond.cast<complex>().cwiseProduct(r);
  cvec p = z;
  complex rz = r.dot(z);
  for (int it = 0; it < opt.cg_max_iterations; ++it) {
    if (r.norm() <= opt.cg_tolerance * fnorm) return x;
    cvec ap = apply(p);
    complex alpha = rz / p.dot(ap);
    x += alpha * p;
    r -= alpha * ap;
    z = precond.cast<complex>().cwiseProduct(r);
    complex rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
    if (!x.allFinite()) return std::nullopt;
  }
  if (r.norm() <= opt.cg_tolerance * fnorm) return x;
  return std::nullopt;
}

}  // namespace detail

/// Solves (S + lambda D) delta = F; on failure retries once with 10 lambda.
inline cvec solve_sr(const SrMetric& s, const cvec& f, double lambda, const SolverOptions& opt) {
  if (!(lambda > 0.0)) throw DomainError("sr_step: lambda must be positive");
  if (f.size() != s.size()) throw DomainError("sr_step: force and metric sizes differ");
  if (f.squaredNorm() == 0.0) return cvec::Zero(f.size());
  auto kind = opt.resolve(s.size());
  for (double l : {lambda, 10.0 * lambda}) {
    auto x = kind == SolverKind::dense_direct ? detail::solve_dense(s, f, l, opt) : detail::solve_iterative(s, f, l, opt);
    if (x) return *x;
  }
  throw NumericError("sr_step: " + to_string(kind) + " solver failed even with lambda = " + std::to_string(10 * lambda));
}

inline RbmParams sr_step(const RbmParams& params, const cvec& forces, const SrMetric& metric, double eta,
                         double lambda, const SolverOptions& opt = {}) {
  cvec delta = solve_sr(metric, forces, lambda, opt);
  RbmParams next = params;
  next.set_free_parameters(params.free_parameters() - eta * delta);
  return next;
}

struct CurveRecord {
  int iteration;
  EstimateRecord estimate;
  double eta;
  double lambda;
  double wall_ms;
};

using LearnCurve = std::vector<CurveRecord>;

inline nlohmann::json to_json(const CurveRecord& r) {
  return {{"iter", r.iteration},
          {"qv", r.estimate.mean},
          {"stderr", r.estimate.std_error},
          {"var", std::max(0.0, r.estimate.variance)},
          {"eta", r.eta},
          {"lambda", r.lambda},
          {"wall_ms", r.wall_ms}};
}

/// Raised when training hits a non-finite estimate or parameters. Carries the
/// last finite parameters for a diagnostic checkpoint.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, RbmParams last_good, int iteration)
      : NumericError(what), last_good_(std::move(last_good)), iteration_(iteration) {}
  const RbmParams& last_good() const { return last_good_; }
  int iteration() const { return iteration_; }

 private:
  RbmParams last_good_;
  int iteration_;
};

struct TrainResult {
  RbmParams params;
  LearnCurve curve;
  EstimateRecord final_estimate;
  std::vector<ChainState> chains;
};

using IterationCallback = std::function<void(const CurveRecord&)>;

/// Full training loop. Deterministic for a fixed seed and chain count.
inline TrainResult train(const WeightedPauliSum& op, const SchemePtr& scheme, const SrConfig& sr,
                         const SamplerConfig& sampler, std::optional<RbmParams> initial = std::nullopt,
                         const IterationCallback& on_iteration = {}) {
  sr.validate();
  if (scheme->n_visible() != op.n_sites()) throw DomainError("train: RBM and operator sizes differ");
  sampler.validate(op.n_sites());
  RbmParams params = initial ? *initial : random_init(scheme, sr.init_scale, sr.seed);
  if (params.n_visible() != op.n_sites()) throw DomainError("train: initial parameters have the wrong size");
  LocalOperator local(op);
  auto chains = make_chains(params, sampler, sr.seed);
  Schedule schedule(sr);
  LearnCurve curve;
  curve.reserve(static_cast<std::size_t>(sr.iterations));
  const auto start = std::chrono::steady_clock::now();
  for (int p = 0; p < sr.iterations; ++p) {
    auto samples = sample(params, chains, sampler, sr.samples);
    auto batch = make_batch(local, params, samples);
    auto est = summarize(std::span<const complex>(batch.eloc.data(), static_cast<std::size_t>(batch.eloc.size())));
    if (!std::isfinite(est.mean) || !std::isfinite(est.variance))
      throw TrainingAborted("train: non-finite estimate at iteration " + std::to_string(p), params, p);
    auto forces = compute_forces(batch);
    auto metric = compute_metric(batch);
    RbmParams next = sr_step(params, forces, metric, schedule.eta(), schedule.lambda(), sr.solver);
    if (!next.all_finite())
      throw TrainingAborted("train: non-finite parameters at iteration " + std::to_string(p), params, p);
    double wall = 0.0;
    if (sr.record_wall_time)
      wall = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    curve.push_back({p, est, schedule.eta(), schedule.lambda(), wall});
    if (on_iteration) on_iteration(curve.back());
    params = std::move(next);
    schedule.advance();
  }
  auto final_samples = sample(params, chains, sampler, sr.resolved_final_samples());
  auto final_est = batch_estimate(op, params, final_samples);
  if (!std::isfinite(final_est.mean))
    throw TrainingAborted("train: non-finite final estimate", params, sr.iterations);
  return {std::move(params), std::move(curve), final_est, std::move(chains)};
}

}  // namespace nqsbell
