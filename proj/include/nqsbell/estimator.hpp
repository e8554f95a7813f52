#pragma once

// Local estimators of operator expectations, blocking error analysis and
// exact (fully enumerated) expectations.

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "nqsbell/basis.hpp"
#include "nqsbell/rbm.hpp"
#include "nqsbell/sampler.hpp"
#include "nqsbell/spin_pauli.hpp"

namespace nqsbell {

struct EstimateRecord {
  double mean = 0.0;       // sample mean of Re E_loc
  double std_error = 0.0;  // blocking estimate
  double variance = 0.0;   // <|E_loc|^2> - |<E_loc>|^2
  std::size_t n_samples = 0;
  double imag_mean = 0.0;
  bool reliable = true;    // false with fewer than 16 samples
};

inline nlohmann::json to_json(const EstimateRecord& e) {
  return {{"mean", e.mean},
          {"stderr", e.std_error},
          {"var", std::max(0.0, e.variance)},
          {"n_samples", e.n_samples},
          {"imag_mean", e.imag_mean},
          {"reliable", e.reliable}};
}

/// E_loc(s) = sum_s' <s|op|s'> Phi(s')/Phi(s), one amplitude ratio per flip
/// group.
inline complex local_estimator(const LocalOperator& op, const RbmParams& params, const LookupState& lookup) {
  complex e{};
  const auto cfg = lookup.config.values();
  for (const auto& g : op.groups()) {
    complex element = LocalOperator::row_element(g, cfg);
    if (g.flips.empty()) e += element;
    else e += element * std::exp(log_ratio(params, lookup, g.flips));
  }
  return e;
}

inline complex local_estimator(const WeightedPauliSum& op, const RbmParams& params, const SpinConfig& config,
                               const LookupState& lookup) {
  if (!(lookup.config == config)) throw DomainError("local_estimator: lookup does not match the configuration");
  return local_estimator(LocalOperator(op), params, lookup);
}

/// Local estimator for any state exposing log_amplitude(state, config).
template <class State>
complex local_estimator_generic(const LocalOperator& op, const State& state, const SpinConfig& config) {
  complex base = log_amplitude(state, config);
  complex e{};
  for (const auto& g : op.groups()) {
    complex element = LocalOperator::row_element(g, config.values());
    if (g.flips.empty()) {
      e += element;
      continue;
    }
    SpinConfig partner = config;
    partner.flip(g.flips);
    e += element * std::exp(log_amplitude(state, partner) - base);
  }
  return e;
}

/// Standard error of the mean from blocking: block sizes double until the
/// estimate changes by less than 5%, or fewer than 16 blocks remain.
inline double blocking_std_error(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 2) return 0.0;
  auto se_for = [&](std::size_t block) {
    std::size_t nb = n / block;
    std::vector<double> means(nb, 0.0);
    for (std::size_t b = 0; b < nb; ++b) {
      for (std::size_t i = 0; i < block; ++i) means[b] += x[b * block + i];
      means[b] /= static_cast<double>(block);
    }
    double m = 0.0;
    for (double v : means) m += v;
    m /= static_cast<double>(nb);
    double s = 0.0;
    for (double v : means) s += (v - m) * (v - m);
    return std::sqrt(s / (static_cast<double>(nb) * static_cast<double>(nb - 1)));
  };
  std::size_t block = 1;
  double se = se_for(block);
  double largest = se;
  while (n / (2 * block) >= 16) {
    double next = se_for(2 * block);
    largest = std::max(largest, next);
    if (se == 0.0 || std::abs(next - se) < 0.05 * se) return next;
    se = next;
    block *= 2;
  }
  return largest;
}

inline EstimateRecord summarize(std::span<const complex> eloc) {
  EstimateRecord r;
  r.n_samples = eloc.size();
  if (eloc.empty()) throw DomainError("summarize: no samples");
  std::vector<double> re(eloc.size());
  complex sum{};
  double sq = 0.0;
  for (std::size_t i = 0; i < eloc.size(); ++i) {
    re[i] = eloc[i].real();
    sum += eloc[i];
    sq += std::norm(eloc[i]);
  }
  const double n = static_cast<double>(eloc.size());
  complex mean = sum / n;
  r.mean = mean.real();
  r.imag_mean = mean.imag();
  r.variance = sq / n - std::norm(mean);
  r.std_error = blocking_std_error(re);
  r.reliable = eloc.size() >= 16;
  return r;
}

inline std::vector<complex> local_values(const LocalOperator& op, const RbmParams& params,
                                         std::span<const SpinConfig> samples) {
  std::vector<complex> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(local_estimator(op, params, make_lookup(params, s)));
  return out;
}

inline EstimateRecord batch_estimate(const WeightedPauliSum& op, const RbmParams& params,
                                     std::span<const SpinConfig> samples) {
  if (samples.empty()) throw DomainError("batch_estimate: no samples");
  auto e = local_values(LocalOperator(op), params, samples);
  return summarize(e);
}

struct ExactMoments {
  double mean;
  double variance;
};

namespace detail {

template <class LocalFn, class LogAmpFn>
ExactMoments exact_moments(int n, std::optional<int> sector, LogAmpFn&& log_amp, LocalFn&& local) {
  if (n > kMaxEnumerationSites)
    throw CapacityError("exact expectation: N = " + std::to_string(n) + " exceeds " +
                        std::to_string(kMaxEnumerationSites));
  Basis basis(n, sector);
  auto states = basis.states();
  std::vector<double> logw(states.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < states.size(); ++i) {
    logw[i] = 2.0 * log_amp(SpinConfig::from_bits(states[i], n)).real();
    if (logw[i] > top) top = logw[i];
  }
  double z = 0.0, m1 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    double w = std::exp(logw[i] - top);
    if (w == 0.0) continue;
    complex e = local(SpinConfig::from_bits(states[i], n));
    z += w;
    m1 += w * e.real();
    m2 += w * std::norm(e);
  }
  m1 /= z;
  m2 /= z;
  return {m1, m2 - m1 * m1};
}

}  // namespace detail

/// Exact <op> and <op^2> - <op>^2 in the RBM state by full enumeration.
inline ExactMoments exact_expectation(const WeightedPauliSum& op, const RbmParams& params,
                                      std::optional<int> sector = std::nullopt) {
  LocalOperator local(op);
  return detail::exact_moments(
      params.n_visible(), sector, [&](const SpinConfig& s) { return log_amplitude(params, s); },
      [&](const SpinConfig& s) { return local_estimator(local, params, make_lookup(params, s)); });
}

template <class State>
ExactMoments exact_expectation_generic(const WeightedPauliSum& op, const State& state,
                                       std::optional<int> sector = std::nullopt) {
  LocalOperator local(op);
  return detail::exact_moments(
      op.n_sites(), sector, [&](const SpinConfig& s) { return log_amplitude(state, s); },
      [&](const SpinConfig& s) { return local_estimator_generic(local, state, s); });
}

}  // namespace nqsbell
