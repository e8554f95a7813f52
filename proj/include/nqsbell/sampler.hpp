#pragma once

// Metropolis-Hastings sampling of |Phi(s)|^2.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "nqsbell/basis.hpp"
#include "nqsbell/errors.hpp"
#include "nqsbell/random.hpp"
#include "nqsbell/rbm.hpp"

namespace nqsbell {

enum class MoveKind { single_flip, pair_exchange };

inline std::string to_string(MoveKind m) { return m == MoveKind::single_flip ? "single_flip" : "pair_exchange"; }

inline MoveKind move_kind_from_string(const std::string& s) {
  if (s == "single_flip") return MoveKind::single_flip;
  if (s == "pair_exchange") return MoveKind::pair_exchange;
  throw FormatError("unknown move kind '" + s + "'");
}

struct SamplerConfig {
  int n_chains = 4;
  int sweeps_per_sample = 1;  // one sweep = N proposals
  int warmup_sweeps = 100;
  MoveKind move = MoveKind::single_flip;
  std::optional<int> sector;  // fixed total sigma-z, required by pair_exchange
  bool parallel = true;

  void validate(int n_sites) const {
    if (n_chains < 1) throw DomainError("sampler: n_chains must be >= 1");
    if (sweeps_per_sample < 1) throw DomainError("sampler: sweeps_per_sample must be >= 1");
    if (warmup_sweeps < 0) throw DomainError("sampler: warmup_sweeps must be >= 0");
    if (move == MoveKind::pair_exchange && !sector) throw DomainError("sampler: pair_exchange requires a sector");
    if (move == MoveKind::single_flip && sector) throw DomainError("sampler: single_flip cannot keep a sector");
    if (sector) down_count(n_sites, *sector);
  }
};

struct ChainState {
  LookupState lookup;
  Rng rng;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::uint64_t accepted = 0;
  std::uint64_t proposed = 0;

  double acceptance_rate() const { return proposed ? static_cast<double>(accepted) / proposed : 0.0; }
};

/// Fresh chain on stream (seed, chain_id) with a random start configuration
/// (inside the sector when one is set).
inline ChainState make_chain(const RbmParams& params, const SamplerConfig& cfg, std::uint64_t seed,
                             std::uint64_t chain_id) {
  const int n = params.n_visible();
  cfg.validate(n);
  ChainState c;
  c.seed = seed;
  c.stream = chain_id;
  c.rng = make_stream(seed, chain_id);
  std::vector<std::int8_t> v(static_cast<std::size_t>(n), 1);
  if (cfg.sector) {
    int downs = down_count(n, *cfg.sector);
    std::fill(v.begin(), v.begin() + downs, std::int8_t{-1});
    // Fisher-Yates with the library's own uniform draw.
    for (int i = n - 1; i > 0; --i) std::swap(v[i], v[uniform_index(c.rng, i + 1)]);
  } else {
    for (auto& s : v) s = uniform01(c.rng) < 0.5 ? 1 : -1;
  }
  c.lookup = make_lookup(params, SpinConfig(std::move(v)));
  return c;
}

/// One proposal. Returns whether it was accepted.
///
/// Single flips walk a bipartite graph, so with all ratios equal to one a
/// sweep of even length would never change the parity of the down count.
/// One draw in N + 1 therefore holds the state (not counted as a proposal),
/// which keeps the chain aperiodic.
inline bool metropolis_step(const RbmParams& params, ChainState& chain, MoveKind move) {
  const int n = chain.lookup.config.size();
  int flips[2];
  std::span<const int> f;
  if (move == MoveKind::single_flip) {
    flips[0] = uniform_index(chain.rng, n + 1);
    if (flips[0] == n) return false;
    ++chain.proposed;
    f = std::span<const int>(flips, 1);
  } else {
    ++chain.proposed;
    if (std::abs(chain.lookup.config.magnetization()) == n) return false;
    int i, j;
    do {
      i = uniform_index(chain.rng, n);
      j = uniform_index(chain.rng, n);
    } while (chain.lookup.config[i] == chain.lookup.config[j]);
    flips[0] = std::min(i, j);
    flips[1] = std::max(i, j);
    f = std::span<const int>(flips, 2);
  }
  double log_accept = 2.0 * log_ratio(params, chain.lookup, f).real();
  if (log_accept >= 0.0 || uniform01(chain.rng) < std::exp(log_accept)) {
    update_lookup(params, chain.lookup, f);
    ++chain.accepted;
    return true;
  }
  return false;
}

inline void sweep(const RbmParams& params, ChainState& chain, MoveKind move) {
  const int n = chain.lookup.config.size();
  for (int i = 0; i < n; ++i) metropolis_step(params, chain, move);
}

/// Warm-up, then one snapshot every `sweeps_per_sample` sweeps. The lookup is
/// rebuilt first, so the chain may carry over from older parameters.
inline std::vector<SpinConfig> run_chain(const RbmParams& params, ChainState& chain, const SamplerConfig& cfg,
                                         std::size_t n_samples) {
  std::vector<SpinConfig> out;
  if (n_samples == 0) return out;
  out.reserve(n_samples);
  chain.lookup = make_lookup(params, chain.lookup.config);
  for (int s = 0; s < cfg.warmup_sweeps; ++s) sweep(params, chain, cfg.move);
  for (std::size_t i = 0; i < n_samples; ++i) {
    for (int s = 0; s < cfg.sweeps_per_sample; ++s) sweep(params, chain, cfg.move);
    out.push_back(chain.lookup.config);
  }
  return out;
}

inline std::vector<ChainState> make_chains(const RbmParams& params, const SamplerConfig& cfg, std::uint64_t seed) {
  std::vector<ChainState> chains;
  for (int c = 0; c < cfg.n_chains; ++c) chains.push_back(make_chain(params, cfg, seed, static_cast<std::uint64_t>(c)));
  return chains;
}

/// Draws `n_samples` in total, split as evenly as possible over the chains.
/// The result is ordered by chain id regardless of thread scheduling.
inline std::vector<SpinConfig> sample(const RbmParams& params, std::vector<ChainState>& chains,
                                      const SamplerConfig& cfg, std::size_t n_samples) {
  const std::size_t nc = chains.size();
  if (nc == 0) throw DomainError("sample: no chains");
  std::vector<std::vector<SpinConfig>> per_chain(nc);
  auto quota = [&](std::size_t c) { return n_samples / nc + (c < n_samples % nc ? 1 : 0); };
  if (cfg.parallel && nc > 1 && std::thread::hardware_concurrency() > 1) {
    std::vector<std::exception_ptr> errors(nc);
    {
      std::vector<std::jthread> workers;
      for (std::size_t c = 1; c < nc; ++c)
        workers.emplace_back([&, c] {
          try {
            per_chain[c] = run_chain(params, chains[c], cfg, quota(c));
          } catch (...) {
            errors[c] = std::current_exception();
          }
        });
      try {
        per_chain[0] = run_chain(params, chains[0], cfg, quota(0));
      } catch (...) {
        errors[0] = std::current_exception();
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  } else {
    for (std::size_t c = 0; c < nc; ++c) per_chain[c] = run_chain(params, chains[c], cfg, quota(c));
  }
  std::vector<SpinConfig> out;
  out.reserve(n_samples);
  for (auto& v : per_chain)
    for (auto& s : v) out.push_back(std::move(s));
  return out;
}

inline void log_acceptance(std::ostream& log, const std::vector<ChainState>& chains) {
  for (const auto& c : chains)
    log << "chain " << c.stream << " acceptance " << c.acceptance_rate() << " (" << c.accepted << "/" << c.proposed
        << ")\n";
}

inline constexpr int kMaxEnumerationSites = 14;

struct ExactDistribution {
  int n_sites;
  std::vector<std::uint64_t> states;
  std::vector<double> prob;
};

/// Normalized |Phi|^2 over every configuration (of the sector, if given).
inline ExactDistribution exact_distribution(const RbmParams& params, std::optional<int> sector = std::nullopt) {
  const int n = params.n_visible();
  if (n > kMaxEnumerationSites)
    throw CapacityError("exact_distribution: N = " + std::to_string(n) + " exceeds " +
                        std::to_string(kMaxEnumerationSites));
  Basis basis(n, sector);
  ExactDistribution d{n, basis.states(), {}};
  std::vector<double> logw(d.states.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < d.states.size(); ++i) {
    logw[i] = 2.0 * log_amplitude(params, SpinConfig::from_bits(d.states[i], n)).real();
    top = std::max(top, logw[i]);
  }
  d.prob.resize(logw.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logw.size(); ++i) z += d.prob[i] = std::exp(logw[i] - top);
  for (auto& p : d.prob) p /= z;
  return d;
}

}  // namespace nqsbell
