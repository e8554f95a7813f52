#pragma once

// Restricted-Boltzmann-machine wavefunction
//
//   log Phi(s) = sum_k a_k s_k + sum_j log cosh(theta_j),
//   theta_j    = b_j + sum_k W_jk s_k,
//
// with complex parameters. The constant 2^M from tracing out the hidden
// units is dropped. Parameter sharing and masking is described by a
// TyingScheme; all updates go through the vector of free parameters, so
// tied entries stay equal and masked weights stay exactly zero.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "nqsbell/errors.hpp"
#include "nqsbell/random.hpp"
#include "nqsbell/spin_pauli.hpp"

namespace nqsbell {

using cvec = Eigen::VectorXcd;
using cmat = Eigen::MatrixXcd;

enum class TyingKind { dense, short_range, perm_symmetric, partial_symmetric };

inline std::string to_string(TyingKind k) {
  switch (k) {
    case TyingKind::dense: return "dense";
    case TyingKind::short_range: return "short_range";
    case TyingKind::perm_symmetric: return "perm_symmetric";
    case TyingKind::partial_symmetric: return "partial_symmetric";
  }
  return "?";
}

inline TyingKind tying_kind_from_string(const std::string& s) {
  if (s == "dense") return TyingKind::dense;
  if (s == "short_range") return TyingKind::short_range;
  if (s == "perm_symmetric") return TyingKind::perm_symmetric;
  if (s == "partial_symmetric") return TyingKind::partial_symmetric;
  throw FormatError("unknown tying scheme '" + s + "'");
}

/// Map from the full parameter list (a_0..a_N-1, b_0..b_M-1, W row-major)
/// onto free parameters; -1 marks a masked weight.
class TyingScheme {
 public:
  struct WeightEntry {
    int hidden;
    int site;
    int group;
  };

  static TyingScheme dense(int n, int m) {
    check_sizes(n, m);
    TyingScheme t(TyingKind::dense, n, m);
    int g = 0;
    for (int k = 0; k < n; ++k) t.map_[t.a_index(k)] = g++;
    for (int j = 0; j < m; ++j) t.map_[t.b_index(j)] = g++;
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < n; ++k) t.map_[t.w_index(j, k)] = g++;
    t.finish(g);
    return t;
  }

  /// M = alpha N hidden units, alpha of them attached to each site; hidden
  /// unit j sits at site j / alpha and couples to sites within `range`.
  static TyingScheme short_range(int n, int alpha, int range) {
    if (alpha < 1 || range < 0) throw DomainError("short_range: need alpha >= 1 and range >= 0");
    check_sizes(n, alpha * n);
    TyingScheme t(TyingKind::short_range, n, alpha * n);
    t.alpha_ = alpha;
    t.range_ = range;
    int g = 0;
    for (int k = 0; k < n; ++k) t.map_[t.a_index(k)] = g++;
    for (int j = 0; j < t.m_; ++j) t.map_[t.b_index(j)] = g++;
    for (int j = 0; j < t.m_; ++j) {
      int home = j / alpha;
      for (int k = 0; k < n; ++k)
        t.map_[t.w_index(j, k)] = std::abs(home - k) <= range ? g++ : -1;
    }
    t.finish(g);
    return t;
  }

  /// One shared visible bias; every hidden unit has a single weight shared
  /// by all sites.
  static TyingScheme perm_symmetric(int n, int m) {
    check_sizes(n, m);
    TyingScheme t(TyingKind::perm_symmetric, n, m);
    int g = 0;
    for (int k = 0; k < n; ++k) t.map_[t.a_index(k)] = 0;
    g = 1;
    for (int j = 0; j < m; ++j) t.map_[t.b_index(j)] = g++;
    for (int j = 0; j < m; ++j) {
      for (int k = 0; k < n; ++k) t.map_[t.w_index(j, k)] = g;
      ++g;
    }
    t.finish(g);
    return t;
  }

  /// Symmetric under permutations of sites 2..N: a_2 = ... = a_N, hidden
  /// unit 1 has a site-1 weight and one weight for sites 2..N, hidden units
  /// 2..M share one weight across all sites (site 1 included).
  static TyingScheme partial_symmetric(int n, int m) {
    check_sizes(n, m);
    TyingScheme t(TyingKind::partial_symmetric, n, m);
    int g = 0;
    t.map_[t.a_index(0)] = g++;
    for (int k = 1; k < n; ++k) t.map_[t.a_index(k)] = g;
    if (n > 1) ++g;
    for (int j = 0; j < m; ++j) t.map_[t.b_index(j)] = g++;
    t.map_[t.w_index(0, 0)] = g++;
    for (int k = 1; k < n; ++k) t.map_[t.w_index(0, k)] = g;
    if (n > 1) ++g;
    for (int j = 1; j < m; ++j) {
      for (int k = 0; k < n; ++k) t.map_[t.w_index(j, k)] = g;
      ++g;
    }
    t.finish(g);
    return t;
  }

  TyingKind kind() const { return kind_; }
  int n_visible() const { return n_; }
  int n_hidden() const { return m_; }
  int alpha() const { return alpha_; }
  int range() const { return range_; }
  int n_free() const { return n_free_; }
  int n_full() const { return n_ + m_ + n_ * m_; }

  int a_index(int k) const { return k; }
  int b_index(int j) const { return n_ + j; }
  int w_index(int j, int k) const { return n_ + m_ + j * n_ + k; }

  int group(int full_index) const { return map_[static_cast<std::size_t>(full_index)]; }
  bool weight_unmasked(int j, int k) const { return group(w_index(j, k)) >= 0; }

  /// Hidden units with an unmasked weight on `site`.
  const std::vector<int>& hidden_support(int site) const { return support_[static_cast<std::size_t>(site)]; }
  const std::vector<WeightEntry>& weight_entries() const { return entries_; }
  /// Full indices tied to each free parameter.
  const std::vector<std::vector<int>>& members() const { return members_; }

 private:
  TyingScheme(TyingKind kind, int n, int m)
      : kind_(kind), n_(n), m_(m), map_(static_cast<std::size_t>(n + m + n * m), -1) {}

  static void check_sizes(int n, int m) {
    if (n < 1 || m < 1) throw DomainError("TyingScheme: need at least one visible and one hidden unit");
  }

  void finish(int n_free) {
    n_free_ = n_free;
    members_.assign(static_cast<std::size_t>(n_free), {});
    for (int i = 0; i < n_full(); ++i)
      if (map_[i] >= 0) members_[map_[i]].push_back(i);
    support_.assign(static_cast<std::size_t>(n_), {});
    for (int j = 0; j < m_; ++j)
      for (int k = 0; k < n_; ++k) {
        int g = group(w_index(j, k));
        if (g < 0) continue;
        support_[k].push_back(j);
        entries_.push_back({j, k, g});
      }
  }

  TyingKind kind_;
  int n_;
  int m_;
  int alpha_ = 0;
  int range_ = 0;
  int n_free_ = 0;
  std::vector<int> map_;
  std::vector<std::vector<int>> members_;
  std::vector<std::vector<int>> support_;
  std::vector<WeightEntry> entries_;
};

using SchemePtr = std::shared_ptr<const TyingScheme>;

class RbmParams {
 public:
  explicit RbmParams(SchemePtr scheme)
      : scheme_(std::move(scheme)),
        a_(cvec::Zero(scheme_->n_visible())),
        b_(cvec::Zero(scheme_->n_hidden())),
        w_(cmat::Zero(scheme_->n_hidden(), scheme_->n_visible())) {}

  /// Builds parameters from full tables; rejects tables that break the tying.
  static RbmParams from_full(SchemePtr scheme, const cvec& a, const cvec& b, const cmat& w) {
    RbmParams p(std::move(scheme));
    const auto& s = *p.scheme_;
    if (a.size() != s.n_visible() || b.size() != s.n_hidden() || w.rows() != s.n_hidden() ||
        w.cols() != s.n_visible())
      throw FormatError("RbmParams: parameter shapes do not match the tying scheme");
    cvec free = cvec::Zero(s.n_free());
    std::vector<bool> seen(static_cast<std::size_t>(s.n_free()), false);
    for (int i = 0; i < s.n_full(); ++i) {
      complex v = full_value(a, b, w, s, i);
      int g = s.group(i);
      if (g < 0) {
        if (v != complex{}) throw FormatError("RbmParams: masked weight is non-zero");
        continue;
      }
      if (!seen[g]) {
        free[g] = v;
        seen[g] = true;
      } else if (free[g] != v) {
        throw FormatError("RbmParams: tied parameters differ");
      }
    }
    p.set_free_parameters(free);
    return p;
  }

  const TyingScheme& scheme() const { return *scheme_; }
  const SchemePtr& scheme_ptr() const { return scheme_; }
  int n_visible() const { return scheme_->n_visible(); }
  int n_hidden() const { return scheme_->n_hidden(); }
  int n_free() const { return scheme_->n_free(); }

  const cvec& a() const { return a_; }
  const cvec& b() const { return b_; }
  const cmat& W() const { return w_; }

  cvec free_parameters() const {
    cvec out(n_free());
    for (int g = 0; g < n_free(); ++g) out[g] = full_value(a_, b_, w_, *scheme_, scheme_->members()[g].front());
    return out;
  }

  void set_free_parameters(const cvec& free) {
    if (free.size() != n_free()) throw DomainError("RbmParams: wrong free-parameter count");
    const auto& s = *scheme_;
    const int n = s.n_visible();
    const int m = s.n_hidden();
    for (int g = 0; g < n_free(); ++g) {
      for (int i : s.members()[g]) {
        if (i < n) a_[i] = free[g];
        else if (i < n + m) b_[i - n] = free[g];
        else w_((i - n - m) / n, (i - n - m) % n) = free[g];
      }
    }
  }

  bool all_finite() const { return a_.allFinite() && b_.allFinite() && w_.allFinite(); }

 private:
  static complex full_value(const cvec& a, const cvec& b, const cmat& w, const TyingScheme& s, int i) {
    const int n = s.n_visible();
    const int m = s.n_hidden();
    if (i < n) return a[i];
    if (i < n + m) return b[i - n];
    return w((i - n - m) / n, (i - n - m) % n);
  }

  SchemePtr scheme_;
  cvec a_;
  cvec b_;
  cmat w_;
};

/// log cosh, overflow-free. Imaginary part is determined modulo 2 pi.
inline complex log_cosh(complex x) {
  complex y = x.real() < 0 ? -x : x;
  complex f = 1.0 + std::exp(-2.0 * y);
  return y + complex{0.5 * std::log(std::norm(f)), std::arg(f)} - std::numbers::ln2;
}

inline complex safe_tanh(complex x) {
  if (std::abs(x.real()) <= 20.0) return std::tanh(x);
  return x.real() < 0 ? complex{-1.0, 0.0} : complex{1.0, 0.0};
}

inline void check_config(const RbmParams& p, const SpinConfig& config) {
  if (config.size() != p.n_visible())
    throw DomainError("configuration has " + std::to_string(config.size()) + " sites, RBM expects " +
                      std::to_string(p.n_visible()));
}

/// theta_j = b_j + sum_k W_jk s_k.
inline cvec effective_angles(const RbmParams& p, const SpinConfig& config) {
  check_config(p, config);
  cvec theta = p.b();
  for (int k = 0; k < config.size(); ++k) {
    double s = config[k];
    for (int j : p.scheme().hidden_support(k)) theta[j] += p.W()(j, k) * s;
  }
  return theta;
}

inline complex log_amplitude(const RbmParams& p, const SpinConfig& config) {
  cvec theta = effective_angles(p, config);
  complex out{};
  for (int k = 0; k < config.size(); ++k) out += p.a()[k] * static_cast<double>(config[k]);
  for (Eigen::Index j = 0; j < theta.size(); ++j) out += log_cosh(theta[j]);
  return out;
}

/// Cached effective angles for one configuration. Chain-private.
struct LookupState {
  cvec theta;
  SpinConfig config;

  // Scratch for multi-site flips.
  mutable cvec delta;
  mutable std::vector<int> touched;
  mutable std::vector<char> mark;
};

inline LookupState make_lookup(const RbmParams& p, SpinConfig config) {
  LookupState lk;
  lk.theta = effective_angles(p, config);
  lk.config = std::move(config);
  lk.delta = cvec::Zero(p.n_hidden());
  lk.mark.assign(static_cast<std::size_t>(p.n_hidden()), 0);
  return lk;
}

namespace detail {

// Principal log without glibc clog's extra-precision path near |z| = 1.
inline complex fast_log(complex z) { return {0.5 * std::log(std::norm(z)), std::arg(z)}; }

inline void check_flips(const LookupState& lk, std::span<const int> flips) {
  for (int k : flips)
    if (k < 0 || k >= lk.config.size()) throw DomainError("flip site " + std::to_string(k + 1) + " out of range");
}

/// Fills lk.delta / lk.touched with the change of theta caused by `flips`.
inline void collect_delta(const RbmParams& p, const LookupState& lk, std::span<const int> flips) {
  lk.touched.clear();
  for (int k : flips) {
    double s = lk.config[k];
    for (int j : p.scheme().hidden_support(k)) {
      if (!lk.mark[j]) {
        lk.mark[j] = 1;
        lk.delta[j] = complex{};
        lk.touched.push_back(j);
      }
      lk.delta[j] -= 2.0 * p.W()(j, k) * s;
    }
  }
  for (int j : lk.touched) lk.mark[j] = 0;
}

}  // namespace detail

/// log Phi(s') - log Phi(s) for s' = s with `flips` negated.
inline complex log_ratio(const RbmParams& p, const LookupState& lk, std::span<const int> flips) {
  detail::check_flips(lk, flips);
  complex out{};
  for (int k : flips) out -= 2.0 * p.a()[k] * static_cast<double>(lk.config[k]);
  detail::collect_delta(p, lk, flips);
  // cosh z = e^{z'} (1 + e^{-2z'}) / 2 with z' = sign(Re z) z. Exponents are
  // summed, the bounded factors multiplied, and a single log taken at the end.
  complex prod{1.0, 0.0};
  for (int j : lk.touched) {
    complex z0 = lk.theta[j];
    complex z1 = z0 + lk.delta[j];
    if (z0.real() < 0) z0 = -z0;
    if (z1.real() < 0) z1 = -z1;
    out += z1 - z0;
    prod *= (1.0 + std::exp(-2.0 * z1)) / (1.0 + std::exp(-2.0 * z0));
    double mag = std::norm(prod);
    if (mag < 1e-200 || mag > 1e200) {
      out += detail::fast_log(prod);
      prod = complex{1.0, 0.0};
    }
  }
  return out + detail::fast_log(prod);
}

inline void update_lookup(const RbmParams& p, LookupState& lk, std::span<const int> flips) {
  detail::check_flips(lk, flips);
  detail::collect_delta(p, lk, flips);
  for (int j : lk.touched) lk.theta[j] += lk.delta[j];
  lk.config.flip(flips);
}

/// O = d log Phi / d(free parameter); tied members are summed.
inline cvec derivatives(const RbmParams& p, const LookupState& lk) {
  const auto& s = p.scheme();
  cvec out = cvec::Zero(p.n_free());
  cvec t(p.n_hidden());
  for (int j = 0; j < p.n_hidden(); ++j) t[j] = safe_tanh(lk.theta[j]);
  for (int k = 0; k < p.n_visible(); ++k) out[s.group(s.a_index(k))] += static_cast<double>(lk.config[k]);
  for (int j = 0; j < p.n_hidden(); ++j) out[s.group(s.b_index(j))] += t[j];
  for (const auto& e : s.weight_entries()) out[e.group] += static_cast<double>(lk.config[e.site]) * t[e.hidden];
  return out;
}

inline cvec derivatives(const RbmParams& p, const SpinConfig& config) {
  return derivatives(p, make_lookup(p, config));
}

inline constexpr double kDefaultInitScale = 0.05;

/// Free parameters i.i.d. complex Gaussian with standard deviation `scale`
/// per real component.
inline RbmParams random_init(SchemePtr scheme, double scale, std::uint64_t seed) {
  if (!(scale > 0.0)) throw DomainError("random_init: scale must be positive");
  RbmParams p(std::move(scheme));
  Rng rng(seed);
  std::normal_distribution<double> dist(0.0, scale);
  cvec free(p.n_free());
  for (Eigen::Index g = 0; g < free.size(); ++g) {
    double re = dist(rng);
    double im = dist(rng);
    free[g] = {re, im};
  }
  p.set_free_parameters(free);
  return p;
}

/// Adds i pi/2 to a_k on odd sites, multiplying Phi by (-1)^(down spins on
/// odd sites) up to a constant: the sign rule of bipartite antiferromagnets.
/// Needs odd and even visible biases in separate groups.
inline void add_staggered_sign(RbmParams& p) {
  const auto& s = p.scheme();
  std::vector<int> parity(static_cast<std::size_t>(p.n_free()), -1);
  cvec free = p.free_parameters();
  for (int k = 0; k < p.n_visible(); ++k) {
    int g = s.group(s.a_index(k));
    if (g < 0) throw DomainError("add_staggered_sign: visible bias is masked");
    int& seen = parity[static_cast<std::size_t>(g)];
    if (seen >= 0 && seen != k % 2)
      throw DomainError("add_staggered_sign: scheme ties odd and even visible biases");
    if (seen < 0 && k % 2 == 1) free[g] += complex{0.0, std::numbers::pi / 2};
    seen = k % 2;
  }
  p.set_free_parameters(free);
}

// --- Checkpoints.

inline SchemePtr make_scheme(TyingKind kind, int n, int m, int alpha, int range) {
  switch (kind) {
    case TyingKind::dense: return std::make_shared<const TyingScheme>(TyingScheme::dense(n, m));
    case TyingKind::short_range: return std::make_shared<const TyingScheme>(TyingScheme::short_range(n, alpha, range));
    case TyingKind::perm_symmetric: return std::make_shared<const TyingScheme>(TyingScheme::perm_symmetric(n, m));
    case TyingKind::partial_symmetric:
      return std::make_shared<const TyingScheme>(TyingScheme::partial_symmetric(n, m));
  }
  throw DomainError("unknown tying kind");
}

inline nlohmann::json checkpoint_to_json(const RbmParams& p, std::uint64_t seed) {
  const auto& s = p.scheme();
  nlohmann::json j;
  j["scheme"] = to_string(s.kind());
  j["N"] = s.n_visible();
  j["M"] = s.n_hidden();
  if (s.kind() == TyingKind::short_range) {
    j["alpha"] = s.alpha();
    j["R"] = s.range();
  }
  j["seed"] = seed;
  auto re = [](auto const& v) {
    std::vector<double> out;
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i].real());
    return out;
  };
  auto im = [](auto const& v) {
    std::vector<double> out;
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i].imag());
    return out;
  };
  nlohmann::json wr = nlohmann::json::array(), wi = nlohmann::json::array();
  for (int r = 0; r < p.n_hidden(); ++r) {
    cvec row = p.W().row(r).transpose();
    wr.push_back(re(row));
    wi.push_back(im(row));
  }
  j["params"] = {{"a_re", re(p.a())}, {"a_im", im(p.a())}, {"b_re", re(p.b())},
                 {"b_im", im(p.b())}, {"W_re", wr},         {"W_im", wi}};
  return j;
}

struct Checkpoint {
  RbmParams params;
  std::uint64_t seed;
};

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    auto kind = tying_kind_from_string(j.at("scheme").get<std::string>());
    int n = j.at("N").get<int>();
    int m = j.at("M").get<int>();
    int alpha = j.value("alpha", 0);
    int range = j.value("R", 0);
    auto scheme = make_scheme(kind, n, m, alpha, range);
    if (scheme->n_hidden() != m) throw FormatError("checkpoint: M inconsistent with alpha * N");
    const auto& pj = j.at("params");
    auto vec = [&](const char* re_key, const char* im_key, int len) {
      auto re = pj.at(re_key).get<std::vector<double>>();
      auto im = pj.at(im_key).get<std::vector<double>>();
      if (static_cast<int>(re.size()) != len || static_cast<int>(im.size()) != len)
        throw FormatError(std::string("checkpoint: ") + re_key + " has the wrong length");
      cvec v(len);
      for (int i = 0; i < len; ++i) v[i] = {re[i], im[i]};
      return v;
    };
    cvec a = vec("a_re", "a_im", n);
    cvec b = vec("b_re", "b_im", m);
    auto wr = pj.at("W_re").get<std::vector<std::vector<double>>>();
    auto wi = pj.at("W_im").get<std::vector<std::vector<double>>>();
    if (static_cast<int>(wr.size()) != m || static_cast<int>(wi.size()) != m)
      throw FormatError("checkpoint: W has the wrong number of rows");
    cmat w(m, n);
    for (int r = 0; r < m; ++r) {
      if (static_cast<int>(wr[r].size()) != n || static_cast<int>(wi[r].size()) != n)
        throw FormatError("checkpoint: W has the wrong number of columns");
      for (int c = 0; c < n; ++c) w(r, c) = {wr[r][c], wi[r][c]};
    }
    return {RbmParams::from_full(scheme, a, b, w), j.value("seed", std::uint64_t{0})};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  } catch (const DomainError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace nqsbell
