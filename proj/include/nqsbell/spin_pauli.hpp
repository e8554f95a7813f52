#pragma once

// Spin configurations in the sigma-z basis and real-weighted sums of Pauli
// strings.
//
// Conventions used throughout the library:
//   * sites are 0-based in code and 1-based in every text/JSON format;
//   * sigma = +1 is the first basis vector of a site, i.e. bit 0;
//   * a configuration is encoded as an integer with site k at bit k;
//   * X|s> = |-s>,  Y|s> = i*s |-s>,  Z|s> = s |s>.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nqsbell/errors.hpp"

namespace nqsbell {

using complex = std::complex<double>;

class SpinConfig {
 public:
  SpinConfig() = default;

  explicit SpinConfig(std::vector<std::int8_t> values) : values_(std::move(values)) {
    if (values_.empty()) throw DomainError("SpinConfig: empty configuration");
    for (auto v : values_)
      if (v != 1 && v != -1) throw DomainError("SpinConfig: entries must be +1 or -1");
  }

  static SpinConfig all_up(int n) {
    if (n < 1) throw DomainError("SpinConfig: size must be positive");
    return SpinConfig(std::vector<std::int8_t>(static_cast<std::size_t>(n), 1));
  }

  static SpinConfig from_bits(std::uint64_t bits, int n) {
    if (n < 1 || n > 64) throw DomainError("SpinConfig::from_bits: size must be in 1..64");
    std::vector<std::int8_t> v(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) v[k] = ((bits >> k) & 1u) ? -1 : 1;
    return SpinConfig(std::move(v));
  }

  std::uint64_t to_bits() const {
    if (size() > 64) throw DomainError("SpinConfig::to_bits: more than 64 sites");
    std::uint64_t bits = 0;
    for (int k = 0; k < size(); ++k)
      if (values_[k] < 0) bits |= std::uint64_t{1} << k;
    return bits;
  }

  int size() const { return static_cast<int>(values_.size()); }
  int operator[](int site) const { return values_[static_cast<std::size_t>(site)]; }
  void flip(int site) { values_[static_cast<std::size_t>(site)] *= -1; }

  void flip(std::span<const int> sites) {
    for (int s : sites) flip(s);
  }

  /// Total sigma-z.
  int magnetization() const {
    int m = 0;
    for (auto v : values_) m += v;
    return m;
  }

  std::span<const std::int8_t> values() const { return values_; }

  friend bool operator==(const SpinConfig&, const SpinConfig&) = default;

 private:
  std::vector<std::int8_t> values_;
};

enum class Axis : std::uint8_t { X, Y, Z };

inline char axis_name(Axis a) {
  switch (a) {
    case Axis::X: return 'X';
    case Axis::Y: return 'Y';
    case Axis::Z: return 'Z';
  }
  return '?';
}

struct PauliFactor {
  int site;
  Axis axis;
  friend auto operator<=>(const PauliFactor&, const PauliFactor&) = default;
};

/// Tensor product of single-site Pauli matrices on strictly increasing sites.
/// The empty string is the identity.
class PauliString {
 public:
  PauliString() = default;

  explicit PauliString(std::vector<PauliFactor> factors) : factors_(std::move(factors)) {
    std::sort(factors_.begin(), factors_.end(),
              [](const PauliFactor& l, const PauliFactor& r) { return l.site < r.site; });
    for (std::size_t i = 0; i < factors_.size(); ++i) {
      if (factors_[i].site < 0) throw MalformedOperator("PauliString: negative site");
      if (i > 0 && factors_[i].site == factors_[i - 1].site)
        throw MalformedOperator("PauliString: repeated site " + std::to_string(factors_[i].site + 1));
    }
  }

  PauliString(std::initializer_list<PauliFactor> factors)
      : PauliString(std::vector<PauliFactor>(factors)) {}

  const std::vector<PauliFactor>& factors() const { return factors_; }
  bool is_identity() const { return factors_.empty(); }
  bool is_diagonal() const {
    return std::all_of(factors_.begin(), factors_.end(),
                       [](const PauliFactor& f) { return f.axis == Axis::Z; });
  }
  int max_site() const { return factors_.empty() ? -1 : factors_.back().site; }

  /// Sites touched by X or Y, in increasing order.
  std::vector<int> flip_sites() const {
    std::vector<int> out;
    for (const auto& f : factors_)
      if (f.axis != Axis::Z) out.push_back(f.site);
    return out;
  }

  std::string to_string() const {
    if (factors_.empty()) return "I";
    std::string s;
    for (std::size_t i = 0; i < factors_.size(); ++i) {
      if (i) s += ' ';
      s += axis_name(factors_[i].axis);
      s += '@';
      s += std::to_string(factors_[i].site + 1);
    }
    return s;
  }

  friend auto operator<=>(const PauliString&, const PauliString&) = default;
  friend bool operator==(const PauliString&, const PauliString&) = default;

 private:
  std::vector<PauliFactor> factors_;
};

/// Exact unit phase i^power.
inline complex i_power(int power) {
  switch (((power % 4) + 4) % 4) {
    case 0: return {1.0, 0.0};
    case 1: return {0.0, 1.0};
    case 2: return {-1.0, 0.0};
    default: return {0.0, -1.0};
  }
}

/// <config'|P|config> where config' is the connected configuration.
inline complex string_phase(const PauliString& string, std::span<const std::int8_t> config) {
  int power = 0;
  int sign = 1;
  for (const auto& f : string.factors()) {
    int s = config[static_cast<std::size_t>(f.site)];
    switch (f.axis) {
      case Axis::X: break;
      case Axis::Y: power += 1; sign *= s; break;
      case Axis::Z: sign *= s; break;
    }
  }
  return static_cast<double>(sign) * i_power(power);
}

/// Applies a Pauli string to a basis state. Returns the unique connected
/// state and the matrix element <out|P|in>.
inline std::pair<SpinConfig, complex> apply_string(const PauliString& string, const SpinConfig& config) {
  if (string.max_site() >= config.size())
    throw MalformedOperator("apply_string: site " + std::to_string(string.max_site() + 1) +
                            " outside a system of " + std::to_string(config.size()) + " sites");
  complex phase = string_phase(string, config.values());
  SpinConfig out = config;
  for (const auto& f : string.factors())
    if (f.axis != Axis::Z) out.flip(f.site);
  return {std::move(out), phase};
}

struct PauliTerm {
  double coeff;
  PauliString string;
};

/// Hermitian operator sum_s coeff_s P_s kept in canonical form: strings
/// sorted and unique, no zero coefficients.
class WeightedPauliSum {
 public:
  WeightedPauliSum() = default;

  WeightedPauliSum(int n_sites, std::vector<PauliTerm> terms) : n_sites_(n_sites) {
    if (n_sites < 1) throw MalformedOperator("WeightedPauliSum: system size must be positive");
    std::map<PauliString, double> merged;
    for (auto& t : terms) {
      if (!std::isfinite(t.coeff)) throw MalformedOperator("WeightedPauliSum: non-finite coefficient");
      if (t.string.max_site() >= n_sites)
        throw MalformedOperator("WeightedPauliSum: site " + std::to_string(t.string.max_site() + 1) +
                                " outside a system of " + std::to_string(n_sites) + " sites");
      merged[t.string] += t.coeff;
    }
    for (auto& [s, c] : merged)
      if (c != 0.0) terms_.push_back({c, s});
  }

  int n_sites() const { return n_sites_; }
  const std::vector<PauliTerm>& terms() const { return terms_; }
  std::size_t size() const { return terms_.size(); }
  bool empty() const { return terms_.empty(); }

  /// Sum of |coeff|; an upper bound on the operator norm.
  double norm_bound() const {
    double s = 0.0;
    for (const auto& t : terms_) s += std::abs(t.coeff);
    return s;
  }

 private:
  int n_sites_ = 0;
  std::vector<PauliTerm> terms_;
};

/// Re-canonicalizes a sum: merges identical strings, drops zeros.
inline WeightedPauliSum merge_terms(const WeightedPauliSum& sum) {
  return WeightedPauliSum(sum.n_sites(), sum.terms());
}

inline WeightedPauliSum merge_terms(int n_sites, std::vector<PauliTerm> terms) {
  return WeightedPauliSum(n_sites, std::move(terms));
}

// Text format: one term per line, "<coeff> <axis>@<site> ...", sites 1-based.
// Blank lines and lines starting with '#' are ignored.

inline WeightedPauliSum parse_operator(std::string_view text, int n_sites) {
  std::vector<PauliTerm> terms;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    double coeff = 0.0;
    try {
      std::size_t used = 0;
      coeff = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw MalformedOperator("line " + std::to_string(line_no) + ": bad coefficient '" + tok + "'");
    }
    std::vector<PauliFactor> factors;
    while (ls >> tok) {
      if (tok.size() < 3 || tok[1] != '@')
        throw MalformedOperator("line " + std::to_string(line_no) + ": bad factor '" + tok + "'");
      Axis axis;
      switch (tok[0]) {
        case 'X': case 'x': axis = Axis::X; break;
        case 'Y': case 'y': axis = Axis::Y; break;
        case 'Z': case 'z': axis = Axis::Z; break;
        default:
          throw MalformedOperator("line " + std::to_string(line_no) + ": unknown axis in '" + tok + "'");
      }
      int site = 0;
      auto [ptr, ec] = std::from_chars(tok.data() + 2, tok.data() + tok.size(), site);
      if (ec != std::errc{} || ptr != tok.data() + tok.size() || site < 1 || site > n_sites)
        throw MalformedOperator("line " + std::to_string(line_no) + ": site out of range in '" + tok + "'");
      factors.push_back({site - 1, axis});
    }
    terms.push_back({coeff, PauliString(std::move(factors))});
  }
  return WeightedPauliSum(n_sites, std::move(terms));
}

inline std::string format_operator(const WeightedPauliSum& op) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& t : op.terms()) {
    out << t.coeff;
    for (const auto& f : t.string.factors()) out << ' ' << axis_name(f.axis) << '@' << f.site + 1;
    out << '\n';
  }
  return out.str();
}

/// Terms of an operator grouped by the set of sites they flip. All strings
/// in a group connect a configuration to the same partner, so one amplitude
/// ratio serves the whole group.
class LocalOperator {
 public:
  struct Group {
    std::vector<int> flips;
    std::vector<PauliTerm> terms;
  };

  LocalOperator() = default;

  explicit LocalOperator(const WeightedPauliSum& op) : n_sites_(op.n_sites()) {
    std::map<std::vector<int>, std::size_t> index;
    for (const auto& t : op.terms()) {
      auto flips = t.string.flip_sites();
      auto [it, inserted] = index.emplace(flips, groups_.size());
      if (inserted) groups_.push_back({std::move(flips), {}});
      groups_[it->second].terms.push_back(t);
    }
  }

  int n_sites() const { return n_sites_; }
  const std::vector<Group>& groups() const { return groups_; }

  /// <config|op|config'> for the group partner config'. Each P is Hermitian,
  /// so this is the conjugate of the forward element <config'|P|config>.
  static complex row_element(const Group& g, std::span<const std::int8_t> config) {
    complex sum{0.0, 0.0};
    for (const auto& t : g.terms) sum += t.coeff * std::conj(string_phase(t.string, config));
    return sum;
  }

 private:
  int n_sites_ = 0;
  std::vector<Group> groups_;
};

}  // namespace nqsbell
