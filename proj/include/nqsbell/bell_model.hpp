#pragma once

// Bell inequalities, dichotomic measurement settings, and their compilation
// into Pauli-sum Bell operators.
//
// Parties and settings are 0-based in code; the JSON interchange format uses
// 1-based parties and 0-based settings.

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nqsbell/errors.hpp"
#include "nqsbell/random.hpp"
#include "nqsbell/spin_pauli.hpp"

namespace nqsbell {

/// Observable nx X + ny Y + nz Z with a unit Bloch vector, so outcomes are +-1.
struct Measurement {
  double nx = 0.0;
  double ny = 0.0;
  double nz = 1.0;

  static Measurement from_bloch(double nx, double ny, double nz) {
    Measurement m{nx, ny, nz};
    double norm2 = nx * nx + ny * ny + nz * nz;
    if (!(std::abs(norm2 - 1.0) <= 1e-12))
      throw DomainError("Measurement: Bloch vector must have unit norm");
    return m;
  }
  static Measurement sigma_x() { return {1.0, 0.0, 0.0}; }
  static Measurement sigma_z() { return {0.0, 0.0, 1.0}; }
  /// cos(t) Z + sin(t) X.
  static Measurement xz(double t) { return {std::sin(t), 0.0, std::cos(t)}; }
};

struct Slot {
  int party;
  int setting;
  friend auto operator<=>(const Slot&, const Slot&) = default;
};

class MeasurementAssignment {
 public:
  MeasurementAssignment() = default;
  MeasurementAssignment(int n_parties, int n_settings)
      : n_parties_(n_parties), n_settings_(n_settings),
        table_(static_cast<std::size_t>(n_parties * n_settings)) {
    if (n_parties < 1 || n_settings < 1) throw DomainError("MeasurementAssignment: empty shape");
  }

  int n_parties() const { return n_parties_; }
  int n_settings() const { return n_settings_; }

  void set(Slot s, Measurement m) { table_.at(index(s)) = m; }

  bool has(Slot s) const {
    return s.party >= 0 && s.party < n_parties_ && s.setting >= 0 && s.setting < n_settings_ &&
           table_[index(s)].has_value();
  }

  const Measurement& at(Slot s) const {
    if (!has(s))
      throw IncompleteAssignment("no measurement for party " + std::to_string(s.party + 1) + ", setting " +
                                 std::to_string(s.setting));
    return *table_[index(s)];
  }

 private:
  std::size_t index(Slot s) const { return static_cast<std::size_t>(s.party * n_settings_ + s.setting); }

  int n_parties_ = 0;
  int n_settings_ = 0;
  std::vector<std::optional<Measurement>> table_;
};

struct CorrelatorTerm {
  double coeff;
  std::vector<Slot> slots;
};

/// I = sum_t coeff_t <prod_{slots} M> >= classical_bound.
struct BellInequality {
  std::string name;
  int n_parties = 0;
  int n_settings = 0;
  std::vector<CorrelatorTerm> terms;
  double classical_bound = 0.0;

  void validate() const {
    for (const auto& t : terms) {
      if (!std::isfinite(t.coeff)) throw DomainError(name + ": non-finite coefficient");
      for (std::size_t i = 0; i < t.slots.size(); ++i) {
        const auto& s = t.slots[i];
        if (s.party < 0 || s.party >= n_parties || s.setting < 0 || s.setting >= n_settings)
          throw DomainError(name + ": correlator slot out of range");
        for (std::size_t j = 0; j < i; ++j)
          if (t.slots[j].party == s.party) throw DomainError(name + ": party repeated within a correlator");
      }
    }
  }
};

// --- I1: nearest-neighbour two-body inequality, via its reduced XXZ operator.

inline void check_i1_domain(int n, double delta, double Delta) {
  if (n < 2 || n % 2 != 0) throw DomainError("I1: N must be even and >= 2");
  if (!(std::abs(delta) <= 1.0)) throw DomainError("I1: |delta| must be <= 1");
  if (!(std::abs(Delta) <= 3.0)) throw DomainError("I1: |Delta| must be <= 3");
}

/// Bond weight 4(1 + (-1)^k delta)/sqrt(3) for the 0-based bond k.
inline double i1_bond_weight(int bond, double delta) {
  double parity = (bond % 2 == 0) ? 1.0 : -1.0;
  return 4.0 * (1.0 + parity * delta) / std::numbers::sqrt3;
}

/// Open-chain H = sum_k g_k(delta) [X_k X_k+1 + Y_k Y_k+1 + Delta Z_k Z_k+1].
inline WeightedPauliSum build_i1_hamiltonian(int n, double delta, double Delta) {
  check_i1_domain(n, delta, Delta);
  std::vector<PauliTerm> terms;
  for (int k = 0; k + 1 < n; ++k) {
    double g = i1_bond_weight(k, delta);
    terms.push_back({g, PauliString{{k, Axis::X}, {k + 1, Axis::X}}});
    terms.push_back({g, PauliString{{k, Axis::Y}, {k + 1, Axis::Y}}});
    terms.push_back({g * Delta, PauliString{{k, Axis::Z}, {k + 1, Axis::Z}}});
  }
  return WeightedPauliSum(n, std::move(terms));
}

inline double classical_bound_i1(int n, double delta, double Delta) {
  check_i1_domain(n, delta, Delta);
  double d = std::abs(Delta);
  return d <= 2.0 ? -(4.0 + 2.0 * d) * n : -4.0 * d * n;
}

// --- I2: permutation-invariant two-body inequality.

/// I2 = -2 S0 - S01 + (S00 + S11)/2 with S_ab summed over ordered pairs k != l.
inline BellInequality build_i2(int n) {
  if (n < 2) throw DomainError("I2: N must be >= 2");
  BellInequality ineq{"i2", n, 2, {}, -2.0 * n};
  for (int k = 0; k < n; ++k) ineq.terms.push_back({-2.0, {{k, 0}}});
  for (int k = 0; k < n; ++k)
    for (int l = 0; l < n; ++l) {
      if (k == l) continue;
      ineq.terms.push_back({-1.0, {{k, 0}, {l, 1}}});
      ineq.terms.push_back({0.5, {{k, 0}, {l, 0}}});
      ineq.terms.push_back({0.5, {{k, 1}, {l, 1}}});
    }
  return ineq;
}

/// The rotation angles drawn for each party, in party order.
inline std::vector<double> i2_random_angles(int n, double theta, double eps, std::uint64_t seed) {
  if (!(eps >= 0.0)) throw DomainError("I2 settings: eps must be >= 0");
  Rng rng(seed);
  std::vector<double> angles(static_cast<std::size_t>(n));
  for (auto& a : angles) a = theta - eps + 2.0 * eps * uniform01(rng);
  return angles;
}

/// M0 = Z and M1 = cos(t_k) Z + sin(t_k) X with t_k uniform on [theta - eps, theta + eps].
inline MeasurementAssignment i2_settings_random(int n, double theta, double eps, std::uint64_t seed) {
  auto angles = i2_random_angles(n, theta, eps, seed);
  MeasurementAssignment m(n, 2);
  for (int k = 0; k < n; ++k) {
    m.set({k, 0}, Measurement::sigma_z());
    m.set({k, 1}, Measurement::xz(angles[k]));
  }
  return m;
}

// --- I3: CHSH-like inequality with N-body correlators.

inline BellInequality build_i3(int n) {
  if (n < 2) throw DomainError("I3: N must be >= 2");
  BellInequality ineq{"i3", n, 2, {}, -2.0};
  std::vector<Slot> all0, m1_rest0;
  for (int k = 0; k < n; ++k) {
    all0.push_back({k, 0});
    m1_rest0.push_back({k, k == 0 ? 1 : 0});
  }
  ineq.terms.push_back({-1.0, all0});
  ineq.terms.push_back({-1.0, m1_rest0});
  double w = 1.0 / (n - 1);
  for (int k = 1; k < n; ++k) {
    ineq.terms.push_back({w, {{0, 0}, {k, 1}}});
    ineq.terms.push_back({-w, {{0, 1}, {k, 1}}});
  }
  return ineq;
}

/// Party 1: M0 = Z, M1 = cos(theta) X + sin(theta) Z. Others: M0 = Z, M1 = X.
inline MeasurementAssignment i3_settings(int n, double theta) {
  MeasurementAssignment m(n, 2);
  m.set({0, 0}, Measurement::sigma_z());
  m.set({0, 1}, Measurement{std::cos(theta), 0.0, std::sin(theta)});
  for (int k = 1; k < n; ++k) {
    m.set({k, 0}, Measurement::sigma_z());
    m.set({k, 1}, Measurement::sigma_x());
  }
  return m;
}

/// Bell operator sum_t coeff_t (x) M. Every observable is distributed over
/// its X and Z components, so a correlator of arity m yields at most 2^m
/// strings before merging.
inline WeightedPauliSum compile(const BellInequality& ineq, const MeasurementAssignment& settings) {
  ineq.validate();
  std::vector<PauliTerm> out;
  for (const auto& term : ineq.terms) {
    for (const auto& s : term.slots)
      if (settings.at(s).ny != 0.0)
        throw UnsupportedObservable("compile: sigma-y components are not supported (party " +
                                    std::to_string(s.party + 1) + ")");
    // Expand the product one slot at a time.
    std::vector<PauliTerm> partial{{term.coeff, PauliString{}}};
    for (const auto& s : term.slots) {
      const auto& m = settings.at(s);
      std::vector<PauliTerm> next;
      next.reserve(partial.size() * 2);
      for (const auto& p : partial) {
        for (auto [w, axis] : {std::pair{m.nx, Axis::X}, std::pair{m.nz, Axis::Z}}) {
          if (w == 0.0) continue;
          auto factors = p.string.factors();
          factors.push_back({s.party, axis});
          next.push_back({p.coeff * w, PauliString(std::move(factors))});
        }
      }
      partial = std::move(next);
    }
    for (auto& p : partial) out.push_back(std::move(p));
  }
  return WeightedPauliSum(ineq.n_parties, std::move(out));
}

inline constexpr int kMaxBruteForceBits = 24;

/// Minimum of I over all deterministic local strategies (each slot -> +-1).
inline double brute_force_classical_min(const BellInequality& ineq) {
  ineq.validate();
  const int bits = ineq.n_parties * ineq.n_settings;
  if (bits > kMaxBruteForceBits)
    throw CapacityError("brute_force_classical_min: N*K = " + std::to_string(bits) + " exceeds " +
                        std::to_string(kMaxBruteForceBits));
  // Flatten slots to bit positions once.
  struct Flat {
    double coeff;
    std::uint32_t mask;
  };
  std::vector<Flat> flat;
  for (const auto& t : ineq.terms) {
    std::uint32_t mask = 0;
    for (const auto& s : t.slots) mask |= std::uint32_t{1} << (s.party * ineq.n_settings + s.setting);
    flat.push_back({t.coeff, mask});
  }
  double best = std::numeric_limits<double>::infinity();
  const std::uint32_t count = std::uint32_t{1} << bits;
  for (std::uint32_t a = 0; a < count; ++a) {
    // bit set <-> outcome -1, so each product is (-1)^popcount(a & mask).
    double value = 0.0;
    for (const auto& f : flat) value += (std::popcount(a & f.mask) & 1) ? -f.coeff : f.coeff;
    best = std::min(best, value);
  }
  return best;
}

// --- JSON interchange.

/// An inequality together with optional settings and generator parameters.
/// I1 is stored by its parameters only (delta, Delta) with an empty term list.
struct InequalityDocument {
  BellInequality inequality;
  std::optional<MeasurementAssignment> settings;
  std::optional<std::uint64_t> seed;
  nlohmann::json params = nlohmann::json::object();
};

inline nlohmann::json to_json(const InequalityDocument& doc) {
  const auto& ineq = doc.inequality;
  nlohmann::json j;
  j["name"] = ineq.name;
  j["N"] = ineq.n_parties;
  j["K"] = ineq.n_settings;
  auto terms = nlohmann::json::array();
  for (const auto& t : ineq.terms) {
    auto sites = nlohmann::json::array();
    for (const auto& s : t.slots) sites.push_back({s.party + 1, s.setting});
    terms.push_back({{"coeff", t.coeff}, {"sites", sites}});
  }
  j["terms"] = terms;
  j["classical_bound"] = ineq.classical_bound;
  auto settings = nlohmann::json::array();
  if (doc.settings) {
    for (int p = 0; p < doc.settings->n_parties(); ++p)
      for (int k = 0; k < doc.settings->n_settings(); ++k) {
        if (!doc.settings->has({p, k})) continue;
        const auto& m = doc.settings->at({p, k});
        settings.push_back({{"party", p + 1}, {"setting", k}, {"bloch", {m.nx, m.ny, m.nz}}});
      }
  }
  j["settings"] = settings;
  if (doc.seed) j["seed"] = *doc.seed;
  if (!doc.params.empty()) j["params"] = doc.params;
  return j;
}

inline InequalityDocument inequality_from_json(const nlohmann::json& j) {
  try {
    InequalityDocument doc;
    auto& ineq = doc.inequality;
    ineq.name = j.at("name").get<std::string>();
    ineq.n_parties = j.at("N").get<int>();
    ineq.n_settings = j.at("K").get<int>();
    ineq.classical_bound = j.at("classical_bound").get<double>();
    for (const auto& t : j.at("terms")) {
      CorrelatorTerm term{t.at("coeff").get<double>(), {}};
      for (const auto& s : t.at("sites")) term.slots.push_back({s.at(0).get<int>() - 1, s.at(1).get<int>()});
      ineq.terms.push_back(std::move(term));
    }
    if (!ineq.terms.empty()) ineq.validate();
    if (j.contains("settings") && !j.at("settings").empty()) {
      if (ineq.n_parties < 1 || ineq.n_settings < 1) throw FormatError("settings given for an empty shape");
      MeasurementAssignment m(ineq.n_parties, ineq.n_settings);
      for (const auto& s : j.at("settings")) {
        int party = s.at("party").get<int>() - 1;
        int setting = s.at("setting").get<int>();
        if (party < 0 || party >= ineq.n_parties || setting < 0 || setting >= ineq.n_settings)
          throw FormatError("setting entry out of range");
        const auto& b = s.at("bloch");
        m.set({party, setting}, Measurement::from_bloch(b.at(0), b.at(1), b.at(2)));
      }
      doc.settings = std::move(m);
    }
    if (j.contains("seed")) doc.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("params")) doc.params = j.at("params");
    return doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("inequality document: ") + e.what());
  }
}

}  // namespace nqsbell
