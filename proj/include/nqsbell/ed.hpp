#pragma once

// Exact diagonalization: matrix-free Pauli-sum matvec on a (sector-restricted)
// bit-string basis and a restarted Lanczos solver with full
// reorthogonalization for the lowest eigenpair.

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "nqsbell/basis.hpp"
#include "nqsbell/errors.hpp"
#include "nqsbell/random.hpp"
#include "nqsbell/rbm.hpp"
#include "nqsbell/spin_pauli.hpp"

namespace nqsbell {

inline constexpr int kMaxEdSites = 20;

/// Pauli sum compiled to bit masks, grouped by flip pattern.
class BitOperator {
 public:
  struct String {
    double coeff;
    std::uint64_t sign_mask;  // sites carrying Y or Z
    int y_count;
  };
  struct Group {
    std::uint64_t flip;
    std::vector<String> strings;
  };

  explicit BitOperator(const WeightedPauliSum& op) : n_(op.n_sites()) {
    if (n_ > 62) throw CapacityError("BitOperator: at most 62 sites");
    LocalOperator local(op);
    for (const auto& g : local.groups()) {
      Group bg{0, {}};
      for (int s : g.flips) bg.flip |= std::uint64_t{1} << s;
      for (const auto& t : g.terms) {
        String s{t.coeff, 0, 0};
        for (const auto& f : t.string.factors()) {
          if (f.axis != Axis::X) s.sign_mask |= std::uint64_t{1} << f.site;
          if (f.axis == Axis::Y) ++s.y_count;
        }
        if (s.y_count % 2) real_ = false;
        bg.strings.push_back(s);
      }
      groups_.push_back(std::move(bg));
    }
  }

  int n_sites() const { return n_; }
  /// True when every matrix element is real (even number of Y per string).
  bool is_real() const { return real_; }
  const std::vector<Group>& groups() const { return groups_; }

  /// <state ^ flip| P |state> summed over the group.
  complex element(const Group& g, std::uint64_t state) const {
    complex out{};
    for (const auto& s : g.strings) {
      double sign = (std::popcount(state & s.sign_mask) & 1) ? -1.0 : 1.0;
      out += s.coeff * sign * i_power(s.y_count);
    }
    return out;
  }

  double real_element(const Group& g, std::uint64_t state) const {
    double out = 0.0;
    for (const auto& s : g.strings) {
      double sign = (std::popcount(state & s.sign_mask) & 1) ? -1.0 : 1.0;
      out += s.coeff * sign * i_power(s.y_count).real();
    }
    return out;
  }

 private:
  int n_;
  bool real_ = true;
  std::vector<Group> groups_;
};

namespace detail {

template <class Scalar>
Scalar matrix_element(const BitOperator& op, const BitOperator::Group& g, std::uint64_t state) {
  if constexpr (std::is_same_v<Scalar, double>) return op.real_element(g, state);
  else return op.element(g, state);
}

}  // namespace detail

/// y = H x on `basis`; pull form, so rows can be split across threads.
template <class Scalar>
void apply_operator(const BitOperator& op, const Basis& basis, const std::vector<std::uint64_t>& states,
                    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x, Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& y) {
  const auto dim = static_cast<std::int64_t>(states.size());
  y.resize(dim);
  auto rows = [&](std::int64_t begin, std::int64_t end) {
    for (std::int64_t r = begin; r < end; ++r) {
      const std::uint64_t target = states[static_cast<std::size_t>(r)];
      Scalar acc{};
      for (const auto& g : op.groups()) {
        const std::uint64_t source = target ^ g.flip;
        if (!basis.contains(source)) continue;
        acc += detail::matrix_element<Scalar>(op, g, source) * x[static_cast<Eigen::Index>(basis.index_of(source))];
      }
      y[r] = acc;
    }
  };
  const unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  if (threads == 1 || dim < 4096) {
    rows(0, dim);
    return;
  }
  std::vector<std::jthread> pool;
  const std::int64_t chunk = (dim + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    std::int64_t b = t * chunk, e = std::min<std::int64_t>(dim, b + chunk);
    if (b < e) pool.emplace_back(rows, b, e);
  }
}

/// Checks that the operator never leaves the sector.
inline void check_sector_closed(const BitOperator& op, const Basis& basis) {
  if (!basis.sector()) return;
  for (std::uint64_t i = 0; i < basis.dim(); ++i) {
    std::uint64_t s = basis.state_at(i);
    for (const auto& g : op.groups()) {
      if (g.flip == 0) continue;
      std::uint64_t t = s ^ g.flip;
      if (!basis.contains(t) && std::abs(op.element(g, s)) > 0.0)
        throw DomainError("operator does not conserve total sigma-z; use the full basis");
    }
  }
}

struct EdOptions {
  int krylov_dim = 60;
  int max_restarts = 500;
  double tolerance = 1e-8;       // residual bound relative to max(1, sum |coeff|)
  std::uint64_t dense_limit = 256;
  std::uint64_t seed = 20170928;
};

struct EdResult {
  double min_eigenvalue;
  cvec eigenvector;
  double residual;
  Basis basis;
  int restarts = 0;
};

inline nlohmann::json to_json(const EdResult& r) {
  nlohmann::json j{{"min_eigenvalue", r.min_eigenvalue},
                   {"residual", r.residual},
                   {"dim", r.basis.dim()},
                   {"N", r.basis.n_sites()}};
  j["sector"] = r.basis.sector() ? nlohmann::json(*r.basis.sector()) : nlohmann::json(nullptr);
  return j;
}

namespace detail {

template <class Scalar>
EdResult lanczos(const BitOperator& op, const Basis& basis, double scale, const EdOptions& opt) {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const auto states = basis.states();
  const auto dim = static_cast<Eigen::Index>(states.size());
  const int m = static_cast<int>(std::min<Eigen::Index>(opt.krylov_dim, dim));
  const double tol = opt.tolerance * scale;

  Rng rng(opt.seed);
  Vec x(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    if constexpr (std::is_same_v<Scalar, double>) x[i] = uniform01(rng) - 0.5;
    else x[i] = Scalar(uniform01(rng) - 0.5, uniform01(rng) - 0.5);
  }
  x.normalize();

  Mat v(dim, m + 1);
  Vec w(dim), hx(dim);
  double theta = 0.0;
  double residual = std::numeric_limits<double>::infinity();
  for (int restart = 0; restart < opt.max_restarts; ++restart) {
    std::vector<double> alpha, beta;
    v.col(0) = x;
    int steps = 0;
    for (int j = 0; j < m; ++j) {
      Vec col = v.col(j);
      apply_operator<Scalar>(op, basis, states, col, w);
      alpha.push_back(std::real(col.dot(w)));
      // Two passes of classical Gram-Schmidt against the whole basis.
      for (int pass = 0; pass < 2; ++pass) {
        auto block = v.leftCols(j + 1);
        Vec coeffs = block.adjoint() * w;
        w.noalias() -= block * coeffs;
      }
      ++steps;
      double b = w.norm();
      if (j + 1 == m || b < 1e-12 * scale) break;
      beta.push_back(b);
      v.col(j + 1) = w / b;
    }
    Eigen::VectorXd diag = Eigen::Map<Eigen::VectorXd>(alpha.data(), steps);
    Eigen::VectorXd sub(std::max(steps - 1, 0));
    for (int i = 0; i + 1 < steps; ++i) sub[i] = beta[i];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri;
    tri.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    theta = tri.eigenvalues()[0];
    Eigen::VectorXd y = tri.eigenvectors().col(0);
    x = v.leftCols(steps) * y.cast<Scalar>();
    x.normalize();
    apply_operator<Scalar>(op, basis, states, x, hx);
    theta = std::real(x.dot(hx));
    residual = (hx - theta * x).norm();
    if (residual <= tol) {
      return {theta, x.template cast<complex>(), residual, basis, restart};
    }
  }
  throw NumericError("min_eigenpair: Lanczos did not converge, residual " + std::to_string(residual) +
                     " after " + std::to_string(opt.max_restarts) + " restarts");
}

inline EdResult dense_min(const BitOperator& op, const Basis& basis) {
  const auto states = basis.states();
  const auto dim = static_cast<Eigen::Index>(states.size());
  cmat h = cmat::Zero(dim, dim);
  for (Eigen::Index c = 0; c < dim; ++c)
    for (const auto& g : op.groups()) {
      std::uint64_t t = states[static_cast<std::size_t>(c)] ^ g.flip;
      if (!basis.contains(t)) continue;
      h(static_cast<Eigen::Index>(basis.index_of(t)), c) += op.element(g, states[static_cast<std::size_t>(c)]);
    }
  Eigen::SelfAdjointEigenSolver<cmat> es(h);
  cvec x = es.eigenvectors().col(0);
  double e = es.eigenvalues()[0];
  double residual = (h * x - e * x).norm();
  return {e, x, residual, basis, 0};
}

}  // namespace detail

/// Lowest eigenvalue and eigenvector of `op`, optionally inside a fixed
/// total-sigma-z sector.
inline EdResult min_eigenpair(const WeightedPauliSum& op, std::optional<int> sector = std::nullopt,
                              const EdOptions& opt = {}) {
  if (op.n_sites() > kMaxEdSites)
    throw CapacityError("min_eigenpair: N = " + std::to_string(op.n_sites()) + " exceeds " +
                        std::to_string(kMaxEdSites));
  Basis basis(op.n_sites(), sector);
  BitOperator bop(op);
  check_sector_closed(bop, basis);
  const double scale = std::max(1.0, op.norm_bound());
  if (basis.dim() <= opt.dense_limit) return detail::dense_min(bop, basis);
  if (bop.is_real()) return detail::lanczos<double>(bop, basis, scale, opt);
  return detail::lanczos<complex>(bop, basis, scale, opt);
}

/// <H^2> - <H>^2 for a normalized state on `basis`.
inline double eigen_variance(const WeightedPauliSum& op, const Basis& basis, const cvec& state) {
  BitOperator bop(op);
  auto states = basis.states();
  if (static_cast<std::uint64_t>(state.size()) != basis.dim()) throw DomainError("eigen_variance: state size mismatch");
  cvec hx;
  apply_operator<complex>(bop, basis, states, state, hx);
  double mean = std::real(state.dot(hx));
  return hx.squaredNorm() - mean * mean;
}

/// Dense matrix <out|op|in> assembled through apply_string (small N only).
inline cmat dense_matrix(const WeightedPauliSum& op) {
  const int n = op.n_sites();
  if (n > 12) throw CapacityError("dense_matrix: N must be <= 12");
  const auto dim = Eigen::Index{1} << n;
  cmat h = cmat::Zero(dim, dim);
  for (Eigen::Index c = 0; c < dim; ++c) {
    auto cfg = SpinConfig::from_bits(static_cast<std::uint64_t>(c), n);
    for (const auto& t : op.terms()) {
      auto [out, phase] = apply_string(t.string, cfg);
      h(static_cast<Eigen::Index>(out.to_bits()), c) += t.coeff * phase;
    }
  }
  return h;
}

/// An explicit amplitude table, usable anywhere an RBM state is.
struct TabulatedState {
  Basis basis;
  cvec amplitudes;
};

inline TabulatedState tabulate(const EdResult& ed) { return {ed.basis, ed.eigenvector}; }

inline complex log_amplitude(const TabulatedState& s, const SpinConfig& config) {
  std::uint64_t bits = config.to_bits();
  if (!s.basis.contains(bits)) return {-std::numeric_limits<double>::infinity(), 0.0};
  complex a = s.amplitudes[static_cast<Eigen::Index>(s.basis.index_of(bits))];
  if (a == complex{}) return {-std::numeric_limits<double>::infinity(), 0.0};
  return std::log(a);
}

/// |<v|Phi>|^2 / <Phi|Phi> with <Phi|Phi> taken over the full space.
template <class State>
double rbm_overlap(const State& state, const EdResult& ed) {
  const int n = ed.basis.n_sites();
  if (n > kMaxEdSites) throw CapacityError("rbm_overlap: N too large");
  const std::uint64_t full = std::uint64_t{1} << n;
  std::vector<complex> logs(full);
  double top = -std::numeric_limits<double>::infinity();
  for (std::uint64_t s = 0; s < full; ++s) {
    logs[s] = log_amplitude(state, SpinConfig::from_bits(s, n));
    top = std::max(top, logs[s].real());
  }
  double norm = 0.0;
  for (const auto& l : logs) norm += std::exp(2.0 * (l.real() - top));
  complex overlap{};
  auto states = ed.basis.states();
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto& l = logs[states[i]];
    if (std::isinf(l.real())) continue;
    overlap += std::conj(ed.eigenvector[static_cast<Eigen::Index>(i)]) * std::exp(l - top);
  }
  return std::norm(overlap) / (norm * ed.eigenvector.squaredNorm());
}

inline double relative_error(double value, double reference) {
  if (reference == 0.0) throw DomainError("relative_error: zero reference");
  return std::abs(value - reference) / std::abs(reference);
}

/// Writes the eigenvector as interleaved little-endian float64 (re, im) pairs
/// plus a JSON sidecar describing the layout.
inline void write_eigenvector(const EdResult& r, const std::filesystem::path& bin_path) {
  static_assert(std::endian::native == std::endian::little, "eigenvector dump assumes a little-endian host");
  std::ofstream out(bin_path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + bin_path.string());
  for (Eigen::Index i = 0; i < r.eigenvector.size(); ++i) {
    double re = r.eigenvector[i].real(), im = r.eigenvector[i].imag();
    out.write(reinterpret_cast<const char*>(&re), sizeof re);
    out.write(reinterpret_cast<const char*>(&im), sizeof im);
  }
  nlohmann::json side = to_json(r);
  side["dtype"] = "float64";
  side["byte_order"] = "little";
  side["layout"] = "interleaved_complex";
  side["length"] = r.eigenvector.size();
  side["basis_order"] = "ascending bit strings, site k at bit k-1 (1-based), bit 1 = spin down";
  side["data"] = bin_path.filename().string();
  std::ofstream meta(std::filesystem::path(bin_path).replace_extension(".json"));
  meta << side.dump(2) << '\n';
}

}  // namespace nqsbell
