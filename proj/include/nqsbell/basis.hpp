#pragma once

// Computational basis of N spins, optionally restricted to a fixed total
// sigma-z. States are bit strings (site k at bit k, bit set <-> sigma = -1).

#include <bit>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nqsbell/errors.hpp"

namespace nqsbell {

/// Number of down spins for total sigma-z `sector`, or throws.
inline int down_count(int n_sites, int sector) {
  if ((n_sites - sector) % 2 != 0 || sector < -n_sites || sector > n_sites)
    throw DomainError("sector " + std::to_string(sector) + " is impossible for " + std::to_string(n_sites) +
                      " sites");
  return (n_sites - sector) / 2;
}

class Basis {
 public:
  Basis(int n_sites, std::optional<int> sector) : n_(n_sites), sector_(sector) {
    if (n_sites < 1 || n_sites > 62) throw CapacityError("Basis: system size must be in 1..62");
    if (sector) {
      k_ = down_count(n_sites, *sector);
      binom_.assign(static_cast<std::size_t>(n_ + 1), std::vector<std::uint64_t>(static_cast<std::size_t>(k_ + 2), 0));
      for (int i = 0; i <= n_; ++i) {
        binom_[i][0] = 1;
        for (int j = 1; j <= std::min(i, k_ + 1); ++j)
          binom_[i][j] = binom_[i - 1][j - 1] + (j <= i - 1 ? binom_[i - 1][j] : 0);
      }
      dim_ = binom_[n_][k_];
    } else {
      dim_ = std::uint64_t{1} << n_;
    }
  }

  int n_sites() const { return n_; }
  const std::optional<int>& sector() const { return sector_; }
  std::uint64_t dim() const { return dim_; }

  bool contains(std::uint64_t state) const {
    if (state >> n_) return false;
    return !sector_ || std::popcount(state) == k_;
  }

  /// Position of `state` in the ascending list of basis states.
  std::uint64_t index_of(std::uint64_t state) const {
    if (!sector_) return state;
    // Combinatorial number system over the positions of set bits.
    std::uint64_t idx = 0;
    int seen = 0;
    for (int bit = 0; bit < n_; ++bit)
      if ((state >> bit) & 1u) {
        ++seen;
        idx += binom_[bit][seen];
      }
    return idx;
  }

  std::uint64_t state_at(std::uint64_t index) const {
    if (!sector_) return index;
    std::uint64_t state = 0;
    std::uint64_t rest = index;
    for (int remaining = k_; remaining > 0; --remaining) {
      int bit = remaining - 1;
      while (bit + 1 < n_ && binom_[bit + 1][remaining] <= rest) ++bit;
      rest -= binom_[bit][remaining];
      state |= std::uint64_t{1} << bit;
    }
    return state;
  }

  std::vector<std::uint64_t> states() const {
    std::vector<std::uint64_t> out;
    out.reserve(static_cast<std::size_t>(dim_));
    for (std::uint64_t i = 0; i < dim_; ++i) out.push_back(state_at(i));
    return out;
  }

 private:
  int n_;
  std::optional<int> sector_;
  int k_ = 0;
  std::uint64_t dim_ = 0;
  std::vector<std::vector<std::uint64_t>> binom_;
};

}  // namespace nqsbell
