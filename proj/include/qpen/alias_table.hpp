#pragma once

#include "qpen/errors.hpp"
#include "qpen/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace qpen {

// Walker/Vose alias table: O(s) build, O(1) categorical draws.
class AliasTable {
 public:
  AliasTable() = default;

  explicit AliasTable(std::span<const double> probabilities) {
    const std::size_t n = probabilities.size();
    if (n == 0) throw UsageError("alias table: empty distribution");
    double total = 0;
    for (double p : probabilities) {
      if (!(p >= 0)) throw UsageError("alias table: negative or NaN probability");
      total += p;
    }
    if (!(total > 0)) throw UsageError("alias table: probabilities sum to zero");

    prob_.assign(n, 0.0);
    alias_.assign(n, 0);
    std::vector<double> scaled(n);
    std::vector<std::uint32_t> small, large;
    for (std::size_t i = 0; i < n; ++i) {
      scaled[i] = probabilities[i] * static_cast<double>(n) / total;
      (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
    }
    while (!small.empty() && !large.empty()) {
      const auto l = small.back();
      small.pop_back();
      const auto g = large.back();
      prob_[l] = scaled[l];
      alias_[l] = g;
      scaled[g] = (scaled[g] + scaled[l]) - 1.0;
      if (scaled[g] < 1.0) {
        large.pop_back();
        small.push_back(g);
      }
    }
    for (auto g : large) prob_[g] = 1.0;
    // Leftovers from roundoff.
    for (auto l : small) prob_[l] = probabilities[l] > 0 ? 1.0 : 0.0;
    std::uint32_t first_positive = 0;
    while (!(probabilities[first_positive] > 0)) ++first_positive;
    for (std::size_t i = 0; i < n; ++i) {
      if (probabilities[i] == 0) prob_[i] = 0.0;
      if (prob_[i] < 1.0 && !(probabilities[alias_[i]] > 0)) alias_[i] = first_positive;
    }
  }

  std::size_t size() const { return prob_.size(); }

  // Two engine calls per draw.
  std::size_t sample(Rng& rng) const {
    const std::size_t n = prob_.size();
    const std::size_t column =
        static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
    const std::size_t i = column < n ? column : n - 1;
    return uniform01(rng) < prob_[i] ? i : alias_[i];
  }

 private:
  std::vector<double> prob_;
  std::vector<std::uint32_t> alias_;
};

}  // namespace qpen
