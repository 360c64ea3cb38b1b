#pragma once

#include "qpen/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace qpen {

// One checkpoint of a run.
template <typename Scalar>
struct RunRow {
  std::int64_t k = 0;
  std::int64_t grad_evals = 0;
  Scalar objective = 0;
  Scalar violation = 0;
  // Penalty parameter of the step that produced the iterate (rho_1 for k = 1).
  Scalar rho = 0;
  // F_rho(x) at this row's rho. Kept in memory for certificates; not part of
  // the CSV schema.
  Scalar penalty_objective = 0;

  bool operator==(const RunRow&) const = default;
};

template <typename Scalar>
struct RunRecord {
  std::vector<RunRow<Scalar>> rows;
  Vector<Scalar> final_point;
  std::int64_t grad_evals = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
  double wall_seconds = 0;
  std::vector<std::string> warnings;
};

// Recording cadence: k = 1, every `every`-th iterate, and the last one.
inline bool should_record(std::int64_t k, std::int64_t last, std::int64_t every) {
  if (k == 1 || k == last) return true;
  return every > 0 && k % every == 0;
}

}  // namespace qpen
