#pragma once

// Parameter schedules for both solvers. Iterations are 1-based. Every
// schedule is a pure function of (k, constants), so a run never needs a
// precomputed table and dynamic runs need no horizon.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace qpen {

enum class Variant { sfso, efso };
enum class ScheduleKind { constant, dynamic };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);
std::string to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(const std::string& s);

struct Alg1Params {
  double rho = 0;
  double beta = 1;
  double gamma = 0;
};

struct Alg2Params {
  double alpha = 0;
  double p = 0;
  double gamma = 0;
  std::int64_t T = 1;
  double rho = 0;
  std::int64_t k0 = 1;
  // Averaging weights theta_1..theta_T of the outer update.
  std::vector<double> theta;
};

using Alg1Schedule = std::function<Alg1Params(std::int64_t k)>;
using Alg2Schedule = std::function<Alg2Params(std::int64_t k)>;

// rho = K^{3/2}, beta_k = (k+1)/2, gamma_k = (k+1) / (4 L_rho). Requires
// 1 <= k < K and K >= 2.
Alg1Params alg1_constant(std::int64_t k, std::int64_t K, double lipschitz_f, double lipschitz_c2);

// rho_k = (k+4)^{3/2}, beta_k = (k+4)/5, gamma_k = (k+4) / (10 L_{rho_k}).
Alg1Params alg1_dynamic(std::int64_t k, double lipschitz_f, double lipschitz_c2);

// floor(log2 s) + 1, via bit length.
std::int64_t k0_log2(std::uint64_t s);
// floor((4/3) log2 s) + 1, exact: the largest j with 2^{3j} <= s^4, plus one.
std::int64_t k0_four_thirds(std::uint64_t s);
// ceil(2^{3(k-1)/4}), exact: the smallest T with T^4 >= 2^{3(k-1)}.
std::int64_t ceil_pow2_three_quarters(std::int64_t k);

// Smallest K for which the fixed-penalty guarantees apply:
// max{k0 + 1, 2 (k0 - 3)}.
std::int64_t alg2_fixed_min_horizon(std::uint64_t s);
// First k covered by the dynamic-penalty guarantees: max{k0 + 1, 2 (k0 - 7)}.
std::int64_t alg2_dynamic_guarantee_start(std::uint64_t s, Variant variant);

// Fixed penalty: rho = s^{2/3} K^{4/3} (sfso) or sqrt(s) K (efso); alpha,
// p = 1/2, T_k doubling up to 2^{k0-1}. Throws UsageError naming the
// threshold when K is below alg2_fixed_min_horizon(s).
Alg2Params alg2_fixed(std::int64_t k, std::int64_t K, std::uint64_t s,
                      std::span<const double> lipschitz_per_component, double lipschitz_c2,
                      Variant variant);

// Same as alg2_fixed but skips the horizon hypothesis check.
Alg2Params alg2_fixed_unchecked(std::int64_t k, std::int64_t K, std::uint64_t s,
                                double lipschitz_fbar, double lipschitz_c2, Variant variant);

// Dynamic penalty, p = 1/7, alpha = 6/7 then 6/(k - k0 + 7).
Alg2Params alg2_dynamic(std::int64_t k, std::uint64_t s,
                        std::span<const double> lipschitz_per_component, double lipschitz_c2,
                        Variant variant);

Alg2Params alg2_dynamic_from_mean(std::int64_t k, std::uint64_t s, double lipschitz_fbar,
                                  double lipschitz_c2, Variant variant);

// q_i = L_i / sum_j L_j.
std::vector<double> sampling_distribution(std::span<const double> lipschitz_per_component);

struct LkRk {
  double L = 0;
  double R = 0;
};

// L_k = gamma/alpha + (T - 1) gamma (alpha + p) / alpha,
// R_k = (gamma/alpha)(1 - alpha) + (T - 1) gamma p / alpha.
LkRk lk_rk(const Alg2Params& params);

}  // namespace qpen
