#include "qpen/schedules.hpp"

#include "qpen/errors.hpp"

#include <bit>
#include <cmath>
#include <numeric>

namespace qpen {

namespace {

using u128 = unsigned __int128;

double mean_of(std::span<const double> values) {
  if (values.empty()) throw UsageError("schedule: empty Lipschitz list");
  double total = 0;
  for (double v : values) {
    if (!(v >= 0)) throw UsageError("schedule: Lipschitz constants must be >= 0");
    total += v;
  }
  return total / static_cast<double>(values.size());
}

void check_s(std::uint64_t s) {
  if (s == 0) throw UsageError("schedule: component count must be positive");
  if (s >= (std::uint64_t{1} << 32)) throw UsageError("schedule: component count too large");
}

// 2^{k/2}, exact for even k.
double pow2_half(std::int64_t k) {
  const double base = std::ldexp(1.0, static_cast<int>(k / 2));
  return (k % 2 == 0) ? base : base * std::sqrt(2.0);
}

std::vector<double> averaging_weights(double alpha, double p, double gamma, std::int64_t T) {
  std::vector<double> theta(static_cast<std::size_t>(T), gamma / alpha * (alpha + p));
  theta.back() = gamma / alpha;
  return theta;
}

}  // namespace

std::string to_string(Variant v) { return v == Variant::sfso ? "sfso" : "efso"; }

Variant parse_variant(const std::string& s) {
  if (s == "sfso") return Variant::sfso;
  if (s == "efso") return Variant::efso;
  throw UsageError("unknown variant '" + s + "' (expected sfso or efso)");
}

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::constant ? "constant" : "dynamic";
}

ScheduleKind parse_schedule_kind(const std::string& s) {
  if (s == "constant" || s == "fixed") return ScheduleKind::constant;
  if (s == "dynamic") return ScheduleKind::dynamic;
  throw UsageError("unknown schedule '" + s + "' (expected constant or dynamic)");
}

Alg1Params alg1_constant(std::int64_t k, std::int64_t K, double lipschitz_f,
                         double lipschitz_c2) {
  if (K < 2) throw UsageError("alg1 constant schedule: horizon K must be >= 2");
  if (k < 1 || k >= K) throw UsageError("alg1 constant schedule: requires 1 <= k < K");
  Alg1Params out;
  out.rho = std::pow(static_cast<double>(K), 1.5);
  out.beta = static_cast<double>(k + 1) / 2.0;
  out.gamma = static_cast<double>(k + 1) / (4.0 * (lipschitz_f + out.rho * lipschitz_c2));
  return out;
}

Alg1Params alg1_dynamic(std::int64_t k, double lipschitz_f, double lipschitz_c2) {
  if (k < 1) throw UsageError("alg1 dynamic schedule: requires k >= 1");
  const double kk = static_cast<double>(k + 4);
  Alg1Params out;
  out.rho = std::pow(kk, 1.5);
  out.beta = kk / 5.0;
  out.gamma = kk / (10.0 * (lipschitz_f + out.rho * lipschitz_c2));
  return out;
}

std::int64_t k0_log2(std::uint64_t s) {
  check_s(s);
  return static_cast<std::int64_t>(std::bit_width(s));
}

std::int64_t k0_four_thirds(std::uint64_t s) {
  check_s(s);
  const u128 s2 = static_cast<u128>(s) * s;
  const u128 s4 = s2 * s2;
  std::int64_t j = 0;
  // 3(j+1) <= 127 always holds here since s < 2^32 gives j <= 42.
  while ((u128{1} << (3 * (j + 1))) <= s4) ++j;
  return j + 1;
}

std::int64_t ceil_pow2_three_quarters(std::int64_t k) {
  if (k < 1) throw UsageError("T schedule: requires k >= 1");
  const std::int64_t e = 3 * (k - 1);
  if (e > 124) throw UsageError("T schedule: exponent too large");
  const u128 target = u128{1} << e;
  // 2^{floor(e/4)} <= T <= 2^{floor(e/4) + 1}
  std::uint64_t lo = std::uint64_t{1} << (e / 4);
  std::uint64_t hi = lo << 1;
  auto covers = [&](std::uint64_t t) {
    const u128 v = t;
    return v * v * v * v >= target;
  };
  while (lo < hi) {
    const std::uint64_t mid = lo + (hi - lo) / 2;
    if (covers(mid))
      hi = mid;
    else
      lo = mid + 1;
  }
  return static_cast<std::int64_t>(lo);
}

std::int64_t alg2_fixed_min_horizon(std::uint64_t s) {
  const std::int64_t k0 = k0_log2(s);
  return std::max(k0 + 1, 2 * (k0 - 3));
}

std::int64_t alg2_dynamic_guarantee_start(std::uint64_t s, Variant variant) {
  const std::int64_t k0 = variant == Variant::sfso ? k0_four_thirds(s) : k0_log2(s);
  return std::max(k0 + 1, 2 * (k0 - 7));
}

Alg2Params alg2_fixed_unchecked(std::int64_t k, std::int64_t K, std::uint64_t s,
                                double lipschitz_fbar, double lipschitz_c2, Variant variant) {
  if (k < 1) throw UsageError("alg2 fixed schedule: requires k >= 1");
  if (K < 1) throw UsageError("alg2 fixed schedule: requires K >= 1");
  const std::int64_t k0 = k0_log2(s);
  const double sd = static_cast<double>(s);
  const double Kd = static_cast<double>(K);
  Alg2Params out;
  out.k0 = k0;
  out.p = 0.5;
  out.alpha = k <= k0 ? 0.5 : 2.0 / static_cast<double>(k - k0 + 4);
  out.T = std::int64_t{1} << (std::min(k, k0) - 1);
  out.rho = variant == Variant::sfso ? std::cbrt(sd * sd * Kd * Kd * Kd * Kd)
                                     : std::sqrt(sd) * Kd;
  out.gamma = 1.0 / (3.0 * (lipschitz_fbar + out.rho * lipschitz_c2) * out.alpha);
  out.theta = averaging_weights(out.alpha, out.p, out.gamma, out.T);
  return out;
}

Alg2Params alg2_fixed(std::int64_t k, std::int64_t K, std::uint64_t s,
                      std::span<const double> lipschitz_per_component, double lipschitz_c2,
                      Variant variant) {
  if (lipschitz_per_component.size() != s)
    throw UsageError("alg2 fixed schedule: need one Lipschitz constant per component");
  const std::int64_t threshold = alg2_fixed_min_horizon(s);
  if (K < threshold)
    throw UsageError("alg2 fixed schedule: horizon K = " + std::to_string(K) +
                     " is below the required max{k0+1, 2(k0-3)} = " + std::to_string(threshold));
  return alg2_fixed_unchecked(k, K, s, mean_of(lipschitz_per_component), lipschitz_c2, variant);
}

Alg2Params alg2_dynamic_from_mean(std::int64_t k, std::uint64_t s, double lipschitz_fbar,
                                  double lipschitz_c2, Variant variant) {
  if (k < 1) throw UsageError("alg2 dynamic schedule: requires k >= 1");
  const double sd = static_cast<double>(s);
  Alg2Params out;
  out.p = 1.0 / 7.0;
  if (variant == Variant::sfso) {
    out.k0 = k0_four_thirds(s);
    out.T = ceil_pow2_three_quarters(std::min(k, out.k0));
    const double j = static_cast<double>(k - out.k0 + 7);
    out.rho = k <= out.k0 ? pow2_half(k) : 3.0 * std::cbrt(sd * sd * j * j * j * j) / 32.0;
  } else {
    out.k0 = k0_log2(s);
    out.T = std::int64_t{1} << (std::min(k, out.k0) - 1);
    out.rho = k <= out.k0 ? pow2_half(k)
                          : 3.0 * std::sqrt(sd) * static_cast<double>(k - out.k0 + 7) / 16.0;
  }
  out.alpha = k <= out.k0 ? 6.0 / 7.0 : 6.0 / static_cast<double>(k - out.k0 + 7);
  out.gamma = 1.0 / (8.0 * (lipschitz_fbar + out.rho * lipschitz_c2) * out.alpha);
  out.theta = averaging_weights(out.alpha, out.p, out.gamma, out.T);
  return out;
}

Alg2Params alg2_dynamic(std::int64_t k, std::uint64_t s,
                        std::span<const double> lipschitz_per_component, double lipschitz_c2,
                        Variant variant) {
  if (lipschitz_per_component.size() != s)
    throw UsageError("alg2 dynamic schedule: need one Lipschitz constant per component");
  return alg2_dynamic_from_mean(k, s, mean_of(lipschitz_per_component), lipschitz_c2, variant);
}

std::vector<double> sampling_distribution(std::span<const double> lipschitz_per_component) {
  if (lipschitz_per_component.empty())
    throw UsageError("sampling distribution: empty Lipschitz list");
  double total = 0;
  for (double v : lipschitz_per_component) {
    if (!(v >= 0)) throw UsageError("sampling distribution: Lipschitz constants must be >= 0");
    total += v;
  }
  if (!(total > 0)) throw UsageError("sampling distribution: all Lipschitz constants are zero");
  std::vector<double> q(lipschitz_per_component.begin(), lipschitz_per_component.end());
  for (double& v : q) v /= total;
  return q;
}

LkRk lk_rk(const Alg2Params& params) {
  const double ratio = params.gamma / params.alpha;
  const double tail = static_cast<double>(params.T - 1);
  LkRk out;
  out.L = ratio + tail * ratio * (params.alpha + params.p);
  out.R = ratio * (1.0 - params.alpha) + tail * ratio * params.p;
  return out;
}

}  // namespace qpen
