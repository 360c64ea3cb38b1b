#include "qpen/problems.hpp"

#include "qpen/apg.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace qpen {

double logistic_loss(double margin) {
  if (margin >= 0) return std::log1p(std::exp(-margin));
  return -margin + std::log1p(std::exp(margin));
}

double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

LogisticComponent::LogisticComponent(VectorXd features, int label)
    : features_(std::move(features)), label_(static_cast<double>(label)) {
  if (label != 1 && label != -1) throw UsageError("logistic component: label must be +1 or -1");
}

double LogisticComponent::margin(const VectorXd& wb) const {
  if (wb.size() != features_.size() + 1)
    throw UsageError("logistic component: expected (w; b) of dimension n + 1");
  return label_ * (features_.dot(wb.head(features_.size())) + wb[features_.size()]);
}

double LogisticComponent::value(const VectorXd& wb) const { return logistic_loss(margin(wb)); }

VectorXd LogisticComponent::gradient(const VectorXd& wb) const {
  const double coef = -label_ * sigmoid(-margin(wb));
  VectorXd g(features_.size() + 1);
  g.head(features_.size()) = coef * features_;
  g[features_.size()] = coef;
  return g;
}

double LogisticComponent::lipschitz() const { return component_lipschitz(features_); }

LogisticComponent logistic_component(const VectorXd& features, int label) {
  return LogisticComponent(features, label);
}

double component_lipschitz(const VectorXd& features) {
  return (features.squaredNorm() + 1.0) / 4.0;
}

VectorXd LogisticFamily::payload(const VectorXd& features, int label) {
  VectorXd xi(features.size() + 1);
  xi.head(features.size()) = features;
  xi[features.size()] = static_cast<double>(label);
  return xi;
}

double LogisticFamily::value(const VectorXd& xi, const VectorXd& x) const {
  const double y = xi[n_];
  return logistic_loss(y * (xi.head(n_).dot(x.head(n_)) + x[n_]));
}

void LogisticFamily::add_gradient(const VectorXd& xi, const VectorXd& x, double weight,
                                  VectorXd& out) const {
  const double y = xi[n_];
  const double m = y * (xi.head(n_).dot(x.head(n_)) + x[n_]);
  const double coef = -weight * y * sigmoid(-m);
  out.head(n_) += coef * xi.head(n_);
  out[n_] += coef;
}

double LogisticFamily::lipschitz(const VectorXd& xi) const {
  return (xi.head(n_).squaredNorm() + 1.0) / 4.0;
}

PerturbedQuadraticFamily::PerturbedQuadraticFamily(VectorXd curvature, VectorXd linear,
                                                   double offset)
    : h_(std::move(curvature)), g_(std::move(linear)), c0_(offset) {
  if (h_.size() != g_.size()) throw UsageError("quadratic family: dimension mismatch");
  if ((h_.array() < 0).any()) throw UsageError("quadratic family: curvature must be >= 0");
}

double PerturbedQuadraticFamily::value(const VectorXd& xi, const VectorXd& x) const {
  return 0.5 * x.dot(h_.cwiseProduct(x)) + (g_ + xi).dot(x) + c0_;
}

void PerturbedQuadraticFamily::add_gradient(const VectorXd& xi, const VectorXd& x, double weight,
                                            VectorXd& out) const {
  out += weight * (h_.cwiseProduct(x) + g_ + xi);
}

double PerturbedQuadraticFamily::lipschitz(const VectorXd&) const { return h_.maxCoeff(); }

LabeledDataset LabeledDataset::head(std::size_t count) const {
  if (count > this->count()) throw UsageError("dataset: subset larger than dataset");
  LabeledDataset out;
  out.dim = dim;
  out.features.assign(features.begin(), features.begin() + static_cast<std::ptrdiff_t>(count));
  out.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(count));
  return out;
}

namespace {

bool parse_double(std::string_view token, double& out) {
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  if (token.empty()) return false;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), out);
  return res.ec == std::errc() && res.ptr == token.data() + token.size() && std::isfinite(out);
}

}  // namespace

LabeledDataset parse_libsvm(std::istream& in, std::optional<Eigen::Index> dim) {
  struct Row {
    std::vector<std::pair<Eigen::Index, double>> entries;
    int label;
  };
  std::vector<Row> rows;
  Eigen::Index max_index = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream tokens(line);
    std::string token;
    if (!(tokens >> token)) continue;  // blank line
    double label = 0;
    if (!parse_double(token, label)) throw ParseError("bad label '" + token + "'", line_no);
    if (label != 1.0 && label != -1.0)
      throw ParseError("label must be +1 or -1, got '" + token + "'", line_no);
    Row row;
    row.label = label > 0 ? 1 : -1;
    while (tokens >> token) {
      const auto colon = token.find(':');
      if (colon == std::string::npos || colon == 0)
        throw ParseError("expected idx:val, got '" + token + "'", line_no);
      long long idx = 0;
      const auto idx_res = std::from_chars(token.data(), token.data() + colon, idx);
      if (idx_res.ec != std::errc() || idx_res.ptr != token.data() + colon || idx < 1)
        throw ParseError("feature index must be a positive integer in '" + token + "'", line_no);
      double value = 0;
      if (!parse_double(std::string_view(token).substr(colon + 1), value))
        throw ParseError("bad feature value in '" + token + "'", line_no);
      row.entries.emplace_back(static_cast<Eigen::Index>(idx), value);
      max_index = std::max<Eigen::Index>(max_index, static_cast<Eigen::Index>(idx));
    }
    rows.push_back(std::move(row));
  }
  if (dim && *dim < max_index)
    throw UsageError("libsvm: dimension override " + std::to_string(*dim) +
                     " is smaller than the largest index " + std::to_string(max_index));
  LabeledDataset data;
  data.dim = dim ? *dim : max_index;
  data.features.reserve(rows.size());
  data.labels.reserve(rows.size());
  for (const auto& row : rows) {
    VectorXd x = VectorXd::Zero(data.dim);
    for (const auto& [idx, value] : row.entries) x[idx - 1] = value;
    data.features.push_back(std::move(x));
    data.labels.push_back(row.label);
  }
  return data;
}

LabeledDataset load_libsvm(const std::string& path, std::optional<Eigen::Index> dim) {
  std::ifstream in(path);
  if (!in) throw UsageError("libsvm: cannot open '" + path + "'");
  return parse_libsvm(in, dim);
}

void write_libsvm(std::ostream& out, const LabeledDataset& data) {
  out << std::setprecision(17);
  for (std::size_t i = 0; i < data.count(); ++i) {
    out << (data.labels[i] > 0 ? "+1" : "-1");
    const VectorXd& x = data.features[i];
    for (Eigen::Index j = 0; j < x.size(); ++j)
      if (x[j] != 0.0) out << ' ' << (j + 1) << ':' << x[j];
    out << '\n';
  }
}

std::vector<std::size_t> closest_to_boundary(const std::vector<VectorXd>& features,
                                             const VectorXd& w, double b, std::size_t m) {
  if (m > features.size()) throw UsageError("core samples: m exceeds the number of samples");
  std::vector<double> dist(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) dist[i] = std::abs(w.dot(features[i]) + b);
  std::vector<std::size_t> order(features.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m), order.end(),
                    [&](std::size_t a, std::size_t c) {
                      return dist[a] < dist[c] || (dist[a] == dist[c] && a < c);
                    });
  order.resize(m);
  return order;
}

int sign_label(double t) { return t >= 0 ? 1 : -1; }

ConstraintMap<double> margin_constraints(const std::vector<VectorXd>& core_features,
                                         const std::vector<int>& core_labels,
                                         const Regularizer<double>& domain) {
  if (core_features.size() != core_labels.size())
    throw UsageError("margin constraints: feature and label counts differ");
  const Eigen::Index dim = domain.dim();
  if (core_features.empty()) return ConstraintMap<double>::none(dim);
  MatrixXd A(static_cast<Eigen::Index>(core_features.size()), dim);
  for (std::size_t i = 0; i < core_features.size(); ++i) {
    if (core_features[i].size() + 1 != dim)
      throw UsageError("margin constraints: feature dimension mismatch");
    const double y = static_cast<double>(core_labels[i]);
    const auto r = static_cast<Eigen::Index>(i);
    A.row(r).head(dim - 1) = -y * core_features[i].transpose();
    A(r, dim - 1) = -y;
  }
  return ConstraintMap<double>::affine(std::move(A), VectorXd::Zero(A.rows()), domain);
}

StochasticObjective<double>::Sampler logistic_model_sampler(VectorXd w_hat, double b_hat) {
  return [w_hat = std::move(w_hat), b_hat](Rng& rng) {
    const Eigen::Index n = w_hat.size();
    VectorXd xi(n + 1);
    for (Eigen::Index j = 0; j < n; ++j) xi[j] = standard_normal(rng);
    const double p = sigmoid(w_hat.dot(xi.head(n)) + b_hat);
    xi[n] = uniform01(rng) < p ? 1.0 : -1.0;
    return xi;
  };
}

namespace {

// sigma: twice the largest root-mean-square gradient deviation over the pool
// at a few probe points of the box. G and V: worst case over the pool.
void fill_logistic_bounds(InstanceConstants<double>& bounds, const LogisticFamily& family,
                          const std::vector<VectorXd>& pool, Rng& rng) {
  const Eigen::Index dim = family.dim();
  double g_bound = 0;
  double v_bound = 0;
  for (const auto& xi : pool) {
    const VectorXd feats = xi.head(dim - 1);
    g_bound = std::max(g_bound, std::sqrt(feats.squaredNorm() + 1.0));
    v_bound = std::max(v_bound, logistic_loss(-(feats.lpNorm<1>() + 1.0)));
  }
  std::vector<VectorXd> probes{VectorXd::Zero(dim)};
  for (int p = 0; p < 4; ++p) {
    VectorXd x(dim);
    for (Eigen::Index j = 0; j < dim; ++j) x[j] = 2.0 * uniform01(rng) - 1.0;
    probes.push_back(std::move(x));
  }
  double worst = 0;
  for (const auto& x : probes) {
    VectorXd mean = VectorXd::Zero(dim);
    for (const auto& xi : pool) family.add_gradient(xi, x, 1.0 / static_cast<double>(pool.size()), mean);
    double second = 0;
    for (const auto& xi : pool) second += (family.gradient(xi, x) - mean).squaredNorm();
    worst = std::max(worst, second / static_cast<double>(pool.size()));
  }
  bounds.sigma = 2.0 * std::sqrt(worst);
  bounds.grad_bound = g_bound;
  bounds.value_bound = v_bound;
}

}  // namespace

SyntheticInstance generate_synthetic_stochastic(const SyntheticOptions& options,
                                                std::uint64_t seed) {
  if (options.n < 1) throw UsageError("synthetic: n must be >= 1");
  if (options.pool < 1) throw UsageError("synthetic: pool must be >= 1");
  if (options.m > options.pool) throw UsageError("synthetic: m must not exceed the pool size");
  if (!(options.lambda >= 0)) throw UsageError("synthetic: lambda must be >= 0");
  const Eigen::Index n = options.n;
  Rng rng = make_stream(seed, 10);

  SyntheticInstance inst;
  inst.options = options;
  inst.seed = seed;
  inst.w_hat.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) inst.w_hat[j] = 2.0 * uniform01(rng) - 1.0;
  inst.b_hat = 2.0 * uniform01(rng) - 1.0;

  const auto sampler = logistic_model_sampler(inst.w_hat, inst.b_hat);
  std::vector<VectorXd> features;
  features.reserve(options.pool);
  inst.evaluation_set.reserve(options.pool);
  for (std::size_t i = 0; i < options.pool; ++i) {
    VectorXd xi = sampler(rng);
    features.push_back(xi.head(n));
    inst.evaluation_set.push_back(std::move(xi));
  }

  inst.core_indices = closest_to_boundary(features, inst.w_hat, inst.b_hat, options.m);
  std::vector<VectorXd> core_features;
  std::vector<int> core_labels;
  for (std::size_t idx : inst.core_indices) {
    core_features.push_back(features[idx]);
    core_labels.push_back(sign_label(inst.w_hat.dot(features[idx]) + inst.b_hat));
  }

  auto reg = Regularizer<double>::l1_box(options.lambda, n + 1, -1.0, 1.0, 1);
  auto constraints = margin_constraints(core_features, core_labels, reg);
  auto family = std::make_shared<const LogisticFamily>(n);
  // E[(x;1)(x;1)'] = I for standard normal x, so grad f is 1/4-Lipschitz.
  StochasticObjective<double> objective(family, sampler, 0.25);
  fill_logistic_bounds(objective.bounds(), *family, inst.evaluation_set, rng);
  inst.problem = StochasticProblem<double>{std::move(objective), std::move(reg),
                                           std::move(constraints)};

  inst.feasible_point.resize(n + 1);
  inst.feasible_point << inst.w_hat, inst.b_hat;
  const double viol = constraint_violation(inst.problem.constraints, inst.feasible_point);
  if (!inst.problem.regularizer.contains(inst.feasible_point) || viol > 0)
    throw std::logic_error("synthetic: generated instance failed its feasibility certificate");
  return inst;
}

FiniteSumProblem<double> logistic_finite_sum(const LabeledDataset& data,
                                             const Regularizer<double>& reg,
                                             ConstraintMap<double> constraints) {
  if (data.count() == 0) throw UsageError("finite sum: empty dataset");
  auto family = std::make_shared<const LogisticFamily>(data.dim);
  std::vector<VectorXd> payloads;
  payloads.reserve(data.count());
  for (std::size_t i = 0; i < data.count(); ++i)
    payloads.push_back(LogisticFamily::payload(data.features[i], data.labels[i]));
  FiniteSumProblem<double> p{FiniteSumObjective<double>(family, std::move(payloads)), reg,
                             std::move(constraints)};
  validate_problem(p);
  return p;
}

FiniteSumInstance build_finitesum_constrained(const LabeledDataset& data,
                                              const FiniteSumOptions& options) {
  if (data.count() == 0) throw UsageError("finite sum: empty dataset");
  if (options.m > data.count()) throw UsageError("finite sum: m exceeds the dataset size");
  const Eigen::Index n = data.dim;

  // Unconstrained counterpart: lambda = 0, no margin rows, same box.
  const auto box = Regularizer<double>::l1_box(0.0, n + 1, -1.0, 1.0, 1);
  const auto unconstrained = logistic_finite_sum(data, box, ConstraintMap<double>::none(n + 1));
  const auto& obj = unconstrained.objective;
  const auto warm = accelerated_prox_gradient<double>(
      [&](const VectorXd& x) { return obj.mean_value(x); },
      [&](const VectorXd& x) { return obj.mean_gradient(x); }, box, obj.mean_lipschitz(),
      VectorXd::Zero(n + 1), options.reference_budget);

  FiniteSumInstance inst;
  inst.options = options;
  inst.reference = warm.x;
  inst.reference_converged = warm.converged;
  inst.reference_iterations = warm.iterations;
  const VectorXd w_hat = warm.x.head(n);
  const double b_hat = warm.x[n];
  inst.core_indices = closest_to_boundary(data.features, w_hat, b_hat, options.m);

  std::vector<VectorXd> core_features;
  std::vector<int> core_labels;
  for (std::size_t idx : inst.core_indices) {
    core_features.push_back(data.features[idx]);
    core_labels.push_back(sign_label(w_hat.dot(data.features[idx]) + b_hat));
  }
  auto reg = Regularizer<double>::l1_box(options.lambda, n + 1, -1.0, 1.0, 1);
  auto constraints = margin_constraints(core_features, core_labels, reg);
  inst.problem = logistic_finite_sum(data, reg, std::move(constraints));

  if (!reg.contains(inst.reference) ||
      constraint_violation(inst.problem.constraints, inst.reference) > 0)
    throw std::logic_error("finite sum: reference pair failed its feasibility certificate");
  return inst;
}

namespace {

ToyQp assemble_toy(VectorXd curvature, VectorXd linear, double offset,
                   std::vector<VectorXd> atoms, Regularizer<double> box, MatrixXd A, VectorXd b) {
  auto family = std::make_shared<const PerturbedQuadraticFamily>(std::move(curvature),
                                                                 std::move(linear), offset);
  ToyQp qp;
  auto constraints = ConstraintMap<double>::affine(std::move(A), std::move(b), box);
  qp.evaluation_set = atoms;
  qp.stochastic = StochasticProblem<double>{StochasticObjective<double>::finite_support(family, atoms),
                                            box, constraints};
  qp.finite_sum = FiniteSumProblem<double>{FiniteSumObjective<double>(family, std::move(atoms)),
                                           std::move(box), std::move(constraints)};
  return qp;
}

}  // namespace

ToyQp toy_qp_1d(double noise) {
  if (!(noise >= 0)) throw UsageError("toy qp: noise must be >= 0");
  std::vector<VectorXd> atoms;
  if (noise == 0)
    atoms.push_back(VectorXd::Zero(1));
  else
    atoms = {VectorXd::Constant(1, -noise), VectorXd::Constant(1, noise)};
  MatrixXd A(1, 1);
  A << -1.0;
  ToyQp qp = assemble_toy(VectorXd::Constant(1, 2.0), VectorXd::Zero(1), 0.0, std::move(atoms),
                          Regularizer<double>::box(VectorXd::Constant(1, -2.0),
                                                   VectorXd::Constant(1, 2.0)),
                          A, VectorXd::Constant(1, 1.0));
  qp.optimal_value = 1.0;
  qp.multiplier_norm = 2.0;
  qp.stochastic.objective.bounds().multiplier_norm = 2.0;
  qp.solution = VectorXd::Constant(1, 1.0);
  qp.penalty_optimum = [](double rho) { return rho / (rho + 2.0); };
  qp.penalty_minimizer = [](double rho) { return VectorXd::Constant(1, rho / (rho + 2.0)); };
  return qp;
}

ToyQp toy_qp_5d(double noise) {
  if (!(noise >= 0)) throw UsageError("toy qp: noise must be >= 0");
  VectorXd a(5);
  a << 0.5, 0.5, 0.5, -0.5, 0.3;
  MatrixXd A(2, 5);
  A << 1, 1, 0, 0, 0,
       0, 0, 1, -1, 0;
  VectorXd b(2);
  b << -0.5, -0.2;

  std::vector<VectorXd> atoms;
  if (noise == 0) {
    atoms.push_back(VectorXd::Zero(5));
  } else {
    for (int j = 0; j < 5; ++j) {
      atoms.push_back(noise * VectorXd::Unit(5, j));
      atoms.push_back(-noise * VectorXd::Unit(5, j));
    }
  }
  ToyQp qp = assemble_toy(VectorXd::Ones(5), -a, 0.5 * a.squaredNorm(), std::move(atoms),
                          Regularizer<double>::box(VectorXd::Constant(5, -1.0),
                                                   VectorXd::Constant(5, 1.0)),
                          A, b);

  // Orthogonal rows, both active at x = a: each row is handled independently.
  const VectorXd excess = A * a + b;
  const VectorXd row_sq = A.rowwise().squaredNorm();
  const VectorXd multipliers = excess.cwiseQuotient(row_sq);
  qp.solution = a - A.transpose() * multipliers;
  qp.optimal_value = 0.5 * multipliers.cwiseProduct(multipliers).dot(row_sq);
  qp.multiplier_norm = multipliers.norm();
  qp.stochastic.objective.bounds().multiplier_norm = qp.multiplier_norm;
  qp.penalty_optimum = [excess, row_sq](double rho) {
    double total = 0;
    for (Eigen::Index i = 0; i < excess.size(); ++i) {
      const double viol = excess[i] / (1.0 + rho * row_sq[i]);
      const double mu = rho * viol;
      total += 0.5 * mu * mu * row_sq[i] + 0.5 * rho * viol * viol;
    }
    return total;
  };
  qp.penalty_minimizer = [a, A, excess, row_sq](double rho) {
    const VectorXd mu = rho * excess.cwiseQuotient((VectorXd::Ones(excess.size()) + rho * row_sq));
    return VectorXd(a - A.transpose() * mu);
  };
  return qp;
}

namespace {

using nlohmann::json;

json to_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

VectorXd vector_from(const json& j) {
  const auto vals = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

json rows_to_json(const std::vector<VectorXd>& rows) {
  json out = json::array();
  for (const auto& r : rows) out.push_back(to_json(r));
  return out;
}

std::vector<VectorXd> rows_from(const json& j) {
  std::vector<VectorXd> out;
  out.reserve(j.size());
  for (const auto& r : j) out.push_back(vector_from(r));
  return out;
}

json regularizer_json(const Regularizer<double>& reg) {
  return {{"l1_weights", to_json(reg.l1_weights())},
          {"lower", to_json(reg.lower())},
          {"upper", to_json(reg.upper())}};
}

Regularizer<double> regularizer_from(const json& j) {
  return Regularizer<double>(vector_from(j.at("l1_weights")), vector_from(j.at("lower")),
                             vector_from(j.at("upper")));
}

json constraints_json(const ConstraintMap<double>& c) {
  if (!c.is_affine()) throw UsageError("instance file: only affine constraints can be saved");
  std::vector<VectorXd> rows;
  for (Eigen::Index i = 0; i < c.A().rows(); ++i) rows.emplace_back(c.A().row(i).transpose());
  return {{"A", rows_to_json(rows)}, {"b", to_json(c.b())}};
}

ConstraintMap<double> constraints_from(const json& j, const Regularizer<double>& domain) {
  const auto rows = rows_from(j.at("A"));
  const VectorXd b = vector_from(j.at("b"));
  if (rows.empty()) return ConstraintMap<double>::none(domain.dim());
  MatrixXd A(static_cast<Eigen::Index>(rows.size()), domain.dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != domain.dim()) throw UsageError("instance file: constraint row size");
    A.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  }
  return ConstraintMap<double>::affine(std::move(A), b, domain);
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw UsageError("instance file: cannot write '" + path + "'");
  out << j.dump();
  if (!out) throw UsageError("instance file: write failed for '" + path + "'");
}

}  // namespace

void save_instance(const std::string& path, const SyntheticInstance& inst) {
  const auto& b = inst.problem.objective.bounds();
  json j = {{"kind", "logistic-stochastic"},
            {"seed", inst.seed},
            {"n", inst.options.n},
            {"m", inst.options.m},
            {"pool", inst.options.pool},
            {"lambda", inst.options.lambda},
            {"w_hat", to_json(inst.w_hat)},
            {"b_hat", inst.b_hat},
            {"core_indices", inst.core_indices},
            {"regularizer", regularizer_json(inst.problem.regularizer)},
            {"constraints", constraints_json(inst.problem.constraints)},
            {"mean_lipschitz", inst.problem.objective.mean_lipschitz()},
            {"evaluation_set", rows_to_json(inst.evaluation_set)}};
  if (b.sigma) j["sigma"] = *b.sigma;
  if (b.grad_bound) j["grad_bound"] = *b.grad_bound;
  if (b.value_bound) j["value_bound"] = *b.value_bound;
  write_json(path, j);
}

void save_instance(const std::string& path, const FiniteSumInstance& inst) {
  json j = {{"kind", "logistic-finite-sum"},
            {"lambda", inst.options.lambda},
            {"m", inst.options.m},
            {"reference_budget", inst.options.reference_budget},
            {"reference", to_json(inst.reference)},
            {"reference_converged", inst.reference_converged},
            {"reference_iterations", inst.reference_iterations},
            {"core_indices", inst.core_indices},
            {"regularizer", regularizer_json(inst.problem.regularizer)},
            {"constraints", constraints_json(inst.problem.constraints)},
            {"samples", rows_to_json(inst.problem.objective.samples())}};
  write_json(path, j);
}

LoadedInstance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("instance file: cannot open '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(std::string("instance file: ") + e.what(), 0);
  }
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "logistic-stochastic") {
      SyntheticInstance inst;
      inst.seed = j.at("seed").get<std::uint64_t>();
      inst.options.n = j.at("n").get<Eigen::Index>();
      inst.options.m = j.at("m").get<std::size_t>();
      inst.options.pool = j.at("pool").get<std::size_t>();
      inst.options.lambda = j.at("lambda").get<double>();
      inst.w_hat = vector_from(j.at("w_hat"));
      inst.b_hat = j.at("b_hat").get<double>();
      inst.core_indices = j.at("core_indices").get<std::vector<std::size_t>>();
      inst.evaluation_set = rows_from(j.at("evaluation_set"));
      auto reg = regularizer_from(j.at("regularizer"));
      auto constraints = constraints_from(j.at("constraints"), reg);
      auto family = std::make_shared<const LogisticFamily>(inst.options.n);
      StochasticObjective<double> objective(family, logistic_model_sampler(inst.w_hat, inst.b_hat),
                                            j.at("mean_lipschitz").get<double>());
      auto& b = objective.bounds();
      if (j.contains("sigma")) b.sigma = j["sigma"].get<double>();
      if (j.contains("grad_bound")) b.grad_bound = j["grad_bound"].get<double>();
      if (j.contains("value_bound")) b.value_bound = j["value_bound"].get<double>();
      inst.problem = StochasticProblem<double>{std::move(objective), std::move(reg),
                                               std::move(constraints)};
      validate_problem(inst.problem);
      inst.feasible_point.resize(inst.options.n + 1);
      inst.feasible_point << inst.w_hat, inst.b_hat;
      return inst;
    }
    if (kind == "logistic-finite-sum") {
      FiniteSumInstance inst;
      inst.options.lambda = j.at("lambda").get<double>();
      inst.options.m = j.at("m").get<std::size_t>();
      inst.options.reference_budget = j.at("reference_budget").get<std::int64_t>();
      inst.reference = vector_from(j.at("reference"));
      inst.reference_converged = j.at("reference_converged").get<bool>();
      inst.reference_iterations = j.at("reference_iterations").get<std::int64_t>();
      inst.core_indices = j.at("core_indices").get<std::vector<std::size_t>>();
      auto reg = regularizer_from(j.at("regularizer"));
      auto constraints = constraints_from(j.at("constraints"), reg);
      auto samples = rows_from(j.at("samples"));
      if (samples.empty()) throw UsageError("instance file: no samples");
      auto family = std::make_shared<const LogisticFamily>(samples.front().size() - 1);
      inst.problem = FiniteSumProblem<double>{
          FiniteSumObjective<double>(family, std::move(samples)), std::move(reg),
          std::move(constraints)};
      validate_problem(inst.problem);
      return inst;
    }
    throw UsageError("instance file: unknown kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw UsageError(std::string("instance file: ") + e.what());
  }
}

}  // namespace qpen
