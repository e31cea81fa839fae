#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "cuneid/features.hpp"
#include "cuneid/label.hpp"
#include "cuneid/rng.hpp"

namespace cuneid {

struct SvmParams {
  double c = 1.0;
  double eps = 0.1;
  int max_outer = 1000;
  // Bias enters as an augmented constant feature 1.0 and is therefore
  // regularized. The no-bias variant exists for solver tests.
  bool augment_bias = true;
};

struct BinaryTrainResult {
  std::vector<double> weights;  // dim (+1 when the bias feature is appended)
  std::vector<double> alpha;    // one dual variable per training vector
  int sweeps = 0;
  double last_max_violation = 0.0;
};

namespace detail {

inline void check_training_vectors(const std::vector<SparseVector>& xs) {
  if (xs.empty()) throw std::runtime_error("svm: empty training set");
  const std::uint32_t dim = xs[0].dim;
  for (const SparseVector& x : xs) {
    if (x.dim != dim) throw std::runtime_error("svm: inconsistent feature dimensions");
    for (const auto& [i, v] : x.entries) {
      if (i >= dim) throw std::runtime_error("svm: feature index out of range");
      if (!std::isfinite(v)) throw std::runtime_error("svm: non-finite feature value");
    }
  }
}

inline double sparse_dot(const std::vector<double>& w, const SparseVector& x) {
  double s = 0.0;
  for (const auto& [i, v] : x.entries) s += w[i] * v;
  return s;
}

}  // namespace detail

// Dual coordinate descent for the L2-regularized L1-loss (hinge) SVM:
//
//   min_w  1/2 ||w||^2 + C * sum_i max(0, 1 - y_i w.x~_i)
//
// solved through its dual with one closed-form coordinate update per example,
// coordinates visited in a freshly shuffled order each sweep. Stops when the
// largest projected-gradient violation seen in a sweep drops below eps, or
// after max_outer sweeps. `on_sweep`, when given, sees the weights and dual
// variables after every sweep (used by the solver tests).
inline BinaryTrainResult train_binary(
    const std::vector<SparseVector>& xs, const std::vector<int>& ys, const SvmParams& params,
    std::uint64_t seed,
    const std::function<void(const std::vector<double>&, const std::vector<double>&)>&
        on_sweep = nullptr) {
  detail::check_training_vectors(xs);
  if (xs.size() != ys.size()) throw std::runtime_error("svm: label count mismatch");
  bool saw_pos = false, saw_neg = false;
  for (int y : ys) {
    if (y == 1) saw_pos = true;
    else if (y == -1) saw_neg = true;
    else throw std::runtime_error("svm: labels must be +1 or -1");
  }
  if (!saw_pos || !saw_neg)
    throw std::runtime_error("svm: training set contains a single class");
  if (!(params.c > 0.0)) throw std::runtime_error("svm: C must be positive");
  if (!(params.eps > 0.0)) throw std::runtime_error("svm: eps must be positive");

  const std::size_t n = xs.size();
  const std::size_t dim = xs[0].dim + (params.augment_bias ? 1 : 0);
  const double C = params.c;

  std::vector<double> w(dim, 0.0);
  std::vector<double> alpha(n, 0.0);
  std::vector<double> qd(n);  // diagonal of Q: ||x~_i||^2
  for (std::size_t i = 0; i < n; ++i) {
    double s = params.augment_bias ? 1.0 : 0.0;
    for (const auto& [idx, v] : xs[i].entries) s += v * v;
    qd[i] = s;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);

  BinaryTrainResult result;
  int sweep = 0;
  double max_violation = 0.0;
  for (sweep = 1; sweep <= params.max_outer; ++sweep) {
    rng.shuffle(order);
    max_violation = 0.0;
    for (std::size_t i : order) {
      const SparseVector& x = xs[i];
      const double y = static_cast<double>(ys[i]);
      double g = y * detail::sparse_dot(w, x) - 1.0;
      if (params.augment_bias) g += y * w[dim - 1];

      double pg = g;
      if (alpha[i] <= 0.0) pg = std::min(g, 0.0);
      else if (alpha[i] >= C) pg = std::max(g, 0.0);
      max_violation = std::max(max_violation, std::abs(pg));
      if (std::abs(pg) > 1e-12) {
        double a_new;
        if (qd[i] > 0.0) a_new = std::min(std::max(alpha[i] - g / qd[i], 0.0), C);
        else a_new = g > 0.0 ? 0.0 : C;  // degenerate zero vector
        const double delta = a_new - alpha[i];
        if (delta != 0.0) {
          for (const auto& [idx, v] : x.entries) w[idx] += delta * y * v;
          if (params.augment_bias) w[dim - 1] += delta * y;
          alpha[i] = a_new;
        }
      }
    }
    if (on_sweep) on_sweep(w, alpha);
    if (max_violation < params.eps) break;
  }

  result.weights = std::move(w);
  result.alpha = std::move(alpha);
  result.sweeps = std::min(sweep, params.max_outer);
  result.last_max_violation = max_violation;
  return result;
}

// Primal and dual objectives, used by tests and diagnostics. The dual is the
// quantity each coordinate step is guaranteed to improve; the primal of the
// running iterate can wobble and only settles at convergence.
inline double dual_objective(const std::vector<double>& w, const std::vector<double>& alpha) {
  double obj = 0.0;
  for (double a : alpha) obj += a;
  for (double wi : w) obj -= 0.5 * wi * wi;
  return obj;
}

inline double primal_objective(const std::vector<double>& w,
                               const std::vector<SparseVector>& xs,
                               const std::vector<int>& ys, const SvmParams& params) {
  double obj = 0.0;
  for (double wi : w) obj += wi * wi;
  obj *= 0.5;
  const std::size_t dim = xs.empty() ? 0 : xs[0].dim;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double margin = detail::sparse_dot(w, xs[i]);
    if (params.augment_bias) margin += w[dim];
    obj += params.c * std::max(0.0, 1.0 - static_cast<double>(ys[i]) * margin);
  }
  return obj;
}

// One-vs-rest bundle over the fixed seven-label order. Weight rows are dense
// arrays of length dim+1; the last slot is the bias weight of the augmented
// constant feature. Labels absent from the training data keep a zero row, so
// their decision value is identically zero.
struct LinearModel {
  std::array<std::vector<double>, kNumLabels> weights;
  std::uint32_t dim = 0;
  double c = 1.0;
  FeatureClassSpec spec;
};

// Trains one binary problem per label present (that label against the rest);
// the binary problem for class index c uses seed + c.
inline LinearModel train_ovr(const std::vector<SparseVector>& xs,
                             const std::vector<LabelCode>& labels, const SvmParams& params,
                             std::uint64_t seed, const FeatureClassSpec& spec = {}) {
  detail::check_training_vectors(xs);
  if (xs.size() != labels.size()) throw std::runtime_error("svm: label count mismatch");
  std::array<std::size_t, kNumLabels> counts{};
  for (LabelCode l : labels) counts[label_index(l)]++;
  int distinct = 0;
  for (std::size_t c : counts) distinct += c > 0;
  if (distinct < 2) throw std::runtime_error("svm: need at least 2 distinct labels");

  LinearModel model;
  model.dim = xs[0].dim;
  model.c = params.c;
  model.spec = spec;
  SvmParams binary_params = params;
  binary_params.augment_bias = true;
  for (int c = 0; c < kNumLabels; ++c) {
    if (counts[c] == 0) {
      model.weights[c].assign(model.dim + 1, 0.0);
      continue;
    }
    std::vector<int> ys(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
      ys[i] = label_index(labels[i]) == c ? 1 : -1;
    model.weights[c] = train_binary(xs, ys, binary_params,
                                    seed + static_cast<std::uint64_t>(c))
                           .weights;
  }
  return model;
}

// w_c . x~ for every class, in label order.
inline std::array<double, kNumLabels> decision_values(const LinearModel& model,
                                                      const SparseVector& x) {
  if (x.dim != model.dim)
    throw std::runtime_error("svm: vector dimension " + std::to_string(x.dim) +
                             " does not match model dimension " + std::to_string(model.dim));
  std::array<double, kNumLabels> values{};
  for (int c = 0; c < kNumLabels; ++c) {
    const std::vector<double>& w = model.weights[c];
    values[c] = detail::sparse_dot(w, x) + w[model.dim];
  }
  return values;
}

// Argmax of the decision values; ties go to the lowest class index.
inline LabelCode predict(const LinearModel& model, const SparseVector& x) {
  const auto values = decision_values(model, x);
  int best = 0;
  for (int c = 1; c < kNumLabels; ++c) {
    if (values[c] > values[best]) best = c;
  }
  return label_from_index(best);
}

}  // namespace cuneid
