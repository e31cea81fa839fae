#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cuneid/corpus.hpp"
#include "cuneid/features.hpp"
#include "cuneid/forest.hpp"
#include "cuneid/linalg.hpp"
#include "cuneid/linear_svm.hpp"
#include "cuneid/parallel.hpp"
#include "cuneid/rng.hpp"

namespace cuneid {

// 11 feature classes x 7 decision values. Column layout: feature class s
// (canonical order) occupies columns [7s, 7s+7), classes in label order.
inline constexpr int kMetaFeatureDim = kNumFeatureClasses * kNumLabels;  // 77

enum class StackingMode {
  out_of_fold,  // row i comes from base models that never saw document i
  in_sample,    // row i comes from the final full-corpus base models
};

struct StackParams {
  int folds = 10;
  StackingMode mode = StackingMode::out_of_fold;
  std::size_t min_count = 1;
  SvmParams svm;
};

struct BasePair {
  Vocabulary vocab;
  LinearModel model;
};

struct StackResult {
  Mat features;                  // n x 77
  std::vector<LabelCode> labels; // gold label per row, document order
  // fold_of[i] is the fold whose held-out pass produced row i; -1 when the
  // row came from in-sample stacking.
  std::vector<int> fold_of;
};

// Stratified fold assignment: per class, a seeded shuffle dealt round-robin,
// so every fold's complement contains every class. Errors when a class has
// fewer documents than folds.
inline std::vector<int> make_stratified_folds(const LabelledCorpus& corpus, int folds,
                                              std::uint64_t seed) {
  if (folds < 2) throw std::runtime_error("stacking: folds must be >= 2");
  if (!corpus.fully_labelled())
    throw std::runtime_error("stacking: corpus must be fully labelled");
  std::vector<int> fold_of(corpus.size(), -1);
  for (int c = 0; c < kNumLabels; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < corpus.size(); ++i)
      if (label_index(*corpus.documents[i].label) == c) members.push_back(i);
    if (members.empty()) continue;
    if (members.size() < static_cast<std::size_t>(folds))
      throw std::runtime_error("stacking: class " + std::string(kLabelNames[c]) + " has " +
                               std::to_string(members.size()) + " documents, fewer than " +
                               std::to_string(folds) + " folds");
    Rng rng(derive_seed(seed, "folds", static_cast<std::uint64_t>(c)));
    rng.shuffle(members);
    for (std::size_t j = 0; j < members.size(); ++j)
      fold_of[members[j]] = static_cast<int>(j % static_cast<std::size_t>(folds));
  }
  return fold_of;
}

namespace detail {

// Trains one feature class on `train_ids` and writes decision values for
// `fill_ids` into the matrix block for spec `s`. The vocabulary is built on
// the training subset only, so held-out rows see a model with no knowledge
// of their documents.
inline void fill_block(const LabelledCorpus& corpus, const std::vector<std::size_t>& train_ids,
                       const std::vector<std::size_t>& fill_ids, const FeatureClassSpec& spec,
                       int s, const StackParams& params, std::uint64_t svm_seed,
                       Mat& features) {
  LabelledCorpus subset;
  for (std::size_t i : train_ids) subset.documents.push_back(corpus.documents[i]);
  Vocabulary vocab = build_vocabulary(subset, spec, params.min_count);
  std::vector<SparseVector> xs(train_ids.size());
  std::vector<LabelCode> ys(train_ids.size());
  for (std::size_t j = 0; j < train_ids.size(); ++j) {
    xs[j] = vectorize(corpus.documents[train_ids[j]].text, vocab);
    ys[j] = *corpus.documents[train_ids[j]].label;
  }
  LinearModel model = train_ovr(xs, ys, params.svm, svm_seed, spec);
  for (std::size_t i : fill_ids) {
    const auto values = decision_values(model, vectorize(corpus.documents[i].text, vocab));
    for (int c = 0; c < kNumLabels; ++c) features.at(i, 7 * s + c) = values[c];
  }
}

}  // namespace detail

// Builds the n x 77 meta-feature matrix. In out-of-fold mode, the row for a
// document assigned to fold j is produced by base SVMs trained on every fold
// except j; the returned assignment lets callers audit exactly that. The
// final prediction-time base models are retrained on the full corpus
// separately (see train_meta_model).
inline StackResult stack_training_features(const LabelledCorpus& corpus,
                                           const StackParams& params, std::uint64_t seed,
                                           unsigned threads = 0) {
  if (corpus.size() == 0) throw std::runtime_error("stacking: empty corpus");
  if (!corpus.fully_labelled())
    throw std::runtime_error("stacking: corpus must be fully labelled");

  StackResult result;
  result.features = Mat(corpus.size(), kMetaFeatureDim);
  result.labels.reserve(corpus.size());
  for (const Document& doc : corpus.documents) result.labels.push_back(*doc.label);

  const auto specs = canonical_specs();

  if (params.mode == StackingMode::in_sample) {
    result.fold_of.assign(corpus.size(), -1);
    std::vector<std::size_t> all_ids(corpus.size());
    std::iota(all_ids.begin(), all_ids.end(), 0);
    parallel_for(kNumFeatureClasses, threads, [&](std::size_t s) {
      detail::fill_block(corpus, all_ids, all_ids, specs[s], static_cast<int>(s), params,
                         derive_seed(seed, "base", s), result.features);
    });
    return result;
  }

  result.fold_of = make_stratified_folds(corpus, params.folds, seed);
  std::vector<std::vector<std::size_t>> held_out(params.folds);
  for (std::size_t i = 0; i < corpus.size(); ++i)
    held_out[result.fold_of[i]].push_back(i);

  // One task per (fold, feature class); each writes a disjoint block.
  const std::size_t n_tasks = static_cast<std::size_t>(params.folds) * kNumFeatureClasses;
  parallel_for(n_tasks, threads, [&](std::size_t task) {
    const int fold = static_cast<int>(task / kNumFeatureClasses);
    const int s = static_cast<int>(task % kNumFeatureClasses);
    std::vector<std::size_t> train_ids;
    train_ids.reserve(corpus.size() - held_out[fold].size());
    for (std::size_t i = 0; i < corpus.size(); ++i)
      if (result.fold_of[i] != fold) train_ids.push_back(i);
    detail::fill_block(corpus, train_ids, held_out[fold], specs[s], s, params,
                       derive_seed(seed, "stack", task), result.features);
  });
  return result;
}

struct MetaTrainParams {
  StackParams stack;
  ForestParams forest;
};

// Base-model bundle plus the bagged meta-classifier.
struct MetaModel {
  std::vector<BasePair> bases;  // exactly 11, canonical spec order
  std::vector<DecisionTree> forest;
  ForestParams forest_params;
};

inline MetaModel train_meta_model(const LabelledCorpus& corpus, const MetaTrainParams& params,
                                  std::uint64_t seed, unsigned threads = 0) {
  StackResult stacked = stack_training_features(corpus, params.stack, seed, threads);

  MetaModel model;
  model.forest_params = params.forest;

  // Forest over the stacked features; trees carry per-tree seeds, so growing
  // them in parallel matches a sequential train_forest call exactly.
  const std::uint64_t forest_seed = derive_seed(seed, "forest");
  model.forest.resize(params.forest.trees);
  parallel_for(static_cast<std::size_t>(params.forest.trees), threads, [&](std::size_t t) {
    model.forest[t] = train_tree(stacked.features, stacked.labels, params.forest,
                                 derive_seed(forest_seed, "tree", t));
  });

  // Final base models on the full corpus, one task per feature class.
  const auto specs = canonical_specs();
  model.bases.resize(kNumFeatureClasses);
  std::vector<LabelCode> labels = stacked.labels;
  parallel_for(kNumFeatureClasses, threads, [&](std::size_t s) {
    Vocabulary vocab = build_vocabulary(corpus, specs[s], params.stack.min_count);
    std::vector<SparseVector> xs(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i)
      xs[i] = vectorize(corpus.documents[i].text, vocab);
    LinearModel m = train_ovr(xs, labels, params.stack.svm, derive_seed(seed, "base", s),
                              specs[s]);
    model.bases[s] = BasePair{std::move(vocab), std::move(m)};
  });
  return model;
}

// The 77 decision values for one text under the final base models.
inline std::array<double, kMetaFeatureDim> meta_decision_row(const MetaModel& model,
                                                             const std::u32string& text) {
  std::array<double, kMetaFeatureDim> row{};
  for (int s = 0; s < kNumFeatureClasses; ++s) {
    const BasePair& base = model.bases[s];
    const auto values = decision_values(base.model, vectorize(text, base.vocab));
    for (int c = 0; c < kNumLabels; ++c) row[7 * s + c] = values[c];
  }
  return row;
}

struct MetaPrediction {
  LabelCode label = LabelCode::LTB;
  std::array<double, kNumLabels> vote_fractions{};
};

inline MetaPrediction predict_meta(const MetaModel& model, const std::u32string& text) {
  const auto row = meta_decision_row(model, text);
  const ForestPrediction p = forest_predict(model.forest, row.data());
  return MetaPrediction{p.label, p.vote_fractions};
}

}  // namespace cuneid
