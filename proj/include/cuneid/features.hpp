#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "cuneid/corpus.hpp"
#include "cuneid/unicode.hpp"

namespace cuneid {

enum class GramKind : std::uint8_t { contiguous = 0, skip = 1 };

// One of the eleven character feature classes: contiguous n-grams of order
// 1-5, and k-skip bigrams/trigrams for k in 1..3. "k-skip" means exactly k
// codepoints are skipped between consecutive tuple elements, so the element
// positions are i, i+k+1, i+2(k+1), ...
struct FeatureClassSpec {
  GramKind kind = GramKind::contiguous;
  int n = 1;
  int k = 0;

  bool operator==(const FeatureClassSpec&) const = default;

  int step() const { return k + 1; }
  // Codepoints covered by one gram: the last element sits at offset (n-1)(k+1).
  int span() const { return (n - 1) * step() + 1; }
};

inline bool spec_is_valid(const FeatureClassSpec& spec) {
  if (spec.kind == GramKind::contiguous)
    return spec.n >= 1 && spec.n <= 5 && spec.k == 0;
  return (spec.n == 2 || spec.n == 3) && spec.k >= 1 && spec.k <= 3;
}

inline void require_valid_spec(const FeatureClassSpec& spec) {
  if (!spec_is_valid(spec))
    throw std::runtime_error("invalid feature class: kind=" +
                             std::string(spec.kind == GramKind::contiguous ? "contiguous"
                                                                           : "skip") +
                             " n=" + std::to_string(spec.n) + " k=" + std::to_string(spec.k));
}

inline std::string spec_name(const FeatureClassSpec& spec) {
  if (spec.kind == GramKind::contiguous) return std::to_string(spec.n) + "-gram";
  return std::to_string(spec.k) + "-skip-" + std::to_string(spec.n) + "-gram";
}

inline constexpr int kNumFeatureClasses = 11;

// Fixed class order: 1..5-grams, then (k,n) = (1,2),(1,3),(2,2),(2,3),(3,2),(3,3).
// Meta-feature columns and model files rely on this order.
inline std::array<FeatureClassSpec, kNumFeatureClasses> canonical_specs() {
  std::array<FeatureClassSpec, kNumFeatureClasses> specs;
  int idx = 0;
  for (int n = 1; n <= 5; ++n) specs[idx++] = {GramKind::contiguous, n, 0};
  for (int k = 1; k <= 3; ++k)
    for (int n = 2; n <= 3; ++n) specs[idx++] = {GramKind::skip, n, k};
  return specs;
}

// All grams of `text` under `spec`, in occurrence order (a multiset). Texts
// shorter than the spec's span yield nothing.
inline std::vector<std::u32string> enumerate_grams(const std::u32string& text,
                                                   const FeatureClassSpec& spec) {
  require_valid_spec(spec);
  std::vector<std::u32string> grams;
  const std::size_t len = text.size();
  const std::size_t span = static_cast<std::size_t>(spec.span());
  if (len < span) return grams;
  const std::size_t step = static_cast<std::size_t>(spec.step());
  grams.reserve(len - span + 1);
  for (std::size_t i = 0; i + span <= len; ++i) {
    std::u32string gram;
    gram.reserve(spec.n);
    for (int j = 0; j < spec.n; ++j) gram.push_back(text[i + j * step]);
    grams.push_back(std::move(gram));
  }
  return grams;
}

// Gram-to-index map for one feature class. Indices are dense, contiguous,
// and assigned by first occurrence over the training corpus, so rebuilding
// from the same corpus is byte-identical.
struct Vocabulary {
  FeatureClassSpec spec;
  std::vector<std::u32string> grams;                    // index -> gram
  std::unordered_map<std::u32string, std::uint32_t> index;  // gram -> index

  std::uint32_t size() const { return static_cast<std::uint32_t>(grams.size()); }
};

inline Vocabulary build_vocabulary(const LabelledCorpus& corpus, const FeatureClassSpec& spec,
                                   std::size_t min_count = 1) {
  require_valid_spec(spec);
  if (min_count < 1) throw std::runtime_error("min_count must be >= 1");
  std::unordered_map<std::u32string, std::size_t> counts;
  std::vector<std::u32string> order;
  for (const Document& doc : corpus.documents) {
    for (std::u32string& gram : enumerate_grams(doc.text, spec)) {
      auto [it, fresh] = counts.try_emplace(std::move(gram), 0);
      if (fresh) order.push_back(it->first);
      it->second++;
    }
  }
  Vocabulary vocab;
  vocab.spec = spec;
  for (std::u32string& gram : order) {
    if (counts[gram] < min_count) continue;
    vocab.index.emplace(gram, vocab.size());
    vocab.grams.push_back(std::move(gram));
  }
  if (vocab.grams.empty())
    throw std::runtime_error("feature class " + spec_name(spec) + " produced no features");
  return vocab;
}

// Sparse count vector; entries strictly increasing by index, values > 0.
struct SparseVector {
  std::uint32_t dim = 0;
  std::vector<std::pair<std::uint32_t, double>> entries;

  double norm2() const {
    double s = 0.0;
    for (const auto& [i, v] : entries) s += v * v;
    return std::sqrt(s);
  }
};

// L2-normalized gram counts over the vocabulary. Out-of-vocabulary grams are
// dropped; a text with no known grams yields the empty vector.
inline SparseVector vectorize(const std::u32string& text, const Vocabulary& vocab) {
  std::unordered_map<std::uint32_t, double> counts;
  for (const std::u32string& gram : enumerate_grams(text, vocab.spec)) {
    auto it = vocab.index.find(gram);
    if (it != vocab.index.end()) counts[it->second] += 1.0;
  }
  SparseVector v;
  v.dim = vocab.size();
  v.entries.assign(counts.begin(), counts.end());
  std::sort(v.entries.begin(), v.entries.end());
  double norm = v.norm2();
  if (norm > 0.0) {
    for (auto& [i, val] : v.entries) val /= norm;
  }
  return v;
}

}  // namespace cuneid
