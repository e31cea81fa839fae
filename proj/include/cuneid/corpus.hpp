#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cuneid/label.hpp"
#include "cuneid/rng.hpp"
#include "cuneid/serialize.hpp"
#include "cuneid/unicode.hpp"

namespace cuneid {

// One line of cuneiform text. `text` is the codepoint sequence with trailing
// whitespace stripped; it never contains TAB or line terminators. `id` is the
// 0-based position among the documents kept from the source file.
struct Document {
  std::u32string text;
  std::optional<LabelCode> label;
  std::size_t id = 0;
};

struct LabelledCorpus {
  std::vector<Document> documents;
  std::array<std::size_t, kNumLabels> class_counts{};

  std::size_t size() const { return documents.size(); }
  bool fully_labelled() const {
    return std::all_of(documents.begin(), documents.end(),
                       [](const Document& d) { return d.label.has_value(); });
  }
};

struct CorpusSummary {
  std::array<std::size_t, kNumLabels> class_counts{};
  std::size_t documents = 0;
  std::size_t codepoints = 0;
  double mean_length = 0.0;
};

namespace detail {

inline void trim_trailing_ws(std::u32string& s) {
  while (!s.empty() && (s.back() == U' ' || s.back() == U'\r' || s.back() == U'\t'))
    s.pop_back();
}

inline std::runtime_error line_error(std::size_t line_no, const std::string& what) {
  return std::runtime_error(what + " at line " + std::to_string(line_no));
}

}  // namespace detail

// File shape: one instance per line. Labelled mode expects LABEL<TAB>TEXT,
// unlabelled mode takes the whole line as text. Blank lines are skipped;
// everything else that does not fit the shape is an error, never silently
// dropped.
inline LabelledCorpus load_corpus_bytes(std::string_view bytes, bool expect_labels,
                                        std::string_view origin = "corpus") {
  LabelledCorpus corpus;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= bytes.size()) {
    if (pos == bytes.size()) {
      if (line_no == 0) break;  // empty input
    }
    std::size_t eol = bytes.find('\n', pos);
    const bool last = eol == std::string_view::npos;
    if (last) eol = bytes.size();
    ++line_no;
    std::string_view raw = bytes.substr(pos, eol - pos);
    std::u32string line = decode_utf8(raw, pos);
    pos = eol + 1;

    std::u32string whole = line;
    detail::trim_trailing_ws(whole);
    if (whole.empty()) {
      if (last) break;
      continue;  // blank line
    }

    Document doc;
    if (expect_labels) {
      const std::size_t tab = line.find(U'\t');
      if (tab == std::u32string::npos)
        throw detail::line_error(line_no, std::string(origin) + ": expected LABEL<TAB>TEXT");
      const std::string label_field = encode_utf8(std::u32string_view(line).substr(0, tab));
      const auto label = parse_label(label_field);
      if (!label)
        throw detail::line_error(line_no,
                                 std::string(origin) + ": unknown label " + label_field);
      std::u32string text = line.substr(tab + 1);
      if (text.find(U'\t') != std::u32string::npos)
        throw detail::line_error(line_no, std::string(origin) + ": too many fields");
      detail::trim_trailing_ws(text);
      if (text.empty())
        throw detail::line_error(line_no, std::string(origin) + ": empty text");
      doc.text = std::move(text);
      doc.label = *label;
      corpus.class_counts[label_index(*label)]++;
    } else {
      if (whole.find(U'\t') != std::u32string::npos)
        throw detail::line_error(line_no, std::string(origin) + ": unexpected TAB");
      doc.text = std::move(whole);
    }
    doc.id = corpus.documents.size();
    corpus.documents.push_back(std::move(doc));
    if (last) break;
  }
  return corpus;
}

inline LabelledCorpus load_corpus(const std::filesystem::path& path, bool expect_labels) {
  return load_corpus_bytes(read_file_bytes(path), expect_labels, path.string());
}

// For prediction inputs, which may be labelled or not: tries the labelled
// shape first and falls back to plain text. Labels, when present, are kept
// but callers are free to ignore them.
inline LabelledCorpus load_corpus_auto(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  try {
    return load_corpus_bytes(bytes, true, path.string());
  } catch (const std::runtime_error&) {
    return load_corpus_bytes(bytes, false, path.string());
  }
}

inline std::string corpus_to_bytes(const LabelledCorpus& corpus) {
  std::string out;
  for (const Document& doc : corpus.documents) {
    if (doc.label) {
      out.append(to_string(*doc.label));
      out.push_back('\t');
    }
    out.append(encode_utf8(doc.text));
    out.push_back('\n');
  }
  return out;
}

inline void write_corpus(const LabelledCorpus& corpus, const std::filesystem::path& path) {
  write_file_atomic(path, corpus_to_bytes(corpus));
}

inline CorpusSummary describe(const LabelledCorpus& corpus) {
  CorpusSummary s;
  s.class_counts = corpus.class_counts;
  s.documents = corpus.size();
  for (const Document& doc : corpus.documents) s.codepoints += doc.text.size();
  s.mean_length = s.documents == 0
                      ? 0.0
                      : static_cast<double>(s.codepoints) / static_cast<double>(s.documents);
  return s;
}

// Splits a fully labelled corpus into parts whose per-class counts follow
// `fractions` to within one document (largest-remainder rounding per class).
// Membership is decided by a seeded per-class shuffle; within each part the
// original document order is preserved and ids are reassigned contiguously.
inline std::vector<LabelledCorpus> stratified_split(const LabelledCorpus& corpus,
                                                    const std::vector<double>& fractions,
                                                    std::uint64_t seed) {
  if (fractions.empty()) throw std::runtime_error("fractions must be non-empty");
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw std::runtime_error("fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::runtime_error("fractions must sum to 1");
  if (!corpus.fully_labelled())
    throw std::runtime_error("stratified split requires a fully labelled corpus");

  const std::size_t parts = fractions.size();
  std::vector<std::vector<std::size_t>> part_members(parts);

  for (int c = 0; c < kNumLabels; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < corpus.documents.size(); ++i) {
      if (label_index(*corpus.documents[i].label) == c) members.push_back(i);
    }
    if (members.empty()) continue;
    if (members.size() < parts)
      throw std::runtime_error("class " + std::string(kLabelNames[c]) + " has " +
                               std::to_string(members.size()) +
                               " documents, fewer than the " + std::to_string(parts) +
                               " requested parts");
    Rng rng(derive_seed(seed, "split", static_cast<std::uint64_t>(c)));
    rng.shuffle(members);

    // Largest-remainder allocation of this class across the parts.
    const double n = static_cast<double>(members.size());
    std::vector<std::size_t> counts(parts);
    std::vector<std::pair<double, std::size_t>> remainders(parts);
    std::size_t assigned = 0;
    for (std::size_t p = 0; p < parts; ++p) {
      const double exact = n * fractions[p];
      counts[p] = static_cast<std::size_t>(std::floor(exact));
      remainders[p] = {exact - std::floor(exact), p};
      assigned += counts[p];
    }
    std::sort(remainders.begin(), remainders.end(),
              [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first > b.first;
                return a.second < b.second;
              });
    for (std::size_t r = 0; assigned < members.size(); ++r, ++assigned)
      counts[remainders[r % parts].second]++;

    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts; ++p) {
      for (std::size_t j = 0; j < counts[p]; ++j)
        part_members[p].push_back(members[offset + j]);
      offset += counts[p];
    }
  }

  std::vector<LabelledCorpus> out(parts);
  for (std::size_t p = 0; p < parts; ++p) {
    std::sort(part_members[p].begin(), part_members[p].end());
    for (std::size_t idx : part_members[p]) {
      Document doc = corpus.documents[idx];
      doc.id = out[p].documents.size();
      out[p].class_counts[label_index(*doc.label)]++;
      out[p].documents.push_back(std::move(doc));
    }
  }
  return out;
}

}  // namespace cuneid
