#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "cuneid/label.hpp"

namespace cuneid {

// Rows are gold labels, columns are predictions.
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, kNumLabels>, kNumLabels> counts{};

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (const auto& row : counts)
      for (std::uint64_t c : row) t += c;
    return t;
  }
};

struct PerClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
};

struct EvalReport {
  std::string system;
  ConfusionMatrix confusion;
  std::array<PerClassScores, kNumLabels> per_class;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  std::uint64_t n = 0;
};

// Per-class precision/recall/F1 and their unweighted mean over all seven
// classes, absent classes included. Any 0/0 scores as 0.
inline EvalReport score(const std::vector<LabelCode>& gold,
                        const std::vector<LabelCode>& predicted) {
  if (gold.size() != predicted.size())
    throw std::runtime_error("score: gold and predicted sizes differ (" +
                             std::to_string(gold.size()) + " vs " +
                             std::to_string(predicted.size()) + ")");
  if (gold.empty()) throw std::runtime_error("score: no documents");

  EvalReport report;
  report.n = gold.size();
  for (std::size_t i = 0; i < gold.size(); ++i)
    report.confusion.counts[label_index(gold[i])][label_index(predicted[i])]++;

  std::uint64_t correct = 0;
  double f1_sum = 0.0;
  for (int c = 0; c < kNumLabels; ++c) {
    std::uint64_t row_sum = 0, col_sum = 0;
    for (int o = 0; o < kNumLabels; ++o) {
      row_sum += report.confusion.counts[c][o];
      col_sum += report.confusion.counts[o][c];
    }
    const std::uint64_t hits = report.confusion.counts[c][c];
    correct += hits;
    PerClassScores& s = report.per_class[c];
    s.support = row_sum;
    s.precision = col_sum == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(col_sum);
    s.recall = row_sum == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(row_sum);
    s.f1 = s.precision + s.recall == 0.0
               ? 0.0
               : 2.0 * s.precision * s.recall / (s.precision + s.recall);
    f1_sum += s.f1;
  }
  report.macro_f1 = f1_sum / kNumLabels;
  report.accuracy = static_cast<double>(correct) / static_cast<double>(report.n);
  return report;
}

// CSV layout: empty corner cell, then predicted labels across the header and
// gold labels down the first column.
inline std::string render_confusion_csv(const ConfusionMatrix& confusion) {
  std::string out;
  for (int c = 0; c < kNumLabels; ++c) {
    out += ',';
    out += kLabelNames[c];
  }
  out += '\n';
  for (int g = 0; g < kNumLabels; ++g) {
    out += kLabelNames[g];
    for (int p = 0; p < kNumLabels; ++p) {
      out += ',';
      out += std::to_string(confusion.counts[g][p]);
    }
    out += '\n';
  }
  return out;
}

inline ConfusionMatrix parse_confusion_csv(const std::string& text) {
  std::vector<std::string> lines;
  std::string current;
  for (char ch : text) {
    if (ch == '\n') {
      if (!current.empty() && current.back() == '\r') current.pop_back();
      lines.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(ch);
    }
  }
  if (!current.empty()) lines.push_back(std::move(current));
  if (lines.size() != kNumLabels + 1)
    throw std::runtime_error("confusion csv: expected " + std::to_string(kNumLabels + 1) +
                             " lines, found " + std::to_string(lines.size()));

  auto split = [](const std::string& line) {
    std::vector<std::string> fields(1);
    for (char ch : line) {
      if (ch == ',')
        fields.emplace_back();
      else
        fields.back().push_back(ch);
    }
    return fields;
  };

  const auto header = split(lines[0]);
  if (header.size() != kNumLabels + 1 || !header[0].empty())
    throw std::runtime_error("confusion csv: bad header line");
  for (int c = 0; c < kNumLabels; ++c) {
    if (header[c + 1] != kLabelNames[c])
      throw std::runtime_error("confusion csv: bad header label '" + header[c + 1] + "'");
  }

  ConfusionMatrix confusion;
  for (int g = 0; g < kNumLabels; ++g) {
    const auto fields = split(lines[g + 1]);
    if (fields.size() != kNumLabels + 1)
      throw std::runtime_error("confusion csv: line " + std::to_string(g + 2) + " has " +
                               std::to_string(fields.size()) + " fields");
    if (fields[0] != kLabelNames[g])
      throw std::runtime_error("confusion csv: line " + std::to_string(g + 2) +
                               " row label '" + fields[0] + "'");
    for (int p = 0; p < kNumLabels; ++p) {
      const std::string& f = fields[p + 1];
      if (f.empty() || f.find_first_not_of("0123456789") != std::string::npos)
        throw std::runtime_error("confusion csv: non-numeric cell '" + f + "' on line " +
                                 std::to_string(g + 2));
      confusion.counts[g][p] = std::stoull(f);
    }
  }
  return confusion;
}

// Heatmap with integer-only geometry and colors, so the bytes are identical
// across platforms for the same matrix. Cell intensity is row-normalized:
// each cell's shade is its share of that gold row's total.
inline std::string render_confusion_svg(const ConfusionMatrix& confusion) {
  constexpr int cell = 48;
  constexpr int left = 64;
  constexpr int top = 40;
  constexpr int width = left + kNumLabels * cell + 8;
  constexpr int height = top + kNumLabels * cell + 8;

  std::array<std::uint64_t, kNumLabels> row_totals{};
  for (int g = 0; g < kNumLabels; ++g)
    for (std::uint64_t c : confusion.counts[g]) row_totals[g] += c;

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
         "\" height=\"" + std::to_string(height) + "\" font-family=\"monospace\" font-size=\"12\">\n";
  out += "<rect width=\"" + std::to_string(width) + "\" height=\"" + std::to_string(height) +
         "\" fill=\"white\"/>\n";
  out += "<text x=\"4\" y=\"16\">gold\\pred</text>\n";

  for (int p = 0; p < kNumLabels; ++p) {
    const int x = left + p * cell + cell / 2;
    out += "<text x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(top - 8) +
           "\" text-anchor=\"middle\">" + std::string(kLabelNames[p]) + "</text>\n";
  }
  for (int g = 0; g < kNumLabels; ++g) {
    const int y = top + g * cell + cell / 2 + 4;
    out += "<text x=\"" + std::to_string(left - 6) + "\" y=\"" + std::to_string(y) +
           "\" text-anchor=\"end\">" + std::string(kLabelNames[g]) + "</text>\n";
  }

  for (int g = 0; g < kNumLabels; ++g) {
    for (int p = 0; p < kNumLabels; ++p) {
      const std::uint64_t count = confusion.counts[g][p];
      // 256-step ramp from white to a dark blue; the division is exact
      // integer arithmetic, no floating point anywhere in the geometry.
      const std::uint64_t level = row_totals[g] == 0 ? 0 : count * 255 / row_totals[g];
      const long r = 255 - static_cast<long>(level * (255 - 40) / 255);
      const long gr = 255 - static_cast<long>(level * (255 - 80) / 255);
      const long b = 255 - static_cast<long>(level * (255 - 140) / 255);
      const int x = left + p * cell;
      const int y = top + g * cell;
      out += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y) + "\" width=\"" +
             std::to_string(cell) + "\" height=\"" + std::to_string(cell) + "\" fill=\"rgb(" +
             std::to_string(r) + "," + std::to_string(gr) + "," + std::to_string(b) +
             ")\" stroke=\"rgb(200,200,200)\"/>\n";
      const char* text_fill = level > 127 ? "white" : "black";
      out += "<text x=\"" + std::to_string(x + cell / 2) + "\" y=\"" +
             std::to_string(y + cell / 2 + 4) + "\" text-anchor=\"middle\" fill=\"" + text_fill +
             "\">" + std::to_string(count) + "</text>\n";
    }
  }
  out += "</svg>\n";
  return out;
}

// Exact binomial McNemar: b and c are the two discordant-pair counts, the
// two-sided p is twice the lower tail of Binomial(b+c, 1/2), capped at 1.
inline double mcnemar_exact_p(std::uint64_t b, std::uint64_t c) {
  const std::uint64_t n = b + c;
  if (n == 0) return 1.0;
  const std::uint64_t tail_max = std::min(b, c);
  const double log_half_n = static_cast<double>(n) * std::log(2.0);
  double tail = 0.0;
  for (std::uint64_t k = 0; k <= tail_max; ++k) {
    tail += std::exp(std::lgamma(static_cast<double>(n) + 1.0) -
                     std::lgamma(static_cast<double>(k) + 1.0) -
                     std::lgamma(static_cast<double>(n - k) + 1.0) - log_half_n);
  }
  return std::min(1.0, 2.0 * tail);
}

struct ComparisonReport {
  EvalReport report_a;
  EvalReport report_b;
  std::array<double, kNumLabels> per_class_f1_delta{};  // a minus b
  double delta_macro_f1 = 0.0;                          // a minus b
  std::uint64_t a_only_correct = 0;
  std::uint64_t b_only_correct = 0;
  double p_value = 1.0;
};

inline ComparisonReport compare(const EvalReport& report_a, const EvalReport& report_b,
                                const std::vector<LabelCode>& pred_a,
                                const std::vector<LabelCode>& pred_b,
                                const std::vector<LabelCode>& gold) {
  if (gold.size() != pred_a.size() || gold.size() != pred_b.size())
    throw std::runtime_error("compare: prediction lists must match the gold list length");
  ComparisonReport cmp;
  cmp.report_a = report_a;
  cmp.report_b = report_b;
  for (int c = 0; c < kNumLabels; ++c)
    cmp.per_class_f1_delta[c] = report_a.per_class[c].f1 - report_b.per_class[c].f1;
  cmp.delta_macro_f1 = report_a.macro_f1 - report_b.macro_f1;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool a_ok = pred_a[i] == gold[i];
    const bool b_ok = pred_b[i] == gold[i];
    if (a_ok && !b_ok) cmp.a_only_correct++;
    if (!a_ok && b_ok) cmp.b_only_correct++;
  }
  cmp.p_value = mcnemar_exact_p(cmp.a_only_correct, cmp.b_only_correct);
  return cmp;
}

inline ComparisonReport compare(const std::vector<LabelCode>& gold,
                                const std::vector<LabelCode>& pred_a,
                                const std::vector<LabelCode>& pred_b) {
  if (gold.size() != pred_a.size() || gold.size() != pred_b.size())
    throw std::runtime_error("compare: prediction lists must match the gold list length");
  return compare(score(gold, pred_a), score(gold, pred_b), pred_a, pred_b, gold);
}

inline nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json per_class;
  for (int c = 0; c < kNumLabels; ++c) {
    per_class[std::string(kLabelNames[c])] = {{"p", report.per_class[c].precision},
                                 {"r", report.per_class[c].recall},
                                 {"f1", report.per_class[c].f1},
                                 {"support", report.per_class[c].support}};
  }
  nlohmann::json matrix = nlohmann::json::array();
  for (const auto& row : report.confusion.counts) matrix.push_back(row);
  return {{"system", report.system},
          {"n", report.n},
          {"accuracy", report.accuracy},
          {"macro_f1", report.macro_f1},
          {"per_class", per_class},
          {"matrix", matrix}};
}

inline nlohmann::json comparison_to_json(const ComparisonReport& cmp) {
  nlohmann::json deltas;
  for (int c = 0; c < kNumLabels; ++c)
    deltas[std::string(kLabelNames[c])] = cmp.per_class_f1_delta[c];
  return {{"a", report_to_json(cmp.report_a)},
          {"b", report_to_json(cmp.report_b)},
          {"per_class_f1_delta", deltas},
          {"delta_macro_f1", cmp.delta_macro_f1},
          {"mcnemar",
           {{"a_only_correct", cmp.a_only_correct},
            {"b_only_correct", cmp.b_only_correct},
            {"p_value", cmp.p_value}}}};
}

}  // namespace cuneid
