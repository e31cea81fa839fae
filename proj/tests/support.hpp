#pragma once

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "cuneid/corpus.hpp"
#include "cuneid/features.hpp"
#include "cuneid/label.hpp"
#include "cuneid/rng.hpp"

namespace testsup {

using namespace cuneid;

// Synthetic 7-class corpus with disjoint per-class sign alphabets drawn from
// the cuneiform block: class c owns codepoints [U+12000 + c*signs, +signs).
// Any feature that crosses classes is impossible, so the task is perfectly
// separable by construction.
struct SyntheticParams {
  int signs_per_class = 5;
  int min_words = 4;
  int max_words = 6;
  int min_len = 6;
  int max_len = 10;
};

inline LabelledCorpus make_synthetic_corpus(std::size_t docs_per_class, std::uint64_t seed,
                                            const SyntheticParams& params = {}) {
  Rng rng(derive_seed(seed, "synthetic"));
  LabelledCorpus corpus;
  for (int c = 0; c < kNumLabels; ++c) {
    const char32_t base = static_cast<char32_t>(0x12000 + c * params.signs_per_class);
    for (std::size_t d = 0; d < docs_per_class; ++d) {
      std::u32string text;
      const std::uint64_t words =
          params.min_words + rng.below(params.max_words - params.min_words + 1);
      for (std::uint64_t w = 0; w < words; ++w) {
        if (w > 0) text.push_back(U' ');
        const std::uint64_t len =
            params.min_len + rng.below(params.max_len - params.min_len + 1);
        for (std::uint64_t i = 0; i < len; ++i)
          text.push_back(base + static_cast<char32_t>(
                                    rng.below(static_cast<std::uint64_t>(params.signs_per_class))));
      }
      corpus.documents.push_back(
          {std::move(text), label_from_index(c), corpus.documents.size()});
      corpus.class_counts[c]++;
    }
  }
  return corpus;
}

// Random sparse vector shaped like the featurizer's output: non-negative
// entries, L2-normalized, strictly increasing indices.
inline SparseVector make_random_sparse(std::uint32_t dim, Rng& rng) {
  SparseVector v;
  v.dim = dim;
  for (std::uint32_t i = 0; i < dim; ++i) {
    if (rng.real() < 0.6) v.entries.emplace_back(i, 0.05 + rng.real());
  }
  const double norm = v.norm2();
  if (norm > 0.0) {
    for (auto& [idx, val] : v.entries) val /= norm;
  }
  return v;
}

// Unique scratch directory per test binary run; removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr combined
};

inline std::string shell_quote(const std::string& arg) {
  std::string quoted = "'";
  for (char c : arg) {
    if (c == '\'')
      quoted += "'\\''";
    else
      quoted.push_back(c);
  }
  quoted += "'";
  return quoted;
}

// Runs the real cuneid binary (path injected by the build) and captures the
// combined output and exit code.
inline CliResult run_cli(const std::vector<std::string>& args) {
  std::string cmd = shell_quote(CUNEID_BIN);
  for (const std::string& arg : args) cmd += " " + shell_quote(arg);
  cmd += " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) throw std::runtime_error("popen failed for: " + cmd);
  CliResult result;
  char buf[4096];
  std::size_t n;
  while ((n = ::fread(buf, 1, sizeof buf, pipe)) > 0) result.output.append(buf, n);
  const int status = ::pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

}  // namespace testsup
