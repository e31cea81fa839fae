#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <variant>
#include <vector>

#include "CLI11.hpp"

#include "cuneid/config.hpp"
#include "cuneid/corpus.hpp"
#include "cuneid/evaluation.hpp"
#include "cuneid/features.hpp"
#include "cuneid/gru.hpp"
#include "cuneid/meta.hpp"
#include "cuneid/model_io.hpp"
#include "cuneid/serialize.hpp"
#include "cuneid/unicode.hpp"

namespace {

using namespace cuneid;

// Collects every artifact of one invocation and writes them together, so a
// failure part-way leaves nothing behind.
class OutputBatch {
 public:
  void add(std::filesystem::path path, std::string bytes) {
    files_.emplace_back(std::move(path), std::move(bytes));
  }

  void commit() {
    std::vector<std::filesystem::path> written;
    try {
      for (const auto& [path, bytes] : files_) {
        write_file_atomic(path, bytes);
        written.push_back(path);
      }
    } catch (...) {
      std::error_code ec;
      for (const auto& path : written) std::filesystem::remove(path, ec);
      throw;
    }
  }

 private:
  std::vector<std::pair<std::filesystem::path, std::string>> files_;
};

int usage_error(const std::string& message) {
  std::cerr << "error: " << message << "\nRun with --help for more information.\n";
  return 2;
}

LabelCode predict_one(const MetaModel& model, const std::u32string& text) {
  return predict_meta(model, text).label;
}

LabelCode predict_one(const GruClassifier& model, const std::u32string& text) {
  return predict_neural(model, text);
}

std::vector<LabelCode> predict_all(const AnyModel& model, const LabelledCorpus& corpus) {
  std::vector<LabelCode> out;
  out.reserve(corpus.size());
  for (const Document& doc : corpus.documents)
    out.push_back(std::visit([&](const auto& m) { return predict_one(m, doc.text); }, model));
  return out;
}

std::vector<LabelCode> gold_labels(const LabelledCorpus& corpus) {
  std::vector<LabelCode> gold;
  gold.reserve(corpus.size());
  for (const Document& doc : corpus.documents) gold.push_back(*doc.label);
  return gold;
}

// Raw line splitter for featurize: every physical line is processed, blank
// or not, so output lines map 1:1 onto input lines.
std::vector<std::string> split_lines(const std::string& bytes) {
  std::vector<std::string> lines;
  std::string current;
  for (char ch : bytes) {
    if (ch == '\n') {
      if (!current.empty() && current.back() == '\r') current.pop_back();
      lines.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(ch);
    }
  }
  if (!current.empty()) lines.push_back(std::move(current));
  return lines;
}

struct TrainArgs {
  std::string system, train, dev, config, model;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  CLI::Option *system_opt = nullptr, *seed_opt = nullptr, *threads_opt = nullptr;
  CLI::Option *train_opt = nullptr, *dev_opt = nullptr, *model_opt = nullptr;
};

int cmd_train(const TrainArgs& args) {
  RunConfig cfg;
  if (!args.config.empty()) load_config_file(cfg, args.config);
  if (args.system_opt->count() > 0) cfg.system = args.system;
  if (args.seed_opt->count() > 0) cfg.seed = args.seed;
  if (args.threads_opt->count() > 0) cfg.threads = args.threads;
  if (args.train_opt->count() > 0) cfg.train = args.train;
  if (args.dev_opt->count() > 0) cfg.dev = args.dev;
  if (args.model_opt->count() > 0) cfg.model = args.model;

  try {
    validate_config(cfg);
  } catch (const std::exception& e) {
    return usage_error(e.what());
  }
  if (cfg.train.empty()) return usage_error("train: --train is required");
  if (cfg.model.empty()) return usage_error("train: --model is required");
  if (cfg.system == "neural" && cfg.dev.empty())
    return usage_error("train: --dev is required when --system neural");

  const auto t0 = std::chrono::steady_clock::now();
  const LabelledCorpus train_corpus = load_corpus(cfg.train, true);
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  if (cfg.system == "meta") {
    const MetaModel model = train_meta_model(train_corpus, meta_params(cfg), cfg.seed,
                                             cfg.threads);
    save_model(cfg.model, model);
    std::printf("trained meta system on %zu documents in %.1fs\n", train_corpus.size(),
                elapsed());
  } else {
    const LabelledCorpus dev_corpus = load_corpus(cfg.dev, true);
    const GruTrainResult result = train_gru(train_corpus, dev_corpus, cfg.gru, cfg.seed);

    std::string curve;
    for (std::size_t e = 0; e < result.dev_errors.size(); ++e) {
      char line[64];
      std::snprintf(line, sizeof line, "%zu %.6f\n", e + 1, result.dev_errors[e]);
      curve += line;
    }
    OutputBatch outputs;
    outputs.add(cfg.model, model_file_bytes(result.best_model));
    outputs.add(cfg.model + ".curve", curve);
    outputs.commit();
    std::printf(
        "trained neural system on %zu documents in %.1fs, best dev error %.4f (epoch %d)\n",
        train_corpus.size(), elapsed(), result.dev_errors[result.best_epoch],
        result.best_epoch + 1);
  }
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& input_path,
                const std::string& output_path) {
  const AnyModel model = load_any_model(model_path);
  const LabelledCorpus corpus = load_corpus_auto(input_path);
  std::string out;
  for (const LabelCode label : predict_all(model, corpus)) {
    out += to_string(label);
    out += '\n';
  }
  write_file_atomic(output_path, out);
  return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& test_path,
                 const std::string& report_path, const std::string& csv_path,
                 const std::string& svg_path) {
  const AnyModel model = load_any_model(model_path);
  const LabelledCorpus test = load_corpus(test_path, true);
  if (test.size() == 0) throw std::runtime_error("evaluate: test corpus is empty");
  EvalReport report = score(gold_labels(test), predict_all(model, test));
  report.system = model_type_name(model);

  OutputBatch outputs;
  outputs.add(report_path, report_to_json(report).dump(2) + "\n");
  if (!csv_path.empty()) outputs.add(csv_path, render_confusion_csv(report.confusion));
  if (!svg_path.empty()) outputs.add(svg_path, render_confusion_svg(report.confusion));
  outputs.commit();

  std::printf("macro_f1 %.3f\n", report.macro_f1);
  return 0;
}

int cmd_compare(const std::string& model_a_path, const std::string& model_b_path,
                const std::string& test_path, const std::string& report_path) {
  const AnyModel model_a = load_any_model(model_a_path);
  const AnyModel model_b = load_any_model(model_b_path);
  const LabelledCorpus test = load_corpus(test_path, true);
  if (test.size() == 0) throw std::runtime_error("compare: test corpus is empty");

  const std::vector<LabelCode> gold = gold_labels(test);
  const std::vector<LabelCode> pred_a = predict_all(model_a, test);
  const std::vector<LabelCode> pred_b = predict_all(model_b, test);
  EvalReport report_a = score(gold, pred_a);
  EvalReport report_b = score(gold, pred_b);
  report_a.system = model_type_name(model_a);
  report_b.system = model_type_name(model_b);
  const ComparisonReport cmp = compare(report_a, report_b, pred_a, pred_b, gold);
  write_file_atomic(report_path, comparison_to_json(cmp).dump(2) + "\n");
  std::printf("macro_f1_a %.3f macro_f1_b %.3f delta %.3f mcnemar_p %.6g\n",
              cmp.report_a.macro_f1, cmp.report_b.macro_f1, cmp.delta_macro_f1, cmp.p_value);
  return 0;
}

int cmd_featurize(const std::string& input_path, const std::string& kind_name, int n, int k,
                  const std::string& output_path) {
  FeatureClassSpec spec;
  if (kind_name == "contiguous") {
    spec.kind = GramKind::contiguous;
  } else if (kind_name == "skip") {
    spec.kind = GramKind::skip;
  } else {
    return usage_error("featurize: --kind must be 'contiguous' or 'skip'");
  }
  spec.n = n;
  spec.k = k;
  if (!spec_is_valid(spec))
    return usage_error("featurize: invalid feature class (kind=" + kind_name +
                       " n=" + std::to_string(n) + " k=" + std::to_string(k) + ")");

  const std::string bytes = read_file_bytes(input_path);
  std::string out;
  for (const std::string& line : split_lines(bytes)) {
    const std::u32string text = decode_utf8(line);
    bool first = true;
    for (const std::u32string& gram : enumerate_grams(text, spec)) {
      if (!first) out += ' ';
      first = false;
      out += '(';
      for (std::size_t i = 0; i < gram.size(); ++i) {
        if (i > 0) out += ',';
        append_utf8(out, gram[i]);
      }
      out += ')';
    }
    out += '\n';
  }
  write_file_atomic(output_path, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cuneiform language and dialect identification", "cuneid"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "Train a model and write it to disk");
  train_args.system_opt =
      train->add_option("--system", train_args.system,
                        "System to train: 'meta' (stacked SVMs + bagging) or 'neural' (GRU)");
  train_args.train_opt =
      train->add_option("--train", train_args.train, "Labelled training corpus (LABEL<TAB>TEXT)");
  train_args.dev_opt = train->add_option(
      "--dev", train_args.dev, "Labelled development corpus (required for --system neural)");
  train->add_option("--config", train_args.config, "JSON config file with hyperparameters");
  train_args.model_opt = train->add_option(
      "--model", train_args.model,
      "Where to write the trained model (neural runs also write MODEL.curve, one"
      " 'epoch dev-error' pair per line)");
  train_args.seed_opt = train->add_option("--seed", train_args.seed,
                                          "Root random seed (default 42)");
  train_args.threads_opt = train->add_option(
      "--threads", train_args.threads, "Worker threads; 0 = auto. Results do not depend on it");

  std::string predict_model, predict_input, predict_output;
  CLI::App* predict = app.add_subcommand("predict", "Predict one label per input line");
  predict->add_option("--model", predict_model, "Trained model file")->required();
  predict->add_option("--input", predict_input,
                      "Input corpus; labelled or unlabelled (labels are ignored)")
      ->required();
  predict->add_option("--output", predict_output, "Where to write predicted labels")
      ->required();

  std::string eval_model, eval_test, eval_report, eval_csv, eval_svg;
  CLI::App* evaluate = app.add_subcommand("evaluate", "Score a model on a labelled test set");
  evaluate->add_option("--model", eval_model, "Trained model file")->required();
  evaluate->add_option("--test", eval_test, "Labelled test corpus")->required();
  evaluate->add_option("--report", eval_report, "Where to write the JSON report")->required();
  evaluate->add_option("--confusion-csv", eval_csv, "Optional confusion matrix CSV");
  evaluate->add_option("--confusion-svg", eval_svg, "Optional confusion matrix SVG heatmap");

  std::string cmp_a, cmp_b, cmp_test, cmp_report;
  CLI::App* compare_cmd =
      app.add_subcommand("compare", "Compare two models with McNemar's exact test");
  compare_cmd->add_option("--model-a", cmp_a, "First model file")->required();
  compare_cmd->add_option("--model-b", cmp_b, "Second model file")->required();
  compare_cmd->add_option("--test", cmp_test, "Labelled test corpus")->required();
  compare_cmd->add_option("--report", cmp_report, "Where to write the JSON comparison")
      ->required();

  std::string feat_input, feat_kind, feat_output;
  int feat_n = 0, feat_k = 0;
  CLI::App* featurize =
      app.add_subcommand("featurize", "Dump the grams each input line produces");
  featurize->add_option("--input", feat_input, "Text file, one document per line")->required();
  featurize->add_option("--kind", feat_kind, "'contiguous' or 'skip'")->required();
  featurize->add_option("--n", feat_n, "Gram order (1-5 contiguous, 2-3 skip)")->required();
  featurize->add_option("--k", feat_k, "Skip distance (1-3, skip kind only)");
  featurize->add_option("--output", feat_output, "Where to write the gram lines")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\nRun with --help for more information.\n";
    return 2;
  }

  try {
    if (train->parsed()) return cmd_train(train_args);
    if (predict->parsed()) return cmd_predict(predict_model, predict_input, predict_output);
    if (evaluate->parsed())
      return cmd_evaluate(eval_model, eval_test, eval_report, eval_csv, eval_svg);
    if (compare_cmd->parsed()) return cmd_compare(cmp_a, cmp_b, cmp_test, cmp_report);
    if (featurize->parsed())
      return cmd_featurize(feat_input, feat_kind, feat_n, feat_k, feat_output);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
