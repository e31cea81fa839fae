#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "cuneid/corpus.hpp"
#include "cuneid/evaluation.hpp"
#include "cuneid/serialize.hpp"
#include "support.hpp"

using namespace cuneid;
using testsup::run_cli;
using testsup::TempDir;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::StartsWith;

namespace {

std::string golden(const std::string& name) {
  return read_file_bytes(std::filesystem::path(CUNEID_TESTS_DIR) / "golden" / name);
}

std::vector<std::string> lines_of(const std::string& bytes) {
  std::vector<std::string> lines;
  std::string current;
  for (char ch : bytes) {
    if (ch == '\n') {
      lines.push_back(current);
      current.clear();
    } else {
      current.push_back(ch);
    }
  }
  if (!current.empty()) lines.push_back(current);
  return lines;
}

// One shared fixture directory: corpora written once, models trained once,
// reused by the pipeline tests below.
struct Pipeline {
  TempDir dir{"cuneid-cli"};
  std::string train_tsv, dev_tsv, test_tsv, raw_txt, meta_cfg, neural_cfg;
  std::string meta_model, neural_model;
  std::size_t test_docs = 0;

  Pipeline() {
    const LabelledCorpus train = testsup::make_synthetic_corpus(12, 71);
    const LabelledCorpus dev = testsup::make_synthetic_corpus(4, 72);
    const LabelledCorpus test = testsup::make_synthetic_corpus(4, 73);
    test_docs = test.size();
    train_tsv = (dir / "train.tsv").string();
    dev_tsv = (dir / "dev.tsv").string();
    test_tsv = (dir / "test.tsv").string();
    write_corpus(train, train_tsv);
    write_corpus(dev, dev_tsv);
    write_corpus(test, test_tsv);

    std::string raw;
    for (const Document& doc : test.documents) raw += encode_utf8(doc.text) + "\n";
    raw_txt = (dir / "raw.txt").string();
    write_file_atomic(raw_txt, raw);

    meta_cfg = (dir / "meta.json").string();
    write_file_atomic(meta_cfg, R"({"stack_folds": 4, "forest_trees": 30})");
    neural_cfg = (dir / "neural.json").string();
    write_file_atomic(neural_cfg,
                      R"({"system": "neural", "gru_embed_dim": 4, "gru_hidden_dim": 4,
                          "epochs": 2, "batch_size": 8})");

    meta_model = (dir / "meta.bin").string();
    neural_model = (dir / "neural.bin").string();
  }
};

Pipeline& pipeline() {
  static Pipeline p;
  return p;
}

}  // namespace

TEST_CASE("help output matches the golden transcripts") {
  CHECK(run_cli({"--help"}).output == golden("help_main.txt"));
  CHECK(run_cli({"--help"}).exit_code == 0);
  CHECK(run_cli({"train", "--help"}).output == golden("help_train.txt"));
  CHECK(run_cli({"predict", "--help"}).output == golden("help_predict.txt"));
  CHECK(run_cli({"evaluate", "--help"}).output == golden("help_evaluate.txt"));
  CHECK(run_cli({"compare", "--help"}).output == golden("help_compare.txt"));
  CHECK(run_cli({"featurize", "--help"}).output == golden("help_featurize.txt"));
}

TEST_CASE("argument mistakes exit with code 2") {
  CHECK(run_cli({}).exit_code == 2);
  CHECK(run_cli({"frobnicate"}).exit_code == 2);
  CHECK(run_cli({"predict", "--input", "x", "--output", "y"}).exit_code == 2);
  CHECK(run_cli({"train", "--no-such-flag"}).exit_code == 2);

  const testsup::CliResult no_train = run_cli({"train", "--model", "m.bin"});
  CHECK(no_train.exit_code == 2);
  CHECK_THAT(no_train.output, ContainsSubstring("--train is required"));
}

TEST_CASE("featurize dumps grams with one output line per input line") {
  TempDir dir("cuneid-feat");
  const std::string input = (dir / "in.txt").string();
  const std::string output = (dir / "out.txt").string();
  write_file_atomic(input, "abcde\n\nab\n");

  const testsup::CliResult skip =
      run_cli({"featurize", "--input", input, "--kind", "skip", "--n", "2", "--k", "1",
               "--output", output});
  REQUIRE(skip.exit_code == 0);
  CHECK(read_file_bytes(output) == "(a,c) (b,d) (c,e)\n\n\n");

  const testsup::CliResult contiguous =
      run_cli({"featurize", "--input", input, "--kind", "contiguous", "--n", "2", "--output",
               output});
  REQUIRE(contiguous.exit_code == 0);
  CHECK(read_file_bytes(output) == "(a,b) (b,c) (c,d) (d,e)\n\n(a,b)\n");

  const testsup::CliResult bad_n =
      run_cli({"featurize", "--input", input, "--kind", "contiguous", "--n", "6", "--output",
               output});
  CHECK(bad_n.exit_code == 2);
  CHECK_THAT(bad_n.output, ContainsSubstring("invalid feature class"));

  const testsup::CliResult bad_kind =
      run_cli({"featurize", "--input", input, "--kind", "sliding", "--n", "2", "--output",
               output});
  CHECK(bad_kind.exit_code == 2);
  CHECK_THAT(bad_kind.output, ContainsSubstring("must be 'contiguous' or 'skip'"));
}

TEST_CASE("meta training is deterministic across runs and thread counts") {
  Pipeline& p = pipeline();
  const testsup::CliResult first =
      run_cli({"train", "--system", "meta", "--train", p.train_tsv, "--model", p.meta_model,
               "--config", p.meta_cfg, "--seed", "7", "--threads", "1"});
  REQUIRE(first.exit_code == 0);
  CHECK_THAT(first.output, ContainsSubstring("trained meta system on 84 documents"));

  const std::string again = (p.dir / "meta2.bin").string();
  const testsup::CliResult second =
      run_cli({"train", "--system", "meta", "--train", p.train_tsv, "--model", again,
               "--config", p.meta_cfg, "--seed", "7", "--threads", "2"});
  REQUIRE(second.exit_code == 0);
  CHECK(read_file_bytes(p.meta_model) == read_file_bytes(again));
}

TEST_CASE("neural training needs a dev set and writes the error curve") {
  Pipeline& p = pipeline();
  const testsup::CliResult no_dev =
      run_cli({"train", "--train", p.train_tsv, "--model", p.neural_model, "--config",
               p.neural_cfg, "--seed", "7"});
  CHECK(no_dev.exit_code == 2);
  CHECK_THAT(no_dev.output, ContainsSubstring("--dev is required"));

  const testsup::CliResult ok =
      run_cli({"train", "--train", p.train_tsv, "--dev", p.dev_tsv, "--model", p.neural_model,
               "--config", p.neural_cfg, "--seed", "7"});
  REQUIRE(ok.exit_code == 0);
  CHECK_THAT(ok.output, ContainsSubstring("trained neural system on 84 documents"));
  CHECK_THAT(ok.output, ContainsSubstring("best dev error"));

  const std::string curve = read_file_bytes(p.neural_model + ".curve");
  const auto curve_lines = lines_of(curve);
  REQUIRE(curve_lines.size() == 2);
  CHECK_THAT(curve_lines[0], StartsWith("1 0."));
  CHECK_THAT(curve_lines[1], StartsWith("2 0."));
}

TEST_CASE("predict writes one label per line for labelled and raw input") {
  Pipeline& p = pipeline();
  const std::string out = (p.dir / "pred.txt").string();

  const testsup::CliResult labelled =
      run_cli({"predict", "--model", p.meta_model, "--input", p.test_tsv, "--output", out});
  REQUIRE(labelled.exit_code == 0);
  const auto pred_lines = lines_of(read_file_bytes(out));
  REQUIRE(pred_lines.size() == p.test_docs);
  for (const std::string& line : pred_lines) CHECK(parse_label(line).has_value());

  const testsup::CliResult raw =
      run_cli({"predict", "--model", p.neural_model, "--input", p.raw_txt, "--output", out});
  REQUIRE(raw.exit_code == 0);
  CHECK(lines_of(read_file_bytes(out)).size() == p.test_docs);

  const std::string empty_in = (p.dir / "empty.txt").string();
  write_file_atomic(empty_in, "");
  const testsup::CliResult empty =
      run_cli({"predict", "--model", p.meta_model, "--input", empty_in, "--output", out});
  REQUIRE(empty.exit_code == 0);
  CHECK(read_file_bytes(out).empty());
}

TEST_CASE("evaluate reports macro F1 and writes the artifacts it is asked for") {
  Pipeline& p = pipeline();
  const std::string report = (p.dir / "report.json").string();
  const std::string csv = (p.dir / "confusion.csv").string();
  const std::string svg = (p.dir / "confusion.svg").string();

  const testsup::CliResult result =
      run_cli({"evaluate", "--model", p.meta_model, "--test", p.test_tsv, "--report", report,
               "--confusion-csv", csv, "--confusion-svg", svg});
  REQUIRE(result.exit_code == 0);
  CHECK_THAT(result.output, StartsWith("macro_f1 "));

  const nlohmann::json j = nlohmann::json::parse(read_file_bytes(report));
  CHECK(j.at("system") == "meta");
  CHECK(j.at("n") == p.test_docs);
  CHECK(j.at("accuracy").get<double>() >= 0.9);  // disjoint alphabets: near-perfect
  CHECK(j.contains("per_class"));
  CHECK(j.at("matrix").size() == kNumLabels);

  CHECK_NOTHROW(parse_confusion_csv(read_file_bytes(csv)));
  CHECK_THAT(read_file_bytes(svg), ContainsSubstring("</svg>"));

  const std::string empty_tsv = (p.dir / "none.tsv").string();
  write_file_atomic(empty_tsv, "");
  const testsup::CliResult empty =
      run_cli({"evaluate", "--model", p.meta_model, "--test", empty_tsv, "--report", report});
  CHECK(empty.exit_code == 1);
  CHECK_THAT(empty.output, ContainsSubstring("test corpus is empty"));
}

TEST_CASE("compare runs McNemar between two models") {
  Pipeline& p = pipeline();
  const std::string report = (p.dir / "cmp.json").string();
  const testsup::CliResult result =
      run_cli({"compare", "--model-a", p.meta_model, "--model-b", p.neural_model, "--test",
               p.test_tsv, "--report", report});
  REQUIRE(result.exit_code == 0);
  CHECK_THAT(result.output, StartsWith("macro_f1_a "));
  CHECK_THAT(result.output, ContainsSubstring("mcnemar_p "));

  const nlohmann::json j = nlohmann::json::parse(read_file_bytes(report));
  CHECK(j.at("a").at("system") == "meta");
  CHECK(j.at("b").at("system") == "neural");
  CHECK(j.contains("delta_macro_f1"));
  CHECK(j.at("mcnemar").contains("p_value"));
}

TEST_CASE("broken model files fail cleanly") {
  Pipeline& p = pipeline();
  const std::string out = (p.dir / "pred.txt").string();

  const std::string garbage = (p.dir / "garbage.bin").string();
  write_file_atomic(garbage, "this is not a model");
  const testsup::CliResult bad =
      run_cli({"predict", "--model", garbage, "--input", p.test_tsv, "--output", out});
  CHECK(bad.exit_code == 1);
  CHECK_THAT(bad.output, ContainsSubstring("not a model file"));

  std::string flipped = read_file_bytes(p.meta_model);
  flipped[flipped.size() / 2] ^= 0x40;
  const std::string corrupted = (p.dir / "corrupted.bin").string();
  write_file_atomic(corrupted, flipped);
  const testsup::CliResult corrupt =
      run_cli({"predict", "--model", corrupted, "--input", p.test_tsv, "--output", out});
  CHECK(corrupt.exit_code == 1);
  CHECK_THAT(corrupt.output, ContainsSubstring("checksum mismatch"));

  const testsup::CliResult missing =
      run_cli({"predict", "--model", (p.dir / "nope.bin").string(), "--input", p.test_tsv,
               "--output", out});
  CHECK(missing.exit_code == 1);
}

TEST_CASE("config file problems are reported with their key") {
  Pipeline& p = pipeline();
  const std::string bogus = (p.dir / "bogus.json").string();
  write_file_atomic(bogus, R"({"bogus": 1})");
  const testsup::CliResult unknown =
      run_cli({"train", "--train", p.train_tsv, "--model", (p.dir / "x.bin").string(),
               "--config", bogus});
  CHECK(unknown.exit_code == 1);
  CHECK_THAT(unknown.output, ContainsSubstring("unknown key 'bogus'"));

  const std::string bad_value = (p.dir / "badval.json").string();
  write_file_atomic(bad_value, R"({"svm_c": -1.0})");
  const testsup::CliResult invalid =
      run_cli({"train", "--train", p.train_tsv, "--model", (p.dir / "x.bin").string(),
               "--config", bad_value});
  CHECK(invalid.exit_code == 2);
  CHECK_THAT(invalid.output, ContainsSubstring("svm_c must be positive"));

  const testsup::CliResult bad_system =
      run_cli({"train", "--system", "tarot", "--train", p.train_tsv, "--model",
               (p.dir / "x.bin").string()});
  CHECK(bad_system.exit_code == 2);
  CHECK_THAT(bad_system.output, ContainsSubstring("system must be 'meta' or 'neural'"));
}

TEST_CASE("corpus problems surface the file diagnostics") {
  Pipeline& p = pipeline();
  const std::string broken = (p.dir / "broken.tsv").string();
  write_file_atomic(broken, "SUX\n");
  const testsup::CliResult result =
      run_cli({"train", "--train", broken, "--model", (p.dir / "x.bin").string()});
  CHECK(result.exit_code == 1);
  CHECK_THAT(result.output, ContainsSubstring("line 1"));
}
