#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "cuneid/forest.hpp"
#include "cuneid/gru.hpp"
#include "cuneid/linear_svm.hpp"
#include "cuneid/meta.hpp"
#include "cuneid/serialize.hpp"

namespace cuneid {

// Every hyperparameter in one place, with the documented defaults. The JSON
// config file is a flat object whose keys mirror these fields; flags override
// the file, the file overrides the defaults.
struct RunConfig {
  std::string system = "meta";  // "meta" or "neural"
  std::uint64_t seed = 42;
  unsigned threads = 0;  // 0 = one worker per hardware thread
  std::size_t min_count = 1;

  SvmParams svm;
  int stack_folds = 10;
  StackingMode stacking = StackingMode::out_of_fold;
  ForestParams forest;
  GruTrainParams gru;

  // Paths may come from the config file too; flags still win.
  std::string train, dev, model, input, output, test, report;
  std::string confusion_csv, confusion_svg, model_a, model_b;
};

namespace detail {

inline std::runtime_error config_error(const std::string& key, const std::string& why) {
  return std::runtime_error("config: key '" + key + "' " + why);
}

inline double get_number(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number()) throw config_error(key, "must be a number");
  return v.get<double>();
}

inline std::int64_t get_integer(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number_integer()) throw config_error(key, "must be an integer");
  return v.get<std::int64_t>();
}

inline std::string get_string(const nlohmann::json& v, const std::string& key) {
  if (!v.is_string()) throw config_error(key, "must be a string");
  return v.get<std::string>();
}

}  // namespace detail

inline StackingMode parse_stacking_mode(const std::string& name) {
  if (name == "out_of_fold") return StackingMode::out_of_fold;
  if (name == "in_sample") return StackingMode::in_sample;
  throw std::runtime_error("config: stacking must be 'out_of_fold' or 'in_sample', got '" +
                           name + "'");
}

// Range checks for every field, applied after flags and config merge so bad
// values are caught no matter where they came from.
inline void validate_config(const RunConfig& cfg) {
  auto fail = [](const std::string& what) {
    throw std::runtime_error("config: " + what);
  };
  if (cfg.system != "meta" && cfg.system != "neural")
    fail("system must be 'meta' or 'neural', got '" + cfg.system + "'");
  if (cfg.min_count < 1) fail("min_count must be >= 1");
  if (!(cfg.svm.c > 0.0)) fail("svm_c must be positive");
  if (!(cfg.svm.eps > 0.0)) fail("svm_eps must be positive");
  if (cfg.svm.max_outer < 1) fail("svm_max_outer must be >= 1");
  if (cfg.stack_folds < 2) fail("stack_folds must be >= 2");
  if (cfg.forest.trees < 1) fail("forest_trees must be >= 1");
  if (cfg.forest.max_depth < -1)
    fail("forest_max_depth must be -1 (unlimited) or >= 0");
  if (cfg.forest.mtry < 1 || cfg.forest.mtry > kMetaFeatureDim)
    fail("forest_mtry must be in [1, " + std::to_string(kMetaFeatureDim) + "]");
  if (cfg.forest.min_leaf < 1) fail("forest_min_leaf must be >= 1");
  if (cfg.gru.gru.embed_dim < 1) fail("gru_embed_dim must be >= 1");
  if (cfg.gru.gru.hidden_dim < 1) fail("gru_hidden_dim must be >= 1");
  if (!(cfg.gru.gru.dropout >= 0.0 && cfg.gru.gru.dropout < 1.0))
    fail("gru_dropout must be in [0, 1)");
  if (!(cfg.gru.adam.lr > 0.0)) fail("adam_lr must be positive");
  if (!(cfg.gru.adam.beta1 >= 0.0 && cfg.gru.adam.beta1 < 1.0))
    fail("adam_beta1 must be in [0, 1)");
  if (!(cfg.gru.adam.beta2 >= 0.0 && cfg.gru.adam.beta2 < 1.0))
    fail("adam_beta2 must be in [0, 1)");
  if (!(cfg.gru.adam.eps > 0.0)) fail("adam_eps must be positive");
  if (cfg.gru.batch_size < 1) fail("batch_size must be >= 1");
  if (cfg.gru.epochs < 1) fail("epochs must be >= 1");
  if (!(cfg.gru.unk_corruption >= 0.0 && cfg.gru.unk_corruption <= 1.0))
    fail("unk_corruption must be in [0, 1]");
}

// Applies a parsed config document onto cfg. Unknown keys are an error, as
// is any value of the wrong type or outside its range.
inline void apply_config_json(RunConfig& cfg, const nlohmann::json& doc) {
  if (!doc.is_object()) throw std::runtime_error("config: top level must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (key == "system") {
      cfg.system = detail::get_string(value, key);
    } else if (key == "seed") {
      const std::int64_t s = detail::get_integer(value, key);
      if (s < 0) throw detail::config_error(key, "must be >= 0");
      cfg.seed = static_cast<std::uint64_t>(s);
    } else if (key == "threads") {
      const std::int64_t t = detail::get_integer(value, key);
      if (t < 0) throw detail::config_error(key, "must be >= 0");
      cfg.threads = static_cast<unsigned>(t);
    } else if (key == "min_count") {
      const std::int64_t m = detail::get_integer(value, key);
      if (m < 1) throw detail::config_error(key, "must be >= 1");
      cfg.min_count = static_cast<std::size_t>(m);
    } else if (key == "svm_c") {
      cfg.svm.c = detail::get_number(value, key);
    } else if (key == "svm_eps") {
      cfg.svm.eps = detail::get_number(value, key);
    } else if (key == "svm_max_outer") {
      cfg.svm.max_outer = static_cast<int>(detail::get_integer(value, key));
    } else if (key == "stack_folds") {
      cfg.stack_folds = static_cast<int>(detail::get_integer(value, key));
    } else if (key == "stacking") {
      cfg.stacking = parse_stacking_mode(detail::get_string(value, key));
    } else if (key == "forest_trees") {
      cfg.forest.trees = static_cast<int>(detail::get_integer(value, key));
    } else if (key == "forest_max_depth") {
      cfg.forest.max_depth = static_cast<int>(detail::get_integer(value, key));
    } else if (key == "forest_mtry") {
      cfg.forest.mtry = static_cast<int>(detail::get_integer(value, key));
    } else if (key == "forest_min_leaf") {
      cfg.forest.min_leaf = static_cast<int>(detail::get_integer(value, key));
    } else if (key == "gru_embed_dim") {
      cfg.gru.gru.embed_dim = static_cast<int>(detail::get_integer(value, key));
    } else if (key == "gru_hidden_dim") {
      cfg.gru.gru.hidden_dim = static_cast<int>(detail::get_integer(value, key));
    } else if (key == "gru_dropout") {
      cfg.gru.gru.dropout = detail::get_number(value, key);
    } else if (key == "adam_lr") {
      cfg.gru.adam.lr = detail::get_number(value, key);
    } else if (key == "adam_beta1") {
      cfg.gru.adam.beta1 = detail::get_number(value, key);
    } else if (key == "adam_beta2") {
      cfg.gru.adam.beta2 = detail::get_number(value, key);
    } else if (key == "adam_eps") {
      cfg.gru.adam.eps = detail::get_number(value, key);
    } else if (key == "batch_size") {
      cfg.gru.batch_size = static_cast<int>(detail::get_integer(value, key));
    } else if (key == "epochs") {
      cfg.gru.epochs = static_cast<int>(detail::get_integer(value, key));
    } else if (key == "unk_corruption") {
      cfg.gru.unk_corruption = detail::get_number(value, key);
    } else if (key == "train") {
      cfg.train = detail::get_string(value, key);
    } else if (key == "dev") {
      cfg.dev = detail::get_string(value, key);
    } else if (key == "model") {
      cfg.model = detail::get_string(value, key);
    } else if (key == "input") {
      cfg.input = detail::get_string(value, key);
    } else if (key == "output") {
      cfg.output = detail::get_string(value, key);
    } else if (key == "test") {
      cfg.test = detail::get_string(value, key);
    } else if (key == "report") {
      cfg.report = detail::get_string(value, key);
    } else if (key == "confusion_csv") {
      cfg.confusion_csv = detail::get_string(value, key);
    } else if (key == "confusion_svg") {
      cfg.confusion_svg = detail::get_string(value, key);
    } else if (key == "model_a") {
      cfg.model_a = detail::get_string(value, key);
    } else if (key == "model_b") {
      cfg.model_b = detail::get_string(value, key);
    } else {
      throw std::runtime_error("config: unknown key '" + key + "'");
    }
  }
}

inline void load_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("config " + path.string() + ": " + e.what());
  }
  apply_config_json(cfg, doc);
}

inline MetaTrainParams meta_params(const RunConfig& cfg) {
  MetaTrainParams params;
  params.stack.folds = cfg.stack_folds;
  params.stack.mode = cfg.stacking;
  params.stack.min_count = cfg.min_count;
  params.stack.svm = cfg.svm;
  params.forest = cfg.forest;
  return params;
}

}  // namespace cuneid
