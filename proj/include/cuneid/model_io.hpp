#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <variant>

#include "cuneid/features.hpp"
#include "cuneid/gru.hpp"
#include "cuneid/meta.hpp"
#include "cuneid/rng.hpp"
#include "cuneid/serialize.hpp"

namespace cuneid {

// Model files are a small envelope around a type-specific payload:
//   "CNID" | version u32 | type u8 | payload_len u64 | payload | fnv1a64(payload)
// The trailing checksum turns silent truncation or bit rot into a clean error.
inline constexpr char kModelMagic[4] = {'C', 'N', 'I', 'D'};
inline constexpr std::uint32_t kModelVersion = 1;
inline constexpr std::uint8_t kModelTypeMeta = 1;
inline constexpr std::uint8_t kModelTypeNeural = 2;

using AnyModel = std::variant<MetaModel, GruClassifier>;

namespace detail {

inline void write_spec(BinaryWriter& w, const FeatureClassSpec& spec) {
  w.u8(static_cast<std::uint8_t>(spec.kind));
  w.i32(spec.n);
  w.i32(spec.k);
}

inline FeatureClassSpec read_spec(BinaryReader& r) {
  FeatureClassSpec spec;
  spec.kind = static_cast<GramKind>(r.u8());
  spec.n = r.i32();
  spec.k = r.i32();
  require_valid_spec(spec);
  return spec;
}

inline void write_f64_vec(BinaryWriter& w, const std::vector<double>& v) {
  w.u64(v.size());
  for (double x : v) w.f64(x);
}

inline std::vector<double> read_f64_vec(BinaryReader& r) {
  const std::uint64_t n = r.u64();
  std::vector<double> v;
  v.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) v.push_back(r.f64());
  return v;
}

inline std::string meta_payload(const MetaModel& model) {
  BinaryWriter w;
  w.u32(static_cast<std::uint32_t>(model.bases.size()));
  for (const BasePair& base : model.bases) {
    write_spec(w, base.vocab.spec);
    w.u32(base.vocab.size());
    for (const std::u32string& gram : base.vocab.grams) w.u32str(gram);
    w.u32(base.model.dim);
    w.f64(base.model.c);
    for (const auto& row : base.model.weights) write_f64_vec(w, row);
  }
  w.i32(model.forest_params.trees);
  w.i32(model.forest_params.max_depth);
  w.i32(model.forest_params.mtry);
  w.i32(model.forest_params.min_leaf);
  w.u32(static_cast<std::uint32_t>(model.forest.size()));
  for (const DecisionTree& tree : model.forest) {
    w.u32(static_cast<std::uint32_t>(tree.nodes.size()));
    for (const TreeNode& node : tree.nodes) {
      w.i32(node.feature);
      w.f64(node.threshold);
      w.u32(node.left);
      w.u32(node.right);
      for (std::uint64_t c : node.counts) w.u64(c);
    }
  }
  return w.take();
}

inline MetaModel read_meta_payload(BinaryReader& r) {
  MetaModel model;
  const std::uint32_t n_bases = r.u32();
  if (n_bases != kNumFeatureClasses)
    throw std::runtime_error("model file: expected " + std::to_string(kNumFeatureClasses) +
                             " base models, found " + std::to_string(n_bases));
  model.bases.resize(n_bases);
  for (BasePair& base : model.bases) {
    base.vocab.spec = read_spec(r);
    const std::uint32_t n_grams = r.u32();
    base.vocab.grams.reserve(n_grams);
    for (std::uint32_t i = 0; i < n_grams; ++i) {
      std::u32string gram = r.u32str();
      base.vocab.index.emplace(gram, i);
      base.vocab.grams.push_back(std::move(gram));
    }
    base.model.spec = base.vocab.spec;
    base.model.dim = r.u32();
    base.model.c = r.f64();
    if (base.model.dim != n_grams)
      throw std::runtime_error("model file: weight dimension does not match vocabulary");
    for (auto& row : base.model.weights) {
      row = read_f64_vec(r);
      if (row.size() != static_cast<std::size_t>(base.model.dim) + 1)
        throw std::runtime_error("model file: weight row has wrong length");
    }
  }
  model.forest_params.trees = r.i32();
  model.forest_params.max_depth = r.i32();
  model.forest_params.mtry = r.i32();
  model.forest_params.min_leaf = r.i32();
  const std::uint32_t n_trees = r.u32();
  model.forest.resize(n_trees);
  for (DecisionTree& tree : model.forest) {
    const std::uint32_t n_nodes = r.u32();
    tree.nodes.resize(n_nodes);
    for (TreeNode& node : tree.nodes) {
      node.feature = r.i32();
      node.threshold = r.f64();
      node.left = r.u32();
      node.right = r.u32();
      for (std::uint64_t& c : node.counts) c = r.u64();
      if (node.feature >= 0 && (node.left >= n_nodes || node.right >= n_nodes))
        throw std::runtime_error("model file: tree child index out of range");
    }
  }
  return model;
}

inline std::string gru_payload(const GruClassifier& model) {
  BinaryWriter w;
  w.i32(model.cfg.embed_dim);
  w.i32(model.cfg.hidden_dim);
  w.f64(model.cfg.dropout);
  w.u32(static_cast<std::uint32_t>(model.alphabet.size()));
  for (char32_t c : model.alphabet) w.u32(static_cast<std::uint32_t>(c));
  for_each_tensor(model, [&](const std::string&, const Vec& t) { write_f64_vec(w, t); });
  return w.take();
}

inline GruClassifier read_gru_payload(BinaryReader& r) {
  GruConfig cfg;
  cfg.embed_dim = r.i32();
  cfg.hidden_dim = r.i32();
  cfg.dropout = r.f64();
  if (cfg.embed_dim < 1 || cfg.hidden_dim < 1 || !(cfg.dropout >= 0.0 && cfg.dropout < 1.0))
    throw std::runtime_error("model file: invalid network dimensions");

  GruClassifier model;
  model.cfg = cfg;
  const std::uint32_t n_chars = r.u32();
  model.alphabet.reserve(n_chars);
  for (std::uint32_t i = 0; i < n_chars; ++i) {
    const char32_t c = static_cast<char32_t>(r.u32());
    model.char_ids.emplace(c, static_cast<int>(i) + 1);
    model.alphabet.push_back(c);
  }
  const std::size_t embed = static_cast<std::size_t>(cfg.embed_dim);
  const std::size_t hidden = static_cast<std::size_t>(cfg.hidden_dim);
  model.embeddings = Mat(model.alphabet.size() + 1, embed);
  model.word_rnn[0].resize(embed, hidden);
  model.word_rnn[1].resize(hidden, hidden);
  model.sent_rnn[0].resize(hidden, hidden);
  model.sent_rnn[1].resize(hidden, hidden);
  model.out_w = Mat(kNumLabels, hidden);
  model.out_b.assign(kNumLabels, 0.0);
  for_each_tensor(model, [&](const std::string& name, Vec& t) {
    const std::vector<double> values = read_f64_vec(r);
    if (values.size() != t.size())
      throw std::runtime_error("model file: tensor " + name + " has wrong size");
    t = values;
  });
  return model;
}

inline std::string envelope(std::uint8_t type, std::string payload) {
  BinaryWriter w;
  for (char c : kModelMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kModelVersion);
  w.u8(type);
  w.u64(payload.size());
  const std::uint64_t hash = fnv1a64(payload);
  std::string out = w.take();
  out += payload;
  BinaryWriter tail;
  tail.u64(hash);
  out += tail.take();
  return out;
}

}  // namespace detail

inline std::string model_file_bytes(const MetaModel& model) {
  return detail::envelope(kModelTypeMeta, detail::meta_payload(model));
}

inline std::string model_file_bytes(const GruClassifier& model) {
  return detail::envelope(kModelTypeNeural, detail::gru_payload(model));
}

inline void save_model(const std::filesystem::path& path, const MetaModel& model) {
  write_file_atomic(path, model_file_bytes(model));
}

inline void save_model(const std::filesystem::path& path, const GruClassifier& model) {
  write_file_atomic(path, model_file_bytes(model));
}

inline void save_model(const std::filesystem::path& path, const AnyModel& model) {
  std::visit([&](const auto& m) { save_model(path, m); }, model);
}

// Loads either model type, verifying the envelope end to end. Every failure
// mode (wrong file, old version, truncation, corruption, junk at the end)
// is a std::runtime_error with a message naming the problem.
inline AnyModel load_any_model(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  BinaryReader r(bytes, "model file " + path.string());
  char magic[4];
  for (char& c : magic) c = static_cast<char>(r.u8());
  if (!std::equal(magic, magic + 4, kModelMagic))
    throw std::runtime_error(path.string() + " is not a model file (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kModelVersion)
    throw std::runtime_error(path.string() + ": unsupported model file version " +
                             std::to_string(version));
  const std::uint8_t type = r.u8();
  const std::uint64_t payload_len = r.u64();
  if (r.remaining() != payload_len + 8)
    throw std::runtime_error(path.string() + ": wrong payload length (file truncated or " +
                             "has trailing bytes)");
  const std::string_view payload(bytes.data() + (bytes.size() - payload_len - 8), payload_len);
  BinaryReader tail(std::string_view(bytes).substr(bytes.size() - 8),
                    "model file " + path.string());
  if (tail.u64() != fnv1a64(payload))
    throw std::runtime_error(path.string() + ": checksum mismatch (file is corrupted)");

  BinaryReader body(payload, "model file " + path.string());
  AnyModel model;
  if (type == kModelTypeMeta) {
    model = detail::read_meta_payload(body);
  } else if (type == kModelTypeNeural) {
    model = detail::read_gru_payload(body);
  } else {
    throw std::runtime_error(path.string() + ": unknown model type " + std::to_string(type));
  }
  body.expect_end();
  return model;
}

inline std::string model_type_name(const AnyModel& model) {
  return std::holds_alternative<MetaModel>(model) ? "meta" : "neural";
}

}  // namespace cuneid
