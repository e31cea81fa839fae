#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "cuneid/corpus.hpp"
#include "cuneid/label.hpp"
#include "cuneid/linalg.hpp"
#include "cuneid/rng.hpp"

namespace cuneid {

// Gate parameters for one GRU layer, using the standard formulation
//   z = sigmoid(Wz x + Uz h + bz)
//   r = sigmoid(Wr x + Ur h + br)
//   hc = tanh(Wh x + Uh (r*h) + bh)
//   h' = (1-z)*h + z*hc
struct GruLayerParams {
  std::size_t input = 0;
  std::size_t hidden = 0;
  Mat wz, uz, wr, ur, wh, uh;  // W*: hidden x input, U*: hidden x hidden
  Vec bz, br, bh;

  void resize(std::size_t in, std::size_t hid) {
    input = in;
    hidden = hid;
    wz = Mat(hid, in);
    wr = Mat(hid, in);
    wh = Mat(hid, in);
    uz = Mat(hid, hid);
    ur = Mat(hid, hid);
    uh = Mat(hid, hid);
    bz.assign(hid, 0.0);
    br.assign(hid, 0.0);
    bh.assign(hid, 0.0);
  }
};

struct GruConfig {
  int embed_dim = 25;
  int hidden_dim = 30;
  double dropout = 0.5;
};

// Compositional classifier: characters are embedded, a 2-layer GRU turns
// each word's character sequence into a word vector, a second 2-layer GRU
// turns the word vectors into a sentence vector, and a dense layer produces
// the 7-way softmax. Index 0 of the embedding table is the UNK character.
struct GruClassifier {
  GruConfig cfg;
  std::vector<char32_t> alphabet;             // row i+1 of the table
  std::unordered_map<char32_t, int> char_ids;
  Mat embeddings;                             // (alphabet+1) x embed_dim
  std::array<GruLayerParams, 2> word_rnn;
  std::array<GruLayerParams, 2> sent_rnn;
  Mat out_w;  // kNumLabels x hidden_dim
  Vec out_b;  // kNumLabels
};

// Words are runs of non-space codepoints; only U+0020 separates. A line
// without spaces is a single word.
inline std::vector<std::u32string> tokenize(const std::u32string& text) {
  std::vector<std::u32string> words;
  std::u32string current;
  for (char32_t c : text) {
    if (c == U' ') {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

// Applies fn(name, tensor) to every parameter tensor in a fixed order. Both
// the optimizer state and the model file rely on this order.
template <typename ModelT, typename Fn>
void for_each_tensor(ModelT& model, Fn&& fn) {
  fn("embeddings", model.embeddings.a);
  const char* groups[2] = {"word", "sent"};
  for (int g = 0; g < 2; ++g) {
    auto& rnn = g == 0 ? model.word_rnn : model.sent_rnn;
    for (int layer = 0; layer < 2; ++layer) {
      const std::string prefix = std::string(groups[g]) + std::to_string(layer) + ".";
      fn(prefix + "wz", rnn[layer].wz.a);
      fn(prefix + "uz", rnn[layer].uz.a);
      fn(prefix + "bz", rnn[layer].bz);
      fn(prefix + "wr", rnn[layer].wr.a);
      fn(prefix + "ur", rnn[layer].ur.a);
      fn(prefix + "br", rnn[layer].br);
      fn(prefix + "wh", rnn[layer].wh.a);
      fn(prefix + "uh", rnn[layer].uh.a);
      fn(prefix + "bh", rnn[layer].bh);
    }
  }
  fn("out.w", model.out_w.a);
  fn("out.b", model.out_b);
}

// Same architecture, all tensors zeroed; the carrier for gradients.
inline GruClassifier zeros_like(const GruClassifier& model) {
  GruClassifier z = model;
  for_each_tensor(z, [](const std::string&, Vec& t) { std::fill(t.begin(), t.end(), 0.0); });
  return z;
}

// Builds the char map from the training corpus (first-occurrence order,
// spaces excluded) and draws every parameter from uniform(-0.08, 0.08).
inline GruClassifier init_gru(const LabelledCorpus& train, const GruConfig& cfg,
                              std::uint64_t seed) {
  if (cfg.embed_dim < 1 || cfg.hidden_dim < 1)
    throw std::runtime_error("gru: dimensions must be positive");
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0))
    throw std::runtime_error("gru: dropout must be in [0, 1)");
  GruClassifier model;
  model.cfg = cfg;
  for (const Document& doc : train.documents) {
    for (char32_t c : doc.text) {
      if (c == U' ') continue;
      if (model.char_ids.emplace(c, static_cast<int>(model.alphabet.size()) + 1).second)
        model.alphabet.push_back(c);
    }
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

  Rng rng(derive_seed(seed, "init"));
  for_each_tensor(model, [&](const std::string&, Vec& t) {
    for (double& v : t) v = rng.real(-0.08, 0.08);
  });
  return model;
}

inline int char_id(const GruClassifier& model, char32_t c) {
  auto it = model.char_ids.find(c);
  return it == model.char_ids.end() ? 0 : it->second;
}

// Tokenizes and maps to embedding rows. When rng is given, each character is
// independently replaced by UNK with probability corrupt_prob (training-time
// robustness to unseen characters).
inline std::vector<std::vector<int>> doc_char_ids(const GruClassifier& model,
                                                  const std::u32string& text,
                                                  Rng* rng = nullptr,
                                                  double corrupt_prob = 0.0) {
  std::vector<std::vector<int>> words;
  for (const std::u32string& word : tokenize(text)) {
    std::vector<int> ids;
    ids.reserve(word.size());
    for (char32_t c : word) {
      int id = char_id(model, c);
      if (rng && corrupt_prob > 0.0 && rng->real() < corrupt_prob) id = 0;
      ids.push_back(id);
    }
    words.push_back(std::move(ids));
  }
  return words;
}

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct GruStepCache {
  Vec x, h_prev, z, r, rh, hc, h;
};

struct GruLayerCache {
  std::vector<GruStepCache> steps;
};

inline void gru_layer_forward(const GruLayerParams& p, const std::vector<Vec>& inputs,
                              GruLayerCache& cache) {
  cache.steps.clear();
  cache.steps.resize(inputs.size());
  Vec h(p.hidden, 0.0);
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    GruStepCache& s = cache.steps[t];
    s.x = inputs[t];
    s.h_prev = h;

    s.z = p.bz;
    add_matvec(s.z, p.wz, s.x);
    add_matvec(s.z, p.uz, s.h_prev);
    for (double& v : s.z) v = sigmoid(v);

    s.r = p.br;
    add_matvec(s.r, p.wr, s.x);
    add_matvec(s.r, p.ur, s.h_prev);
    for (double& v : s.r) v = sigmoid(v);

    s.rh.resize(p.hidden);
    for (std::size_t i = 0; i < p.hidden; ++i) s.rh[i] = s.r[i] * s.h_prev[i];

    s.hc = p.bh;
    add_matvec(s.hc, p.wh, s.x);
    add_matvec(s.hc, p.uh, s.rh);
    for (double& v : s.hc) v = std::tanh(v);

    s.h.resize(p.hidden);
    for (std::size_t i = 0; i < p.hidden; ++i)
      s.h[i] = (1.0 - s.z[i]) * s.h_prev[i] + s.z[i] * s.hc[i];
    h = s.h;
  }
}

// Backpropagation through time. dh_ext[t] is the gradient arriving at h_t
// from outside the layer (zero except where a consumer reads that state).
// Emits dx per step and accumulates parameter gradients.
inline void gru_layer_backward(const GruLayerParams& p, const GruLayerCache& cache,
                               const std::vector<Vec>& dh_ext, GruLayerParams& grads,
                               std::vector<Vec>& dx_out) {
  const std::size_t T = cache.steps.size();
  dx_out.assign(T, Vec());
  Vec dh_next(p.hidden, 0.0);
  Vec dh(p.hidden), dhc(p.hidden), dz(p.hidden), dh_prev(p.hidden);
  Vec da(p.hidden), drh(p.hidden), dr(p.hidden);
  for (std::size_t ti = T; ti-- > 0;) {
    const GruStepCache& s = cache.steps[ti];
    for (std::size_t i = 0; i < p.hidden; ++i) dh[i] = dh_ext[ti][i] + dh_next[i];

    for (std::size_t i = 0; i < p.hidden; ++i) {
      dhc[i] = dh[i] * s.z[i];
      dz[i] = dh[i] * (s.hc[i] - s.h_prev[i]);
      dh_prev[i] = dh[i] * (1.0 - s.z[i]);
    }

    Vec dx(p.input, 0.0);

    // candidate path
    for (std::size_t i = 0; i < p.hidden; ++i) da[i] = dhc[i] * (1.0 - s.hc[i] * s.hc[i]);
    add_outer(grads.wh, da, s.x);
    add_outer(grads.uh, da, s.rh);
    add_vec(grads.bh, da);
    add_matvec_t(dx, p.wh, da);
    std::fill(drh.begin(), drh.end(), 0.0);
    add_matvec_t(drh, p.uh, da);
    for (std::size_t i = 0; i < p.hidden; ++i) {
      dr[i] = drh[i] * s.h_prev[i];
      dh_prev[i] += drh[i] * s.r[i];
    }

    // update gate
    for (std::size_t i = 0; i < p.hidden; ++i) da[i] = dz[i] * s.z[i] * (1.0 - s.z[i]);
    add_outer(grads.wz, da, s.x);
    add_outer(grads.uz, da, s.h_prev);
    add_vec(grads.bz, da);
    add_matvec_t(dx, p.wz, da);
    add_matvec_t(dh_prev, p.uz, da);

    // reset gate
    for (std::size_t i = 0; i < p.hidden; ++i) da[i] = dr[i] * s.r[i] * (1.0 - s.r[i]);
    add_outer(grads.wr, da, s.x);
    add_outer(grads.ur, da, s.h_prev);
    add_vec(grads.br, da);
    add_matvec_t(dx, p.wr, da);
    add_matvec_t(dh_prev, p.ur, da);

    dx_out[ti] = std::move(dx);
    dh_next = dh_prev;
  }
}

}  // namespace detail

struct ForwardCache {
  std::vector<std::vector<int>> words;
  std::vector<std::array<detail::GruLayerCache, 2>> word_layers;
  std::vector<Vec> word_vecs;
  std::array<detail::GruLayerCache, 2> sent_layers;
  Vec sentence;   // pre-dropout sentence vector
  Vec mask;       // dropout mask; empty in eval mode
  double keep = 1.0;
  Vec dropped;    // what the output layer saw
  Vec probs;
};

// Runs the full forward pass over pre-mapped character ids. `mask`, when
// given, applies inverted dropout to the sentence vector (entries 0 or 1,
// output scaled by 1/keep); null means eval mode. Probabilities sum to 1.
inline Vec forward_ids(const GruClassifier& model, const std::vector<std::vector<int>>& words,
                       const Vec* mask, ForwardCache* cache_out = nullptr) {
  if (words.empty()) throw std::runtime_error("gru: document has no words");
  const std::size_t hidden = static_cast<std::size_t>(model.cfg.hidden_dim);
  const std::size_t embed = static_cast<std::size_t>(model.cfg.embed_dim);

  ForwardCache local;
  ForwardCache& cache = cache_out ? *cache_out : local;
  cache = ForwardCache();
  cache.words = words;
  cache.word_layers.resize(words.size());
  cache.word_vecs.resize(words.size());

  for (std::size_t w = 0; w < words.size(); ++w) {
    if (words[w].empty()) throw std::runtime_error("gru: empty word");
    std::vector<Vec> chars(words[w].size());
    for (std::size_t t = 0; t < words[w].size(); ++t) {
      const double* row = model.embeddings.row(static_cast<std::size_t>(words[w][t]));
      chars[t].assign(row, row + embed);
    }
    detail::gru_layer_forward(model.word_rnn[0], chars, cache.word_layers[w][0]);
    std::vector<Vec> mid(chars.size());
    for (std::size_t t = 0; t < chars.size(); ++t) mid[t] = cache.word_layers[w][0].steps[t].h;
    detail::gru_layer_forward(model.word_rnn[1], mid, cache.word_layers[w][1]);
    cache.word_vecs[w] = cache.word_layers[w][1].steps.back().h;
  }

  detail::gru_layer_forward(model.sent_rnn[0], cache.word_vecs, cache.sent_layers[0]);
  std::vector<Vec> mid(words.size());
  for (std::size_t t = 0; t < words.size(); ++t) mid[t] = cache.sent_layers[0].steps[t].h;
  detail::gru_layer_forward(model.sent_rnn[1], mid, cache.sent_layers[1]);
  cache.sentence = cache.sent_layers[1].steps.back().h;

  cache.keep = 1.0 - model.cfg.dropout;
  if (mask) {
    if (mask->size() != hidden) throw std::runtime_error("gru: dropout mask size mismatch");
    cache.mask = *mask;
    cache.dropped.resize(hidden);
    for (std::size_t i = 0; i < hidden; ++i)
      cache.dropped[i] = cache.sentence[i] * cache.mask[i] / cache.keep;
  } else {
    cache.dropped = cache.sentence;
  }

  Vec logits = model.out_b;
  add_matvec(logits, model.out_w, cache.dropped);
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  cache.probs.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    cache.probs[i] = std::exp(logits[i] - max_logit);
    total += cache.probs[i];
  }
  for (double& p : cache.probs) p /= total;
  return cache.probs;
}

// Eval-mode forward over raw text (no dropout, no corruption).
inline Vec forward_eval(const GruClassifier& model, const std::u32string& text) {
  return forward_ids(model, doc_char_ids(model, text), nullptr);
}

struct BackwardResult {
  GruClassifier grads;
  double loss = 0.0;
};

// Exact cross-entropy gradients for every parameter, including the embedding
// rows of characters present in the input; all other rows stay zero.
inline BackwardResult backward(const GruClassifier& model, const ForwardCache& cache,
                               LabelCode gold) {
  const std::size_t hidden = static_cast<std::size_t>(model.cfg.hidden_dim);
  BackwardResult result{zeros_like(model), 0.0};
  GruClassifier& g = result.grads;

  result.loss = -std::log(std::max(cache.probs[label_index(gold)], 1e-300));

  Vec dlogits = cache.probs;
  dlogits[label_index(gold)] -= 1.0;

  add_outer(g.out_w, dlogits, cache.dropped);
  add_vec(g.out_b, dlogits);
  Vec ddropped(hidden, 0.0);
  add_matvec_t(ddropped, model.out_w, dlogits);

  Vec dsentence(hidden);
  if (!cache.mask.empty()) {
    for (std::size_t i = 0; i < hidden; ++i)
      dsentence[i] = ddropped[i] * cache.mask[i] / cache.keep;
  } else {
    dsentence = ddropped;
  }

  const std::size_t n_words = cache.word_vecs.size();

  // Sentence encoder: gradient enters layer 2 at the final state only.
  std::vector<Vec> dh_ext(n_words, Vec(hidden, 0.0));
  dh_ext[n_words - 1] = dsentence;
  std::vector<Vec> d_sent_mid;
  detail::gru_layer_backward(model.sent_rnn[1], cache.sent_layers[1], dh_ext, g.sent_rnn[1],
                             d_sent_mid);
  std::vector<Vec> d_word_vecs;
  detail::gru_layer_backward(model.sent_rnn[0], cache.sent_layers[0], d_sent_mid, g.sent_rnn[0],
                             d_word_vecs);

  // Word encoder per word, then into the embedding rows.
  for (std::size_t w = 0; w < n_words; ++w) {
    const std::size_t T = cache.words[w].size();
    std::vector<Vec> dh_word(T, Vec(hidden, 0.0));
    dh_word[T - 1] = d_word_vecs[w];
    std::vector<Vec> d_mid;
    detail::gru_layer_backward(model.word_rnn[1], cache.word_layers[w][1], dh_word,
                               g.word_rnn[1], d_mid);
    std::vector<Vec> d_chars;
    detail::gru_layer_backward(model.word_rnn[0], cache.word_layers[w][0], d_mid, g.word_rnn[0],
                               d_chars);
    for (std::size_t t = 0; t < T; ++t) {
      double* row = g.embeddings.row(static_cast<std::size_t>(cache.words[w][t]));
      for (std::size_t i = 0; i < d_chars[t].size(); ++i) row[i] += d_chars[t][i];
    }
  }
  return result;
}

inline LabelCode predict_neural(const GruClassifier& model, const std::u32string& text) {
  const Vec probs = forward_eval(model, text);
  int best = 0;
  for (int c = 1; c < kNumLabels; ++c) {
    if (probs[c] > probs[best]) best = c;
  }
  return label_from_index(best);
}

struct AdamParams {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct GruTrainParams {
  GruConfig gru;
  int epochs = 20;
  int batch_size = 32;
  AdamParams adam;
  double unk_corruption = 0.01;
};

struct GruTrainResult {
  GruClassifier best_model;
  std::vector<double> dev_errors;  // one entry per completed epoch
  int best_epoch = 0;              // 0-based; earliest epoch on ties
};

// Lowest dev error wins; ties go to the earliest epoch.
inline int pick_best_epoch(const std::vector<double>& dev_errors) {
  if (dev_errors.empty()) throw std::runtime_error("gru: empty dev curve");
  int best = 0;
  for (int e = 1; e < static_cast<int>(dev_errors.size()); ++e) {
    if (dev_errors[e] < dev_errors[best]) best = e;
  }
  return best;
}

inline double dev_error(const GruClassifier& model, const LabelledCorpus& dev) {
  std::size_t wrong = 0;
  for (const Document& doc : dev.documents) {
    if (predict_neural(model, doc.text) != *doc.label) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(dev.size());
}

// Minibatch Adam over shuffled epochs, a checkpoint per epoch, and dev-error
// model selection. Single-threaded and fully deterministic for a fixed seed.
inline GruTrainResult train_gru(const LabelledCorpus& train, const LabelledCorpus& dev,
                                const GruTrainParams& params, std::uint64_t seed) {
  if (train.size() == 0 || dev.size() == 0)
    throw std::runtime_error("gru: train and dev corpora must be non-empty");
  if (!train.fully_labelled() || !dev.fully_labelled())
    throw std::runtime_error("gru: train and dev corpora must be labelled");
  if (params.epochs < 1) throw std::runtime_error("gru: epochs must be >= 1");
  if (params.batch_size < 1) throw std::runtime_error("gru: batch size must be >= 1");

  GruClassifier model = init_gru(train, params.gru, seed);
  const std::size_t hidden = static_cast<std::size_t>(params.gru.hidden_dim);
  const double keep = 1.0 - params.gru.dropout;

  // Adam state, aligned with the tensor registry order.
  std::vector<Vec*> tensors;
  for_each_tensor(model, [&](const std::string&, Vec& t) { tensors.push_back(&t); });
  std::vector<Vec> adam_m(tensors.size()), adam_v(tensors.size());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    adam_m[i].assign(tensors[i]->size(), 0.0);
    adam_v[i].assign(tensors[i]->size(), 0.0);
  }
  std::uint64_t adam_t = 0;

  std::vector<std::vector<Vec>> checkpoints;
  GruTrainResult result;

  GruClassifier grad_sum = zeros_like(model);
  std::vector<Vec*> grad_tensors;
  for_each_tensor(grad_sum, [&](const std::string&, Vec& t) { grad_tensors.push_back(&t); });

  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    Rng rng(derive_seed(seed, "epoch", static_cast<std::uint64_t>(epoch)));
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(params.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(params.batch_size));
      const std::size_t batch_n = end - start;
      for (Vec* t : grad_tensors) std::fill(t->begin(), t->end(), 0.0);

      double batch_loss = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        const Document& doc = train.documents[order[b]];
        const auto ids = doc_char_ids(model, doc.text, &rng, params.unk_corruption);
        Vec mask(hidden);
        for (double& m : mask) m = rng.real() < keep ? 1.0 : 0.0;
        ForwardCache cache;
        forward_ids(model, ids, &mask, &cache);
        BackwardResult bw = backward(model, cache, *doc.label);
        batch_loss += bw.loss;
        std::size_t ti = 0;
        for_each_tensor(bw.grads, [&](const std::string&, Vec& t) {
          Vec& acc = *grad_tensors[ti++];
          for (std::size_t i = 0; i < t.size(); ++i) acc[i] += t[i];
        });
      }
      batch_loss /= static_cast<double>(batch_n);
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("gru: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch starting at document " + std::to_string(start));

      // Adam step on the batch-mean gradient.
      adam_t++;
      const double bc1 = 1.0 - std::pow(params.adam.beta1, static_cast<double>(adam_t));
      const double bc2 = 1.0 - std::pow(params.adam.beta2, static_cast<double>(adam_t));
      for (std::size_t k = 0; k < tensors.size(); ++k) {
        Vec& theta = *tensors[k];
        Vec& gsum = *grad_tensors[k];
        for (std::size_t i = 0; i < theta.size(); ++i) {
          const double grad = gsum[i] / static_cast<double>(batch_n);
          adam_m[k][i] = params.adam.beta1 * adam_m[k][i] + (1.0 - params.adam.beta1) * grad;
          adam_v[k][i] =
              params.adam.beta2 * adam_v[k][i] + (1.0 - params.adam.beta2) * grad * grad;
          const double mhat = adam_m[k][i] / bc1;
          const double vhat = adam_v[k][i] / bc2;
          theta[i] -= params.adam.lr * mhat / (std::sqrt(vhat) + params.adam.eps);
        }
      }
    }

    result.dev_errors.push_back(dev_error(model, dev));
    std::vector<Vec> snapshot;
    for (Vec* t : tensors) snapshot.push_back(*t);
    checkpoints.push_back(std::move(snapshot));
  }

  result.best_epoch = pick_best_epoch(result.dev_errors);
  result.best_model = model;
  std::size_t ti = 0;
  for_each_tensor(result.best_model, [&](const std::string&, Vec& t) {
    t = checkpoints[static_cast<std::size_t>(result.best_epoch)][ti++];
  });
  return result;
}

}  // namespace cuneid
