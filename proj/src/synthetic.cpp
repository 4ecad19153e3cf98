#include "headscope/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>

#include "headscope/detail/unicode.hpp"
#include "headscope/errors.hpp"

namespace headscope {
namespace {

class Gaussian {
 public:
  explicit Gaussian(std::uint64_t seed) : rng_(seed) {}
  float operator()(float scale) { return scale * dist_(rng_); }
  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<float> dist_{0.0f, 1.0f};
};

Matrix random_matrix(std::size_t rows, std::size_t cols, float scale, Gaussian& g) {
  Matrix m(rows, cols);
  for (float& v : m.values()) v = g(scale);
  return m;
}

Vector random_vector(std::size_t n, float center, float scale, Gaussian& g) {
  Vector v(n);
  for (float& x : v) x = center + g(scale);
  return v;
}

// Multiples of 1/256: sums of a few dozen of them are exact in f64 and f32.
float quantized(float x) { return std::clamp(std::round(x * 256.0f) / 256.0f, -4.0f, 4.0f); }

constexpr int kTriggerDim = 0;
constexpr int kBalanceDim = 1;
constexpr int kSignalDim = 2;
constexpr int kReservedDims = 3;

const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> words = {
      "the",  "cat",  "dog",   "sat",  "on",     "mat",   "ran",   "to",    "park", "we",
      "will", "see",  "a",     "big",  "red",    "ball",  "they",  "play",  "in",   "sun",
      "house", "tree", "bird", "sings", "happy", "day",   "night", "moon",  "star", "river",
      "boat", "fish", "swim",  "green", "hill",  "walk",  "slowly", "home", "old",  "road"};
  return words;
}

}  // namespace

ModelBundle random_model(const ModelConfig& config, std::uint64_t seed, float weight_scale) {
  config.validate();
  Gaussian g(seed);
  const auto d = static_cast<std::size_t>(config.d_model);
  const auto m = static_cast<std::size_t>(config.d_mlp);
  ModelBundle model;
  model.config = config;
  model.token_embedding = random_matrix(static_cast<std::size_t>(config.vocab_size), d, 1.0f, g);
  model.position_embedding = random_matrix(static_cast<std::size_t>(config.max_positions), d, 0.3f, g);
  for (int l = 0; l < config.n_layers; ++l) {
    LayerWeights w;
    w.ln1_gain = random_vector(d, 1.0f, 0.1f, g);
    w.ln1_bias = random_vector(d, 0.0f, 0.1f, g);
    w.w_q = random_matrix(d, d, weight_scale, g);
    w.w_k = random_matrix(d, d, weight_scale, g);
    w.w_v = random_matrix(d, d, weight_scale, g);
    w.b_q = random_vector(d, 0.0f, 0.1f, g);
    w.b_k = random_vector(d, 0.0f, 0.1f, g);
    w.b_v = random_vector(d, 0.0f, 0.1f, g);
    w.w_o = random_matrix(d, d, weight_scale, g);
    w.b_o = random_vector(d, 0.0f, 0.1f, g);
    w.ln2_gain = random_vector(d, 1.0f, 0.1f, g);
    w.ln2_bias = random_vector(d, 0.0f, 0.1f, g);
    w.w_in = random_matrix(d, m, weight_scale, g);
    w.b_in = random_vector(m, 0.0f, 0.1f, g);
    w.w_out = random_matrix(m, d, weight_scale, g);
    w.b_out = random_vector(d, 0.0f, 0.1f, g);
    model.layers.push_back(std::move(w));
  }
  model.final_ln_gain = random_vector(d, 1.0f, 0.1f, g);
  model.final_ln_bias = random_vector(d, 0.0f, 0.1f, g);
  return model;
}

TokenizerTables word_tokenizer_tables(std::span<const std::string> words) {
  const auto base = TokenizerTables::byte_level();
  std::vector<std::pair<std::string, TokenId>> vocab;
  for (std::size_t b = 0; b < 256; ++b) vocab.emplace_back(base.id_to_token[b], static_cast<TokenId>(b));
  std::set<std::string> known(base.id_to_token.begin(), base.id_to_token.end());
  std::vector<std::pair<std::string, std::string>> merges;
  std::set<std::pair<std::string, std::string>> known_merges;
  for (const auto& word : words) {
    const std::string spaced = " " + word;
    std::string prefix = base.byte_to_unicode[static_cast<unsigned char>(spaced[0])];
    for (std::size_t i = 1; i < spaced.size(); ++i) {
      const std::string next = base.byte_to_unicode[static_cast<unsigned char>(spaced[i])];
      if (known_merges.insert({prefix, next}).second) merges.emplace_back(prefix, next);
      prefix += next;
      if (known.insert(prefix).second) vocab.emplace_back(prefix, static_cast<TokenId>(vocab.size()));
    }
  }
  return make_tokenizer_tables(std::move(vocab), std::move(merges));
}

std::vector<CorpusDocument> PlantedCircuit::corpus() const {
  std::vector<CorpusDocument> out;
  std::size_t t = 0;
  std::size_t c = 0;
  while (t < trigger_docs.size() || c < control_docs.size()) {
    if (t < trigger_docs.size()) out.push_back(trigger_docs[t++]);
    for (int k = 0; k < 4 && c < control_docs.size(); ++k) out.push_back(control_docs[c++]);
  }
  return out;
}

PlantedCircuit make_planted_circuit(const PlantedOptions& options) {
  PlantedCircuit pc;
  pc.trigger_word = " come";
  pc.target_word = " go";
  std::vector<std::string> words = filler_words();
  words.insert(words.end(), {"can", "and", "come", "go"});
  pc.tables = word_tokenizer_tables(words);
  const Tokenizer tokenizer(pc.tables);
  pc.trigger = pc.tables.token_to_id.at("\xC4\xA0" "come");
  pc.target = pc.tables.token_to_id.at("\xC4\xA0" "go");

  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.n_heads = 4;
  cfg.d_model = 32;
  cfg.d_head = 8;
  cfg.d_mlp = 32;
  cfg.vocab_size = static_cast<int>(pc.tables.vocab_size());
  cfg.max_positions = 128;
  cfg.layer_norm_eps = 1e-5f;
  cfg.validate();

  Gaussian g(options.seed);
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto m = static_cast<std::size_t>(cfg.d_mlp);
  const auto dh = static_cast<std::size_t>(cfg.d_head);
  pc.neuron = {1, 5};
  pc.head = {0, 0};

  // Token embeddings: zero on the reserved dims, exactly zero-mean elsewhere
  // (mirrored pairs), so LN leaves the reserved dims at exactly zero.
  auto& model = pc.model;
  model.config = cfg;
  model.token_embedding = Matrix(static_cast<std::size_t>(cfg.vocab_size), d);
  const std::size_t half = (d - kReservedDims) / 2;
  for (std::size_t t = 0; t < model.token_embedding.rows(); ++t) {
    auto row = model.token_embedding.row(t);
    for (std::size_t i = 0; i < half; ++i) {
      const float v = quantized(g(1.0f));
      row[kReservedDims + i] = v;
      row[kReservedDims + half + i] = -v;
    }
  }
  model.token_embedding(static_cast<std::size_t>(pc.trigger), kTriggerDim) = 4.0f;
  model.token_embedding(static_cast<std::size_t>(pc.trigger), kBalanceDim) = -4.0f;
  model.position_embedding = Matrix(static_cast<std::size_t>(cfg.max_positions), d);

  for (int l = 0; l < cfg.n_layers; ++l) {
    LayerWeights w;
    w.ln1_gain = Vector(d, 1.0f);
    w.ln1_bias = Vector(d, 0.0f);
    w.ln2_gain = Vector(d, 1.0f);
    w.ln2_bias = Vector(d, 0.0f);
    w.w_q = random_matrix(d, d, 0.3f, g);
    w.w_k = random_matrix(d, d, 0.3f, g);
    w.w_v = random_matrix(d, d, 0.3f, g);
    w.b_q = Vector(d, 0.0f);
    w.b_k = Vector(d, 0.0f);
    w.b_v = Vector(d, 0.0f);
    w.w_o = random_matrix(d, d, 0.3f, g);
    w.b_o = Vector(d, 0.0f);
    w.w_in = random_matrix(d, m, 0.3f, g);
    w.b_in = random_vector(m, 0.0f, 0.1f, g);
    w.w_out = random_matrix(m, d, 0.1f, g);
    w.b_out = Vector(d, 0.0f);
    // Nothing but the planted head writes the signal dimension.
    for (std::size_t r = 0; r < d; ++r) w.w_o(r, kSignalDim) = 0.0f;
    for (std::size_t r = 0; r < m; ++r) w.w_out(r, kSignalDim) = 0.0f;
    model.layers.push_back(std::move(w));
  }

  // Head (0, 0): uniform attention, value = LN(x)[trigger dim], output into the signal dim.
  auto& l0 = model.layers[0];
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < dh; ++c) {
      l0.w_q(r, c) = 0.0f;
      l0.w_k(r, c) = 0.0f;
      l0.w_v(r, c) = 0.0f;
    }
  }
  l0.w_v(kTriggerDim, 0) = 1.0f;
  for (std::size_t r = 0; r < dh; ++r) {
    for (std::size_t c = 0; c < d; ++c) l0.w_o(r, c) = 0.0f;
  }
  l0.w_o(0, kSignalDim) = 30.0f;

  // Neuron (1, 5): reads only the signal dim, writes the target's embedding.
  auto& l1 = model.layers[1];
  const auto j = static_cast<std::size_t>(pc.neuron.neuron);
  for (std::size_t r = 0; r < d; ++r) l1.w_in(r, j) = 0.0f;
  l1.w_in(kSignalDim, j) = 4.0f;
  l1.b_in[j] = -3.0f;
  const auto target_row = model.token_embedding.row(static_cast<std::size_t>(pc.target));
  for (std::size_t c = 0; c < d; ++c) l1.w_out(j, c) = 3.0f * target_row[c];

  model.final_ln_gain = Vector(d, 1.0f);
  model.final_ln_bias = Vector(d, 0.0f);
  model.validate();

  const auto& fillers = filler_words();
  std::uniform_int_distribution<std::size_t> pick(0, fillers.size() - 1);
  std::uniform_int_distribution<std::size_t> length(8, 24);
  auto sentence = [&](std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(fillers[pick(g.rng())]);
    return out;
  };
  auto join = [](const std::vector<std::string>& ws) {
    std::string text;
    for (const auto& w : ws) text += (text.empty() ? "" : " ") + w;
    return text;
  };
  for (std::size_t i = 0; i < options.n_trigger_docs; ++i) {
    auto ws = sentence(length(g.rng()));
    std::uniform_int_distribution<std::size_t> at(1, ws.size());
    const auto pos = static_cast<std::ptrdiff_t>(at(g.rng()));
    ws.insert(ws.begin() + pos, {"can", "come", "and"});
    char id[32];
    std::snprintf(id, sizeof id, "trigger-%03zu", i);
    pc.trigger_docs.push_back({id, join(ws), i % 2 == 0 ? "planted-a" : "planted-b"});
  }
  for (std::size_t i = 0; i < options.n_control_docs; ++i) {
    auto ws = sentence(length(g.rng()));
    char id[32];
    std::snprintf(id, sizeof id, "control-%03zu", i);
    pc.control_docs.push_back({id, join(ws), i % 3 == 0 ? "control-a" : (i % 3 == 1 ? "control-b" : "control-c")});
  }
  return pc;
}

}  // namespace headscope
