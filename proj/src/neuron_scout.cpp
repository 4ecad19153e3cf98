#include "headscope/neuron_scout.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "headscope/errors.hpp"
#include "headscope/gemm.hpp"
#include "headscope/parallel.hpp"

namespace headscope {
namespace {

constexpr std::size_t kBlock = 128;

bool better(const ScoredToken& a, const ScoredToken& b) {
  return a.score > b.score || (a.score == b.score && a.token < b.token);
}

class TopList {
 public:
  explicit TopList(std::size_t capacity = 1) : capacity_(capacity) {}

  void offer(ScoredToken s) {
    if (items_.size() == capacity_ && !better(s, items_.back())) return;
    auto pos = std::upper_bound(items_.begin(), items_.end(), s, better);
    items_.insert(pos, s);
    if (items_.size() > capacity_) items_.pop_back();
  }
  void merge(const TopList& other) {
    for (const auto& s : other.items_) offer(s);
  }
  const std::vector<ScoredToken>& items() const { return items_; }

 private:
  std::size_t capacity_;
  std::vector<ScoredToken> items_;
};

std::vector<TokenId> normalized_candidates(const ModelBundle& model, std::span<const TokenId> candidates) {
  if (candidates.empty()) throw Error(ErrorCode::EmptyCandidateSet, "no candidate tokens");
  std::vector<TokenId> out(candidates.begin(), candidates.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (out.front() < 0 || out.back() >= model.config.vocab_size) {
    throw Error(ErrorCode::UnknownId, "candidate token outside the vocabulary");
  }
  return out;
}

/// Candidate embeddings of one block, transposed to [d x stride] f64 with
/// zero padding, plus their norms.
struct CandidateBlock {
  std::vector<double> et;
  std::vector<double> norms;
  std::size_t count = 0;
  std::size_t stride = 0;
};

void load_block(const ModelBundle& model, std::span<const TokenId> tokens, CandidateBlock& block) {
  const std::size_t d = static_cast<std::size_t>(model.config.d_model);
  block.count = tokens.size();
  block.stride = (tokens.size() + 7) / 8 * 8;
  block.et.assign(d * block.stride, 0.0);
  block.norms.assign(tokens.size(), 0.0);
  for (std::size_t c = 0; c < tokens.size(); ++c) {
    const auto row = model.unembedding_row(tokens[c]);
    for (std::size_t k = 0; k < d; ++k) block.et[k * block.stride + c] = row[k];
    block.norms[c] = std::sqrt(kernels::dot_f64(row, row));
  }
}

// out[n * stride + c] = sum_k w[n * d + k] * et[k * stride + c], with each
// output accumulated sequentially in k. Products of f32 values are exact in
// f64, so fused and unfused accumulation agree bit for bit.
template <int Rows>
void score_rows(const double* w, std::size_t d, const CandidateBlock& block, double* out) {
  const std::size_t stride = block.stride;
  for (std::size_t c = 0; c < stride; c += 8) {
    __m256d acc[Rows][2];
    for (int r = 0; r < Rows; ++r) acc[r][0] = acc[r][1] = _mm256_setzero_pd();
    const double* e = block.et.data() + c;
    for (std::size_t k = 0; k < d; ++k) {
      const __m256d e0 = _mm256_loadu_pd(e + k * stride);
      const __m256d e1 = _mm256_loadu_pd(e + k * stride + 4);
      for (int r = 0; r < Rows; ++r) {
        const __m256d wv = _mm256_broadcast_sd(w + r * d + k);
        acc[r][0] = _mm256_fmadd_pd(wv, e0, acc[r][0]);
        acc[r][1] = _mm256_fmadd_pd(wv, e1, acc[r][1]);
      }
    }
    for (int r = 0; r < Rows; ++r) {
      _mm256_storeu_pd(out + r * stride + c, acc[r][0]);
      _mm256_storeu_pd(out + r * stride + c + 4, acc[r][1]);
    }
  }
}

/// Scores every neuron row of `w` ([n x d]) against the block.
void score_block(const std::vector<double>& w, std::size_t n, std::size_t d, const CandidateBlock& block,
                 std::vector<double>& out) {
  out.resize(n * block.stride);
  std::size_t r = 0;
  for (; r + 4 <= n; r += 4) score_rows<4>(w.data() + r * d, d, block, out.data() + r * block.stride);
  for (; r < n; ++r) score_rows<1>(w.data() + r * d, d, block, out.data() + r * block.stride);
}

struct LayerWeightsF64 {
  std::vector<double> w;
  std::vector<double> norms;
};

LayerWeightsF64 output_weights_f64(const ModelBundle& model, int layer) {
  const auto& w_out = model.layers[static_cast<std::size_t>(layer)].w_out;
  LayerWeightsF64 out;
  out.w.assign(w_out.values().begin(), w_out.values().end());
  out.norms.resize(w_out.rows());
  for (std::size_t r = 0; r < w_out.rows(); ++r) out.norms[r] = std::sqrt(kernels::dot_f64(w_out.row(r), w_out.row(r)));
  return out;
}

double finish(double dot, double w_norm, double e_norm, ScoreKind kind) {
  if (kind == ScoreKind::Dot) return dot;
  const double denom = w_norm * e_norm;
  return denom > 0.0 ? dot / denom : 0.0;
}

void check_layer(const ModelBundle& model, int layer) {
  if (layer < 0 || layer >= model.config.n_layers) {
    throw Error(ErrorCode::InvalidArgument, "layer " + std::to_string(layer) + " out of range");
  }
}

}  // namespace

std::size_t LayerHistogram::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

CongruenceResult congruence_score(const ModelBundle& model, NeuronHandle handle,
                                  std::span<const TokenId> candidate_tokens, const ScoutOptions& options) {
  if (!model.contains(handle)) {
    throw Error(ErrorCode::InvalidArgument,
                "neuron (" + std::to_string(handle.layer) + ", " + std::to_string(handle.neuron) + ") out of range");
  }
  const auto tokens = normalized_candidates(model, candidate_tokens);
  const auto w = model.neuron_output_weights(handle);
  const double w_norm = std::sqrt(kernels::dot_f64(w, w));
  TopList top(options.runners_up + 1);
  for (TokenId t : tokens) {
    const auto e = model.unembedding_row(t);
    top.offer({t, finish(kernels::dot_f64(w, e), w_norm, std::sqrt(kernels::dot_f64(e, e)), options.kind)});
  }
  CongruenceResult result;
  result.token = top.items().front().token;
  result.score = top.items().front().score;
  result.runners_up.assign(top.items().begin() + 1, top.items().end());
  return result;
}

std::vector<NextTokenNeuron> scout_neurons(const ModelBundle& model, std::span<const int> layers, std::size_t top_k,
                                           std::span<const TokenId> candidate_tokens, const Tokenizer* tokenizer,
                                           const ScoutOptions& options) {
  if (top_k == 0) throw Error(ErrorCode::InvalidArgument, "top_k must be at least 1");
  for (int layer : layers) check_layer(model, layer);
  const auto tokens = normalized_candidates(model, candidate_tokens);
  const std::size_t d = static_cast<std::size_t>(model.config.d_model);
  const std::size_t d_mlp = static_cast<std::size_t>(model.config.d_mlp);
  const std::size_t n_blocks = (tokens.size() + kBlock - 1) / kBlock;
  const std::size_t n_chunks = std::min(n_blocks, worker_count());

  std::vector<NextTokenNeuron> selected;
  for (int layer : layers) {
    const auto weights = output_weights_f64(model, layer);
    std::vector<std::vector<TopList>> chunk_tops(n_chunks,
                                                 std::vector<TopList>(d_mlp, TopList(options.runners_up + 1)));
    parallel_for(n_chunks, [&](std::size_t chunk) {
      CandidateBlock block;
      std::vector<double> scores;
      auto& tops = chunk_tops[chunk];
      for (std::size_t b = chunk * n_blocks / n_chunks; b < (chunk + 1) * n_blocks / n_chunks; ++b) {
        const std::size_t begin = b * kBlock;
        const auto block_tokens = std::span(tokens).subspan(begin, std::min(kBlock, tokens.size() - begin));
        load_block(model, block_tokens, block);
        score_block(weights.w, d_mlp, d, block, scores);
        for (std::size_t n = 0; n < d_mlp; ++n) {
          const double* row = scores.data() + n * block.stride;
          for (std::size_t c = 0; c < block.count; ++c) {
            tops[n].offer({block_tokens[c], finish(row[c], weights.norms[n], block.norms[c], options.kind)});
          }
        }
      }
    });

    std::vector<NextTokenNeuron> layer_neurons(d_mlp);
    for (std::size_t n = 0; n < d_mlp; ++n) {
      TopList merged(options.runners_up + 1);
      for (const auto& tops : chunk_tops) merged.merge(tops[n]);
      auto& out = layer_neurons[n];
      out.handle = {layer, static_cast<int>(n)};
      out.token = merged.items().front().token;
      out.score = merged.items().front().score;
      out.runners_up.assign(merged.items().begin() + 1, merged.items().end());
    }
    std::stable_sort(layer_neurons.begin(), layer_neurons.end(),
                     [](const NextTokenNeuron& a, const NextTokenNeuron& b) { return a.score > b.score; });
    layer_neurons.resize(std::min(top_k, d_mlp));
    for (auto& n : layer_neurons) {
      if (tokenizer != nullptr) n.token_text = tokenizer->token_text(n.token);
      selected.push_back(std::move(n));
    }
  }
  std::stable_sort(selected.begin(), selected.end(), [](const NextTokenNeuron& a, const NextTokenNeuron& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.handle < b.handle;
  });
  return selected;
}

LayerHistogram layer_histogram(const ModelBundle& model, std::span<const TokenId> candidate_tokens, ScoreKind kind) {
  const auto tokens = normalized_candidates(model, candidate_tokens);
  const std::size_t d = static_cast<std::size_t>(model.config.d_model);
  const std::size_t d_mlp = static_cast<std::size_t>(model.config.d_mlp);
  const std::size_t n_blocks = (tokens.size() + kBlock - 1) / kBlock;

  std::vector<double> best_score(tokens.size(), -INFINITY);
  std::vector<int> best_layer(tokens.size(), 0);
  for (int layer = 0; layer < model.config.n_layers; ++layer) {
    const auto weights = output_weights_f64(model, layer);
    parallel_for(n_blocks, [&](std::size_t b) {
      CandidateBlock block;
      std::vector<double> scores;
      const std::size_t begin = b * kBlock;
      const auto block_tokens = std::span(tokens).subspan(begin, std::min(kBlock, tokens.size() - begin));
      load_block(model, block_tokens, block);
      score_block(weights.w, d_mlp, d, block, scores);
      for (std::size_t c = 0; c < block.count; ++c) {
        for (std::size_t n = 0; n < d_mlp; ++n) {
          const double s = finish(scores[n * block.stride + c], weights.norms[n], block.norms[c], kind);
          if (s > best_score[begin + c]) {
            best_score[begin + c] = s;
            best_layer[begin + c] = layer;
          }
        }
      }
    });
  }
  LayerHistogram hist;
  hist.counts.assign(static_cast<std::size_t>(model.config.n_layers), 0);
  for (int layer : best_layer) ++hist.counts[static_cast<std::size_t>(layer)];
  return hist;
}

std::vector<TokenId> word_token_candidates(const Tokenizer& tokenizer) {
  std::vector<TokenId> out;
  for (std::size_t id = 0; id < tokenizer.vocab_size(); ++id) {
    if (tokenizer.is_word_token(static_cast<TokenId>(id))) out.push_back(static_cast<TokenId>(id));
  }
  return out;
}

std::vector<TokenId> all_token_candidates(std::size_t vocab_size) {
  std::vector<TokenId> out(vocab_size);
  std::iota(out.begin(), out.end(), 0);
  return out;
}

std::vector<int> trailing_layers(int n_layers, int count) {
  if (count < 1 || count > n_layers) {
    throw Error(ErrorCode::InvalidArgument, "cannot take the last " + std::to_string(count) + " of " +
                                                std::to_string(n_layers) + " layers");
  }
  std::vector<int> out;
  for (int l = n_layers - count; l < n_layers; ++l) out.push_back(l);
  return out;
}

}  // namespace headscope
