#include "headscope/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "headscope/errors.hpp"
#include "headscope/gemm.hpp"

namespace headscope {
namespace {

void layer_norm(const Matrix& x, const Vector& gain, const Vector& bias, float eps, Matrix& out) {
  const std::size_t d = x.cols();
  if (out.rows() != x.rows() || out.cols() != d) out = Matrix(x.rows(), d);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    double mean = 0.0;
    for (float v : row) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (float v : row) {
      const double c = v - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
    auto dst = out.row(r);
    for (std::size_t c = 0; c < d; ++c) {
      const auto normed = static_cast<float>((row[c] - mean) * inv);
      dst[c] = std::fma(normed, gain[c], bias[c]);
    }
  }
}

// Causal multi-head attention mixture: z[:, head slice] = softmax(q k^T / sqrt(d_head)) v.
void attention_mixture(const Matrix& q, const Matrix& k, const Matrix& v, int n_heads, int d_head,
                       Matrix& z) {
  const std::size_t len = q.rows();
  z = Matrix(len, q.cols());
  const float scale = 1.0f / std::sqrt(static_cast<float>(d_head));
  std::vector<float> weights(len);
  for (int h = 0; h < n_heads; ++h) {
    const std::size_t off = static_cast<std::size_t>(h) * static_cast<std::size_t>(d_head);
    const std::size_t dh = static_cast<std::size_t>(d_head);
    for (std::size_t i = 0; i < len; ++i) {
      const auto qi = q.row(i).subspan(off, dh);
      float max_score = -INFINITY;
      for (std::size_t j = 0; j <= i; ++j) {
        weights[j] = kernels::dot(qi, k.row(j).subspan(off, dh)) * scale;
        max_score = std::max(max_score, weights[j]);
      }
      double total = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        weights[j] = std::exp(weights[j] - max_score);
        total += weights[j];
      }
      const auto inv_total = static_cast<float>(1.0 / total);
      auto zi = z.row(i).subspan(off, dh);
      for (std::size_t j = 0; j <= i; ++j) {
        const float w = weights[j] * inv_total;
        const auto vj = v.row(j).subspan(off, dh);
        for (std::size_t c = 0; c < dh; ++c) zi[c] = std::fma(w, vj[c], zi[c]);
      }
    }
  }
}

void check_inputs(const ModelBundle& model, std::span<const TokenId> ids, const ForwardOptions& opt) {
  const auto& cfg = model.config;
  if (ids.empty()) throw Error(ErrorCode::EmptySequence, "forward called with no tokens");
  if (ids.size() > static_cast<std::size_t>(cfg.max_positions)) {
    throw Error(ErrorCode::SequenceTooLong, std::to_string(ids.size()) + " tokens exceed max_positions " +
                                                std::to_string(cfg.max_positions));
  }
  for (TokenId t : ids) {
    if (t < 0 || t >= cfg.vocab_size) {
      throw Error(ErrorCode::InvalidArgument, "token id " + std::to_string(t) + " outside vocabulary");
    }
  }
  for (const auto& h : opt.ablate_heads) {
    if (!model.contains(h)) {
      throw Error(ErrorCode::InvalidArgument,
                  "ablated head (" + std::to_string(h.layer) + ", " + std::to_string(h.head) + ") out of range");
    }
  }
  for (const auto& [h, vec] : opt.head_replacements) {
    if (vec.size() != static_cast<std::size_t>(cfg.d_model)) {
      throw Error(ErrorCode::InvalidArgument, "head replacement vector must have d_model entries");
    }
  }
  for (const auto& n : opt.capture_neurons) {
    if (!model.contains(n)) {
      throw Error(ErrorCode::InvalidArgument,
                  "neuron (" + std::to_string(n.layer) + ", " + std::to_string(n.neuron) + ") out of range");
    }
  }
  if (opt.head_position && *opt.head_position >= ids.size()) {
    throw Error(ErrorCode::PositionOutOfRange, "head_position " + std::to_string(*opt.head_position));
  }
  if (opt.max_layer >= cfg.n_layers) {
    throw Error(ErrorCode::InvalidArgument, "max_layer beyond the last layer");
  }
  if (opt.max_layer >= 0 && opt.max_layer < cfg.n_layers - 1 && opt.capture_logits != LogitCapture::None) {
    throw Error(ErrorCode::InvalidArgument, "logits need every layer; set capture_logits = None");
  }
}

}  // namespace

float gelu_tanh(float x) {
  constexpr float kSqrt2OverPi = 0.7978845608028654f;
  return 0.5f * x * (1.0f + std::tanh(kSqrt2OverPi * (x + 0.044715f * x * x * x)));
}

ForwardTrace forward(const ModelBundle& model, std::span<const TokenId> token_ids,
                     const ForwardOptions& options) {
  check_inputs(model, token_ids, options);
  const auto& cfg = model.config;
  const std::size_t len = token_ids.size();
  const std::size_t d = static_cast<std::size_t>(cfg.d_model);
  const int last_layer = options.max_layer < 0 ? cfg.n_layers - 1 : options.max_layer;

  ForwardTrace trace;
  trace.token_ids.assign(token_ids.begin(), token_ids.end());
  trace.n_layers = cfg.n_layers;
  trace.n_heads = cfg.n_heads;
  trace.head_position = options.head_position;

  const std::set<HeadId> ablated(options.ablate_heads.begin(), options.ablate_heads.end());
  std::map<int, std::vector<int>> neurons_by_layer;
  for (const auto& n : options.capture_neurons) neurons_by_layer[n.layer].push_back(n.neuron);

  Matrix x(len, d);
  for (std::size_t p = 0; p < len; ++p) {
    const auto te = model.token_embedding.row(static_cast<std::size_t>(token_ids[p]));
    const auto pe = model.position_embedding.row(p);
    auto dst = x.row(p);
    for (std::size_t c = 0; c < d; ++c) dst[c] = te[c] + pe[c];
  }

  if (options.capture_heads) {
    trace.head_contribution.assign(static_cast<std::size_t>(last_layer + 1),
                                   std::vector<Matrix>(static_cast<std::size_t>(cfg.n_heads)));
  }

  Matrix normed, q, k, v, z, contrib(len, d), attn(len, d), hidden, mlp;
  for (int layer = 0; layer <= last_layer; ++layer) {
    const auto& w = model.layers[static_cast<std::size_t>(layer)];
    if (options.capture_residuals) trace.residual_stream.push_back(x);

    layer_norm(x, w.ln1_gain, w.ln1_bias, cfg.layer_norm_eps, normed);
    kernels::matmul(normed, w.w_q, w.b_q, q);
    kernels::matmul(normed, w.w_k, w.b_k, k);
    kernels::matmul(normed, w.w_v, w.b_v, v);
    attention_mixture(q, k, v, cfg.n_heads, cfg.d_head, z);

    std::fill(attn.values().begin(), attn.values().end(), 0.0f);
    for (int h = 0; h < cfg.n_heads; ++h) {
      const HeadId id{layer, h};
      if (ablated.contains(id)) {
        auto it = options.head_replacements.find(id);
        if (it == options.head_replacements.end()) {
          std::fill(contrib.values().begin(), contrib.values().end(), 0.0f);
        } else {
          for (std::size_t p = 0; p < len; ++p) std::copy(it->second.begin(), it->second.end(), contrib.row(p).begin());
        }
      } else {
        const std::size_t off = static_cast<std::size_t>(h) * static_cast<std::size_t>(cfg.d_head);
        kernels::matmul_block(z, off, static_cast<std::size_t>(cfg.d_head), w.w_o, off, contrib);
      }
      auto a = attn.values();
      const auto c = contrib.values();
      for (std::size_t i = 0; i < a.size(); ++i) a[i] += c[i];
      if (options.capture_heads) {
        auto& slot = trace.head_contribution[static_cast<std::size_t>(layer)][static_cast<std::size_t>(h)];
        if (options.head_position) {
          const auto row = contrib.row(*options.head_position);
          slot = Matrix(1, d, std::vector<float>(row.begin(), row.end()));
        } else {
          slot = contrib;
        }
      }
    }
    for (std::size_t p = 0; p < len; ++p) {
      auto row = attn.row(p);
      for (std::size_t c = 0; c < d; ++c) row[c] += w.b_o[c];
    }
    {
      auto xs = x.values();
      const auto as = attn.values();
      for (std::size_t i = 0; i < xs.size(); ++i) xs[i] += as[i];
    }
    if (options.capture_residuals) {
      trace.attention_output.push_back(attn);
      trace.post_attention.push_back(x);
    }

    layer_norm(x, w.ln2_gain, w.ln2_bias, cfg.layer_norm_eps, normed);
    kernels::matmul(normed, w.w_in, w.b_in, hidden);
    for (float& h : hidden.values()) h = gelu_tanh(h);

    if (options.capture_all_neurons) trace.mlp_activation.push_back(hidden);
    if (auto it = neurons_by_layer.find(layer); it != neurons_by_layer.end()) {
      for (int j : it->second) {
        Vector values(len);
        for (std::size_t p = 0; p < len; ++p) values[p] = hidden(p, static_cast<std::size_t>(j));
        trace.neuron_activation[{layer, j}] = std::move(values);
      }
    }
    if (options.max_layer >= 0 && layer == options.max_layer && layer < cfg.n_layers - 1) break;

    kernels::matmul(hidden, w.w_out, w.b_out, mlp);
    {
      auto xs = x.values();
      const auto ms = mlp.values();
      for (std::size_t i = 0; i < xs.size(); ++i) xs[i] += ms[i];
    }
    if (options.capture_residuals) trace.mlp_output.push_back(mlp);
  }

  const bool ran_all = last_layer == cfg.n_layers - 1;
  if (options.capture_residuals && ran_all) trace.residual_stream.push_back(x);

  if (options.capture_logits != LogitCapture::None) {
    layer_norm(x, model.final_ln_gain, model.final_ln_bias, cfg.layer_norm_eps, normed);
    const std::size_t vocab = static_cast<std::size_t>(cfg.vocab_size);
    const bool all = options.capture_logits == LogitCapture::All;
    const std::size_t first = all ? 0 : len - 1;
    trace.logits = Matrix(len - first, vocab);
    trace.logits_all_positions = all;
    for (std::size_t p = first; p < len; ++p) {
      kernels::dot_rows(model.token_embedding, normed.row(p), trace.logits.row(p - first));
    }
  }
  return trace;
}

std::span<const float> ForwardTrace::head(HeadId id, std::size_t position) const {
  if (!has_heads()) throw Error(ErrorCode::HeadsNotCaptured, "trace has no head contributions");
  if (id.layer < 0 || static_cast<std::size_t>(id.layer) >= head_contribution.size() || id.head < 0 ||
      id.head >= n_heads) {
    throw Error(ErrorCode::HeadsNotCaptured,
                "head (" + std::to_string(id.layer) + ", " + std::to_string(id.head) + ") not captured");
  }
  if (position >= length()) throw Error(ErrorCode::PositionOutOfRange, std::to_string(position));
  const auto& m = head_contribution[static_cast<std::size_t>(id.layer)][static_cast<std::size_t>(id.head)];
  if (head_position) {
    if (position != *head_position) {
      throw Error(ErrorCode::HeadsNotCaptured,
                  "heads captured only at position " + std::to_string(*head_position));
    }
    return m.row(0);
  }
  return m.row(position);
}

float ForwardTrace::neuron(NeuronHandle n, std::size_t position) const {
  if (position >= length()) throw Error(ErrorCode::PositionOutOfRange, std::to_string(position));
  return neuron_values(n)[position];
}

std::vector<float> ForwardTrace::neuron_values(NeuronHandle n) const {
  if (auto it = neuron_activation.find(n); it != neuron_activation.end()) return it->second;
  if (n.layer >= 0 && static_cast<std::size_t>(n.layer) < mlp_activation.size()) {
    const auto& m = mlp_activation[static_cast<std::size_t>(n.layer)];
    if (n.neuron >= 0 && static_cast<std::size_t>(n.neuron) < m.cols()) {
      std::vector<float> out(m.rows());
      for (std::size_t p = 0; p < m.rows(); ++p) out[p] = m(p, static_cast<std::size_t>(n.neuron));
      return out;
    }
  }
  throw Error(ErrorCode::NeuronNotCaptured,
              "neuron (" + std::to_string(n.layer) + ", " + std::to_string(n.neuron) + ") not captured");
}

std::span<const float> ForwardTrace::final_logits() const {
  if (logits.empty()) throw Error(ErrorCode::LogitsNotCaptured, "trace has no logits");
  return logits.row(logits.rows() - 1);
}

std::vector<double> next_token_distribution(const ForwardTrace& trace) {
  const auto logits = trace.final_logits();
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  std::vector<double> probs(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(static_cast<double>(logits[i]) - max_logit);
    total += probs[i];
  }
  for (double& p : probs) p /= total;
  return probs;
}

double next_token_probability(const ForwardTrace& trace, TokenId token) {
  const auto logits = trace.final_logits();
  if (token < 0 || static_cast<std::size_t>(token) >= logits.size()) {
    throw Error(ErrorCode::UnknownId, "token " + std::to_string(token));
  }
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (float l : logits) total += std::exp(static_cast<double>(l) - max_logit);
  return std::exp(static_cast<double>(logits[static_cast<std::size_t>(token)]) - max_logit) / total;
}

}  // namespace headscope
