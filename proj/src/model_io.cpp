#include "headscope/model_io.hpp"

#include <cmath>
#include <sstream>

#include "headscope/errors.hpp"
#include "headscope/file_io.hpp"
#include "headscope/safetensors.hpp"

namespace headscope {
namespace {

std::string shape_string(const std::vector<std::int64_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

class TensorReader {
 public:
  TensorReader(const SafetensorsFile& file, const TensorNameMap& names)
      : file_(file), names_(names) {}

  std::vector<float> read(const std::string& logical, int layer,
                          const std::vector<std::int64_t>& expected) const {
    const std::string name = names_.resolve(logical, layer);
    if (!file_.contains(name)) throw Error(ErrorCode::MissingTensor, name);
    const auto& info = file_.info(name);
    if (info.shape != expected) {
      throw Error(ErrorCode::ShapeMismatch,
                  name + ": expected " + shape_string(expected) + ", got " + shape_string(info.shape));
    }
    auto data = file_.read_f32(name);
    for (float v : data) {
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteWeight, name);
    }
    return data;
  }

  Matrix matrix(const std::string& logical, int layer, std::int64_t rows, std::int64_t cols) const {
    return Matrix(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols),
                  read(logical, layer, {rows, cols}));
  }
  Vector vector(const std::string& logical, int layer, std::int64_t n) const {
    return read(logical, layer, {n});
  }

 private:
  const SafetensorsFile& file_;
  const TensorNameMap& names_;
};

Matrix column_slice(const Matrix& m, std::size_t begin, std::size_t count) {
  Matrix out(m.rows(), count);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < count; ++c) out(r, c) = m(r, begin + c);
  }
  return out;
}

void expect_shape(const std::string& what, std::size_t rows, std::size_t cols, std::size_t er,
                  std::size_t ec) {
  if (rows != er || cols != ec) {
    throw Error(ErrorCode::ShapeMismatch, what + ": expected [" + std::to_string(er) + ", " +
                                              std::to_string(ec) + "], got [" + std::to_string(rows) +
                                              ", " + std::to_string(cols) + "]");
  }
}

void expect_finite(const std::string& what, std::span<const float> values) {
  for (float v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteWeight, what);
  }
}

}  // namespace

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw Error(ErrorCode::InvalidConfig, std::string(name) + " must be positive");
  };
  positive(n_layers, "n_layers");
  positive(n_heads, "n_heads");
  positive(d_model, "d_model");
  positive(d_head, "d_head");
  positive(d_mlp, "d_mlp");
  positive(max_positions, "max_positions");
  if (vocab_size < 2) throw Error(ErrorCode::InvalidConfig, "vocab_size must be at least 2");
  if (!(layer_norm_eps > 0.0f) || !std::isfinite(layer_norm_eps)) {
    throw Error(ErrorCode::InvalidConfig, "layer_norm_eps must be a small positive number");
  }
  if (static_cast<long long>(n_heads) * d_head != d_model) {
    throw Error(ErrorCode::ShapeMismatch, "n_heads * d_head (" + std::to_string(n_heads) + " * " +
                                              std::to_string(d_head) + ") != d_model (" +
                                              std::to_string(d_model) + ")");
  }
}

ModelConfig ModelConfig::from_key_values(const KeyValueFile& kv) {
  ModelConfig c;
  c.n_layers = static_cast<int>(kv.require_int("n_layers"));
  c.n_heads = static_cast<int>(kv.require_int("n_heads"));
  c.d_model = static_cast<int>(kv.require_int("d_model"));
  c.vocab_size = static_cast<int>(kv.require_int("vocab_size"));
  c.max_positions = static_cast<int>(kv.require_int("max_positions"));
  if (auto eps = kv.get_double("layer_norm_eps")) c.layer_norm_eps = static_cast<float>(*eps);
  c.d_mlp = static_cast<int>(kv.get_int("d_mlp").value_or(4LL * c.d_model));
  if (auto d_head = kv.get_int("d_head")) {
    c.d_head = static_cast<int>(*d_head);
  } else {
    if (c.n_heads <= 0) throw Error(ErrorCode::InvalidConfig, "n_heads must be positive");
    if (c.d_model % c.n_heads != 0) {
      throw Error(ErrorCode::ShapeMismatch, "d_model " + std::to_string(c.d_model) +
                                                " is not divisible by n_heads " +
                                                std::to_string(c.n_heads));
    }
    c.d_head = c.d_model / c.n_heads;
  }
  c.validate();
  return c;
}

TensorNameMap TensorNameMap::gpt2_defaults() {
  TensorNameMap m;
  m.names = {
      {"token_embedding", "wte.weight"},
      {"position_embedding", "wpe.weight"},
      {"ln1_gain", "h.{layer}.ln_1.weight"},
      {"ln1_bias", "h.{layer}.ln_1.bias"},
      {"attn_qkv_weight", "h.{layer}.attn.c_attn.weight"},
      {"attn_qkv_bias", "h.{layer}.attn.c_attn.bias"},
      {"attn_out_weight", "h.{layer}.attn.c_proj.weight"},
      {"attn_out_bias", "h.{layer}.attn.c_proj.bias"},
      {"ln2_gain", "h.{layer}.ln_2.weight"},
      {"ln2_bias", "h.{layer}.ln_2.bias"},
      {"mlp_in_weight", "h.{layer}.mlp.c_fc.weight"},
      {"mlp_in_bias", "h.{layer}.mlp.c_fc.bias"},
      {"mlp_out_weight", "h.{layer}.mlp.c_proj.weight"},
      {"mlp_out_bias", "h.{layer}.mlp.c_proj.bias"},
      {"final_ln_gain", "ln_f.weight"},
      {"final_ln_bias", "ln_f.bias"},
  };
  return m;
}

TensorNameMap TensorNameMap::from_key_values(const KeyValueFile& kv) {
  TensorNameMap m = gpt2_defaults();
  m.prefix = kv.get("tensor_prefix").value_or("");
  static const std::string kKeyPrefix = "tensor.";
  for (const auto& [key, value] : kv.values()) {
    if (key.rfind(kKeyPrefix, 0) == 0) m.names[key.substr(kKeyPrefix.size())] = value;
  }
  return m;
}

std::string TensorNameMap::resolve(const std::string& logical, int layer) const {
  auto it = names.find(logical);
  if (it == names.end()) throw Error(ErrorCode::InvalidConfig, "no tensor name for '" + logical + "'");
  std::string name = it->second;
  const std::string marker = "{layer}";
  for (auto pos = name.find(marker); pos != std::string::npos; pos = name.find(marker)) {
    if (layer < 0) throw Error(ErrorCode::InvalidConfig, "'" + logical + "' is per-layer");
    name.replace(pos, marker.size(), std::to_string(layer));
  }
  return prefix + name;
}

std::vector<float> ModelBundle::neuron_input_weights(NeuronHandle n) const {
  const Matrix& w = layers.at(static_cast<std::size_t>(n.layer)).w_in;
  std::vector<float> col(w.rows());
  for (std::size_t r = 0; r < w.rows(); ++r) col[r] = w(r, static_cast<std::size_t>(n.neuron));
  return col;
}

void ModelBundle::validate() const {
  config.validate();
  const auto d = static_cast<std::size_t>(config.d_model);
  const auto m = static_cast<std::size_t>(config.d_mlp);
  expect_shape("token_embedding", token_embedding.rows(), token_embedding.cols(),
               static_cast<std::size_t>(config.vocab_size), d);
  expect_shape("position_embedding", position_embedding.rows(), position_embedding.cols(),
               static_cast<std::size_t>(config.max_positions), d);
  if (layers.size() != static_cast<std::size_t>(config.n_layers)) {
    throw Error(ErrorCode::ShapeMismatch, "layer count does not match n_layers");
  }
  expect_finite("token_embedding", token_embedding.values());
  expect_finite("position_embedding", position_embedding.values());
  auto vec = [&](const std::string& what, const Vector& v, std::size_t n) {
    expect_shape(what, v.size(), 1, n, 1);
    expect_finite(what, v);
  };
  auto mat = [&](const std::string& what, const Matrix& w, std::size_t r, std::size_t c) {
    expect_shape(what, w.rows(), w.cols(), r, c);
    expect_finite(what, w.values());
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    const std::string p = "layer " + std::to_string(l) + " ";
    vec(p + "ln1_gain", L.ln1_gain, d);
    vec(p + "ln1_bias", L.ln1_bias, d);
    mat(p + "w_q", L.w_q, d, d);
    mat(p + "w_k", L.w_k, d, d);
    mat(p + "w_v", L.w_v, d, d);
    vec(p + "b_q", L.b_q, d);
    vec(p + "b_k", L.b_k, d);
    vec(p + "b_v", L.b_v, d);
    mat(p + "w_o", L.w_o, d, d);
    vec(p + "b_o", L.b_o, d);
    vec(p + "ln2_gain", L.ln2_gain, d);
    vec(p + "ln2_bias", L.ln2_bias, d);
    mat(p + "w_in", L.w_in, d, m);
    vec(p + "b_in", L.b_in, m);
    mat(p + "w_out", L.w_out, m, d);
    vec(p + "b_out", L.b_out, d);
  }
  vec("final_ln_gain", final_ln_gain, d);
  vec("final_ln_bias", final_ln_bias, d);
}

ModelBundle load_model(const std::filesystem::path& weights_path, const KeyValueFile& config) {
  ModelBundle model;
  model.config = ModelConfig::from_key_values(config);
  const auto names = TensorNameMap::from_key_values(config);
  const auto file = SafetensorsFile::open(weights_path);
  const TensorReader reader(file, names);

  const auto& c = model.config;
  const std::int64_t d = c.d_model;
  const std::int64_t m = c.d_mlp;
  model.token_embedding = reader.matrix("token_embedding", -1, c.vocab_size, d);
  model.position_embedding = reader.matrix("position_embedding", -1, c.max_positions, d);
  model.layers.resize(static_cast<std::size_t>(c.n_layers));
  for (int l = 0; l < c.n_layers; ++l) {
    auto& L = model.layers[static_cast<std::size_t>(l)];
    L.ln1_gain = reader.vector("ln1_gain", l, d);
    L.ln1_bias = reader.vector("ln1_bias", l, d);
    const Matrix qkv = reader.matrix("attn_qkv_weight", l, d, 3 * d);
    const Vector qkv_bias = reader.vector("attn_qkv_bias", l, 3 * d);
    const auto du = static_cast<std::size_t>(d);
    L.w_q = column_slice(qkv, 0, du);
    L.w_k = column_slice(qkv, du, du);
    L.w_v = column_slice(qkv, 2 * du, du);
    L.b_q.assign(qkv_bias.begin(), qkv_bias.begin() + d);
    L.b_k.assign(qkv_bias.begin() + d, qkv_bias.begin() + 2 * d);
    L.b_v.assign(qkv_bias.begin() + 2 * d, qkv_bias.end());
    L.w_o = reader.matrix("attn_out_weight", l, d, d);
    L.b_o = reader.vector("attn_out_bias", l, d);
    L.ln2_gain = reader.vector("ln2_gain", l, d);
    L.ln2_bias = reader.vector("ln2_bias", l, d);
    L.w_in = reader.matrix("mlp_in_weight", l, d, m);
    L.b_in = reader.vector("mlp_in_bias", l, m);
    L.w_out = reader.matrix("mlp_out_weight", l, m, d);
    L.b_out = reader.vector("mlp_out_bias", l, d);
  }
  model.final_ln_gain = reader.vector("final_ln_gain", -1, d);
  model.final_ln_bias = reader.vector("final_ln_bias", -1, d);

  if (names.has("unembedding")) {
    const Matrix unembed = reader.matrix("unembedding", -1, c.vocab_size, d);
    if (unembed.values().size() != model.token_embedding.values().size() ||
        !std::equal(unembed.values().begin(), unembed.values().end(),
                    model.token_embedding.values().begin())) {
      throw Error(ErrorCode::UntiedUnembedding, names.resolve("unembedding") +
                                                    " differs from the token embedding");
    }
  }
  return model;
}

ModelBundle load_model(const std::filesystem::path& weights_path,
                       const std::filesystem::path& config_path) {
  return load_model(weights_path, KeyValueFile::load(config_path));
}

std::string format_model_config(const ModelConfig& c) {
  std::ostringstream out;
  out << "n_layers = " << c.n_layers << "\n"
      << "n_heads = " << c.n_heads << "\n"
      << "d_model = " << c.d_model << "\n"
      << "d_head = " << c.d_head << "\n"
      << "d_mlp = " << c.d_mlp << "\n"
      << "vocab_size = " << c.vocab_size << "\n"
      << "max_positions = " << c.max_positions << "\n";
  out.precision(9);
  out << "layer_norm_eps = " << c.layer_norm_eps << "\n";
  return out.str();
}

void save_model(const ModelBundle& model, const std::filesystem::path& weights_path,
                const std::filesystem::path& config_path) {
  model.validate();
  const auto names = TensorNameMap::gpt2_defaults();
  const auto& c = model.config;
  const std::int64_t d = c.d_model;
  const std::int64_t m = c.d_mlp;

  // Fused qkv tensors must outlive the NamedTensor spans.
  std::vector<std::vector<float>> fused_storage;
  fused_storage.reserve(2 * model.layers.size());
  std::vector<NamedTensor> tensors;
  auto add = [&](const std::string& logical, int layer, std::vector<std::int64_t> shape,
                 std::span<const float> data) {
    tensors.push_back({names.resolve(logical, layer), std::move(shape), data});
  };
  add("token_embedding", -1, {c.vocab_size, d}, model.token_embedding.values());
  add("position_embedding", -1, {c.max_positions, d}, model.position_embedding.values());
  for (int l = 0; l < c.n_layers; ++l) {
    const auto& L = model.layers[static_cast<std::size_t>(l)];
    const auto du = static_cast<std::size_t>(d);
    std::vector<float> qkv(du * 3 * du);
    for (std::size_t r = 0; r < du; ++r) {
      for (std::size_t col = 0; col < du; ++col) {
        qkv[r * 3 * du + col] = L.w_q(r, col);
        qkv[r * 3 * du + du + col] = L.w_k(r, col);
        qkv[r * 3 * du + 2 * du + col] = L.w_v(r, col);
      }
    }
    std::vector<float> qkv_bias;
    qkv_bias.insert(qkv_bias.end(), L.b_q.begin(), L.b_q.end());
    qkv_bias.insert(qkv_bias.end(), L.b_k.begin(), L.b_k.end());
    qkv_bias.insert(qkv_bias.end(), L.b_v.begin(), L.b_v.end());
    fused_storage.push_back(std::move(qkv));
    add("attn_qkv_weight", l, {d, 3 * d}, fused_storage.back());
    fused_storage.push_back(std::move(qkv_bias));
    add("attn_qkv_bias", l, {3 * d}, fused_storage.back());
    add("ln1_gain", l, {d}, L.ln1_gain);
    add("ln1_bias", l, {d}, L.ln1_bias);
    add("attn_out_weight", l, {d, d}, L.w_o.values());
    add("attn_out_bias", l, {d}, L.b_o);
    add("ln2_gain", l, {d}, L.ln2_gain);
    add("ln2_bias", l, {d}, L.ln2_bias);
    add("mlp_in_weight", l, {d, m}, L.w_in.values());
    add("mlp_in_bias", l, {m}, L.b_in);
    add("mlp_out_weight", l, {m, d}, L.w_out.values());
    add("mlp_out_bias", l, {d}, L.b_out);
  }
  add("final_ln_gain", -1, {d}, model.final_ln_gain);
  add("final_ln_bias", -1, {d}, model.final_ln_bias);
  write_safetensors(weights_path, tensors);
  write_file_atomic(config_path, format_model_config(c));
}

}  // namespace headscope
