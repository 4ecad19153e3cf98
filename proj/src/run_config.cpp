#include "headscope/run_config.hpp"

#include <algorithm>
#include <charconv>

#include "headscope/errors.hpp"
#include "headscope/serialization.hpp"

namespace headscope {
namespace {

constexpr const char* kMethod = "method-default";
constexpr const char* kPlumbing = "plumbing-default";

struct KeySpec {
  const char* key;
  const char* default_value;
  const char* provenance;
};

// An empty default with no provenance marks a required key.
const std::vector<KeySpec>& key_specs() {
  static const std::vector<KeySpec> specs = {
      {"model_weights", "", nullptr},
      {"model_config", "", nullptr},
      {"tokenizer_vocab", "", nullptr},
      {"tokenizer_merges", "", nullptr},
      {"corpus", "", nullptr},
      {"layers", "auto", kMethod},
      {"trailing_layers", "auto", kMethod},
      {"top_k_neurons", "40", kMethod},
      {"max_neurons", "0", kPlumbing},
      {"candidate_tokens", "word", kMethod},
      {"score_kind", "dot", kMethod},
      {"layer_histogram", "false", kPlumbing},
      {"n_mine_prompts", "20", kMethod},
      {"n_test_prompts", "10", kMethod},
      {"window_tokens", "128", kPlumbing},
      {"min_tokens", "5", kPlumbing},
      {"max_prompt_tokens", "100", kMethod},
      {"retain_fraction", "0.8", kMethod},
      {"band_low", "0.25", kMethod},
      {"band_high", "0.75", kMethod},
      {"sigma_multiplier", "2.0", kMethod},
      {"max_examples", "20", kMethod},
      {"score_variant", "printed", kMethod},
      {"prompt_sweep", "", kPlumbing},
      {"backend", "http", kPlumbing},
      {"endpoint", "https://api.openai.com/v1/chat/completions", kPlumbing},
      {"llm_model", "gpt-4", kMethod},
      {"temperature", "0", kPlumbing},
      {"explanation_max_tokens", "256", kPlumbing},
      {"classification_max_tokens", "8", kPlumbing},
      {"backend_max_attempts", "5", kPlumbing},
      {"backend_concurrency", "4", kPlumbing},
      {"stub_mode", "echo", kPlumbing},
      {"stub_rules", "", kPlumbing},
      {"stub_explanation", "contains the phrase that precedes the predicted token.", kPlumbing},
      {"neuron_source", "scout", kPlumbing},
      {"random_per_layer", "20", kMethod},
      {"ablation_mode", "zero", kMethod},
      {"seed", "0", kPlumbing},
      {"dump_traces", "false", kPlumbing},
  };
  return specs;
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const std::string& why) {
  throw Error(ErrorCode::InvalidConfig, "config key '" + key + "' = '" + value + "': " + why);
}

long long parse_integer(const std::string& key, const std::string& value) {
  long long out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad(key, value, "not an integer");
  return out;
}

std::size_t parse_count(const std::string& key, const std::string& value, bool allow_zero = false) {
  const long long v = parse_integer(key, value);
  if (v < 0 || (!allow_zero && v == 0)) bad(key, value, allow_zero ? "must be non-negative" : "must be positive");
  return static_cast<std::size_t>(v);
}

double parse_real(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad(key, value, "not a number");
  return out;
}

bool parse_flag(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  bad(key, value, "not a boolean");
}

std::string one_of(const std::string& key, const std::string& value, std::initializer_list<const char*> options) {
  for (const char* o : options) {
    if (value == o) return value;
  }
  std::string list;
  for (const char* o : options) list += (list.empty() ? "" : ", ") + std::string(o);
  bad(key, value, "expected one of " + list);
}

std::filesystem::path resolve_path(const std::filesystem::path& base, const std::string& value) {
  if (value.empty()) return {};
  const std::filesystem::path p(value);
  return p.is_absolute() ? p : base / p;
}

}  // namespace

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& s : key_specs()) out.emplace_back(s.key);
    return out;
  }();
  return keys;
}

int default_trailing_layers(int n_layers) {
  if (n_layers >= 36) return 5;
  if (n_layers >= 24) return 4;
  return 3;
}

RunConfig RunConfig::from_key_values(const KeyValueFile& kv, const std::filesystem::path& base_dir,
                                     const std::map<std::string, std::string>& overrides) {
  const auto& keys = run_config_keys();
  for (const auto& [key, value] : kv.values()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw Error(ErrorCode::InvalidConfig, kv.origin() + ": unknown key '" + key + "'");
    }
  }
  for (const auto& [key, value] : overrides) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw Error(ErrorCode::InvalidConfig, "unknown override key '" + key + "'");
    }
  }

  RunConfig c;
  c.base_dir = base_dir;
  for (const auto& spec : key_specs()) {
    ConfigEntry e;
    if (auto it = overrides.find(spec.key); it != overrides.end()) {
      e = {it->second, "override"};
    } else if (auto v = kv.get(spec.key)) {
      e = {*v, "config-file"};
    } else if (spec.provenance) {
      e = {spec.default_value, spec.provenance};
    } else {
      throw Error(ErrorCode::InvalidConfig, kv.origin() + ": missing required key '" + spec.key + "'");
    }
    c.entries[spec.key] = std::move(e);
  }
  auto v = [&](const char* key) -> const std::string& { return c.entries.at(key).value; };

  c.model_weights = resolve_path(base_dir, v("model_weights"));
  c.model_config = resolve_path(base_dir, v("model_config"));
  c.tokenizer_vocab = resolve_path(base_dir, v("tokenizer_vocab"));
  c.tokenizer_merges = resolve_path(base_dir, v("tokenizer_merges"));
  c.corpus = resolve_path(base_dir, v("corpus"));

  if (v("layers") != "auto") {
    for (const auto& part : split(v("layers"), ',')) {
      const auto layer = parse_integer("layers", trim(part));
      if (layer < 0) bad("layers", v("layers"), "layer indices must be non-negative");
      c.layers.push_back(static_cast<int>(layer));
    }
    std::sort(c.layers.begin(), c.layers.end());
    c.layers.erase(std::unique(c.layers.begin(), c.layers.end()), c.layers.end());
    if (c.layers.empty()) bad("layers", v("layers"), "no layers listed");
  }
  if (v("trailing_layers") != "auto") {
    c.trailing_layers = static_cast<int>(parse_count("trailing_layers", v("trailing_layers")));
  }
  c.top_k_neurons = parse_count("top_k_neurons", v("top_k_neurons"));
  c.max_neurons = parse_count("max_neurons", v("max_neurons"), true);
  c.word_candidates = one_of("candidate_tokens", v("candidate_tokens"), {"word", "all"}) == "word";
  c.score_kind = score_kind_from_string(v("score_kind"));
  c.layer_histogram = parse_flag("layer_histogram", v("layer_histogram"));

  c.n_mine_prompts = parse_count("n_mine_prompts", v("n_mine_prompts"));
  c.n_test_prompts = parse_count("n_test_prompts", v("n_test_prompts"));
  c.window_tokens = parse_count("window_tokens", v("window_tokens"));
  c.min_tokens = parse_count("min_tokens", v("min_tokens"));
  c.max_prompt_tokens = parse_count("max_prompt_tokens", v("max_prompt_tokens"));
  c.retain_fraction = parse_real("retain_fraction", v("retain_fraction"));
  if (!(c.retain_fraction > 0.0 && c.retain_fraction <= 1.0)) {
    bad("retain_fraction", v("retain_fraction"), "must lie in (0, 1]");
  }
  if (c.min_tokens > c.window_tokens) bad("min_tokens", v("min_tokens"), "exceeds window_tokens");

  c.band_low = parse_real("band_low", v("band_low"));
  c.band_high = parse_real("band_high", v("band_high"));
  if (!(c.band_low >= 0.0 && c.band_low < c.band_high && c.band_high <= 1.0)) {
    bad("band_low", v("band_low") + ".." + v("band_high"), "band must satisfy 0 <= low < high <= 1");
  }
  c.sigma_multiplier = parse_real("sigma_multiplier", v("sigma_multiplier"));
  if (!(c.sigma_multiplier >= 0.0)) bad("sigma_multiplier", v("sigma_multiplier"), "must be non-negative");

  c.max_examples = parse_count("max_examples", v("max_examples"));
  c.score_variant = score_variant_from_string(v("score_variant"));
  if (!v("prompt_sweep").empty()) {
    for (const auto& part : split(v("prompt_sweep"), ',')) c.prompt_sweep.push_back(parse_count("prompt_sweep", trim(part)));
  }

  c.backend = one_of("backend", v("backend"), {"http", "stub"});
  c.endpoint = v("endpoint");
  c.llm.model = v("llm_model");
  c.llm.temperature = parse_real("temperature", v("temperature"));
  c.llm.explanation_max_tokens = static_cast<int>(parse_count("explanation_max_tokens", v("explanation_max_tokens")));
  c.llm.classification_max_tokens =
      static_cast<int>(parse_count("classification_max_tokens", v("classification_max_tokens")));
  c.backend_max_attempts = static_cast<int>(parse_count("backend_max_attempts", v("backend_max_attempts")));
  c.backend_concurrency = parse_count("backend_concurrency", v("backend_concurrency"));
  c.stub_mode = one_of("stub_mode", v("stub_mode"), {"echo", "anti", "coin", "rules"});
  c.stub_rules = resolve_path(base_dir, v("stub_rules"));
  c.stub_explanation = v("stub_explanation");
  if (c.stub_mode == "rules" && c.stub_rules.empty()) bad("stub_rules", "", "required when stub_mode = rules");

  c.neuron_source = one_of("neuron_source", v("neuron_source"), {"scout", "random"});
  c.random_per_layer = parse_count("random_per_layer", v("random_per_layer"));
  c.ablation_mode = ablation_mode_from_string(v("ablation_mode"));
  c.seed = static_cast<std::uint64_t>(parse_count("seed", v("seed"), true));
  c.dump_traces = parse_flag("dump_traces", v("dump_traces"));
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path, const std::map<std::string, std::string>& overrides) {
  const auto kv = KeyValueFile::load(path);
  return from_key_values(kv, std::filesystem::absolute(path).parent_path(), overrides);
}

const std::string& RunConfig::value(const std::string& key) const {
  auto it = entries.find(key);
  if (it == entries.end()) throw Error(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
  return it->second.value;
}

nlohmann::json RunConfig::snapshot() const {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [key, e] : entries) out[key] = {{"value", e.value}, {"provenance", e.provenance}};
  return out;
}

std::string RunConfig::fingerprint_of(const std::vector<std::string>& keys) const {
  std::string out;
  for (const auto& k : keys) out += k + "=" + value(k) + "\n";
  return out;
}

std::vector<int> RunConfig::resolve_layers(int n_layers) const {
  if (!layers.empty()) {
    for (int l : layers) {
      if (l >= n_layers) {
        throw Error(ErrorCode::InvalidConfig,
                    "layer " + std::to_string(l) + " is out of range for a " + std::to_string(n_layers) + "-layer model");
      }
    }
    return layers;
  }
  const int count = trailing_layers > 0 ? trailing_layers : default_trailing_layers(n_layers);
  return headscope::trailing_layers(n_layers, std::min(count, n_layers));
}

std::vector<std::size_t> RunConfig::prompt_counts() const {
  std::vector<std::size_t> out = prompt_sweep;
  out.push_back(n_mine_prompts);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::size_t RunConfig::max_mine_prompts() const { return prompt_counts().back(); }

}  // namespace headscope
