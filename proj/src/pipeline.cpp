#include "headscope/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <mutex>
#include <random>
#include <set>

#include "headscope/ablation_lab.hpp"
#include "headscope/analytics.hpp"
#include "headscope/corpus.hpp"
#include "headscope/errors.hpp"
#include "headscope/explainer.hpp"
#include "headscope/file_io.hpp"
#include "headscope/hashing.hpp"
#include "headscope/head_attribution.hpp"
#include "headscope/neuron_scout.hpp"
#include "headscope/parallel.hpp"
#include "headscope/prompt_miner.hpp"
#include "headscope/serialization.hpp"
#include "headscope/trace_dump.hpp"

namespace headscope {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kModelKeys = {"model_weights", "model_config", "tokenizer_vocab", "tokenizer_merges"};
const std::vector<std::string> kBackendKeys = {"backend",    "endpoint",         "llm_model", "temperature",
                                               "stub_mode",  "stub_explanation", "stub_rules"};

std::size_t stage_index(Stage s) { return static_cast<std::size_t>(s); }

std::string example_key(std::string_view text) { return "Example:\n\"" + std::string(text) + "\"\n\nAnswer:"; }

// Records of one neuron's prompts file, split by role.
struct NeuronPrompts {
  NeuronHandle neuron;
  std::vector<PromptRecord> mine;
  std::vector<PromptRecord> test;
};

std::vector<const PromptRecord*> usable(const std::vector<PromptRecord>& records, std::size_t limit) {
  std::vector<const PromptRecord*> out;
  for (std::size_t i = 0; i < records.size() && i < limit; ++i) {
    if (!records[i].discarded) out.push_back(&records[i]);
  }
  return out;
}

struct NeuronAttribution {
  std::map<std::string, AttributionMatrix> mine;
  std::map<std::string, AttributionMatrix> test;
};

// Activity summaries over the first k mine prompts.
std::vector<HeadActivitySummary> summaries_for(const NeuronPrompts& prompts, const NeuronAttribution& attribution,
                                               std::size_t k) {
  std::vector<AttributionMatrix> matrices;
  for (const auto* r : usable(prompts.mine, k)) matrices.push_back(attribution.mine.at(r->doc_id));
  if (matrices.empty()) return {};
  return activity_summary(matrices);
}

std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = rng();
    if (r >= threshold) return r % n;
  }
}

}  // namespace

class Pipeline::Lock {
 public:
  explicit Lock(fs::path path) : path_(std::move(path)) {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
      throw Error(ErrorCode::RunLocked, "run directory is locked by " + path_.string() +
                                            "; another run is active, or remove the file if it is stale");
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
  }
  ~Lock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }

 private:
  fs::path path_;
};

struct Pipeline::Context {
  fs::path run_dir;
  std::map<std::string, std::string> outputs;
  std::mutex mutex;

  void write(const std::string& rel, const std::string& contents) {
    const auto path = run_dir / rel;
    fs::create_directories(path.parent_path());
    write_file_atomic(path, contents);
    std::lock_guard lock(mutex);
    outputs[rel] = sha256_hex(contents);
  }
  void write_json(const std::string& rel, const json& j) { write(rel, j.dump(2) + "\n"); }
};

Pipeline::Pipeline(RunConfig config, fs::path run_dir, PipelineOptions options)
    : config_(std::move(config)), run_dir_(std::move(run_dir)), options_(std::move(options)) {
  fs::create_directories(run_dir_);
  lock_ = std::make_unique<Lock>(run_dir_ / "run.lock");
  manifest_ = RunManifest::load(run_dir_ / "manifest.json");
}

Pipeline::~Pipeline() = default;

// Cached loads are dropped when any of their source files changed on disk.
namespace {

// Deletes a stage's files and any subdirectories they leave empty.
void remove_outputs(const fs::path& run_dir, const StageRecord& rec) {
  for (const auto& [rel, h] : rec.outputs) {
    fs::remove(run_dir / rel);
    for (auto dir = (run_dir / rel).parent_path(); dir != run_dir && fs::exists(dir) && fs::is_empty(dir); dir = dir.parent_path()) {
      fs::remove(dir);
    }
  }
}

}  // namespace

const ModelBundle& Pipeline::model() {
  const auto stamp = file_hash(config_.model_weights) + file_hash(config_.model_config);
  if (!model_ || model_stamp_ != stamp) {
    model_ = load_model(config_.model_weights, config_.model_config);
    model_stamp_ = stamp;
  }
  return *model_;
}

const Tokenizer& Pipeline::tokenizer() {
  const auto stamp = file_hash(config_.tokenizer_vocab) + file_hash(config_.tokenizer_merges);
  if (!tokenizer_ || tokenizer_stamp_ != stamp) {
    tokenizer_.emplace(load_tokenizer_tables(config_.tokenizer_vocab, config_.tokenizer_merges));
    tokenizer_stamp_ = stamp;
  }
  return *tokenizer_;
}

std::string Pipeline::file_hash(const fs::path& path) {
  std::error_code ec;
  const auto size = fs::file_size(path, ec);
  if (ec) throw Error(ErrorCode::Io, "input file not found: " + path.string());
  const auto mtime = fs::last_write_time(path, ec).time_since_epoch().count();
  const auto key = fs::absolute(path).lexically_normal().string() + "|" + std::to_string(size) + "|" + std::to_string(mtime);
  auto it = file_hashes_.find(key);
  if (it != file_hashes_.end()) return it->second;
  return file_hashes_[key] = sha256_file(path);
}

std::string Pipeline::inputs_hash(Stage stage) {
  std::vector<std::string> keys;
  std::vector<fs::path> files;
  switch (stage) {
    case Stage::Scout:
      keys = kModelKeys;
      keys.insert(keys.end(), {"layers", "trailing_layers", "top_k_neurons", "max_neurons", "candidate_tokens",
                               "score_kind", "layer_histogram", "neuron_source"});
      if (config_.neuron_source == "random") keys.insert(keys.end(), {"random_per_layer", "seed"});
      files = {config_.model_weights, config_.model_config, config_.tokenizer_vocab, config_.tokenizer_merges};
      break;
    case Stage::Mine:
      keys = {"corpus",     "n_mine_prompts", "prompt_sweep",      "n_test_prompts",
              "window_tokens", "min_tokens",  "max_prompt_tokens", "retain_fraction"};
      files = {config_.corpus};
      break;
    case Stage::Attribute:
      keys = {"sigma_multiplier", "band_low", "band_high", "dump_traces"};
      break;
    case Stage::Explain:
    case Stage::Score:
      keys = kBackendKeys;
      keys.push_back(stage == Stage::Explain ? "max_examples" : "score_variant");
      keys.push_back(stage == Stage::Explain ? "explanation_max_tokens" : "classification_max_tokens");
      if (config_.backend == "stub" && config_.stub_mode == "coin") keys.push_back("seed");
      if (config_.backend == "stub" && config_.stub_mode == "rules") files = {config_.stub_rules};
      break;
    case Stage::Ablate:
      keys = {"ablation_mode"};
      break;
    case Stage::Report:
      break;
  }
  std::string text = "stage=" + std::string(to_string(stage)) + "\n" + config_.fingerprint_of(keys);
  for (const auto& f : files) text += "file:" + file_hash(f) + "\n";
  if (stage == Stage::Report && options_.baseline_run) {
    text += "baseline:" + file_hash(*options_.baseline_run / "scores.json") + "\n";
  }
  if (stage != Stage::Scout) {
    const Stage prev = kAllStages[stage_index(stage) - 1];
    const auto* rec = manifest_.find(prev);
    if (!rec || !rec->complete) {
      text += "upstream:incomplete\n";
    } else {
      text += "upstream:" + rec->inputs_hash + "\n";
      for (const auto& [rel, hash] : rec->outputs) text += "out:" + rel + "=" + hash + "\n";
    }
  }
  return sha256_hex(text);
}

void Pipeline::check_upstream(Stage stage) {
  for (std::size_t i = 0; i < stage_index(stage); ++i) {
    const Stage up = kAllStages[i];
    const auto name = std::string(to_string(up));
    const auto* rec = manifest_.find(up);
    if (!rec || !rec->complete) {
      throw Error(ErrorCode::UpstreamIncomplete,
                  "stage '" + name + "' must complete before '" + std::string(to_string(stage)) + "'");
    }
    const auto changed = changed_outputs(*rec, run_dir_);
    if (!changed.empty()) {
      throw Error(ErrorCode::HashMismatch, "output '" + changed.front() + "' of stage '" + name +
                                               "' changed since it ran; invalidate '" + name + "' and rerun");
    }
    if (inputs_hash(up) != rec->inputs_hash) {
      throw Error(ErrorCode::HashMismatch, "inputs of stage '" + name + "' changed since it ran; invalidate '" +
                                               name + "' and rerun it first");
    }
  }
}

StageOutcome Pipeline::run_stage(Stage stage) {
  check_upstream(stage);
  const auto hash = inputs_hash(stage);
  const auto name = std::string(to_string(stage));
  if (const auto* rec = manifest_.find(stage); rec && rec->complete) {
    if (rec->inputs_hash == hash && changed_outputs(*rec, run_dir_).empty()) return {stage, false};
    for (std::size_t i = stage_index(stage) + 1; i < kAllStages.size(); ++i) {
      if (manifest_.complete(kAllStages[i])) {
        throw Error(ErrorCode::HashMismatch,
                    "inputs or outputs of stage '" + name + "' changed but later stage '" +
                        std::string(to_string(kAllStages[i])) + "' is complete; invalidate '" +
                        std::string(to_string(kAllStages[stage_index(stage) + 1])) + "' first");
      }
    }
  }
  if (const auto* rec = manifest_.find(stage)) remove_outputs(run_dir_, *rec);
  manifest_.tool_version = std::string(kToolVersion);
  manifest_.config = config_.snapshot();
  manifest_.stage(stage) = StageRecord{};
  manifest_.save(run_dir_ / "manifest.json");

  Context ctx;
  ctx.run_dir = run_dir_;
  switch (stage) {
    case Stage::Scout: scout(ctx); break;
    case Stage::Mine: mine(ctx); break;
    case Stage::Attribute: attribute(ctx); break;
    case Stage::Explain: explain(ctx); break;
    case Stage::Score: score(ctx); break;
    case Stage::Ablate: ablate(ctx); break;
    case Stage::Report: report(ctx); break;
  }
  manifest_.stage(stage) = StageRecord{true, hash, std::move(ctx.outputs)};
  manifest_.save(run_dir_ / "manifest.json");
  return {stage, true};
}

std::vector<StageOutcome> Pipeline::run_all() {
  std::vector<StageOutcome> out;
  for (Stage s : kAllStages) out.push_back(run_stage(s));
  return out;
}

void Pipeline::invalidate(Stage stage) {
  for (std::size_t i = stage_index(stage); i < kAllStages.size(); ++i) {
    auto it = manifest_.stages.find(std::string(to_string(kAllStages[i])));
    if (it == manifest_.stages.end()) continue;
    remove_outputs(run_dir_, it->second);
    manifest_.stages.erase(it);
  }
  manifest_.save(run_dir_ / "manifest.json");
}

// ---------------------------------------------------------------------------
// Readers for earlier stages' files.

namespace {

json read_run_json(const fs::path& run_dir, const std::string& rel) {
  const auto path = run_dir / rel;
  if (!fs::exists(path)) throw Error(ErrorCode::UpstreamIncomplete, "missing run file " + path.string());
  return parse_json(read_text_file(path), path.string(), ErrorCode::HashMismatch);
}

template <typename T>
T decode(const json& j, const std::string& what) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::HashMismatch, "malformed " + what + ": " + e.what());
  }
}

std::vector<NextTokenNeuron> read_neurons(const fs::path& run_dir) {
  return decode<std::vector<NextTokenNeuron>>(read_run_json(run_dir, "neurons.json"), "neurons.json");
}

NeuronPrompts read_prompts(const fs::path& run_dir, NeuronHandle n) {
  const auto rel = "prompts/" + neuron_key(n) + ".json";
  const auto j = read_run_json(run_dir, rel);
  return {n, decode<std::vector<PromptRecord>>(j.at("mine"), rel), decode<std::vector<PromptRecord>>(j.at("test"), rel)};
}

NeuronAttribution read_attribution(const fs::path& run_dir, NeuronHandle n) {
  const auto rel = "attribution/" + neuron_key(n) + ".json";
  const auto j = read_run_json(run_dir, rel);
  NeuronAttribution out;
  for (auto& m : decode<std::vector<AttributionMatrix>>(j.at("mine"), rel)) out.mine.emplace(m.prompt_id, m);
  for (auto& m : decode<std::vector<AttributionMatrix>>(j.at("test"), rel)) out.test.emplace(m.prompt_id, m);
  return out;
}

std::unique_ptr<ChatBackend> make_backend(const RunConfig& c, const std::vector<std::pair<std::string, bool>>& truth) {
  if (c.backend == "http") {
    HttpBackendConfig hc;
    hc.endpoint = c.endpoint;
    hc.model = c.llm.model;
    if (const char* key = std::getenv("HEADSCOPE_API_KEY")) hc.api_key = key;
    hc.max_attempts = c.backend_max_attempts;
    return std::make_unique<HttpChatBackend>(hc);
  }
  if (c.stub_mode == "coin") return std::make_unique<CoinStubBackend>(c.seed, c.stub_explanation);
  if (c.stub_mode == "rules") return std::make_unique<StubBackend>(StubBackend::from_file(c.stub_rules));
  const bool invert = c.stub_mode == "anti";
  std::vector<StubBackend::Rule> rules;
  for (const auto& [text, active] : truth) rules.push_back({example_key(text), active != invert ? "Yes" : "No"});
  return std::make_unique<StubBackend>(std::move(rules), c.stub_explanation);
}

struct TranscriptSink {
  std::mutex mutex;
  std::vector<TranscriptEntry> entries;

  void add(const RecordingBackend& rec) {
    auto t = rec.transcript();
    std::lock_guard lock(mutex);
    entries.insert(entries.end(), std::make_move_iterator(t.begin()), std::make_move_iterator(t.end()));
  }
  json finish() {
    std::stable_sort(entries.begin(), entries.end(), [](const TranscriptEntry& a, const TranscriptEntry& b) {
      return std::tie(a.fingerprint, a.reply) < std::tie(b.fingerprint, b.reply);
    });
    return transcript_to_json(entries);
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// Stages.

void Pipeline::scout(Context& ctx) {
  const auto& m = model();
  const auto& tok = tokenizer();
  const auto layers = config_.resolve_layers(m.config.n_layers);
  const auto candidates =
      config_.word_candidates ? word_token_candidates(tok) : all_token_candidates(tok.vocab_size());
  ScoutOptions opts;
  opts.kind = config_.score_kind;
  const std::size_t top_k = std::min<std::size_t>(config_.top_k_neurons, static_cast<std::size_t>(m.config.d_mlp));

  auto neurons = scout_neurons(m, layers, top_k, candidates, &tok, opts);
  if (config_.neuron_source == "random") {
    std::vector<NeuronHandle> scouted;
    for (const auto& n : neurons) scouted.push_back(n.handle);
    const auto sample = random_baseline(m.config.d_mlp, layers, config_.random_per_layer, scouted, config_.seed);
    std::vector<NextTokenNeuron> baseline(sample.size());
    parallel_for(sample.size(), [&](std::size_t i) {
      const auto r = congruence_score(m, sample[i], candidates, opts);
      baseline[i] = {sample[i], r.score, r.token, tok.token_text(r.token), r.runners_up};
    });
    neurons = std::move(baseline);
  } else if (config_.max_neurons > 0 && neurons.size() > config_.max_neurons) {
    neurons.resize(config_.max_neurons);
  }

  json list = json::array();
  for (const auto& n : neurons) {
    json j = n;
    for (auto& r : j["runners_up"]) r["token_text"] = tok.token_text(r.at("token_id").get<TokenId>());
    list.push_back(std::move(j));
  }
  ctx.write_json("neurons.json", list);

  if (config_.layer_histogram) {
    const auto h = layer_histogram(m, candidates, config_.score_kind);
    std::string csv = "layer,count\n";
    for (std::size_t l = 0; l < h.counts.size(); ++l) csv += std::to_string(l) + "," + std::to_string(h.counts[l]) + "\n";
    ctx.write("histograms/layers.csv", csv);
  }
}

void Pipeline::mine(Context& ctx) {
  const auto& m = model();
  const auto& tok = tokenizer();
  const auto neurons = read_neurons(run_dir_);
  if (neurons.empty()) throw Error(ErrorCode::EmptyInput, "neurons.json lists no neurons");
  const auto corpus = load_corpus(config_.corpus);
  if (corpus.empty()) throw Error(ErrorCode::CorpusExhausted, "corpus " + config_.corpus.string() + " is empty");

  std::vector<NeuronHandle> handles;
  for (const auto& n : neurons) handles.push_back(n.handle);
  MineOptions mo;
  mo.window_tokens = config_.window_tokens;
  mo.min_tokens = config_.min_tokens;
  mo.split = Split::Mine;
  const auto scanned_mine = scan_corpus(m, tok, handles, corpus, mo);
  mo.split = Split::Test;
  const auto scanned_test = scan_corpus(m, tok, handles, corpus, mo);

  std::vector<NeuronPrompts> all;
  std::vector<PromptRecord*> flat;
  for (std::size_t i = 0; i < handles.size(); ++i) {
    all.push_back({handles[i],
                   select_top_prompts(tok, scanned_mine, corpus, handles, i, config_.max_mine_prompts(), Split::Mine),
                   select_top_prompts(tok, scanned_test, corpus, handles, i, config_.n_test_prompts, Split::Test)});
  }
  for (auto& p : all) {
    for (auto& r : p.mine) flat.push_back(&r);
    for (auto& r : p.test) flat.push_back(&r);
  }
  TruncateOptions to;
  to.retain_fraction = config_.retain_fraction;
  to.max_prompt_tokens = config_.max_prompt_tokens;
  parallel_for(flat.size(), [&](std::size_t i) { *flat[i] = truncate_prompt(m, tok, flat[i]->neuron, *flat[i], to); });

  for (const auto& p : all) {
    json j = {{"neuron", p.neuron},
              {"mine", p.mine},
              {"test", p.test},
              {"diversity", {{"mine", diversity_count(p.mine)}, {"test", diversity_count(p.test)}}}};
    ctx.write_json("prompts/" + neuron_key(p.neuron) + ".json", j);
  }
}

void Pipeline::attribute(Context& ctx) {
  const auto& m = model();
  const auto neurons = read_neurons(run_dir_);
  for (const auto& n : neurons) {
    const auto prompts = read_prompts(run_dir_, n.handle);
    const auto mine = usable(prompts.mine, prompts.mine.size());
    const auto test = usable(prompts.test, prompts.test.size());
    std::vector<const PromptRecord*> jobs = mine;
    jobs.insert(jobs.end(), test.begin(), test.end());
    std::vector<AttributionMatrix> matrices(jobs.size());
    parallel_for(jobs.size(), [&](std::size_t i) {
      const auto& r = *jobs[i];
      ForwardOptions fo;
      fo.capture_heads = true;
      fo.head_position = r.truncated_peak_position;
      fo.capture_logits = LogitCapture::None;
      fo.max_layer = n.handle.layer;
      if (config_.dump_traces) fo.capture_neurons = {n.handle};
      const auto trace = forward(m, r.truncated_ids, fo);
      matrices[i] = attribute_heads(trace, n.handle, r.truncated_peak_position, m, r.doc_id, config_.sigma_multiplier);
      if (config_.dump_traces) {
        const auto rel = "traces/" + neuron_key(n.handle) + "/" + std::string(to_string(r.split)) + "-" +
                         std::to_string(i < mine.size() ? i : i - mine.size()) + ".bin";
        fs::create_directories((run_dir_ / rel).parent_path());
        write_trace_dump(run_dir_ / rel, trace);
        std::lock_guard lock(ctx.mutex);
        ctx.outputs[rel] = sha256_file(run_dir_ / rel);
      }
    });
    std::vector<AttributionMatrix> mine_m(matrices.begin(), matrices.begin() + static_cast<std::ptrdiff_t>(mine.size()));
    std::vector<AttributionMatrix> test_m(matrices.begin() + static_cast<std::ptrdiff_t>(mine.size()), matrices.end());

    NeuronAttribution na;
    for (const auto& mm : mine_m) na.mine.emplace(mm.prompt_id, mm);
    const auto summary = summaries_for(prompts, na, config_.n_mine_prompts);
    const auto explainable = select_explainable(summary, config_.band_low, config_.band_high);
    json j = {{"neuron", n.handle},
              {"mine", mine_m},
              {"test", test_m},
              {"summary", summary},
              {"explainable", explainable}};
    ctx.write_json("attribution/" + neuron_key(n.handle) + ".json", j);
  }
}

void Pipeline::explain(Context& ctx) {
  const auto neurons = read_neurons(run_dir_);
  struct Job {
    std::size_t k;
    NextTokenNeuron neuron;
    HeadActivitySummary summary;
    std::vector<std::string> active_ids, inactive_ids;
    ExplanationRequest request;
    HeadExplanation result;
  };
  std::vector<Job> jobs;
  const auto counts = config_.prompt_counts();
  for (const auto& n : neurons) {
    const auto prompts = read_prompts(run_dir_, n.handle);
    const auto attribution = read_attribution(run_dir_, n.handle);
    for (std::size_t k : counts) {
      const auto summaries = summaries_for(prompts, attribution, k);
      for (const auto& s : select_explainable(summaries, config_.band_low, config_.band_high)) {
        Job job{k, n, s, {}, {}, {}, {}};
        job.request.token_text = n.token_text;
        job.request.max_examples = std::max(config_.max_examples, k);
        for (const auto* r : usable(prompts.mine, k)) {
          const bool active = s.per_prompt_active.at(r->doc_id);
          (active ? job.active_ids : job.inactive_ids).push_back(r->doc_id);
          (active ? job.request.active_prompts : job.request.inactive_prompts).push_back(r->truncated_text);
        }
        jobs.push_back(std::move(job));
      }
    }
  }

  std::unique_ptr<ChatBackend> owned;
  ChatBackend* backend = options_.backend_override;
  if (!backend) {
    owned = make_backend(config_, {});
    backend = owned.get();
  }
  RecordingBackend recorder(*backend);
  parallel_for(
      jobs.size(),
      [&](std::size_t i) {
        auto& job = jobs[i];
        job.result = generate_explanation(recorder, job.request, job.neuron.handle, job.summary.head, config_.llm);
      },
      config_.backend_concurrency);

  json variants = json::array();
  for (std::size_t k : counts) {
    json list = json::array();
    for (const auto& job : jobs) {
      if (job.k != k) continue;
      json e = job.result;
      e["token_text"] = job.neuron.token_text;
      e["active_fraction"] = job.summary.active_fraction;
      e["active_prompts"] = job.active_ids;
      e["inactive_prompts"] = job.inactive_ids;
      list.push_back(std::move(e));
    }
    variants.push_back({{"n_prompts", k}, {"explanations", std::move(list)}});
  }
  ctx.write_json("explanations.json", {{"variants", std::move(variants)}});
  ctx.write_json("transcripts/explain.json", transcript_to_json(recorder.transcript()));
}

void Pipeline::score(Context& ctx) {
  const auto explanations = read_run_json(run_dir_, "explanations.json");
  std::map<NeuronHandle, std::pair<NeuronPrompts, NeuronAttribution>> cache;
  auto neuron_data = [&](NeuronHandle n) -> const std::pair<NeuronPrompts, NeuronAttribution>& {
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, std::make_pair(read_prompts(run_dir_, n), read_attribution(run_dir_, n))).first;
    return it->second;
  };

  struct Job {
    std::size_t variant;
    HeadExplanation explanation;
    std::vector<std::tuple<std::string, std::string, bool>> tests;  // id, text, truth
    std::vector<ClassificationOutcome> outcomes;
    ExplanationScore score;
    std::string skipped;
  };
  std::vector<Job> jobs;
  const auto& variants = explanations.at("variants");
  for (std::size_t v = 0; v < variants.size(); ++v) {
    for (const auto& e : variants[v].at("explanations")) {
      Job job{v, decode<HeadExplanation>(e, "explanations.json"), {}, {}, {}, {}};
      const auto& [prompts, attribution] = neuron_data(job.explanation.neuron);
      for (const auto* r : usable(prompts.test, prompts.test.size())) {
        job.tests.emplace_back(r->doc_id, r->truncated_text, attribution.test.at(r->doc_id).is_active(job.explanation.head));
      }
      jobs.push_back(std::move(job));
    }
  }

  std::unique_ptr<ChatBackend> shared;
  if (!options_.backend_override && config_.backend == "http") shared = make_backend(config_, {});
  TranscriptSink sink;
  parallel_for(
      jobs.size(),
      [&](std::size_t i) {
        auto& job = jobs[i];
        job.score.head = job.explanation.head;
        if (job.tests.empty()) {
          job.score.discarded = true;
          job.score.note = "no test prompts";
          return;
        }
        std::unique_ptr<ChatBackend> own;
        ChatBackend* inner = options_.backend_override ? options_.backend_override : shared.get();
        if (!inner) {
          std::vector<std::pair<std::string, bool>> truth;
          for (const auto& [id, text, active] : job.tests) truth.emplace_back(text, active);
          own = make_backend(config_, truth);
          inner = own.get();
        }
        RecordingBackend rec(*inner);
        for (const auto& [id, text, active] : job.tests) {
          job.outcomes.push_back(classify_prompt(rec, job.explanation, id, text, active, config_.llm));
        }
        job.score = explanation_score(job.outcomes, config_.score_variant, job.explanation.head);
        sink.add(rec);
      },
      config_.backend_concurrency);

  json out_variants = json::array();
  for (std::size_t v = 0; v < variants.size(); ++v) {
    json list = json::array();
    for (const auto& job : jobs) {
      if (job.variant != v) continue;
      json s = job.score;
      s["neuron"] = job.explanation.neuron;
      s["outcomes"] = job.outcomes;
      list.push_back(std::move(s));
    }
    out_variants.push_back({{"n_prompts", variants[v].at("n_prompts")}, {"scores", std::move(list)}});
  }
  ctx.write_json("scores.json", {{"score_variant", to_string(config_.score_variant)}, {"variants", std::move(out_variants)}});
  ctx.write_json("transcripts/score.json", sink.finish());
}

void Pipeline::ablate(Context& ctx) {
  const auto& m = model();
  const auto neurons = read_neurons(run_dir_);
  std::map<NeuronHandle, TokenId> token_of;
  for (const auto& n : neurons) token_of[n.handle] = n.token;

  const auto explanations = read_run_json(run_dir_, "explanations.json");
  json main_list = json::array();
  for (const auto& v : explanations.at("variants")) {
    if (v.at("n_prompts").get<std::size_t>() == config_.n_mine_prompts) main_list = v.at("explanations");
  }

  struct Pair {
    NeuronHandle neuron;
    HeadId head;
    std::vector<std::pair<const PromptRecord*, bool>> prompts;
    AblationOptions options;
    std::vector<AblationRecord> records;
  };
  std::map<NeuronHandle, std::pair<NeuronPrompts, NeuronAttribution>> data;
  std::vector<Pair> pairs;
  for (const auto& e : main_list) {
    const auto x = decode<HeadExplanation>(e, "explanations.json");
    auto it = data.find(x.neuron);
    if (it == data.end()) {
      it = data.emplace(x.neuron, std::make_pair(read_prompts(run_dir_, x.neuron), read_attribution(run_dir_, x.neuron))).first;
    }
    const auto& [prompts, attribution] = it->second;
    Pair p{x.neuron, x.head, {}, {}, {}};
    p.options.mode = config_.ablation_mode;
    for (const auto* r : usable(prompts.test, prompts.test.size())) {
      p.prompts.emplace_back(r, attribution.test.at(r->doc_id).is_active(x.head));
    }
    if (config_.ablation_mode == AblationMode::Mean) {
      std::vector<std::vector<TokenId>> ids;
      for (const auto* r : usable(prompts.mine, config_.n_mine_prompts)) ids.push_back(r->truncated_ids);
      p.options.mean_output = mean_head_output(m, x.head, ids);
    }
    p.records.resize(p.prompts.size());
    pairs.push_back(std::move(p));
  }

  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (std::size_t j = 0; j < pairs[i].prompts.size(); ++j) jobs.emplace_back(i, j);
  }
  parallel_for(jobs.size(), [&](std::size_t t) {
    auto& p = pairs[jobs[t].first];
    const auto& [prompt, active] = p.prompts[jobs[t].second];
    p.records[jobs[t].second] = ablate_and_measure(m, p.neuron, token_of.at(p.neuron), p.head, *prompt, active, p.options);
  });

  auto report_json = [](std::vector<AblationRecord> records) -> json {
    try {
      return ablation_report(std::move(records));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateGroup) throw;
      return {{"records", records}, {"degenerate", e.what()}};
    }
  };
  json out_pairs = json::array();
  std::vector<AblationRecord> pooled;
  std::vector<double> active_deltas, inactive_deltas;
  for (const auto& p : pairs) {
    out_pairs.push_back({{"neuron", p.neuron}, {"head", p.head}, {"report", report_json(p.records)}});
    for (const auto& r : p.records) {
      pooled.push_back(r);
      (r.head_was_active ? active_deltas : inactive_deltas).push_back(r.delta);
    }
  }
  ctx.write_json("ablation.json",
                 {{"mode", to_string(config_.ablation_mode)}, {"pairs", std::move(out_pairs)}, {"pooled", report_json(pooled)}});
  ctx.write("histograms/ablation-active.csv", histogram_csv(make_histogram(active_deltas, -1.0, 1.0)));
  ctx.write("histograms/ablation-inactive.csv", histogram_csv(make_histogram(inactive_deltas, -1.0, 1.0)));
}

void Pipeline::report(Context& ctx) {
  const auto& m = model();
  const auto neurons = read_neurons(run_dir_);
  const auto scores = read_run_json(run_dir_, "scores.json");
  const auto ablation = read_run_json(run_dir_, "ablation.json");
  const std::string source = config_.neuron_source == "random" ? "random-baseline" : "scouted";

  std::map<NeuronHandle, NeuronPrompts> prompts;
  for (const auto& n : neurons) prompts.emplace(n.handle, read_prompts(run_dir_, n.handle));

  json neuron_rows = json::array();
  for (const auto& n : neurons) {
    const auto& p = prompts.at(n.handle);
    std::vector<PromptRecord> mine;
    for (const auto* r : usable(p.mine, config_.n_mine_prompts)) mine.push_back(*r);
    std::size_t discarded = 0;
    for (const auto& r : p.mine) discarded += r.discarded ? 1 : 0;
    neuron_rows.push_back({{"layer", n.handle.layer},
                           {"neuron", n.handle.neuron},
                           {"token_text", n.token_text},
                           {"congruence", n.score},
                           {"mine_diversity", diversity_count(mine)},
                           {"discarded_prompts", discarded}});
  }

  json distributions = json::array();
  json sweep = json::array();
  std::optional<ScoreDistribution> main_dist;
  json diversity_table = json::object();
  for (const auto& v : scores.at("variants")) {
    const auto k = v.at("n_prompts").get<std::size_t>();
    std::vector<double> values;
    std::size_t discarded = 0;
    for (const auto& s : v.at("scores")) {
      const auto es = decode<ExplanationScore>(s, "scores.json");
      if (es.score) {
        values.push_back(*es.score);
      } else {
        ++discarded;
      }
      if (k == config_.n_mine_prompts) {
        std::vector<PromptRecord> mine;
        for (const auto* r : usable(prompts.at(s.at("neuron").get<NeuronHandle>()).mine, k)) mine.push_back(*r);
        const auto key = std::to_string(diversity_count(mine));
        diversity_table[key] = diversity_table.value(key, 0) + 1;
      }
    }
    auto dist = ScoreDistribution::from_values(source + " prompts=" + std::to_string(k), values);
    ctx.write("histograms/scores-" + std::to_string(k) + ".csv", histogram_csv(make_histogram(dist.values)));
    sweep.push_back({{"n_prompts", k},
                     {"scored_heads", values.size()},
                     {"discarded_heads", discarded},
                     {"mean", values.empty() ? json(nullptr) : json(dist.mean)},
                     {"skewness", dist.skewness ? json(*dist.skewness) : json(nullptr)}});
    if (k == config_.n_mine_prompts) main_dist = dist;
    distributions.push_back(std::move(dist));
  }

  json baseline = nullptr;
  if (options_.baseline_run) {
    const auto other = parse_json(read_text_file(*options_.baseline_run / "scores.json"),
                                  (*options_.baseline_run / "scores.json").string(), ErrorCode::HashMismatch);
    std::vector<double> values;
    const json* chosen = nullptr;
    for (const auto& v : other.at("variants")) {
      if (!chosen || v.at("n_prompts").get<std::size_t>() == config_.n_mine_prompts) chosen = &v;
    }
    if (chosen) {
      for (const auto& s : chosen->at("scores")) {
        if (!s.at("score").is_null()) values.push_back(s.at("score").get<double>());
      }
    }
    const auto base = ScoreDistribution::from_values("baseline " + options_.baseline_run->filename().string(), values);
    if (!main_dist || main_dist->values.empty() || base.values.empty()) {
      baseline = {{"distribution", base}, {"comparison", nullptr}, {"note", "a distribution is empty; no comparison"}};
    } else {
      baseline = {{"distribution", base}, {"comparison", compare_to_baseline(*main_dist, base)}};
    }
  }

  json ablation_summary = json::array();
  for (const auto& p : ablation.at("pairs")) {
    json row = {{"neuron", p.at("neuron")}, {"head", p.at("head")}};
    const auto& r = p.at("report");
    for (const char* key : {"ks_statistic", "ks_p_value", "mean_delta_active", "mean_delta_inactive", "n_active",
                            "n_inactive", "degenerate"}) {
      if (r.contains(key)) row[key] = r.at(key);
    }
    ablation_summary.push_back(std::move(row));
  }
  json pooled = ablation.at("pooled");
  pooled.erase("records");

  json report = {
      {"tool_version", kToolVersion},
      {"model",
       {{"n_layers", m.config.n_layers}, {"n_heads", m.config.n_heads}, {"d_model", m.config.d_model},
        {"d_mlp", m.config.d_mlp}, {"vocab_size", m.config.vocab_size}}},
      {"neuron_source", source},
      {"neurons", std::move(neuron_rows)},
      {"score_variant", scores.at("score_variant")},
      {"distributions", std::move(distributions)},
      {"prompt_sweep", std::move(sweep)},
      {"diversity_histogram", std::move(diversity_table)},
      {"ablation", {{"mode", ablation.at("mode")}, {"pairs", std::move(ablation_summary)}, {"pooled", std::move(pooled)}}},
      {"baseline", std::move(baseline)},
      {"notes",
       {"skewness is the population-moment coefficient g1 = m3 / m2^1.5; negative means a longer left tail",
        "explanation scores use " +
            std::string(config_.score_variant == ScoreVariant::Printed ? "(TP/(TP+FP) + TN/(TN+FN)) / 2"
                                                                       : "(TP/(TP+FN) + TN/(TN+FP)) / 2") +
            "; the other reading is available through score_variant",
        "KS p-values use the asymptotic Kolmogorov distribution"}}};
  ctx.write_json("report.json", report);
}

// ---------------------------------------------------------------------------

std::vector<NeuronHandle> random_baseline(int d_mlp, std::span<const int> layers, std::size_t per_layer,
                                          std::span<const NeuronHandle> excluded, std::uint64_t seed) {
  if (per_layer == 0) throw Error(ErrorCode::InvalidArgument, "per-layer sample size must be positive");
  const std::set<NeuronHandle> skip(excluded.begin(), excluded.end());
  std::mt19937_64 rng(seed);
  std::vector<NeuronHandle> out;
  for (int layer : layers) {
    std::vector<int> pool;
    for (int j = 0; j < d_mlp; ++j) {
      if (!skip.contains({layer, j})) pool.push_back(j);
    }
    if (pool.size() < per_layer) {
      throw Error(ErrorCode::InsufficientNeurons, "layer " + std::to_string(layer) + " has " +
                                                      std::to_string(pool.size()) + " neurons outside the scouted set, " +
                                                      std::to_string(per_layer) + " requested");
    }
    for (std::size_t i = 0; i < per_layer; ++i) {
      const auto j = i + static_cast<std::size_t>(bounded(rng, pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    std::vector<int> chosen(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(per_layer));
    std::sort(chosen.begin(), chosen.end());
    for (int j : chosen) out.push_back({layer, j});
  }
  return out;
}

fs::path write_toy_run(const fs::path& dir, const PlantedOptions& options) {
  fs::create_directories(dir);
  const auto pc = make_planted_circuit(options);
  save_model(pc.model, dir / "model.safetensors", dir / "model.conf");
  save_tokenizer_tables(pc.tables, dir / "vocab.json", dir / "merges.txt");
  std::string jsonl;
  for (const auto& d : pc.corpus()) {
    jsonl += json{{"doc_id", d.doc_id}, {"text", d.text}, {"meta", {{"subset", d.subset}}}}.dump() + "\n";
  }
  write_file_atomic(dir / "corpus.jsonl", jsonl);
  const std::string conf =
      "# Planted-circuit toy run: head " + std::to_string(pc.head.layer) + "." + std::to_string(pc.head.head) +
      " drives neuron " + neuron_key(pc.neuron) + " toward '" + pc.target_word + "' after '" + pc.trigger_word +
      "'.\n"
      "model_weights = model.safetensors\n"
      "model_config = model.conf\n"
      "tokenizer_vocab = vocab.json\n"
      "tokenizer_merges = merges.txt\n"
      "corpus = corpus.jsonl\n"
      "layers = " + std::to_string(pc.neuron.layer) + "\n"
      "top_k_neurons = 1\n"
      "n_mine_prompts = 20\n"
      "n_test_prompts = 20\n"
      "prompt_sweep = 30\n"
      "backend = stub\n"
      "stub_mode = echo\n";
  write_file_atomic(dir / "run.conf", conf);
  return dir / "run.conf";
}

}  // namespace headscope
