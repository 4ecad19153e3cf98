// One pass/fail line per acceptance criterion; exit status 0 iff it passed.
// Criteria that need GPT-2 Small read its location from the environment:
//   HEADSCOPE_GPT2_SMALL  directory holding the Hub export model.safetensors
//   HEADSCOPE_CORPUS      Pile-style JSONL sample (at least 2,000 documents)
#include <CLI11.hpp>

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <thread>

#include "headscope/ablation_lab.hpp"
#include "headscope/analytics.hpp"
#include "headscope/explainer.hpp"
#include "headscope/file_io.hpp"
#include "headscope/head_attribution.hpp"
#include "headscope/neuron_scout.hpp"
#include "headscope/pipeline.hpp"
#include "headscope/prompt_miner.hpp"
#include "headscope/serialization.hpp"
#include "headscope/transformer.hpp"

namespace fs = std::filesystem;
using namespace headscope;
using nlohmann::json;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

Verdict pass(std::string d) { return {true, std::move(d)}; }
Verdict fail(std::string d) { return {false, std::move(d)}; }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path test_data(const std::string& rel) { return fs::path(HEADSCOPE_TEST_DATA) / rel; }
fs::path gpt2_tokenizer_dir() { return fs::path(HEADSCOPE_GPT2_TOKENIZER); }
fs::path config_dir() { return fs::path(HEADSCOPE_CONFIG_DIR); }

json read_json(const fs::path& p) { return json::parse(read_text_file(p)); }

std::optional<fs::path> env_path(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return fs::path(v);
}

struct Gpt2Paths {
  fs::path weights;
  fs::path config;
};

std::optional<Gpt2Paths> gpt2_small() {
  const auto dir = env_path("HEADSCOPE_GPT2_SMALL");
  if (!dir || !fs::exists(*dir / "model.safetensors")) return std::nullopt;
  return Gpt2Paths{*dir / "model.safetensors", config_dir() / "gpt2-small.model.conf"};
}

const Tokenizer& gpt2_tokenizer() {
  static const Tokenizer tok(load_tokenizer_tables(gpt2_tokenizer_dir() / "encoder.json", gpt2_tokenizer_dir() / "vocab.bpe"));
  return tok;
}

std::vector<CorpusDocument> corpus_sample(std::size_t n) {
  auto docs = load_corpus(*env_path("HEADSCOPE_CORPUS"));
  if (docs.size() > n) docs.resize(n);
  return docs;
}

std::string blocked(const std::string& what) {
  return "blocked: " + what + " not available (set HEADSCOPE_GPT2_SMALL and HEADSCOPE_CORPUS); not run";
}

std::vector<TokenId> random_ids(std::mt19937_64& rng, std::size_t n, int vocab) {
  std::uniform_int_distribution<TokenId> pick(0, vocab - 1);
  std::vector<TokenId> ids(n);
  for (auto& t : ids) t = pick(rng);
  return ids;
}

ModelConfig toy_config(std::mt19937_64& rng) {
  ModelConfig c;
  c.n_layers = 1 + static_cast<int>(rng() % 4);
  c.n_heads = 1 + static_cast<int>(rng() % 4);
  c.d_head = 2 + static_cast<int>(rng() % 6);
  c.d_model = c.n_heads * c.d_head;
  c.d_mlp = 1 + static_cast<int>(rng() % 64);
  c.vocab_size = 2 + static_cast<int>(rng() % 63);
  c.max_positions = 32;
  return c;
}

// ---- 1 ------------------------------------------------------------------

Verdict forward_parity() {
  const auto paths = gpt2_small();
  const auto fixture = test_data("gpt2_small_reference.json");
  if (!paths) return fail(blocked("GPT-2 Small weights"));
  if (!fs::exists(fixture)) return fail("blocked: reference fixture " + fixture.string() + " missing (run tests/oracles/gen_gpt2_small_reference.py)");
  const auto start = std::chrono::steady_clock::now();
  const auto model = load_model(paths->weights, paths->config);
  const auto ref = read_json(fixture);
  double worst = 0.0;
  int top1_mismatch = 0;
  std::size_t n = 0;
  for (const auto& p : ref.at("prompts")) {
    const auto ids = p.at("ids").get<std::vector<TokenId>>();
    const auto logits = p.at("logits").get<std::vector<double>>();
    const auto trace = forward(model, ids);
    const auto got = trace.final_logits();
    for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - logits[i]));
    const auto a = std::max_element(got.begin(), got.end()) - got.begin();
    const auto b = std::max_element(logits.begin(), logits.end()) - logits.begin();
    top1_mismatch += a != b;
    ++n;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const auto d = fmt("%zu prompts, max |dlogit| = %.3g (<= 1e-3), top-1 mismatches = %d, %.1f s (< 60 s)", n, worst,
                     top1_mismatch, secs);
  return (n == 5 && worst <= 1e-3 && top1_mismatch == 0 && secs < 60.0) ? pass(d) : fail(d);
}

// ---- 2 ------------------------------------------------------------------

// Largest per-prompt relative error between the final pre-LN residual and
// embeddings + heads + attention biases + MLP outputs.
double conservation_error(const ModelBundle& m, std::mt19937_64& rng, int n_prompts) {
  double worst = 0.0;
  for (int i = 0; i < n_prompts; ++i) {
    const auto ids = random_ids(rng, 1 + rng() % 32, m.config.vocab_size);
    ForwardOptions opts;
    opts.capture_heads = true;
    opts.capture_residuals = true;
    opts.capture_logits = LogitCapture::None;
    const auto trace = forward(m, ids, opts);
    const auto& final = trace.residual_stream.back();
    double err = 0.0, norm = 0.0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      for (std::size_t c = 0; c < final.cols(); ++c) {
        double sum = static_cast<double>(m.token_embedding(static_cast<std::size_t>(ids[p]), c)) + m.position_embedding(p, c);
        for (int l = 0; l < m.config.n_layers; ++l) {
          const auto li = static_cast<std::size_t>(l);
          sum += m.layers[li].b_o[c];
          sum += trace.mlp_output[li](p, c);
          for (int h = 0; h < m.config.n_heads; ++h) sum += trace.head({l, h}, p)[c];
        }
        err += (final(p, c) - sum) * (final(p, c) - sum);
        norm += static_cast<double>(final(p, c)) * final(p, c);
      }
    }
    worst = std::max(worst, std::sqrt(err / norm));
  }
  return worst;
}

Verdict residual_conservation() {
  std::mt19937_64 rng(2);
  const auto tiny = load_model(test_data("tiny_gpt2/model.safetensors"), test_data("tiny_gpt2/model.conf"));
  const double e_tiny = conservation_error(tiny, rng, 20);
  std::string d = fmt("tiny GPT-2 fixture: max rel err %.3g over 20 prompts", e_tiny);
  bool ok = e_tiny <= 1e-4;
  if (const auto paths = gpt2_small()) {
    const auto model = load_model(paths->weights, paths->config);
    const double e = conservation_error(model, rng, 20);
    d += fmt("; GPT-2 Small: %.3g", e);
    ok = ok && e <= 1e-4;
  } else {
    d += "; GPT-2 Small not available, checked on the fixture model only";
  }
  return ok ? pass(d + " (<= 1e-4)") : fail(d + " (<= 1e-4)");
}

// ---- 3 ------------------------------------------------------------------

Verdict congruence_oracle() {
  std::size_t checked = 0, mismatches = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const auto cfg = toy_config(rng);
    const auto model = random_model(cfg, seed);
    std::vector<TokenId> candidates;
    for (TokenId t = 0; t < cfg.vocab_size; ++t) {
      if (rng() % 4 != 0) candidates.push_back(t);
    }
    if (candidates.empty()) candidates.push_back(0);
    for (int l = 0; l < cfg.n_layers; ++l) {
      const std::vector<int> layer = {l};
      const auto scouted = scout_neurons(model, layer, static_cast<std::size_t>(cfg.d_mlp), candidates);
      std::map<NeuronHandle, std::pair<double, TokenId>> from_scout;
      for (const auto& n : scouted) from_scout[n.handle] = {n.score, n.token};
      for (int j = 0; j < cfg.d_mlp; ++j) {
        double best = 0.0;
        TokenId arg = -1;
        for (TokenId t : candidates) {
          double s = 0.0;
          for (int c = 0; c < cfg.d_model; ++c) {
            s += static_cast<double>(model.layers[static_cast<std::size_t>(l)].w_out(static_cast<std::size_t>(j), static_cast<std::size_t>(c))) *
                 static_cast<double>(model.token_embedding(static_cast<std::size_t>(t), static_cast<std::size_t>(c)));
          }
          if (arg < 0 || s > best) {
            best = s;
            arg = t;
          }
        }
        const auto direct = congruence_score(model, {l, j}, candidates);
        const auto scout = from_scout.at({l, j});
        mismatches += (direct.score != best || direct.token != arg || scout.first != best || scout.second != arg);
        ++checked;
      }
    }
  }
  const auto d = fmt("100 seeds, %zu neurons, %zu mismatches (exact equality)", checked, mismatches);
  return mismatches == 0 ? pass(d) : fail(d);
}

// ---- 4 ------------------------------------------------------------------

Verdict attribution_oracle() {
  std::size_t matrices = 0, bad_scores = 0, bad_active = 0, bad_ineligible = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed + 1000);
    const auto cfg = toy_config(rng);
    const auto model = random_model(cfg, seed);
    const auto ids = random_ids(rng, 1 + rng() % 16, cfg.vocab_size);
    ForwardOptions opts;
    opts.capture_heads = true;
    const auto trace = forward(model, ids, opts);
    for (int trial = 0; trial < 4; ++trial) {
      const NeuronHandle n{static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.n_layers)),
                           static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.d_mlp))};
      const std::size_t pos = rng() % ids.size();
      const auto m = attribute_heads(trace, n, pos, model);
      std::vector<double> oracle;
      for (int k = 0; k <= n.layer; ++k) {
        for (int h = 0; h < cfg.n_heads; ++h) {
          const auto v = trace.head({k, h}, pos);
          double s = 0.0;
          for (int c = 0; c < cfg.d_model; ++c) {
            s += static_cast<double>(v[static_cast<std::size_t>(c)]) *
                 model.layers[static_cast<std::size_t>(n.layer)].w_in(static_cast<std::size_t>(c), static_cast<std::size_t>(n.neuron));
          }
          oracle.push_back(s);
        }
      }
      const double mu = std::accumulate(oracle.begin(), oracle.end(), 0.0) / static_cast<double>(oracle.size());
      double var = 0.0;
      for (double s : oracle) var += (s - mu) * (s - mu);
      const double sd = std::sqrt(var / static_cast<double>(oracle.size()));
      std::size_t i = 0;
      for (int k = 0; k < cfg.n_layers; ++k) {
        for (int h = 0; h < cfg.n_heads; ++h) {
          if (k > n.layer) {
            bad_ineligible += (m.score({k, h}) != 0.0 || m.is_active({k, h}) || m.is_eligible({k, h}));
            continue;
          }
          const double diff = std::abs(m.score({k, h}) - oracle[i]);
          worst = std::max(worst, diff);
          bad_scores += diff > 1e-6;
          bad_active += m.is_active({k, h}) != (oracle[i] > mu + 2.0 * sd);
          ++i;
        }
      }
      ++matrices;
    }
  }
  const auto d = fmt("100 seeds, %zu matrices: max |score diff| %.2g (<= 1e-6), %zu score / %zu active-set / %zu k>l mismatches",
                     matrices, worst, bad_scores, bad_active, bad_ineligible);
  return (bad_scores == 0 && bad_active == 0 && bad_ineligible == 0) ? pass(d) : fail(d);
}

// ---- 5 ------------------------------------------------------------------

Verdict truncation() {
  const auto paths = gpt2_small();
  if (!paths || !env_path("HEADSCOPE_CORPUS")) return fail(blocked("GPT-2 Small weights or corpus"));
  const auto model = load_model(paths->weights, paths->config);
  const auto& tok = gpt2_tokenizer();
  const auto corpus = corpus_sample(2000);
  const auto candidates = word_token_candidates(tok);
  const auto layers = trailing_layers(model.config.n_layers, 3);
  auto neurons = scout_neurons(model, layers, 20, candidates, &tok);
  neurons.resize(std::min<std::size_t>(neurons.size(), 5));
  std::vector<NeuronHandle> handles;
  for (const auto& n : neurons) handles.push_back(n.handle);
  const auto scanned = scan_corpus(model, tok, handles, corpus);
  std::size_t records = 0, unsound = 0, too_long = 0, discarded = 0;
  std::vector<std::pair<NeuronHandle, PromptRecord>> truncated;
  for (std::size_t i = 0; i < handles.size(); ++i) {
    for (auto& r : select_top_prompts(tok, scanned, corpus, handles, i, 20, Split::Mine)) {
      auto t = truncate_prompt(model, tok, handles[i], r);
      ++records;
      unsound += static_cast<double>(t.truncated_activation) < truncation_threshold(t.peak_activation, 0.8);
      if (t.discarded) {
        ++discarded;
      } else {
        too_long += t.truncated_ids.size() > 100;
      }
      truncated.emplace_back(handles[i], std::move(t));
    }
  }
  std::size_t non_minimal = 0, sampled = 0;
  std::mt19937_64 rng(5);
  std::shuffle(truncated.begin(), truncated.end(), rng);
  for (const auto& [n, r] : truncated) {
    if (sampled == 20) break;
    ++sampled;
    const double threshold = truncation_threshold(r.peak_activation, 0.8);
    const std::size_t end = r.peak_position + 1;
    for (std::size_t len = 1; len < r.truncated_ids.size(); ++len) {
      const std::vector<TokenId> suffix(r.token_ids.begin() + static_cast<std::ptrdiff_t>(end - len),
                                        r.token_ids.begin() + static_cast<std::ptrdiff_t>(end));
      if (activation_profile(model, n, suffix).value >= threshold) {
        ++non_minimal;
        break;
      }
    }
  }
  const auto d = fmt("%zu prompts: %zu below 0.8 psi, %zu kept longer than 100 tokens (%zu flagged discarded); "
                     "%zu sampled, %zu not minimal",
                     records, unsound, too_long, discarded, sampled, non_minimal);
  return (records > 0 && unsound == 0 && too_long == 0 && non_minimal == 0 && sampled == 20) ? pass(d) : fail(d);
}

// ---- 6 ------------------------------------------------------------------

Verdict scorer() {
  std::vector<std::string> failures;
  auto check = [&](const char* name, const ExplanationScore& s, std::optional<double> want, bool discarded) {
    const bool ok = s.discarded == discarded && s.score.has_value() == want.has_value() &&
                    (!want || std::abs(*s.score - *want) < 1e-12);
    if (!ok) failures.push_back(name);
  };
  check("5/0/5/0", score_counts(5, 0, 5, 0), 1.0, false);
  check("3/1/4/2", score_counts(3, 1, 4, 2), 0.5 * (3.0 / 4.0 + 4.0 / 6.0), false);
  check("fallback 6/4/0/0", score_counts(6, 4, 0, 0), 0.6, false);
  check("fallback 0/0/3/1", score_counts(0, 0, 3, 1), 0.75, false);
  check("all active", score_counts(7, 0, 0, 3), std::nullopt, true);
  check("all inactive", score_counts(0, 2, 8, 0), std::nullopt, true);

  double coin_sum = 0.0;
  int coin_n = 0, echo_bad = 0, anti_bad = 0;
  for (int head = 0; head < 200; ++head) {
    std::vector<std::pair<std::string, bool>> prompts;
    for (int i = 0; i < 10; ++i) prompts.emplace_back(fmt("head %d prompt %d", head, i), i % 2 == 0);
    std::vector<StubBackend::Rule> echo_rules, anti_rules;
    for (const auto& [text, active] : prompts) {
      const std::string key = "Example:\n\"" + text + "\"\n\nAnswer:";
      echo_rules.push_back({key, active ? "Yes" : "No"});
      anti_rules.push_back({key, active ? "No" : "Yes"});
    }
    StubBackend echo(echo_rules), anti(anti_rules);
    CoinStubBackend coin(99, "unused");
    const HeadExplanation expl{{0, 0}, {0, head}, fmt("mentions topic %d.", head), ""};
    auto run = [&](ChatBackend& b) {
      std::vector<ClassificationOutcome> out;
      for (std::size_t i = 0; i < prompts.size(); ++i) {
        out.push_back(classify_prompt(b, expl, std::to_string(i), prompts[i].first, prompts[i].second));
      }
      return explanation_score(out);
    };
    const auto e = run(echo);
    const auto a = run(anti);
    echo_bad += !(e.score && *e.score == 1.0);
    anti_bad += !(a.score && *a.score == 0.0);
    const auto c = run(coin);
    if (c.score) {
      coin_sum += *c.score;
      ++coin_n;
    }
  }
  const double coin_mean = coin_n ? coin_sum / coin_n : 0.0;
  std::string d = fmt("table cases %zu/6 ok; echo stub != 1.0 on %d heads; anti stub != 0.0 on %d heads; "
                      "coin stub mean %.4f over %d scored heads (0.5 +- 0.15)",
                      6 - failures.size(), echo_bad, anti_bad, coin_mean, coin_n);
  for (const auto& f : failures) d += "; failed " + f;
  return (failures.empty() && echo_bad == 0 && anti_bad == 0 && std::abs(coin_mean - 0.5) <= 0.15) ? pass(d) : fail(d);
}

// ---- 7 ------------------------------------------------------------------

Verdict statistics() {
  const auto fx = read_json(test_data("stats_fixtures.json"));
  const auto& sk = fx.at("skew_50");
  const double skew_err = std::abs(skewness(sk.at("values").get<std::vector<double>>()) - sk.at("skewness").get<double>());
  bool ok = skew_err <= 1e-9;
  std::string d = fmt("skewness |err| %.2g (<= 1e-9)", skew_err);
  for (const char* name : {"ks_40_60", "ks_30_30", "ks_ties"}) {
    const auto& k = fx.at(name);
    const auto r = ks_two_sample(k.at("a").get<std::vector<double>>(), k.at("b").get<std::vector<double>>());
    const double d_ref = k.at("d").get<double>();
    const double p_ref = k.at("p").get<double>();
    // D is a ratio of small integers; equality up to the last bit of the
    // reference's own division.
    const bool d_ok = std::abs(r.d - d_ref) <= 1e-12;
    const double p_rel = std::abs(r.p - p_ref) / p_ref;
    ok = ok && d_ok && p_rel <= 0.05;
    d += fmt("; %s D %.6f vs %.6f, p rel err %.2g (<= 5%%)", name, r.d, d_ref, p_rel);
  }
  return ok ? pass(d) : fail(d);
}

// ---- 8 ------------------------------------------------------------------

Verdict planted_circuit() {
  const auto dir = fs::temp_directory_path() / fmt("headscope-planted-%d", static_cast<int>(::getpid()));
  fs::remove_all(dir);
  const auto conf = write_toy_run(dir);
  const auto pc = make_planted_circuit();
  const auto run_dir = dir / "run";
  auto config = RunConfig::load(conf, {{"top_k_neurons", "32"}});
  {
    Pipeline p(config, run_dir);
    p.run_stage(Stage::Scout);
    p.run_stage(Stage::Mine);
    p.run_stage(Stage::Attribute);
  }
  const auto neurons = read_json(run_dir / "neurons.json");
  const auto top = neurons.at(0).get<NextTokenNeuron>();
  const bool top_ok = top.handle == pc.neuron && top.token == pc.target;

  const auto attribution = read_json(run_dir / ("attribution/" + neuron_key(pc.neuron) + ".json"));
  const auto prompts = read_json(run_dir / ("prompts/" + neuron_key(pc.neuron) + ".json"));
  std::size_t trig = 0, trig_active = 0, ctrl = 0, ctrl_active = 0;
  for (const char* split : {"mine", "test"}) {
    for (const auto& mj : attribution.at(split)) {
      const auto m = mj.get<AttributionMatrix>();
      const bool is_trigger = m.prompt_id.rfind("trigger-", 0) == 0;
      (is_trigger ? trig : ctrl)++;
      if (m.is_active(pc.head)) (is_trigger ? trig_active : ctrl_active)++;
    }
  }

  std::size_t trig_drop = 0, n_trig = 0, n_ctrl = 0;
  double worst_ctrl = 0.0;
  const Tokenizer tok(pc.tables);
  for (const char* split : {"mine", "test"}) {
    for (const auto& rj : prompts.at(split)) {
      const auto r = rj.get<PromptRecord>();
      if (r.discarded) continue;
      const bool is_trigger = r.doc_id.rfind("trigger-", 0) == 0;
      const auto rec = ablate_and_measure(pc.model, pc.neuron, pc.target, pc.head, r, is_trigger);
      if (is_trigger) {
        ++n_trig;
        trig_drop += rec.prob_ablated < rec.prob_original;
      } else {
        ++n_ctrl;
        worst_ctrl = std::max(worst_ctrl, std::abs(rec.delta));
      }
    }
  }
  fs::remove_all(dir);
  const auto d = fmt("top-1 neuron (%d,%d) token %d [planted (%d,%d) token %d]; head (0,0) active on %zu/%zu trigger "
                     "and %zu/%zu control prompts; ablation lowers p(target) on %zu/%zu trigger prompts, "
                     "max |control delta| %.2g (< 1e-6)",
                     top.handle.layer, top.handle.neuron, top.token, pc.neuron.layer, pc.neuron.neuron, pc.target,
                     trig_active, trig, ctrl_active, ctrl, trig_drop, n_trig, worst_ctrl);
  const bool ok = top_ok && trig > 0 && ctrl > 0 && trig_active == trig && ctrl_active == 0 && n_trig > 0 &&
                  trig_drop == n_trig && n_ctrl > 0 && worst_ctrl < 1e-6;
  return ok ? pass(d) : fail(d);
}

// ---- 9, 10 ----------------------------------------------------------------

struct Gpt2Run {
  fs::path dir;
  double seconds = 0.0;
};

Gpt2Run run_gpt2_pipeline(const Gpt2Paths& paths) {
  Gpt2Run out;
  out.dir = fs::temp_directory_path() / fmt("headscope-gpt2-%d", static_cast<int>(::getpid()));
  fs::remove_all(out.dir);
  fs::create_directories(out.dir);
  {
    std::ofstream corpus(out.dir / "corpus.jsonl");
    for (const auto& doc : corpus_sample(2000)) {
      corpus << json{{"doc_id", doc.doc_id}, {"text", doc.text}, {"meta", {{"subset", doc.subset}}}}.dump() << "\n";
    }
  }
  std::ofstream conf(out.dir / "run.conf");
  conf << "model_weights = " << paths.weights.string() << "\n"
       << "model_config = " << paths.config.string() << "\n"
       << "tokenizer_vocab = " << (gpt2_tokenizer_dir() / "encoder.json").string() << "\n"
       << "tokenizer_merges = " << (gpt2_tokenizer_dir() / "vocab.bpe").string() << "\n"
       << "corpus = corpus.jsonl\n"
       << "top_k_neurons = 20\nmax_neurons = 5\nbackend = stub\nstub_mode = echo\n";
  conf.close();
  const auto start = std::chrono::steady_clock::now();
  {
    Pipeline p(RunConfig::load(out.dir / "run.conf"), out.dir / "run");
    p.run_all();
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

Verdict qualitative_gpt2() {
  const auto paths = gpt2_small();
  if (!paths || !env_path("HEADSCOPE_CORPUS")) return fail(blocked("GPT-2 Small weights or corpus"));
  const auto run = run_gpt2_pipeline(*paths);
  const auto explanations = read_json(run.dir / "run/explanations.json");
  const auto scores = read_json(run.dir / "run/scores.json");
  std::size_t pairs = 0, nonempty = 0, perfect = 0, scored = 0;
  for (const auto& e : explanations.at("variants").at(0).at("explanations")) {
    ++pairs;
    nonempty += !e.at("explanation_text").get<std::string>().empty();
  }
  for (const auto& s : scores.at("variants").at(0).at("scores")) {
    if (s.at("score").is_null()) continue;
    ++scored;
    perfect += s.at("score").get<double>() == 1.0;
  }
  fs::remove_all(run.dir);
  const auto d = fmt("%zu pairs in the 25-75%% band, %zu with nonempty explanations; echo stub scored %zu, %zu at 1.0",
                     pairs, nonempty, scored, perfect);
  return (pairs >= 1 && nonempty >= 1 && scored >= 1 && perfect == scored) ? pass(d) : fail(d);
}

Verdict runtime_gpt2() {
  const auto paths = gpt2_small();
  if (!paths || !env_path("HEADSCOPE_CORPUS")) return fail(blocked("GPT-2 Small weights or corpus"));
  const auto run = run_gpt2_pipeline(*paths);
  const bool done = fs::exists(run.dir / "run/report.json");
  fs::remove_all(run.dir);
  const auto d = fmt("full pipeline %s in %.1f s on %u hardware threads (< 1800 s)", done ? "completed" : "did not finish",
                     run.seconds, std::thread::hardware_concurrency());
  return (done && run.seconds < 1800.0) ? pass(d) : fail(d);
}

const std::map<int, std::pair<const char*, Verdict (*)()>>& criteria() {
  static const std::map<int, std::pair<const char*, Verdict (*)()>> table = {
      {1, {"forward-pass parity with GPT-2 Small reference logits", forward_parity}},
      {2, {"residual conservation", residual_conservation}},
      {3, {"congruence score brute-force equivalence", congruence_oracle}},
      {4, {"head attribution and 2-sigma brute-force equivalence", attribution_oracle}},
      {5, {"truncation soundness and minimality on GPT-2 Small", truncation}},
      {6, {"explanation scorer", scorer}},
      {7, {"statistics reference fixtures", statistics}},
      {8, {"planted-circuit recovery", planted_circuit}},
      {9, {"GPT-2 Small explainable pair with echo-stub score 1.0", qualitative_gpt2}},
      {10, {"end-to-end runtime on GPT-2 Small", runtime_gpt2}},
  };
  return table;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"headscope acceptance checks"};
  std::vector<int> selected;
  app.add_option("--criterion", selected, "criterion numbers to run (default: all)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  if (selected.empty()) {
    for (const auto& [n, _] : criteria()) selected.push_back(n);
  }
  bool all_ok = true;
  for (int n : selected) {
    const auto& [name, fn] = criteria().at(n);
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = fail(std::string("error: ") + e.what());
    }
    std::printf("criterion %d: %s - %s: %s\n", n, v.pass ? "PASS" : "FAIL", name, v.detail.c_str());
    std::fflush(stdout);
    all_ok = all_ok && v.pass;
  }
  return all_ok ? 0 : 1;
}
