#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "headscope/chat_backend.hpp"
#include "headscope/manifest.hpp"
#include "headscope/model_io.hpp"
#include "headscope/run_config.hpp"
#include "headscope/synthetic.hpp"
#include "headscope/tokenizer.hpp"

namespace headscope {

inline constexpr std::string_view kToolVersion = "headscope 0.1.0";

struct PipelineOptions {
  /// Earlier run whose scores the report compares against.
  std::optional<std::filesystem::path> baseline_run;
  /// Used for every explain and score request instead of the configured
  /// backend. Must outlive the pipeline.
  ChatBackend* backend_override = nullptr;
};

struct StageOutcome {
  Stage stage;
  /// False when the stage was already complete with unchanged inputs.
  bool ran = false;
};

/// Holds the run directory lock for its lifetime. Stages exchange data only
/// through files in the run directory.
class Pipeline {
 public:
  /// Creates the run directory if needed; RunLocked if another process holds it.
  Pipeline(RunConfig config, std::filesystem::path run_dir, PipelineOptions options = {});
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  /// UpstreamIncomplete when an earlier stage has not completed; HashMismatch
  /// when an earlier stage's inputs or outputs changed since it ran, or when
  /// this stage's inputs changed while later stages are still complete.
  StageOutcome run_stage(Stage stage);
  std::vector<StageOutcome> run_all();
  /// Marks the stage and every later stage incomplete and deletes their outputs.
  void invalidate(Stage stage);

  const RunManifest& manifest() const { return manifest_; }
  const std::filesystem::path& run_dir() const { return run_dir_; }

 private:
  class Lock;
  struct Context;

  std::string inputs_hash(Stage stage);
  std::string file_hash(const std::filesystem::path& path);
  void check_upstream(Stage stage);

  void scout(Context& ctx);
  void mine(Context& ctx);
  void attribute(Context& ctx);
  void explain(Context& ctx);
  void score(Context& ctx);
  void ablate(Context& ctx);
  void report(Context& ctx);

  const ModelBundle& model();
  const Tokenizer& tokenizer();

  RunConfig config_;
  std::filesystem::path run_dir_;
  PipelineOptions options_;
  std::unique_ptr<Lock> lock_;
  RunManifest manifest_;
  std::map<std::string, std::string> file_hashes_;
  std::optional<ModelBundle> model_;
  std::optional<Tokenizer> tokenizer_;
  std::string model_stamp_;
  std::string tokenizer_stamp_;
};

/// Uniformly samples per_layer neurons from each layer, skipping `excluded`;
/// each layer's sample is sorted. InsufficientNeurons if a layer has too few.
std::vector<NeuronHandle> random_baseline(int d_mlp, std::span<const int> layers, std::size_t per_layer,
                                          std::span<const NeuronHandle> excluded, std::uint64_t seed);

/// Writes the planted-circuit model, tokenizer, corpus and a run.conf into
/// `dir` and returns the config path.
std::filesystem::path write_toy_run(const std::filesystem::path& dir, const PlantedOptions& options = {});

}  // namespace headscope
