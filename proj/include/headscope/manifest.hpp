#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace headscope {

enum class Stage { Scout, Mine, Attribute, Explain, Score, Ablate, Report };

inline constexpr std::array<Stage, 7> kAllStages = {Stage::Scout,   Stage::Mine,   Stage::Attribute, Stage::Explain,
                                                    Stage::Score,   Stage::Ablate, Stage::Report};

std::string_view to_string(Stage stage) noexcept;
/// InvalidArgument for unknown names.
Stage stage_from_string(std::string_view name);

struct StageRecord {
  bool complete = false;
  /// SHA-256 over the stage's config keys, external input files and
  /// upstream output hashes.
  std::string inputs_hash;
  /// Run-directory-relative path -> SHA-256 of the file.
  std::map<std::string, std::string> outputs;
};

struct RunManifest {
  std::string tool_version;
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, StageRecord> stages;

  StageRecord& stage(Stage s) { return stages[std::string(to_string(s))]; }
  const StageRecord* find(Stage s) const;
  bool complete(Stage s) const;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);

  /// A missing file yields an empty manifest.
  static RunManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

/// Output paths whose current contents differ from the recorded hashes.
std::vector<std::string> changed_outputs(const StageRecord& record, const std::filesystem::path& run_dir);

}  // namespace headscope
