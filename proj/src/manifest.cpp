#include "headscope/manifest.hpp"

#include "headscope/errors.hpp"
#include "headscope/file_io.hpp"
#include "headscope/hashing.hpp"
#include "headscope/serialization.hpp"

namespace headscope {

std::string_view to_string(Stage stage) noexcept {
  switch (stage) {
    case Stage::Scout: return "scout";
    case Stage::Mine: return "mine";
    case Stage::Attribute: return "attribute";
    case Stage::Explain: return "explain";
    case Stage::Score: return "score";
    case Stage::Ablate: return "ablate";
    case Stage::Report: return "report";
  }
  return "?";
}

Stage stage_from_string(std::string_view name) {
  for (Stage s : kAllStages) {
    if (to_string(s) == name) return s;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown stage '" + std::string(name) + "'");
}

const StageRecord* RunManifest::find(Stage s) const {
  auto it = stages.find(std::string(to_string(s)));
  return it == stages.end() ? nullptr : &it->second;
}

bool RunManifest::complete(Stage s) const {
  const auto* r = find(s);
  return r && r->complete;
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json st = nlohmann::json::object();
  for (const auto& [name, r] : stages) {
    st[name] = {{"complete", r.complete}, {"inputs_hash", r.inputs_hash}, {"outputs", r.outputs}};
  }
  return {{"tool_version", tool_version}, {"config", config}, {"stages", st}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  try {
    m.tool_version = j.at("tool_version").get<std::string>();
    m.config = j.at("config");
    for (const auto& [name, r] : j.at("stages").items()) {
      stage_from_string(name);
      StageRecord rec;
      rec.complete = r.at("complete").get<bool>();
      rec.inputs_hash = r.at("inputs_hash").get<std::string>();
      rec.outputs = r.at("outputs").get<std::map<std::string, std::string>>();
      m.stages[name] = std::move(rec);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::HashMismatch, std::string("malformed manifest: ") + e.what());
  }
  return m;
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return {};
  return from_json(parse_json(read_text_file(path), path.string(), ErrorCode::HashMismatch));
}

void RunManifest::save(const std::filesystem::path& path) const { write_file_atomic(path, to_json().dump(2) + "\n"); }

std::vector<std::string> changed_outputs(const StageRecord& record, const std::filesystem::path& run_dir) {
  std::vector<std::string> out;
  for (const auto& [rel, hash] : record.outputs) {
    const auto p = run_dir / rel;
    if (!std::filesystem::exists(p) || sha256_file(p) != hash) out.push_back(rel);
  }
  return out;
}

}  // namespace headscope
