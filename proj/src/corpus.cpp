#include "headscope/corpus.hpp"

#include <json.hpp>
#include <unordered_set>

#include "headscope/errors.hpp"
#include "headscope/file_io.hpp"
#include "headscope/hashing.hpp"

namespace headscope {

std::string_view to_string(Split split) noexcept { return split == Split::Mine ? "mine" : "test"; }

Split split_from_string(std::string_view name) {
  if (name == "mine") return Split::Mine;
  if (name == "test") return Split::Test;
  throw Error(ErrorCode::InvalidArgument, "unknown split '" + std::string(name) + "'");
}

Split split_of(std::string_view doc_id) {
  const std::string digest = sha256_hex(doc_id);
  const char last = digest.back();
  const int value = last <= '9' ? last - '0' : last - 'a' + 10;
  return value % 2 == 0 ? Split::Mine : Split::Test;
}

std::vector<CorpusDocument> parse_corpus(std::string_view jsonl, const std::string& origin) {
  std::vector<CorpusDocument> docs;
  std::unordered_set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < jsonl.size()) {
    auto end = jsonl.find('\n', start);
    if (end == std::string_view::npos) end = jsonl.size();
    const std::string_view line = jsonl.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    const std::string where = origin + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedCorpus, where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
      throw Error(ErrorCode::MalformedCorpus, where + ": expected an object with a string 'text'");
    }
    CorpusDocument doc;
    doc.text = j["text"].get<std::string>();
    if (doc.text.find_first_not_of(" \t\r\n\f\v") == std::string::npos) continue;

    if (j.contains("meta") && j["meta"].is_object() && j["meta"].contains("subset")) {
      if (!j["meta"]["subset"].is_string()) throw Error(ErrorCode::MalformedCorpus, where + ": meta.subset is not a string");
      doc.subset = j["meta"]["subset"].get<std::string>();
    } else if (j.contains("subset") && j["subset"].is_string()) {
      doc.subset = j["subset"].get<std::string>();
    } else {
      doc.subset = "unknown";
    }
    for (const char* key : {"doc_id", "id"}) {
      if (!j.contains(key)) continue;
      const auto& v = j[key];
      doc.doc_id = v.is_string() ? v.get<std::string>() : v.dump();
      break;
    }
    if (doc.doc_id.empty()) doc.doc_id = "line-" + std::to_string(line_no);
    if (!ids.insert(doc.doc_id).second) {
      throw Error(ErrorCode::MalformedCorpus, where + ": duplicate document id '" + doc.doc_id + "'");
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<CorpusDocument> load_corpus(const std::filesystem::path& path) {
  return parse_corpus(read_text_file(path), path.string());
}

std::string normalize_line_breaks(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\r') {
      if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
      out.push_back(' ');
    } else if (text[i] == '\n') {
      out.push_back(' ');
    } else {
      out.push_back(text[i]);
    }
  }
  return out;
}

}  // namespace headscope
