#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace headscope {

struct CorpusDocument {
  std::string doc_id;
  std::string text;
  std::string subset;
};

enum class Split { Mine, Test };

std::string_view to_string(Split split) noexcept;
Split split_from_string(std::string_view name);

/// Stable split assignment: parity of the last hex digit of SHA-256(doc_id).
Split split_of(std::string_view doc_id);

/// Parses Pile-style JSONL: one object per line with `text` and
/// `meta.subset` (or a top-level `subset`). The id comes from `doc_id` or
/// `id` when present, else "line-<n>" (1-based). Blank lines and documents
/// whose text is only whitespace are skipped.
std::vector<CorpusDocument> parse_corpus(std::string_view jsonl, const std::string& origin = "<string>");
std::vector<CorpusDocument> load_corpus(const std::filesystem::path& path);

/// Replaces each line break (\r\n, \n or \r) with a single space.
std::string normalize_line_breaks(std::string_view text);

}  // namespace headscope
