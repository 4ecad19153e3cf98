#pragma once

#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "headscope/errors.hpp"
#include "headscope/file_io.hpp"
#include "headscope/model_io.hpp"
#include "headscope/synthetic.hpp"
#include "headscope/tokenizer.hpp"

#define EXPECT_ERROR_CODE(stmt, expected)                                                   \
  do {                                                                                      \
    try {                                                                                   \
      stmt;                                                                                 \
      ADD_FAILURE() << "expected " << ::headscope::to_string(expected) << ", nothing thrown"; \
    } catch (const ::headscope::Error& e_) {                                                \
      EXPECT_EQ(e_.code(), expected) << e_.what();                                          \
    }                                                                                       \
  } while (0)

namespace headscope::testing {

inline std::filesystem::path data_path(const std::string& rel) { return std::filesystem::path(HEADSCOPE_TEST_DATA) / rel; }

inline nlohmann::json read_json(const std::filesystem::path& path) { return nlohmann::json::parse(read_text_file(path)); }

inline const Tokenizer& gpt2_tokenizer() {
  static const Tokenizer tok(load_tokenizer_tables(std::filesystem::path(HEADSCOPE_GPT2_TOKENIZER) / "encoder.json",
                                                   std::filesystem::path(HEADSCOPE_GPT2_TOKENIZER) / "vocab.bpe"));
  return tok;
}

inline const ModelBundle& tiny_gpt2() {
  static const ModelBundle model =
      load_model(data_path("tiny_gpt2/model.safetensors"), data_path("tiny_gpt2/model.conf"));
  return model;
}

/// Deletes itself on destruction.
class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("headscope-test-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline ModelConfig toy_config(int n_layers, int n_heads, int d_head, int d_mlp, int vocab, int max_positions = 64) {
  ModelConfig c;
  c.n_layers = n_layers;
  c.n_heads = n_heads;
  c.d_model = n_heads * d_head;
  c.d_head = d_head;
  c.d_mlp = d_mlp;
  c.vocab_size = vocab;
  c.max_positions = max_positions;
  return c;
}

inline std::vector<TokenId> random_ids(std::mt19937_64& rng, std::size_t n, int vocab) {
  std::uniform_int_distribution<TokenId> pick(0, vocab - 1);
  std::vector<TokenId> ids(n);
  for (auto& t : ids) t = pick(rng);
  return ids;
}

}  // namespace headscope::testing
