#include <gtest/gtest.h>

#include "headscope/ablation_lab.hpp"
#include "headscope/transformer.hpp"
#include "test_support.hpp"

namespace headscope {
namespace {

using testing::data_path;
using testing::toy_config;

PromptRecord prompt_of(std::vector<TokenId> ids, std::string id = "doc") {
  PromptRecord r;
  r.doc_id = std::move(id);
  r.token_ids = std::move(ids);
  r.peak_position = r.token_ids.size() - 1;
  return r;
}

AblationRecord record(bool active, double delta) {
  AblationRecord r;
  r.head_was_active = active;
  r.delta = delta;
  return r;
}

TEST(AblateAndMeasure, SilentHeadChangesNothing) {
  auto model = random_model(toy_config(2, 3, 4, 16, 20), 21);
  auto& w_o = model.layers[0].w_o;
  for (std::size_t r = 4; r < 8; ++r) {
    for (float& v : w_o.row(r)) v = 0.0f;
  }
  const auto rec = ablate_and_measure(model, {1, 3}, 7, {0, 1}, prompt_of({1, 5, 9, 2, 11}), false);
  EXPECT_EQ(rec.delta, 0.0);
  EXPECT_EQ(rec.prob_original, rec.prob_ablated);
  EXPECT_EQ(rec.neuron_act_original, rec.neuron_act_ablated);
}

TEST(AblateAndMeasure, HeadAboveNeuronLeavesActivation) {
  const auto model = random_model(toy_config(3, 2, 4, 16, 20), 22);
  const auto rec = ablate_and_measure(model, {1, 0}, 3, {2, 1}, prompt_of({4, 8, 15, 16, 3}), true);
  EXPECT_EQ(rec.neuron_act_original, rec.neuron_act_ablated);
  EXPECT_NE(rec.prob_original, rec.prob_ablated);
}

TEST(AblateAndMeasure, RecordInvariantsAndDeterminism) {
  const auto& m = testing::tiny_gpt2();
  const auto p = prompt_of({10, 30, 50, 70, 90, 110});
  for (int h = 0; h < 4; ++h) {
    const auto a = ablate_and_measure(m, {2, 5}, 42, {1, h}, p, h % 2 == 0);
    const auto b = ablate_and_measure(m, {2, 5}, 42, {1, h}, p, h % 2 == 0);
    EXPECT_EQ(a.delta, a.prob_original - a.prob_ablated);
    EXPECT_GE(a.prob_original, 0.0);
    EXPECT_LE(a.prob_original, 1.0);
    EXPECT_GE(a.prob_ablated, 0.0);
    EXPECT_LE(a.prob_ablated, 1.0);
    EXPECT_EQ(a.delta, b.delta);
    EXPECT_EQ(a.neuron_act_ablated, b.neuron_act_ablated);
    EXPECT_EQ(a.prompt_id, "doc");
  }
}

TEST(AblateAndMeasure, UsesTruncatedPromptWhenPresent) {
  const auto& m = testing::tiny_gpt2();
  auto p = prompt_of({10, 30, 50, 70, 90, 110});
  p.truncated = true;
  p.truncated_ids = {90, 110};
  p.truncated_peak_position = 1;
  const auto rec = ablate_and_measure(m, {2, 5}, 42, {0, 0}, p, false);
  const auto trace = forward(m, p.truncated_ids);
  EXPECT_EQ(rec.prob_original, next_token_probability(trace, 42));
}

TEST(AblateAndMeasure, PlantedHeadDrivesTheTargetToken) {
  const auto pc = make_planted_circuit();
  const Tokenizer tok(pc.tables);
  const auto trigger = prompt_of(tok.encode(" the dog can come and"), "trigger");
  const auto control = prompt_of(tok.encode(" the dog sat on the mat"), "control");
  const auto on = ablate_and_measure(pc.model, pc.neuron, pc.target, pc.head, trigger, true);
  const auto off = ablate_and_measure(pc.model, pc.neuron, pc.target, pc.head, control, false);
  EXPECT_LT(on.prob_ablated, on.prob_original);
  EXPECT_GT(on.neuron_act_original, on.neuron_act_ablated);
  EXPECT_LT(std::abs(off.delta), 1e-6);
}

TEST(AblateAndMeasure, MeanModeReplacesTheHead) {
  const auto& m = testing::tiny_gpt2();
  const std::vector<std::vector<TokenId>> prompts = {{1, 2, 3}, {4, 5, 6, 7}};
  const auto mean_out = mean_head_output(m, {0, 2}, prompts);
  ASSERT_EQ(mean_out.size(), 48u);
  AblationOptions opts;
  opts.mode = AblationMode::Mean;
  opts.mean_output = mean_out;
  const auto p = prompt_of({1, 2, 3});
  const auto rec = ablate_and_measure(m, {1, 0}, 9, {0, 2}, p, true, opts);
  ForwardOptions f;
  f.ablate_heads = {{0, 2}};
  f.head_replacements[{0, 2}] = mean_out;
  EXPECT_EQ(rec.prob_ablated, next_token_probability(forward(m, p.token_ids, f), 9));
  opts.mean_output.pop_back();
  EXPECT_ERROR_CODE(ablate_and_measure(m, {1, 0}, 9, {0, 2}, p, true, opts), ErrorCode::InvalidArgument);
}

TEST(AblationReport, IdenticalGroupsAreIndistinguishable) {
  std::vector<AblationRecord> records;
  for (double d : {0.1, 0.2, 0.3, 0.4}) {
    records.push_back(record(true, d));
    records.push_back(record(false, d));
  }
  const auto r = ablation_report(records);
  EXPECT_EQ(r.ks_statistic, 0.0);
  EXPECT_NEAR(r.ks_p_value, 1.0, 1e-12);
  EXPECT_EQ(r.n_active, 4u);
  EXPECT_EQ(r.n_inactive, 4u);
}

TEST(AblationReport, DisjointSupports) {
  std::vector<AblationRecord> records;
  for (int i = 0; i < 4; ++i) {
    records.push_back(record(true, 1.0));
    records.push_back(record(false, 0.0));
  }
  const auto r = ablation_report(records);
  EXPECT_EQ(r.ks_statistic, 1.0);
  EXPECT_EQ(r.mean_delta_active, 1.0);
  EXPECT_EQ(r.mean_delta_inactive, 0.0);
}

TEST(AblationReport, MatchesReferenceFixture) {
  const auto fx = testing::read_json(data_path("stats_fixtures.json")).at("ks_30_30");
  std::vector<AblationRecord> records;
  for (double d : fx.at("a").get<std::vector<double>>()) records.push_back(record(true, d));
  for (double d : fx.at("b").get<std::vector<double>>()) records.push_back(record(false, d));
  const auto r = ablation_report(records);
  EXPECT_NEAR(r.ks_statistic, fx.at("d").get<double>(), 1e-6);
  EXPECT_NEAR(r.ks_p_value, fx.at("p").get<double>(), 0.05 * fx.at("p").get<double>());
}

TEST(AblationReport, EmptyGroupIsDegenerate) {
  std::vector<AblationRecord> records = {record(true, 0.1), record(true, 0.2)};
  EXPECT_ERROR_CODE(ablation_report(records), ErrorCode::DegenerateGroup);
}

}  // namespace
}  // namespace headscope
