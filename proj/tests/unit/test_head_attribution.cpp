#include <gtest/gtest.h>

#include <random>

#include "headscope/head_attribution.hpp"
#include "test_support.hpp"

namespace headscope {
namespace {

using testing::random_ids;
using testing::tiny_gpt2;
using testing::toy_config;

std::vector<double> all_heads(int n_layers, int n_heads, double fill = 0.0) {
  return std::vector<double>(static_cast<std::size_t>(n_layers * n_heads), fill);
}

TEST(AttributeHeads, MatchesBruteForceDotProducts) {
  const auto& m = tiny_gpt2();
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto ids = random_ids(rng, 4 + rng() % 20, m.config.vocab_size);
    ForwardOptions opts;
    opts.capture_heads = true;
    const auto trace = forward(m, ids, opts);
    const NeuronHandle n{static_cast<int>(rng() % 3), static_cast<int>(rng() % 192)};
    const std::size_t pos = rng() % ids.size();
    const auto matrix = attribute_heads(trace, n, pos, m, "p");
    std::vector<double> oracle;
    for (int l = 0; l < 3; ++l) {
      for (int h = 0; h < 4; ++h) {
        double s = 0.0;
        if (l <= n.layer) {
          const auto v = trace.head({l, h}, pos);
          for (int c = 0; c < m.config.d_model; ++c) {
            s += static_cast<double>(v[static_cast<std::size_t>(c)]) *
                 m.layers[static_cast<std::size_t>(n.layer)].w_in(static_cast<std::size_t>(c), static_cast<std::size_t>(n.neuron));
          }
        }
        oracle.push_back(s);
        EXPECT_NEAR(matrix.score({l, h}), s, 1e-6);
        EXPECT_EQ(matrix.is_eligible({l, h}), l <= n.layer);
        if (l > n.layer) {
          EXPECT_EQ(matrix.score({l, h}), 0.0);
          EXPECT_FALSE(matrix.is_active({l, h}));
        }
      }
    }
    const std::size_t count = static_cast<std::size_t>((n.layer + 1) * 4);
    double mean = 0.0;
    for (std::size_t i = 0; i < count; ++i) mean += oracle[i];
    mean /= static_cast<double>(count);
    double var = 0.0;
    for (std::size_t i = 0; i < count; ++i) var += (oracle[i] - mean) * (oracle[i] - mean);
    const double sd = std::sqrt(var / static_cast<double>(count));
    EXPECT_NEAR(matrix.mean, mean, 1e-9);
    EXPECT_NEAR(matrix.stddev, sd, 1e-9);
    for (std::size_t i = 0; i < count; ++i) EXPECT_EQ(matrix.active[i] != 0, oracle[i] > mean + 2 * sd);
  }
}

TEST(AttributeHeads, OrthogonalConstructionIsolatesOneHead) {
  const auto model = random_model(toy_config(2, 3, 4, 8, 16), 8);
  const NeuronHandle n{1, 6};
  const auto e = model.neuron_input_weights(n);
  ForwardTrace trace;
  trace.token_ids = {1, 2};
  trace.n_layers = 2;
  trace.n_heads = 3;
  trace.head_contribution.assign(2, std::vector<Matrix>(3, Matrix(2, 12)));
  // Any vector orthogonal to e: the component of a basis vector off e.
  double ee = 0.0;
  for (float v : e) ee += static_cast<double>(v) * v;
  for (int l = 0; l < 2; ++l) {
    for (int h = 0; h < 3; ++h) {
      auto row = trace.head_contribution[static_cast<std::size_t>(l)][static_cast<std::size_t>(h)].row(1);
      if (l == 0 && h == 2) {
        std::copy(e.begin(), e.end(), row.begin());
      } else {
        const std::size_t axis = static_cast<std::size_t>(l * 3 + h) % 12;
        for (std::size_t c = 0; c < 12; ++c) row[c] = static_cast<float>((c == axis ? 1.0 : 0.0) - e[axis] * e[c] / ee);
      }
    }
  }
  const auto matrix = attribute_heads(trace, n, 1, model);
  EXPECT_NEAR(matrix.score({0, 2}), ee, 1e-5);
  for (int l = 0; l < 2; ++l) {
    for (int h = 0; h < 3; ++h) {
      if (l == 0 && h == 2) continue;
      EXPECT_NEAR(matrix.score({l, h}), 0.0, 1e-5);
    }
  }
  EXPECT_EQ(active_heads(matrix), std::vector<HeadId>({{0, 2}}));
}

TEST(AttributeHeads, ErrorsForBadPositionOrMissingHeads) {
  const auto& m = tiny_gpt2();
  const std::vector<TokenId> ids = {1, 2, 3};
  ForwardOptions opts;
  opts.capture_heads = true;
  const auto trace = forward(m, ids, opts);
  EXPECT_ERROR_CODE(attribute_heads(trace, {1, 0}, 3, m), ErrorCode::PositionOutOfRange);
  const auto bare = forward(m, ids);
  EXPECT_ERROR_CODE(attribute_heads(bare, {1, 0}, 0, m), ErrorCode::HeadsNotCaptured);
}

// Heads, attention biases, embeddings and earlier MLP outputs rebuild the
// residual that layer l's MLP reads (before its LN), projected onto e.
TEST(AttributeHeads, AdditiveDecompositionOfPreLnResidual) {
  const auto& m = tiny_gpt2();
  std::mt19937_64 rng(41);
  const auto ids = random_ids(rng, 15, m.config.vocab_size);
  ForwardOptions opts;
  opts.capture_heads = true;
  opts.capture_residuals = true;
  const auto trace = forward(m, ids, opts);
  for (int layer = 0; layer < 3; ++layer) {
    const NeuronHandle n{layer, 50};
    const auto e = m.neuron_input_weights(n);
    const std::size_t pos = 9;
    const auto matrix = attribute_heads(trace, n, pos, m);
    auto dot = [&](auto&& v) {
      double s = 0.0;
      for (std::size_t c = 0; c < e.size(); ++c) s += static_cast<double>(v[c]) * e[c];
      return s;
    };
    double total = 0.0;
    for (double s : matrix.scores) total += s;
    std::vector<double> rest(e.size());
    for (std::size_t c = 0; c < e.size(); ++c) {
      rest[c] = static_cast<double>(m.token_embedding(static_cast<std::size_t>(ids[pos]), c)) + m.position_embedding(pos, c);
      for (int l = 0; l <= layer; ++l) rest[c] += m.layers[static_cast<std::size_t>(l)].b_o[c];
      for (int l = 0; l < layer; ++l) rest[c] += trace.mlp_output[static_cast<std::size_t>(l)](pos, c);
    }
    const double expected = dot(trace.post_attention[static_cast<std::size_t>(layer)].row(pos));
    EXPECT_NEAR(total + dot(rest), expected, 1e-4 * (1 + std::abs(expected)));
  }
}

TEST(AttributeHeads, AblatingLaterHeadsChangesNothing) {
  const auto& m = tiny_gpt2();
  std::mt19937_64 rng(43);
  const auto ids = random_ids(rng, 10, m.config.vocab_size);
  ForwardOptions opts;
  opts.capture_heads = true;
  const auto base = attribute_heads(forward(m, ids, opts), {1, 20}, 7, m);
  opts.ablate_heads = {{2, 0}, {2, 3}};
  const auto ablated = attribute_heads(forward(m, ids, opts), {1, 20}, 7, m);
  EXPECT_EQ(base.scores, ablated.scores);
  EXPECT_EQ(base.active, ablated.active);
}

TEST(ActiveHeads, EqualScoresGiveNoActiveHead) {
  const auto m = make_attribution_matrix({3, 0}, "p", 0, 4, 5, all_heads(4, 5, 1.5));
  EXPECT_TRUE(active_heads(m).empty());
  EXPECT_EQ(m.stddev, 0.0);
}

TEST(ActiveHeads, SingleOutlierAmongHundred) {
  auto scores = all_heads(10, 10);
  scores[57] = 10.0;
  const auto m = make_attribution_matrix({9, 0}, "p", 0, 10, 10, scores);
  EXPECT_NEAR(m.mean, 0.1, 1e-12);
  EXPECT_NEAR(m.stddev, std::sqrt(0.99), 1e-12);
  EXPECT_EQ(active_heads(m), std::vector<HeadId>({{5, 7}}));
}

TEST(ActiveHeads, SingleEligibleHeadIsNeverActive) {
  auto scores = all_heads(3, 1);
  scores[0] = 100.0;
  scores[2] = 999.0;
  const auto m = make_attribution_matrix({0, 0}, "p", 0, 3, 1, scores);
  EXPECT_TRUE(active_heads(m).empty());
  EXPECT_EQ(m.score({2, 0}), 0.0);
}

TEST(ActiveHeads, SigmaMultiplierControlsTheCut) {
  std::vector<double> scores = {0, 0, 0, 1, 0, 0, 0, 2};
  const auto loose = make_attribution_matrix({1, 0}, "p", 0, 2, 4, scores, 0.5);
  const auto strict = make_attribution_matrix({1, 0}, "p", 0, 2, 4, scores, 2.0);
  EXPECT_EQ(active_heads(loose), std::vector<HeadId>({{0, 3}, {1, 3}}));
  EXPECT_EQ(active_heads(strict), std::vector<HeadId>({{1, 3}}));
}

AttributionMatrix matrix_with_active(const std::string& id, std::vector<int> active_heads_idx) {
  auto scores = all_heads(1, 8);
  for (int h : active_heads_idx) scores[static_cast<std::size_t>(h)] = 100.0;
  return make_attribution_matrix({0, 0}, id, 0, 1, 8, scores, 0.5);
}

TEST(ActivitySummary, FractionsOverPrompts) {
  std::vector<AttributionMatrix> ms;
  for (int i = 0; i < 20; ++i) {
    std::vector<int> heads;
    if (i < 10) heads.push_back(1);
    if (i < 5) heads.push_back(2);
    ms.push_back(matrix_with_active("p" + std::to_string(i), heads));
  }
  const auto summary = activity_summary(ms);
  ASSERT_EQ(summary.size(), 2u);
  EXPECT_EQ(summary[0].head, (HeadId{0, 1}));
  EXPECT_DOUBLE_EQ(summary[0].active_fraction, 0.5);
  EXPECT_EQ(summary[1].head, (HeadId{0, 2}));
  EXPECT_DOUBLE_EQ(summary[1].active_fraction, 0.25);
  for (const auto& s : summary) {
    std::size_t on = 0;
    for (const auto& [id, a] : s.per_prompt_active) on += a;
    EXPECT_DOUBLE_EQ(s.active_fraction, static_cast<double>(on) / 20.0);
    EXPECT_EQ(s.per_prompt_active.size(), 20u);
  }
  EXPECT_EQ(select_explainable(summary).size(), 2u);
  EXPECT_ERROR_CODE(activity_summary(std::vector<AttributionMatrix>{}), ErrorCode::EmptyInput);
}

TEST(SelectExplainable, InclusiveBand) {
  std::vector<HeadActivitySummary> summaries;
  for (double f : {0.1, 0.25, 0.5, 0.8}) {
    HeadActivitySummary s;
    s.active_fraction = f;
    summaries.push_back(s);
  }
  const auto kept = select_explainable(summaries);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].active_fraction, 0.25);
  EXPECT_EQ(kept[1].active_fraction, 0.5);
  EXPECT_TRUE(select_explainable(std::vector<HeadActivitySummary>{}).empty());
  for (auto& s : summaries) s.active_fraction = 1.0;
  EXPECT_TRUE(select_explainable(summaries).empty());
  EXPECT_ERROR_CODE(select_explainable(summaries, 0.8, 0.2), ErrorCode::InvalidArgument);
}

TEST(AttributeHeads, IdenticalTracesGiveIdenticalActiveSets) {
  const auto& m = tiny_gpt2();
  const std::vector<TokenId> ids = {10, 20, 30, 40, 50};
  ForwardOptions opts;
  opts.capture_heads = true;
  const auto a = attribute_heads(forward(m, ids, opts), {2, 3}, 4, m);
  const auto b = attribute_heads(forward(m, ids, opts), {2, 3}, 4, m);
  EXPECT_EQ(active_heads(a), active_heads(b));
  EXPECT_EQ(a.scores, b.scores);
}

}  // namespace
}  // namespace headscope
