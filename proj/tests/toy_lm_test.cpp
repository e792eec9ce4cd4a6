#include <gtest/gtest.h>

#include <vector>

#include "matsteer/dataset.hpp"
#include "matsteer/toy_lm.hpp"

using namespace matsteer;

namespace {

ToyLMConfig small_config() {
  ToyLMConfig cfg;
  cfg.vocab_size = 32;
  cfg.d_model = 32;
  cfg.n_layers = 3;
  cfg.n_heads = 4;
  cfg.max_seq_len = 16;
  cfg.seed = 42;
  return cfg;
}

LabeledSequence seq(std::vector<TokenId> tokens, int attribute, Polarity pol, std::uint64_t id) {
  return {std::move(tokens), attribute, pol, id};
}

}  // namespace

TEST(ToyLM, EmptySequenceGivesEmptyLogits) {
  const ToyLM model(small_config());
  const auto logits = model.forward(std::vector<TokenId>{});
  EXPECT_EQ(logits.rows(), 0);
}

TEST(ToyLM, LogitShape) {
  const ToyLM model(small_config());
  const auto logits = model.forward(std::vector<TokenId>{1, 2, 3, 4, 5});
  EXPECT_EQ(logits.rows(), 5);
  EXPECT_EQ(logits.cols(), 32);
  EXPECT_TRUE(logits.allFinite());
}

TEST(ToyLM, ForwardIsDeterministic) {
  const std::vector<TokenId> tokens{3, 1, 4, 1, 5, 9, 2, 6};
  const ToyLM a(small_config());
  const ToyLM b(small_config());
  EXPECT_EQ(a.forward(tokens), a.forward(tokens));
  EXPECT_EQ(a.forward(tokens), b.forward(tokens));
  EXPECT_EQ(a.checksum(), b.checksum());
}

TEST(ToyLM, SeedChangesParameters) {
  auto cfg = small_config();
  const ToyLM a(cfg);
  cfg.seed += 1;
  const ToyLM b(cfg);
  EXPECT_NE(a.checksum(), b.checksum());
}

TEST(ToyLM, RejectsBadInput) {
  const ToyLM model(small_config());
  EXPECT_THROW(model.forward(std::vector<TokenId>{0, 32}), InputError);
  EXPECT_THROW(model.forward(std::vector<TokenId>{-1}), InputError);
  EXPECT_THROW(model.forward(std::vector<TokenId>(17, 0)), InputError);
  EXPECT_NO_THROW(model.forward(std::vector<TokenId>(16, 0)));
}

TEST(ToyLM, ConfigValidation) {
  auto cfg = small_config();
  cfg.n_heads = 5;
  EXPECT_THROW(ToyLM{cfg}, ConfigError);
  cfg = small_config();
  cfg.vocab_size = 0;
  EXPECT_THROW(ToyLM{cfg}, ConfigError);
}

TEST(ExtractActivations, ShapeContract) {
  const ToyLM model(small_config());
  const auto acts = model.extract_activations(1, std::vector<TokenId>{1, 2, 3, 4, 5, 6, 7});
  ASSERT_EQ(acts.size(), 7u);
  for (const auto& a : acts) EXPECT_EQ(a.size(), 32);
}

TEST(ExtractActivations, ObservationIsSideEffectFree) {
  const ToyLM model(small_config());
  const std::vector<TokenId> tokens{7, 7, 1, 0, 31, 12};
  const auto before = model.forward(tokens);
  (void)model.extract_activations(2, tokens);
  EXPECT_EQ(model.forward(tokens), before);

  // A read-only hook leaves the logits bit-identical.
  int calls = 0;
  const auto hooked = model.forward(tokens, [&](int, Matrix&) { ++calls; });
  EXPECT_EQ(calls, model.n_layers());
  EXPECT_EQ(hooked, before);
}

TEST(ExtractActivations, MatchesWhatTheForwardPassSees) {
  const ToyLM model(small_config());
  const std::vector<TokenId> tokens{2, 4, 6, 8};
  for (int layer = 0; layer < model.n_layers(); ++layer) {
    std::vector<Vector> seen;
    model.forward(tokens, [&](int l, Matrix& m) {
      if (l == layer)
        for (Eigen::Index r = 0; r < m.rows(); ++r) seen.emplace_back(m.row(r).transpose());
    });
    const auto extracted = model.extract_activations(layer, tokens);
    ASSERT_EQ(extracted.size(), seen.size());
    for (std::size_t i = 0; i < seen.size(); ++i) EXPECT_EQ(extracted[i], seen[i]);
  }
}

TEST(ExtractActivations, LayersDiffer) {
  const ToyLM model(small_config());
  const std::vector<TokenId> tokens{5, 6, 7};
  const auto a = model.extract_activations(0, tokens);
  const auto b = model.extract_activations(1, tokens);
  bool all_equal = true;
  for (std::size_t i = 0; i < a.size(); ++i) all_equal = all_equal && a[i] == b[i];
  EXPECT_FALSE(all_equal);
}

TEST(ExtractActivations, HookEditsReachTheLogits) {
  const ToyLM model(small_config());
  const std::vector<TokenId> tokens{1, 2, 3};
  const auto clean = model.forward(tokens);
  const auto edited = model.forward(tokens, [](int l, Matrix& m) {
    if (l == 1) m.array() += 1.0;
  });
  EXPECT_NE(clean, edited);
}

TEST(ExtractActivations, LayerOutOfRange) {
  const ToyLM model(small_config());
  EXPECT_THROW(model.extract_activations(3, std::vector<TokenId>{1}), InputError);
  EXPECT_THROW(model.extract_activations(-1, std::vector<TokenId>{1}), InputError);
}

TEST(BuildDataset, CountsSingleAttribute) {
  const ToyLM model(small_config());
  const std::vector<LabeledSequence> seqs{seq({1, 2, 3, 4}, 0, Polarity::kPositive, 0),
                                          seq({5, 6, 7}, 0, Polarity::kNegative, 1)};
  const auto ds = build_dataset(model, 1, seqs);
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds[0].positives.size(), 4u);
  EXPECT_EQ(ds[0].negatives.size(), 3u);
  for (const auto& r : ds[0].positives) {
    EXPECT_EQ(r.polarity, Polarity::kPositive);
    EXPECT_LT(r.token_index, 4u);
    EXPECT_EQ(r.sequence_id, 0u);
    EXPECT_TRUE(r.vector.allFinite());
  }
  for (const auto& r : ds[0].negatives) EXPECT_LT(r.token_index, 3u);
}

TEST(BuildDataset, CountsThreeAttributes) {
  const ToyLM model(small_config());
  std::vector<LabeledSequence> seqs;
  std::uint64_t id = 0;
  for (int t = 0; t < 3; ++t)
    for (Polarity pol : {Polarity::kPositive, Polarity::kNegative})
      for (int s = 0; s < 2; ++s) seqs.push_back(seq({1, 2, 3, 4, static_cast<TokenId>(t)}, t, pol, id++));
  const auto ds = build_dataset(model, 0, seqs);
  ASSERT_EQ(ds.size(), 3u);
  std::size_t total_tokens = 0;
  for (const auto& s : seqs) total_tokens += s.tokens.size();
  EXPECT_EQ(record_count(ds), total_tokens);
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_EQ(ds[t].attribute_id, static_cast<int>(t));
    EXPECT_EQ(ds[t].positives.size(), 10u);
    EXPECT_EQ(ds[t].negatives.size(), 10u);
    for (const auto& r : ds[t].negatives) EXPECT_EQ(r.attribute_id, static_cast<int>(t));
  }
}

TEST(BuildDataset, RecordsMatchExtraction) {
  const ToyLM model(small_config());
  const std::vector<LabeledSequence> seqs{seq({9, 8, 7}, 0, Polarity::kPositive, 11),
                                          seq({1, 2}, 0, Polarity::kNegative, 12)};
  const auto ds = build_dataset(model, 2, seqs);
  const auto acts = model.extract_activations(2, seqs[0].tokens);
  for (std::size_t i = 0; i < acts.size(); ++i) {
    EXPECT_EQ(ds[0].positives[i].token_index, i);
    EXPECT_TRUE(ds[0].positives[i].vector.isApprox(acts[i], 1e-6));
  }
}

TEST(BuildDataset, EmptyPolarityBucketIsAnError) {
  const ToyLM model(small_config());
  const std::vector<LabeledSequence> seqs{seq({1, 2, 3}, 0, Polarity::kPositive, 0)};
  EXPECT_THROW(build_dataset(model, 0, seqs), DatasetError);
  const std::vector<LabeledSequence> gap{seq({1}, 0, Polarity::kPositive, 0), seq({1}, 0, Polarity::kNegative, 1),
                                         seq({1}, 2, Polarity::kPositive, 2), seq({1}, 2, Polarity::kNegative, 3)};
  EXPECT_THROW(build_dataset(model, 0, gap), DatasetError);
}

TEST(BuildDataset, Deterministic) {
  const std::vector<LabeledSequence> seqs{seq({1, 2, 3}, 0, Polarity::kPositive, 0),
                                          seq({4, 5}, 0, Polarity::kNegative, 1)};
  const auto a = build_dataset(ToyLM(small_config()), 1, seqs);
  const auto b = build_dataset(ToyLM(small_config()), 1, seqs);
  EXPECT_EQ(flatten(a), flatten(b));
}
