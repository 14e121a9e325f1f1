#include <catch2/catch_amalgamated.hpp>

#include "ctxmatch/checkpoint.hpp"
#include "ctxmatch/selector.hpp"
#include "support/oracles.hpp"

using namespace ctxmatch;
using Catch::Matchers::WithinAbs;

namespace {

struct ScorerFixture {
  ParamStore store;
  Vocabulary vocab;
  std::unique_ptr<EncoderModel> encoder;

  ScorerFixture() {
    vocab = build_vocabulary({"bank loan rate interest money apple pear fruit news"},
                             TokenizeMode::Word);
    EncoderConfig cfg;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.model_dim = 8;
    cfg.ffn_dim = 8;
    cfg.max_seq_len = 16;
    Rng rng(404);
    encoder = std::make_unique<EncoderModel>(cfg, vocab.size(), store, "enc.", rng);
  }
};

Context make_context(const std::string& id, const std::string& text, double score) {
  Context c;
  c.sentence_id = id;
  c.text = text;
  c.retrieval_score = score;
  c.source = "test";
  return c;
}

EncoderConfig selector_encoder_config() {
  EncoderConfig cfg;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.model_dim = 16;
  cfg.ffn_dim = 16;
  cfg.max_seq_len = 24;
  return cfg;
}

// Linearly separable triples: label is 1 exactly when the context carries
// the indicator token.
std::vector<SelectorExample> separable_triples(std::size_t n, Rng& rng) {
  std::vector<SelectorExample> out;
  const std::vector<std::string> fillers = {"alpha", "beta", "gamma", "delta", "omega"};
  for (std::size_t i = 0; i < n; ++i) {
    SelectorExample ex;
    ex.text_a = fillers[uniform_below(rng, fillers.size())] + " " +
                fillers[uniform_below(rng, fillers.size())];
    ex.text_b = fillers[uniform_below(rng, fillers.size())] + " " +
                fillers[uniform_below(rng, fillers.size())];
    ex.use = static_cast<int>(uniform_below(rng, 2));
    ex.context = ex.use ? "keepme " : "";
    ex.context += fillers[uniform_below(rng, fillers.size())];
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace

TEST_CASE("baseline similarity of identical texts is 1") {
  ScorerFixture fx;
  BaselineScorer scorer(*fx.encoder, fx.vocab);
  CHECK_THAT(scorer.similarity("bank loan rate", "bank loan rate"),
             WithinAbs(1.0, 1e-9));
}

TEST_CASE("baseline similarity is deterministic and in [0,1]") {
  ScorerFixture fx;
  BaselineScorer scorer(*fx.encoder, fx.vocab);
  double a = scorer.similarity("bank loan", "apple pear fruit");
  double b = scorer.similarity("bank loan", "apple pear fruit");
  CHECK(a == b);
  CHECK(a >= 0.0);
  CHECK(a <= 1.0);
}

TEST_CASE("baseline similarity matches a recomputation from saved embeddings") {
  ScorerFixture fx;
  BaselineScorer scorer(*fx.encoder, fx.vocab);
  const std::string sent = "money interest rate";
  const std::string ctx = "bank loan news";
  // recompute outside the scorer from the pooled embeddings
  Tensor hs = fx.encoder->encode_text(fx.vocab, sent);
  Tensor hc = fx.encoder->encode_text(fx.vocab, ctx);
  double dot = 0, ns = 0, nc = 0;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    dot += hs[i] * hc[i];
    ns += hs[i] * hs[i];
    nc += hc[i] * hc[i];
  }
  double want = (dot / (std::sqrt(ns) * std::sqrt(nc)) + 1.0) / 2.0;
  CHECK_THAT(scorer.similarity(sent, ctx), WithinAbs(want, 1e-12));
}

TEST_CASE("baseline similarity rejects empty inputs") {
  ScorerFixture fx;
  BaselineScorer scorer(*fx.encoder, fx.vocab);
  CHECK_THROWS_WITH(scorer.similarity("", "bank"),
                    Catch::Matchers::ContainsSubstring("empty"));
  CHECK_THROWS_AS(scorer.similarity("bank", "   "), Error);
}

// A stub scorer exercising the threshold rules with controlled d values:
// similarity is encoded directly in the context text.
namespace {
struct StubStore {
  PairDataset dataset;
  ContextStore contexts;
};

StubStore threshold_fixture() {
  StubStore s;
  s.dataset.name = "fixture";
  SentencePair pos{0, "pos sentence a", "pos sentence b", 1};
  SentencePair neg{1, "neg sentence a", "neg sentence b", 0};
  s.dataset.pairs = {pos, neg};
  return s;
}
}  // namespace

TEST_CASE("pseudo-label thresholds follow the positive/negative rules") {
  // use the real scorer but assert the rule itself on its outputs
  ScorerFixture fx;
  BaselineScorer scorer(*fx.encoder, fx.vocab);
  PairDataset ds;
  ds.name = "t";
  ds.pairs = {{0, "bank loan rate", "bank loan rate", 1},
              {1, "bank loan rate", "apple pear fruit", 0}};
  ContextStore store;
  store["0a"] = {make_context("0a", "bank loan rate", 2.0),
                 make_context("0a", "apple pear fruit", 1.0)};
  store["0b"] = {make_context("0b", "money interest news", 1.0)};
  store["1a"] = {make_context("1a", "apple pear fruit", 1.0)};
  store["1b"] = {make_context("1b", "bank loan rate", 1.0)};
  SelectorConfig cfg;  // d_a = 0.7, d_b = 0.3
  auto labels = make_pseudo_labels(ds, store, scorer, cfg);
  REQUIRE(labels.size() == 5);
  for (const auto& rec : labels) {
    const auto& pair = ds.pairs[rec.pair_id];
    const std::string& opposite = rec.side == 'a' ? pair.text_b : pair.text_a;
    const double d = scorer.similarity(opposite, rec.context_text);
    CHECK(rec.d == d);
    const int want = *pair.label == 1 ? (d > cfg.d_a ? 1 : 0) : (d <= cfg.d_b ? 1 : 0);
    CHECK(rec.use == want);
  }
  // identical texts score 1.0 > 0.7 for the positive pair: kept
  CHECK(labels[0].context_text == "bank loan rate");
  CHECK(labels[0].use == 1);
}

TEST_CASE("pseudo-label boundary cases use strict and inclusive comparisons") {
  // d == d_a must yield use=0 for positives (strict >); d == d_b must
  // yield use=1 for negatives (inclusive <=). Exercise via thresholds set
  // exactly at the achievable d = 1.0 value for identical texts.
  ScorerFixture fx;
  BaselineScorer scorer(*fx.encoder, fx.vocab);
  PairDataset ds;
  ds.pairs = {{0, "bank loan", "bank loan", 1}};
  ContextStore store;
  store["0a"] = {make_context("0a", "bank loan", 1.0)};  // d = 1.0 exactly
  SelectorConfig cfg;
  cfg.d_a = 1.0;
  cfg.d_b = 0.3;
  auto labels = make_pseudo_labels(ds, store, scorer, cfg);
  REQUIRE(labels.size() == 1);
  CHECK_THAT(labels[0].d, WithinAbs(1.0, 1e-9));
  CHECK(labels[0].use == 0);  // strict inequality: d > d_a fails at d == d_a

  ds.pairs = {{0, "bank loan", "bank loan", 0}};
  SelectorConfig neg_cfg;
  neg_cfg.d_a = 1.0;
  neg_cfg.d_b = 1.0;
  auto neg_labels = make_pseudo_labels(ds, store, scorer, neg_cfg);
  REQUIRE(neg_labels.size() == 1);
  CHECK(neg_labels[0].use == 1);  // inclusive: d <= d_b holds at d == d_b
}

TEST_CASE("make_pseudo_labels rejects unlabeled pairs") {
  ScorerFixture fx;
  BaselineScorer scorer(*fx.encoder, fx.vocab);
  PairDataset ds;
  ds.pairs = {{0, "bank", "loan", std::nullopt}};
  CHECK_THROWS_WITH(make_pseudo_labels(ds, {}, scorer, {}),
                    Catch::Matchers::ContainsSubstring("no label"));
}

TEST_CASE("make_pseudo_labels is pure and covers every combination once") {
  ScorerFixture fx;
  BaselineScorer scorer(*fx.encoder, fx.vocab);
  Rng rng(808);
  PairDataset ds;
  ContextStore store;
  const std::vector<std::string> words = {"bank", "loan", "rate", "apple", "pear",
                                          "money", "news", "fruit"};
  auto sentence = [&](std::size_t len) {
    std::string s;
    for (std::size_t i = 0; i < len; ++i) {
      if (i) s += ' ';
      s += words[uniform_below(rng, words.size())];
    }
    return s;
  };
  std::size_t expected = 0;
  for (std::size_t i = 0; i < 12; ++i) {
    ds.pairs.push_back({i, sentence(3), sentence(3),
                        static_cast<int>(uniform_below(rng, 2))});
    for (char side : {'a', 'b'}) {
      std::size_t n_ctx = uniform_below(rng, 4);
      expected += n_ctx;
      for (std::size_t c = 0; c < n_ctx; ++c) {
        std::string key = std::to_string(i) + side;
        store[key].push_back(make_context(key, sentence(4), 1.0 + c));
      }
    }
  }
  auto first = make_pseudo_labels(ds, store, scorer, {});
  auto second = make_pseudo_labels(ds, store, scorer, {});
  REQUIRE(first.size() == expected);
  REQUIRE(second.size() == first.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    CHECK(first[i].pair_id == second[i].pair_id);
    CHECK(first[i].side == second[i].side);
    CHECK(first[i].context_text == second[i].context_text);
    CHECK(first[i].d == second[i].d);
    CHECK(first[i].use == second[i].use);
  }
  // serialized dump is stable too
  CHECK(serialize_pseudo_labels(first) == serialize_pseudo_labels(second));
}

TEST_CASE("train_selector separates indicator-token triples") {
  auto vocab = build_vocabulary({"alpha beta gamma delta omega keepme"},
                                TokenizeMode::Word);
  SelectorModel model(selector_encoder_config(), vocab.size(), 31337);
  Rng rng(606);
  auto triples = separable_triples(120, rng);
  SelectorTrainConfig cfg;
  cfg.epochs = 30;
  cfg.learning_rate = 3e-3;
  auto stats = train_selector(model, vocab, triples, cfg, 31337);
  REQUIRE(stats.size() == cfg.epochs);
  CHECK(stats.back().accuracy >= 0.95);
  CHECK(stats.back().mean_loss < stats.front().mean_loss);
}

TEST_CASE("train_selector is deterministic under a fixed seed") {
  auto vocab = build_vocabulary({"alpha beta gamma delta omega keepme"},
                                TokenizeMode::Word);
  Rng rng(607);
  auto triples = separable_triples(40, rng);
  SelectorTrainConfig cfg;
  cfg.epochs = 2;

  auto run = [&](std::uint64_t seed) {
    SelectorModel model(selector_encoder_config(), vocab.size(), seed);
    train_selector(model, vocab, triples, cfg, seed);
    auto path = std::filesystem::temp_directory_path() /
                ("ctxmatch_sel_" + std::to_string(seed) + ".ckpt");
    save_checkpoint(model.store(), path);
    return read_file(path);
  };
  CHECK(run(11) == run(11));
  CHECK(run(11) != run(12));
}

TEST_CASE("train_selector rejects empty and single-class inputs") {
  auto vocab = build_vocabulary({"alpha"}, TokenizeMode::Word);
  SelectorModel model(selector_encoder_config(), vocab.size(), 1);
  CHECK_THROWS_WITH(train_selector(model, vocab, {}, {}, 1),
                    Catch::Matchers::ContainsSubstring("empty"));
  std::vector<SelectorExample> one_class = {{"alpha", "alpha", "alpha", 1},
                                            {"alpha", "alpha", "alpha", 1}};
  CHECK_THROWS_WITH(train_selector(model, vocab, one_class, {}, 1),
                    Catch::Matchers::ContainsSubstring("single-class"));
}

TEST_CASE("select_contexts keeps nothing when all probabilities are low") {
  // an untrained model with a zeroed head outputs exactly 0.5, which is
  // kept; force low probabilities by biasing the head negative
  auto vocab = build_vocabulary({"alpha beta"}, TokenizeMode::Word);
  SelectorModel model(selector_encoder_config(), vocab.size(), 5);
  model.store().get("sel_head.w")->value.fill(0.0);
  model.store().get("sel_head.b")->value.fill(-5.0);
  SentencePair pair{0, "alpha", "beta", 1};
  std::vector<Context> cands = {make_context("0a", "alpha beta", 2.0),
                                make_context("0a", "beta alpha", 1.0)};
  auto result = select_contexts(&model, &vocab, pair, cands, cands, {});
  CHECK(result.kept_a.empty());
  CHECK(result.kept_b.empty());
  REQUIRE(result.verdicts.size() == 4);
  for (auto& v : result.verdicts) {
    CHECK(v.keep_probability < 0.5);
    CHECK_FALSE(v.kept);
    CHECK(v.kept == (v.keep_probability >= 0.5));
  }
}

TEST_CASE("select_contexts truncates to the K highest probabilities") {
  auto vocab = build_vocabulary({"alpha beta gamma delta omega keepme"},
                                TokenizeMode::Word);
  SelectorModel model(selector_encoder_config(), vocab.size(), 77);
  // bias the head positive so every candidate clears 0.5
  model.store().get("sel_head.b")->value.fill(5.0);
  SentencePair pair{0, "alpha", "beta", 1};
  std::vector<Context> cands;
  for (int i = 0; i < 5; ++i)
    cands.push_back(make_context("0a", "gamma delta ctx" + std::to_string(i), 5.0 - i));
  SelectorConfig cfg;
  cfg.k = 3;
  auto result = select_contexts(&model, &vocab, pair, cands, {}, cfg);
  CHECK(result.kept_a.size() == 3);
  CHECK(result.kept_b.empty());
  // kept contexts are the top-3 by probability among the verdicts
  std::vector<double> probs;
  for (auto& v : result.verdicts)
    if (v.side == 'a') probs.push_back(v.keep_probability);
  std::sort(probs.rbegin(), probs.rend());
  std::vector<double> kept_probs;
  for (auto& v : result.verdicts)
    for (auto& k : result.kept_a)
      if (v.context_text == k.text) kept_probs.push_back(v.keep_probability);
  std::sort(kept_probs.rbegin(), kept_probs.rend());
  REQUIRE(kept_probs.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(kept_probs[i] == probs[i]);
}

TEST_CASE("|kept| never exceeds K") {
  auto vocab = build_vocabulary({"alpha beta gamma"}, TokenizeMode::Word);
  SelectorModel model(selector_encoder_config(), vocab.size(), 9);
  model.store().get("sel_head.b")->value.fill(5.0);
  SentencePair pair{0, "alpha", "beta", 1};
  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Context> cands;
    std::size_t n = uniform_below(rng, 8);
    for (std::size_t i = 0; i < n; ++i)
      cands.push_back(make_context("0a", "gamma ctx" + std::to_string(i), 1.0));
    SelectorConfig cfg;
    cfg.k = 1 + uniform_below(rng, 4);
    for (auto mode : {AblationMode::None, AblationMode::CsRandom, AblationMode::CsTopk}) {
      auto result = select_contexts(&model, &vocab, pair, cands, cands, cfg, mode, 42);
      CHECK(result.kept_a.size() <= cfg.k);
      CHECK(result.kept_b.size() <= cfg.k);
    }
  }
}

TEST_CASE("cs_random selection equals an independent seeded draw") {
  SentencePair pair{3, "alpha", "beta", 1};
  std::vector<Context> cands;
  for (int i = 0; i < 7; ++i)
    cands.push_back(make_context("3a", "ctx word " + std::to_string(i), 7.0 - i));
  SelectorConfig cfg;
  cfg.k = 3;
  const std::uint64_t seed = 2024;
  auto result =
      select_contexts(nullptr, nullptr, pair, cands, {}, cfg, AblationMode::CsRandom, seed);
  REQUIRE(result.kept_a.size() == 3);
  // reference draw re-implements the documented procedure from scratch
  std::uint64_t stream = ctxmatch::Fnv1a()
                             .update(seed)
                             .update("cs_random")
                             .update(std::uint64_t{3})
                             .update(std::string(1, 'a'))
                             .digest();
  auto want = oracle::reference_sample(stream, cands.size(), cfg.k);
  for (std::size_t i = 0; i < want.size(); ++i)
    CHECK(result.kept_a[i].text == cands[want[i]].text);
}

TEST_CASE("cs_topk keeps the K highest retrieval scores") {
  SentencePair pair{0, "alpha", "beta", 1};
  std::vector<Context> cands = {make_context("0a", "first", 9.0),
                                make_context("0a", "second", 5.0),
                                make_context("0a", "third", 3.0),
                                make_context("0a", "fourth", 1.0)};
  SelectorConfig cfg;
  cfg.k = 2;
  auto result =
      select_contexts(nullptr, nullptr, pair, cands, {}, cfg, AblationMode::CsTopk, 0);
  REQUIRE(result.kept_a.size() == 2);
  CHECK(result.kept_a[0].text == "first");
  CHECK(result.kept_a[1].text == "second");
}

TEST_CASE("selector config is validated") {
  SelectorConfig bad;
  bad.d_a = 0.2;
  bad.d_b = 0.5;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = {};
  bad.k = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
}
