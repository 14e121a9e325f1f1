#pragma once

// Context-enhanced matching: pooled sentence and context vectors are laid
// out as slots [sent_a, sent_b, ctx_a..., ctx_b...], each augmented with a
// learned slot-type embedding, fused by a small self-attention stack, and
// scored by a two-hidden-layer relu head with a sigmoid output over the
// features [h_a; h_b; |h_a - h_b|].
//
// The no-context baseline is the same model run with empty context lists
// (the fusion stack degenerates to the two sentence slots), so baseline
// and context predictions are directly comparable quantities.

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "ctxmatch/ablation.hpp"
#include "ctxmatch/encoder.hpp"
#include "ctxmatch/optim.hpp"
#include "ctxmatch/selector.hpp"

namespace ctxmatch {

struct FusionConfig {
  std::size_t layers = 3;

  void validate() const {
    if (layers < 1) fail("fusion: layers must be at least 1");
  }
};

struct TrainConfig {
  double learning_rate = 3e-4;
  std::size_t epochs = 3;
  std::size_t batch_size = 16;
  std::size_t context_k = 3;

  void validate() const {
    if (!(learning_rate > 0)) fail("train: learning_rate must be positive");
    if (batch_size < 1) fail("train: batch_size must be at least 1");
    if (context_k < 1) fail("train: context_k must be at least 1");
  }
};

// Eq-style feature map: [h_a; h_b; |h_a - h_b|].
inline NodePtr match_features(const NodePtr& h_a, const NodePtr& h_b) {
  if (!h_a->value.same_shape(h_b->value))
    fail("match_features: shape mismatch ", h_a->value.shape_string(), " vs ",
         h_b->value.shape_string());
  return concat({h_a, h_b, abs_val(sub(h_a, h_b))}, 1);
}

// slot types
constexpr std::size_t kSlotSentA = 0;
constexpr std::size_t kSlotSentB = 1;
constexpr std::size_t kSlotCtxA = 2;
constexpr std::size_t kSlotCtxB = 3;

// Core fusion path over explicit slots. Absent slots take part in the
// computation but are masked out of every attention row, which keeps them
// provably inert; tests poke arbitrary content into them.
inline std::pair<NodePtr, NodePtr> fuse_slots(const ParamStore& store,
                                              const FusionConfig& cfg,
                                              std::size_t heads,
                                              const std::vector<NodePtr>& slots,
                                              const std::vector<std::size_t>& types,
                                              const std::vector<bool>& present) {
  cfg.validate();
  if (slots.size() < 2) fail("fuse: need at least the two sentence slots");
  if (types.size() != slots.size() || present.size() != slots.size())
    fail("fuse: slots/types/present sizes disagree");
  if (!present[0] || !present[1]) fail("fuse: sentence slots must be present");
  const std::size_t dim = slots[0]->value.cols();
  for (const auto& s : slots)
    if (s->value.rows() != 1 || s->value.cols() != dim)
      fail("fuse: slot shape ", s->value.shape_string(), " does not match (1x",
           dim, ")");

  auto type_emb = store.get("fus.type_emb");
  std::vector<NodePtr> rows;
  rows.reserve(slots.size());
  for (std::size_t i = 0; i < slots.size(); ++i)
    rows.push_back(add(slots[i], gather_rows(type_emb, {types[i]})));
  auto x = concat(rows, 0);
  std::vector<bool> attendable(present.begin(), present.end());
  for (std::size_t l = 0; l < cfg.layers; ++l)
    x = transformer_layer(layer_refs(store, "fus.l" + std::to_string(l)), x, attendable,
                          heads);
  return {slice_row(x, 0), slice_row(x, 1)};
}

// Whole matching model: sentence encoder, context encoder (shared
// parameters unless share_context_params is off), fusion stack, head.
class MatcherModel {
 public:
  MatcherModel(EncoderConfig enc_cfg, FusionConfig fusion_cfg, std::size_t vocab_size,
               std::uint64_t seed)
      : enc_cfg_(enc_cfg), fusion_cfg_(fusion_cfg),
        rng_(derive_seed(seed, "matcher-init")),
        sentence_encoder_(enc_cfg, vocab_size, store_, "enc.", rng_) {
    fusion_cfg_.validate();
    if (!enc_cfg_.share_context_params)
      context_encoder_.emplace(enc_cfg_, vocab_size, store_, "ctx.", rng_);
    const std::size_t d = enc_cfg_.model_dim;
    store_.create_uniform("fus.type_emb", {4, d}, rng_, 0.1);
    for (std::size_t l = 0; l < fusion_cfg_.layers; ++l)
      register_transformer_layer(store_, "fus.l" + std::to_string(l), d,
                                 enc_cfg_.ffn_dim, rng_);
    store_.create_glorot("head.w1", 3 * d, d, rng_);
    store_.create("head.b1", Tensor::zeros({1, d}));
    store_.create_glorot("head.w2", d, d, rng_);
    store_.create("head.b2", Tensor::zeros({1, d}));
    store_.create_glorot("head.w3", d, 1, rng_);
    store_.create("head.b3", Tensor::zeros({1, 1}));
  }

  MatcherModel(const MatcherModel&) = delete;
  MatcherModel& operator=(const MatcherModel&) = delete;

  const EncoderConfig& encoder_config() const { return enc_cfg_; }
  const FusionConfig& fusion_config() const { return fusion_cfg_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }
  const EncoderModel& sentence_encoder() const { return sentence_encoder_; }
  const EncoderModel& context_encoder() const {
    return context_encoder_ ? *context_encoder_ : sentence_encoder_;
  }

  // Fusion over pooled vectors; only present slots are materialized.
  std::pair<NodePtr, NodePtr> fuse(const NodePtr& h_a, const NodePtr& h_b,
                                   const std::vector<NodePtr>& ctx_a,
                                   const std::vector<NodePtr>& ctx_b) const {
    std::vector<NodePtr> slots = {h_a, h_b};
    std::vector<std::size_t> types = {kSlotSentA, kSlotSentB};
    for (const auto& c : ctx_a) {
      slots.push_back(c);
      types.push_back(kSlotCtxA);
    }
    for (const auto& c : ctx_b) {
      slots.push_back(c);
      types.push_back(kSlotCtxB);
    }
    std::vector<bool> present(slots.size(), true);
    return fuse_slots(store_, fusion_cfg_, enc_cfg_.heads, slots, types, present);
  }

  // Two relu hidden layers, sigmoid output, clamped into (0,1).
  NodePtr predict(const NodePtr& features) const {
    auto h1 = relu(add_rowwise(matmul(features, store_.get("head.w1")),
                               store_.get("head.b1")));
    auto h2 = relu(add_rowwise(matmul(h1, store_.get("head.w2")), store_.get("head.b2")));
    auto logit = add(matmul(h2, store_.get("head.w3")), store_.get("head.b3"));
    return clamp_prob(sigmoid(logit));
  }

  // Probability for one example: encode, fuse, score.
  NodePtr example_probability(const Vocabulary& vocab, const std::string& text_a,
                              const std::string& text_b,
                              const std::vector<std::string>& contexts_a,
                              const std::vector<std::string>& contexts_b,
                              std::size_t context_k, Rng* dropout_rng = nullptr) const {
    auto encode_one = [&](const EncoderModel& enc, const std::string& text) {
      return enc.encode(encode_ids(vocab, text, enc_cfg_.max_seq_len), nullptr,
                        dropout_rng);
    };
    auto h_a = encode_one(sentence_encoder_, text_a);
    auto h_b = encode_one(sentence_encoder_, text_b);
    std::vector<NodePtr> ctx_a, ctx_b;
    for (const auto& c : contexts_a) {
      if (ctx_a.size() == context_k) break;
      ctx_a.push_back(encode_one(context_encoder(), c));
    }
    for (const auto& c : contexts_b) {
      if (ctx_b.size() == context_k) break;
      ctx_b.push_back(encode_one(context_encoder(), c));
    }
    auto [ha2, hb2] = fuse(h_a, h_b, ctx_a, ctx_b);
    return predict(match_features(ha2, hb2));
  }

 private:
  EncoderConfig enc_cfg_;
  FusionConfig fusion_cfg_;
  ParamStore store_;
  Rng rng_;
  EncoderModel sentence_encoder_;
  std::optional<EncoderModel> context_encoder_;
};

struct MatcherExample {
  std::size_t id = 0;
  std::string text_a;
  std::string text_b;
  std::vector<std::string> contexts_a;
  std::vector<std::string> contexts_b;
  int label = 0;
};

// Minibatch Adam/BCE training. Deterministic: seeded epoch shuffles, fixed
// reduction order inside every batch.
inline std::vector<EpochStats> train_matcher_model(MatcherModel& model,
                                                   const Vocabulary& vocab,
                                                   const std::vector<MatcherExample>& examples,
                                                   const TrainConfig& cfg,
                                                   std::uint64_t seed) {
  cfg.validate();
  if (examples.empty()) fail("train_matcher: empty dataset");
  Rng order_rng(derive_seed(seed, "matcher-order"));
  Rng dropout_rng(derive_seed(seed, "matcher-dropout"));
  Rng* dropout_rng_ptr =
      model.encoder_config().dropout > 0.0 ? &dropout_rng : nullptr;
  AdamConfig adam_cfg;
  adam_cfg.learning_rate = cfg.learning_rate;
  AdamState adam(adam_cfg);
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<EpochStats> stats;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_vec(order, order_rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      model.store().zero_grads();
      std::vector<NodePtr> probs;
      std::vector<double> targets;
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = examples[order[i]];
        auto p = model.example_probability(vocab, ex.text_a, ex.text_b, ex.contexts_a,
                                           ex.contexts_b, cfg.context_k,
                                           dropout_rng_ptr);
        if ((p->value[0] >= 0.5) == (ex.label == 1)) ++correct;
        probs.push_back(std::move(p));
        targets.push_back(static_cast<double>(ex.label));
      }
      auto loss = bce_loss(concat(probs, 0), targets);
      loss_sum += loss->value[0] * static_cast<double>(end - start);
      backward(loss);
      adam.step(model.store());
    }
    stats.push_back({loss_sum / static_cast<double>(order.size()),
                     static_cast<double>(correct) / static_cast<double>(order.size())});
  }
  return stats;
}

// Forward-only probabilities in example order.
inline std::vector<double> predict_probabilities(const MatcherModel& model,
                                                 const Vocabulary& vocab,
                                                 const std::vector<MatcherExample>& examples,
                                                 std::size_t context_k) {
  std::vector<double> out;
  out.reserve(examples.size());
  for (const auto& ex : examples)
    out.push_back(model
                      .example_probability(vocab, ex.text_a, ex.text_b, ex.contexts_a,
                                           ex.contexts_b, context_k)
                      ->value[0]);
  return out;
}

}  // namespace ctxmatch
