#pragma once

// Tiny transformer encoder producing pooled sentence/context vectors.
//
// Forward pass, per layer (post-LN):
//   q = x*Wq + bq, k = x*Wk + bk, v = x*Wv + bv
//   per head: A = softmax(q_h k_h^T / sqrt(d_head) + mask_bias)
//   attn = concat_heads(A v_h) * Wo + bo
//   x = LN1(x + attn)
//   f = relu(x*W1 + b1)*W2 + b2
//   x = LN2(x + f)
// Pooled representation is the final-layer vector at the CLS position.
// Masked (PAD) key columns get a -1e30 additive bias, which drives their
// attention weight to exactly zero, so padding width cannot leak into the
// pooled output.

#include <optional>
#include <string>
#include <vector>

#include "ctxmatch/autodiff.hpp"
#include "ctxmatch/vocab.hpp"

namespace ctxmatch {

constexpr double kMaskBias = -1e30;

struct EncoderConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t model_dim = 64;
  std::size_t ffn_dim = 128;
  std::size_t max_seq_len = 64;
  bool share_context_params = true;
  double dropout = 0.0;

  void validate() const {
    if (layers < 1) fail("encoder: layers must be at least 1");
    if (heads < 1 || model_dim % heads != 0)
      fail("encoder: model_dim ", model_dim, " must divide by heads ", heads);
    if (max_seq_len < 2) fail("encoder: max_seq_len must be at least 2");
    if (ffn_dim < 1) fail("encoder: ffn_dim must be at least 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("encoder: dropout must be in [0,1)");
  }
};

// Attention probabilities recorded during a forward pass, one matrix per
// (layer, head). Used by tests to check mask correctness.
struct AttentionRecorder {
  std::vector<Tensor> weights;
};

struct TransformerLayerRefs {
  NodePtr wq, bq, wk, bk, wv, bv, wo, bo;
  NodePtr ln1_gain, ln1_bias;
  NodePtr ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  NodePtr ln2_gain, ln2_bias;
};

inline void register_transformer_layer(ParamStore& store, const std::string& prefix,
                                       std::size_t dim, std::size_t ffn_dim, Rng& rng) {
  store.create_glorot(prefix + ".attn.wq", dim, dim, rng);
  store.create(prefix + ".attn.bq", Tensor::zeros({1, dim}));
  store.create_glorot(prefix + ".attn.wk", dim, dim, rng);
  store.create(prefix + ".attn.bk", Tensor::zeros({1, dim}));
  store.create_glorot(prefix + ".attn.wv", dim, dim, rng);
  store.create(prefix + ".attn.bv", Tensor::zeros({1, dim}));
  store.create_glorot(prefix + ".attn.wo", dim, dim, rng);
  store.create(prefix + ".attn.bo", Tensor::zeros({1, dim}));
  store.create(prefix + ".ln1.gain", Tensor::full({1, dim}, 1.0));
  store.create(prefix + ".ln1.bias", Tensor::zeros({1, dim}));
  store.create_glorot(prefix + ".ffn.w1", dim, ffn_dim, rng);
  store.create(prefix + ".ffn.b1", Tensor::zeros({1, ffn_dim}));
  store.create_glorot(prefix + ".ffn.w2", ffn_dim, dim, rng);
  store.create(prefix + ".ffn.b2", Tensor::zeros({1, dim}));
  store.create(prefix + ".ln2.gain", Tensor::full({1, dim}, 1.0));
  store.create(prefix + ".ln2.bias", Tensor::zeros({1, dim}));
}

inline TransformerLayerRefs layer_refs(const ParamStore& store, const std::string& prefix) {
  TransformerLayerRefs r;
  r.wq = store.get(prefix + ".attn.wq");
  r.bq = store.get(prefix + ".attn.bq");
  r.wk = store.get(prefix + ".attn.wk");
  r.bk = store.get(prefix + ".attn.bk");
  r.wv = store.get(prefix + ".attn.wv");
  r.bv = store.get(prefix + ".attn.bv");
  r.wo = store.get(prefix + ".attn.wo");
  r.bo = store.get(prefix + ".attn.bo");
  r.ln1_gain = store.get(prefix + ".ln1.gain");
  r.ln1_bias = store.get(prefix + ".ln1.bias");
  r.ffn_w1 = store.get(prefix + ".ffn.w1");
  r.ffn_b1 = store.get(prefix + ".ffn.b1");
  r.ffn_w2 = store.get(prefix + ".ffn.w2");
  r.ffn_b2 = store.get(prefix + ".ffn.b2");
  r.ln2_gain = store.get(prefix + ".ln2.gain");
  r.ln2_bias = store.get(prefix + ".ln2.bias");
  return r;
}

// mask_bias: 1xS row, 0 for attendable positions, kMaskBias for masked ones.
inline NodePtr transformer_layer(const TransformerLayerRefs& p, NodePtr x,
                                 const std::vector<bool>& attendable, std::size_t heads,
                                 AttentionRecorder* recorder = nullptr) {
  const std::size_t S = x->value.rows();
  const std::size_t dim = x->value.cols();
  const std::size_t dh = dim / heads;

  Tensor bias({S, S});
  for (std::size_t i = 0; i < S; ++i)
    for (std::size_t j = 0; j < S; ++j)
      bias.at(i, j) = attendable[j] ? 0.0 : kMaskBias;
  auto mask_node = constant(std::move(bias));

  auto q = add_rowwise(matmul(x, p.wq), p.bq);
  auto k = add_rowwise(matmul(x, p.wk), p.bk);
  auto v = add_rowwise(matmul(x, p.wv), p.bv);

  std::vector<NodePtr> head_outputs;
  head_outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    auto qh = slice_cols(q, h * dh, (h + 1) * dh);
    auto kh = slice_cols(k, h * dh, (h + 1) * dh);
    auto vh = slice_cols(v, h * dh, (h + 1) * dh);
    auto logits =
        scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
    auto masked = add(logits, mask_node);
    auto attn = softmax_rows(masked);
    if (recorder) recorder->weights.push_back(attn->value);
    head_outputs.push_back(matmul(attn, vh));
  }
  auto merged = heads == 1 ? head_outputs[0] : concat(head_outputs, 1);
  auto attn_out = add_rowwise(matmul(merged, p.wo), p.bo);
  auto post_attn = layer_norm(add(x, attn_out), p.ln1_gain, p.ln1_bias);
  auto hidden = relu(add_rowwise(matmul(post_attn, p.ffn_w1), p.ffn_b1));
  auto ffn_out = add_rowwise(matmul(hidden, p.ffn_w2), p.ffn_b2);
  return layer_norm(add(post_attn, ffn_out), p.ln2_gain, p.ln2_bias);
}

class EncoderModel {
 public:
  // Registers fresh parameters into the store under `prefix`.
  EncoderModel(EncoderConfig cfg, std::size_t vocab_size, ParamStore& store,
               std::string prefix, Rng& rng)
      : cfg_(cfg), store_(&store), prefix_(std::move(prefix)) {
    cfg_.validate();
    store.create_uniform(prefix_ + "tok_emb", {vocab_size, cfg_.model_dim}, rng, 0.1);
    store.create_uniform(prefix_ + "pos_emb", {cfg_.max_seq_len, cfg_.model_dim}, rng, 0.1);
    for (std::size_t l = 0; l < cfg_.layers; ++l)
      register_transformer_layer(store, layer_prefix(l), cfg_.model_dim, cfg_.ffn_dim, rng);
  }

  // Wraps parameters that already exist in the store (e.g. after restore
  // or for shared sentence/context encoding).
  static EncoderModel attach(EncoderConfig cfg, ParamStore& store, std::string prefix) {
    return EncoderModel(cfg, store, std::move(prefix));
  }

  const EncoderConfig& config() const { return cfg_; }
  const std::string& prefix() const { return prefix_; }
  ParamStore& store() const { return *store_; }

  // Pooled representation of an id sequence: final-layer CLS vector (1xd).
  NodePtr encode(const std::vector<std::size_t>& ids, AttentionRecorder* recorder = nullptr,
                 Rng* dropout_rng = nullptr) const {
    if (ids.empty()) fail("encode: empty id sequence");
    if (ids.size() > cfg_.max_seq_len)
      fail("encode: sequence length ", ids.size(), " exceeds max_seq_len ",
           cfg_.max_seq_len);
    std::vector<bool> attendable(ids.size());
    bool any = false;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      attendable[i] = ids[i] != Vocabulary::kPad;
      any = any || attendable[i];
    }
    if (!any) fail("encode: all-PAD input");

    std::vector<std::size_t> positions(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) positions[i] = i;
    auto x = add(gather_rows(store_->get(prefix_ + "tok_emb"), ids),
                 gather_rows(store_->get(prefix_ + "pos_emb"), positions));
    if (cfg_.dropout > 0.0 && dropout_rng) x = dropout(x, cfg_.dropout, *dropout_rng);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      x = transformer_layer(layer_refs(*store_, layer_prefix(l)), x, attendable,
                            cfg_.heads, recorder);
      if (cfg_.dropout > 0.0 && dropout_rng) x = dropout(x, cfg_.dropout, *dropout_rng);
    }
    return slice_row(x, 0);
  }

  // Convenience: tokenize + encode, no gradient consumers.
  Tensor encode_text(const Vocabulary& vocab, const std::string& text) const {
    return encode(encode_ids(vocab, text, cfg_.max_seq_len))->value;
  }

 private:
  EncoderModel(EncoderConfig cfg, ParamStore& store, std::string prefix)
      : cfg_(cfg), store_(&store), prefix_(std::move(prefix)) {
    cfg_.validate();
  }

  std::string layer_prefix(std::size_t l) const {
    return prefix_ + "l" + std::to_string(l);
  }

  EncoderConfig cfg_;
  ParamStore* store_;
  std::string prefix_;
};

}  // namespace ctxmatch
