#pragma once

// Context selection: score each (sentence, cross-side context) pair with a
// baseline similarity scorer, turn the scores into threshold pseudo-labels,
// train a keep/discard classifier on them, and filter candidate contexts
// down to the per-side kept set.
//
// Cross-side convention: a context attached to sentence A is scored against
// sentence B and vice versa. For a positive pair a context is useful when
// it is similar to the opposite sentence (d strictly above d_a); for a
// negative pair when it is dissimilar (d at or below d_b).

#include <algorithm>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ctxmatch/ablation.hpp"
#include "ctxmatch/corpus.hpp"
#include "ctxmatch/encoder.hpp"
#include "ctxmatch/optim.hpp"
#include "ctxmatch/rng.hpp"

namespace ctxmatch {

struct SelectorConfig {
  double d_a = 0.7;  // positive-pair similarity threshold
  double d_b = 0.3;  // negative-pair dissimilarity threshold
  std::size_t k = 3;  // contexts kept per sentence

  void validate() const {
    if (!(0.0 <= d_b && d_b <= d_a && d_a <= 1.0))
      fail("selector: need 0 <= d_b <= d_a <= 1, got d_a=", d_a, " d_b=", d_b);
    if (k < 1) fail("selector: K must be at least 1");
  }
};

// Encoder plus a cosine similarity head mapping a (sentence, context) pair
// to a score in [0,1]: d = (cos(h_s, h_c) + 1) / 2. Pooled vectors are
// cached by text, so re-scoring shared sentences is cheap.
class BaselineScorer {
 public:
  BaselineScorer(const EncoderModel& encoder, const Vocabulary& vocab)
      : encoder_(&encoder), vocab_(&vocab) {}

  double similarity(const std::string& sentence, const std::string& context) const {
    if (trim(sentence).empty() || trim(context).empty())
      fail("baseline_similarity: empty input text");
    const Tensor& hs = pooled(sentence);
    const Tensor& hc = pooled(context);
    double dot = 0.0, ns = 0.0, nc = 0.0;
    for (std::size_t i = 0; i < hs.size(); ++i) {
      dot += hs[i] * hc[i];
      ns += hs[i] * hs[i];
      nc += hc[i] * hc[i];
    }
    if (ns == 0.0 || nc == 0.0) return 0.5;
    double cosine = dot / (std::sqrt(ns) * std::sqrt(nc));
    cosine = std::min(1.0, std::max(-1.0, cosine));
    return (cosine + 1.0) / 2.0;
  }

  void clear_cache() const { cache_.clear(); }

 private:
  const Tensor& pooled(const std::string& text) const {
    auto it = cache_.find(text);
    if (it == cache_.end())
      it = cache_.emplace(text, encoder_->encode_text(*vocab_, text)).first;
    return it->second;
  }

  const EncoderModel* encoder_;
  const Vocabulary* vocab_;
  mutable std::map<std::string, Tensor> cache_;  // pooled vectors by text
};

struct PseudoLabel {
  std::size_t pair_id = 0;
  char side = 'a';  // side the context belongs to
  std::string context_text;
  double d = 0.0;  // cross-side similarity
  int use = 0;
};

using SentenceKeyFn = std::function<std::string(const SentencePair&, char)>;

inline std::string default_sentence_key(const SentencePair& pair, char side) {
  return std::to_string(pair.id) + side;
}

// Threshold rule over every (pair, context) combination. Requires labels.
inline std::vector<PseudoLabel> make_pseudo_labels(
    const PairDataset& dataset, const ContextStore& contexts, const BaselineScorer& scorer,
    const SelectorConfig& config, const SentenceKeyFn& key = default_sentence_key) {
  config.validate();
  std::vector<PseudoLabel> out;
  for (const auto& pair : dataset.pairs) {
    if (!pair.label.has_value())
      fail("make_pseudo_labels: pair ", pair.id, " has no label");
    const bool positive = *pair.label == 1;
    for (char side : {'a', 'b'}) {
      auto group = contexts.find(key(pair, side));
      if (group == contexts.end()) continue;
      const std::string& opposite = side == 'a' ? pair.text_b : pair.text_a;
      for (const auto& ctx : group->second) {
        PseudoLabel rec;
        rec.pair_id = pair.id;
        rec.side = side;
        rec.context_text = ctx.text;
        rec.d = scorer.similarity(opposite, ctx.text);
        rec.use = positive ? (rec.d > config.d_a ? 1 : 0) : (rec.d <= config.d_b ? 1 : 0);
        out.push_back(std::move(rec));
      }
    }
  }
  return out;
}

inline std::string serialize_pseudo_labels(const std::vector<PseudoLabel>& labels) {
  std::ostringstream os;
  for (const auto& rec : labels) {
    os << rec.pair_id << '\t' << rec.side << '\t' << hex64(fnv1a64(rec.context_text))
       << '\t';
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", rec.d);
    os << buf << '\t' << rec.use << '\n';
  }
  return os.str();
}

// --- selector classifier ------------------------------------------------

struct SelectorExample {
  std::string text_a;
  std::string text_b;
  std::string context;
  int use = 0;
};

struct EpochStats {
  double mean_loss = 0.0;
  double accuracy = 0.0;
};

// Tiny encoder over `CLS a SEP b SEP c SEP` with a sigmoid head on the
// pooled vector.
class SelectorModel {
 public:
  SelectorModel(EncoderConfig cfg, std::size_t vocab_size, std::uint64_t seed)
      : cfg_(cfg), rng_(derive_seed(seed, "selector-init")),
        encoder_(cfg, vocab_size, store_, "sel.", rng_) {
    const std::size_t d = cfg_.model_dim;
    store_.create_glorot("sel_head.w", d, 1, rng_);
    store_.create("sel_head.b", Tensor::zeros({1, 1}));
  }

  SelectorModel(const SelectorModel&) = delete;
  SelectorModel& operator=(const SelectorModel&) = delete;

  const EncoderConfig& config() const { return cfg_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }

  NodePtr keep_probability_node(const Vocabulary& vocab, const SelectorExample& ex,
                                Rng* dropout_rng = nullptr) const {
    auto ids = encode_joint_ids(vocab, {ex.text_a, ex.text_b, ex.context},
                                cfg_.max_seq_len);
    auto pooled = encoder_.encode(ids, nullptr, dropout_rng);
    auto logit = add(matmul(pooled, store_.get("sel_head.w")), store_.get("sel_head.b"));
    return clamp_prob(sigmoid(logit));
  }

  double keep_probability(const Vocabulary& vocab, const std::string& text_a,
                          const std::string& text_b, const std::string& context) const {
    return keep_probability_node(vocab, {text_a, text_b, context, 0})->value[0];
  }

 private:
  EncoderConfig cfg_;
  ParamStore store_;
  Rng rng_;
  EncoderModel encoder_;
};

struct SelectorTrainConfig {
  std::size_t epochs = 2;
  std::size_t batch_size = 16;
  double learning_rate = 3e-4;
};

inline std::vector<EpochStats> train_selector(SelectorModel& model,
                                              const Vocabulary& vocab,
                                              std::vector<SelectorExample> examples,
                                              const SelectorTrainConfig& cfg,
                                              std::uint64_t seed) {
  if (examples.empty()) fail("train_selector: empty pseudo-label set");
  bool has_pos = false, has_neg = false;
  for (const auto& ex : examples) {
    has_pos = has_pos || ex.use == 1;
    has_neg = has_neg || ex.use == 0;
  }
  if (!has_pos || !has_neg)
    fail("train_selector: pseudo-labels are single-class (all use=",
         has_pos ? 1 : 0, "); both classes are required");

  Rng order_rng(derive_seed(seed, "selector-order"));
  Rng dropout_rng(derive_seed(seed, "selector-dropout"));
  Rng* dropout_rng_ptr =
      model.config().dropout > 0.0 ? &dropout_rng : nullptr;
  AdamConfig adam_cfg;
  adam_cfg.learning_rate = cfg.learning_rate;
  AdamState adam(adam_cfg);
  std::vector<EpochStats> stats;
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

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
        auto p = model.keep_probability_node(vocab, ex, dropout_rng_ptr);
        if ((p->value[0] >= 0.5) == (ex.use == 1)) ++correct;
        probs.push_back(std::move(p));
        targets.push_back(static_cast<double>(ex.use));
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

// --- selection ----------------------------------------------------------

struct SelectorVerdict {
  std::size_t pair_id = 0;
  char side = 'a';
  std::string context_text;
  double keep_probability = 0.0;
  bool kept = false;
};

struct SelectionResult {
  std::vector<Context> kept_a;
  std::vector<Context> kept_b;
  std::vector<SelectorVerdict> verdicts;  // full mode only
};

namespace detail {

inline std::vector<Context> pick_random(const std::vector<Context>& candidates,
                                        std::size_t k, std::uint64_t seed,
                                        std::size_t pair_id, char side) {
  Rng rng(Fnv1a().update(seed).update("cs_random").update(pair_id)
              .update(std::string(1, side)).digest());
  auto picked = sample_without_replacement(rng, candidates.size(), k);
  std::vector<Context> out;
  out.reserve(picked.size());
  for (auto idx : picked) out.push_back(candidates[idx]);
  return out;
}

}  // namespace detail

// Filters each side's candidates. Full mode keeps contexts the classifier
// scores at or above 0.5, ranked by probability (ties on ascending text),
// truncated to K. The cs ablations bypass the classifier entirely.
inline SelectionResult select_contexts(
    const SelectorModel* model, const Vocabulary* vocab, const SentencePair& pair,
    const std::vector<Context>& candidates_a, const std::vector<Context>& candidates_b,
    const SelectorConfig& config, AblationMode ablation = AblationMode::None,
    std::uint64_t seed = 0) {
  config.validate();
  SelectionResult result;
  for (char side : {'a', 'b'}) {
    const auto& candidates = side == 'a' ? candidates_a : candidates_b;
    auto& kept = side == 'a' ? result.kept_a : result.kept_b;
    if (ablation == AblationMode::CsRandom) {
      kept = detail::pick_random(candidates, config.k, seed, pair.id, side);
      continue;
    }
    if (ablation == AblationMode::CsTopk) {
      // candidates arrive in store order: descending score, ties by text
      kept.assign(candidates.begin(),
                  candidates.begin() +
                      static_cast<std::ptrdiff_t>(std::min(config.k, candidates.size())));
      continue;
    }
    if (!model || !vocab) fail("select_contexts: selector model required");
    std::vector<std::pair<double, const Context*>> scored;
    for (const auto& ctx : candidates) {
      double p = model->keep_probability(*vocab, pair.text_a, pair.text_b, ctx.text);
      result.verdicts.push_back({pair.id, side, ctx.text, p, p >= 0.5});
      if (p >= 0.5) scored.emplace_back(p, &ctx);
    }
    std::sort(scored.begin(), scored.end(),
              [](const auto& x, const auto& y) {
                if (x.first != y.first) return x.first > y.first;
                return x.second->text < y.second->text;
              });
    if (scored.size() > config.k) scored.resize(config.k);
    for (auto& [p, ctx] : scored) kept.push_back(*ctx);
  }
  return result;
}

}  // namespace ctxmatch
