#pragma once

// End-to-end orchestration: ingest -> index -> retrieve -> train-baseline
// -> pseudo-label -> train-selector -> train-matcher -> evaluate.
//
// Every stage is content-addressed: its inputs (upstream artifact bytes,
// the relevant configuration, the seed) are hashed, and a stage whose hash
// and outputs are already on disk is skipped unless --force. Failed stages
// leave their outputs with a .partial suffix.

#include <array>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxmatch/ablation.hpp"
#include "ctxmatch/checkpoint.hpp"
#include "ctxmatch/corpus.hpp"
#include "ctxmatch/decision.hpp"
#include "ctxmatch/matcher.hpp"
#include "ctxmatch/retrieval.hpp"
#include "ctxmatch/selector.hpp"

namespace ctxmatch {

namespace fs = std::filesystem;

struct RunConfig {
  std::string dataset_name = "dataset";
  fs::path train_pairs;
  fs::path eval_pairs;
  fs::path contexts;  // raw context corpus, one document per line
  fs::path output_dir = "run";

  std::uint64_t seed = 7;
  AblationMode ablation = AblationMode::None;
  TokenizeMode tokenize_mode = TokenizeMode::Word;

  CleaningRules cleaning;
  RetrievalParams retrieval;
  SelectorConfig selector;
  SelectorTrainConfig selector_train;
  EncoderConfig encoder;
  FusionConfig fusion;
  TrainConfig train;
  // the baseline also serves as the similarity scorer for pseudo-labels;
  // 0 means "same as train.epochs"
  std::size_t baseline_epochs = 0;
  DecisionOptions decision;

  void validate() const {
    for (const fs::path* p : {&train_pairs, &eval_pairs, &contexts})
      if (!fs::exists(*p)) fail("config: path does not exist: ", p->string());
    retrieval.validate();
    selector.validate();
    encoder.validate();
    fusion.validate();
    train.validate();
  }

  // canonical summary used for stage hashing; includes every knob that can
  // change an artifact
  std::string fingerprint() const {
    std::ostringstream os;
    os << "name=" << dataset_name << ";seed=" << seed
       << ";ablation=" << to_string(ablation) << ";mode=" << to_string(tokenize_mode)
       << ";clean=" << cleaning.strip_tags << "," << cleaning.phone_min_digits << ","
       << cleaning.mask_emails << "," << cleaning.mask_token << "," << cleaning.min_length
       << ";bm25=" << retrieval.k1 << "," << retrieval.b << "," << retrieval.top_n
       << ";sel=" << selector.d_a << "," << selector.d_b << "," << selector.k << ","
       << selector_train.epochs << "," << selector_train.batch_size << ","
       << selector_train.learning_rate << ";enc=" << encoder.layers << ","
       << encoder.heads << "," << encoder.model_dim << "," << encoder.ffn_dim << ","
       << encoder.max_seq_len << "," << encoder.share_context_params << ","
       << encoder.dropout << ";fus=" << fusion.layers << ";train=" << train.learning_rate
       << "," << train.epochs << "," << train.batch_size << "," << train.context_k
       << ",base" << baseline_epochs
       << ";dec=" << decision.confidence_gate << "," << decision.confidence_tau;
    return os.str();
  }
};

inline RunConfig load_run_config(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    fail("config ", path.string(), ": ", e.what());
  }
  RunConfig cfg;
  auto section = [&j](const char* name) {
    return j.contains(name) ? j.at(name) : nlohmann::json::object();
  };
  auto ds = section("dataset");
  cfg.dataset_name = ds.value("name", cfg.dataset_name);
  cfg.train_pairs = ds.value("train_pairs", std::string{});
  cfg.eval_pairs = ds.value("eval_pairs", std::string{});
  cfg.contexts = ds.value("contexts", std::string{});
  cfg.output_dir = j.value("output_dir", cfg.output_dir.string());
  cfg.seed = j.value("seed", cfg.seed);
  cfg.ablation = ablation_from_string(j.value("ablation", "none"));
  cfg.tokenize_mode = tokenize_mode_from_string(j.value("tokenize_mode", "word"));

  auto cl = section("cleaning");
  cfg.cleaning.strip_tags = cl.value("strip_tags", cfg.cleaning.strip_tags);
  cfg.cleaning.phone_min_digits = cl.value("phone_min_digits", cfg.cleaning.phone_min_digits);
  cfg.cleaning.mask_emails = cl.value("mask_emails", cfg.cleaning.mask_emails);
  cfg.cleaning.mask_token = cl.value("mask_token", cfg.cleaning.mask_token);
  cfg.cleaning.min_length = cl.value("min_length", cfg.cleaning.min_length);

  auto rt = section("retrieval");
  cfg.retrieval.k1 = rt.value("k1", cfg.retrieval.k1);
  cfg.retrieval.b = rt.value("b", cfg.retrieval.b);
  cfg.retrieval.top_n = rt.value("top_n", cfg.retrieval.top_n);

  auto sel = section("selector");
  cfg.selector.d_a = sel.value("d_a", cfg.selector.d_a);
  cfg.selector.d_b = sel.value("d_b", cfg.selector.d_b);
  cfg.selector.k = sel.value("k", cfg.selector.k);
  cfg.selector_train.epochs = sel.value("epochs", cfg.selector_train.epochs);
  cfg.selector_train.batch_size = sel.value("batch_size", cfg.selector_train.batch_size);
  cfg.selector_train.learning_rate =
      sel.value("learning_rate", cfg.selector_train.learning_rate);

  auto enc = section("encoder");
  cfg.encoder.layers = enc.value("layers", cfg.encoder.layers);
  cfg.encoder.heads = enc.value("heads", cfg.encoder.heads);
  cfg.encoder.model_dim = enc.value("model_dim", cfg.encoder.model_dim);
  cfg.encoder.ffn_dim = enc.value("ffn_dim", cfg.encoder.ffn_dim);
  cfg.encoder.max_seq_len = enc.value("max_seq_len", cfg.encoder.max_seq_len);
  cfg.encoder.share_context_params =
      enc.value("share_context_params", cfg.encoder.share_context_params);
  cfg.encoder.dropout = enc.value("dropout", cfg.encoder.dropout);

  cfg.fusion.layers = section("fusion").value("layers", cfg.fusion.layers);

  auto tr = section("train");
  cfg.train.learning_rate = tr.value("learning_rate", cfg.train.learning_rate);
  cfg.train.epochs = tr.value("epochs", cfg.train.epochs);
  cfg.train.batch_size = tr.value("batch_size", cfg.train.batch_size);
  cfg.train.context_k = tr.value("context_k", cfg.selector.k);
  cfg.baseline_epochs = tr.value("baseline_epochs", cfg.baseline_epochs);

  auto dec = section("decision");
  cfg.decision.confidence_gate = dec.value("confidence_gate", cfg.decision.confidence_gate);
  cfg.decision.confidence_tau = dec.value("confidence_tau", cfg.decision.confidence_tau);
  return cfg;
}

// --- stage framework -----------------------------------------------------

class StageRunner {
 public:
  StageRunner(fs::path out_dir, bool force, std::ostream& log = std::cout)
      : out_dir_(std::move(out_dir)), force_(force), log_(&log) {
    fs::create_directories(out_dir_);
  }

  const fs::path& out_dir() const { return out_dir_; }
  fs::path artifact(const std::string& name) const { return out_dir_ / name; }

  // Runs `body` unless the recorded input hash matches and all outputs
  // exist. `body` must write each output to its .partial path; the runner
  // renames them into place on success. Returns true when the stage ran.
  bool run(const std::string& name, const std::vector<fs::path>& inputs,
           const std::string& config_extras, const std::vector<std::string>& outputs,
           const std::function<void()>& body) {
    Fnv1a hasher;
    hasher.update(name).update("|").update(config_extras).update("|");
    for (const auto& input : inputs) {
      if (!fs::exists(input))
        fail("stage ", name, ": missing input ", input.string(),
             " (run the upstream stage first)");
      hasher.update(input.filename().string()).update("|").update(read_file(input));
    }
    const std::string digest = hex64(hasher.digest());
    const fs::path meta = artifact(name + ".meta");
    if (!force_ && fs::exists(meta) && trim(read_file(meta)) == digest) {
      bool have_all = true;
      for (const auto& out : outputs) have_all = have_all && fs::exists(artifact(out));
      if (have_all) {
        (*log_) << "stage " << name << ": reusing cached output\n";
        return false;
      }
    }
    (*log_) << "stage " << name << ": running\n";
    try {
      body();
      for (const auto& out : outputs) {
        const fs::path partial = artifact(out + ".partial");
        if (!fs::exists(partial))
          fail("stage did not produce expected output ", out);
        fs::rename(partial, artifact(out));
      }
    } catch (const std::exception& e) {
      fail("stage ", name, " failed: ", e.what());
    }
    write_file(meta, digest + "\n");
    return true;
  }

 private:
  fs::path out_dir_;
  bool force_;
  std::ostream* log_;
};

// --- pipeline ------------------------------------------------------------

namespace detail {

inline std::string sentence_key(char split, std::size_t pair_id, char side) {
  return std::string(1, split) + std::to_string(pair_id) + side;
}

inline std::string format_double(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

inline std::string serialize_pairs(const PairDataset& ds) {
  std::ostringstream os;
  for (const auto& p : ds.pairs) {
    os << p.text_a << '\t' << p.text_b;
    if (p.label) os << '\t' << *p.label;
    os << '\n';
  }
  return os.str();
}

}  // namespace detail

class Pipeline {
 public:
  Pipeline(RunConfig config, bool force, std::ostream& log = std::cout)
      : cfg_(std::move(config)), runner_(cfg_.output_dir, force, log), log_(&log) {
    cfg_.validate();
  }

  const RunConfig& config() const { return cfg_; }
  const StageRunner& runner() const { return runner_; }

  void ingest() {
    runner_.run("ingest", {cfg_.train_pairs, cfg_.eval_pairs}, cfg_.fingerprint(),
                {"train_pairs.tsv", "eval_pairs.tsv"}, [&] {
                  auto train = load_pair_dataset(cfg_.train_pairs, true, cfg_.dataset_name);
                  auto eval = load_pair_dataset(cfg_.eval_pairs, true, cfg_.dataset_name);
                  if (train.pairs.empty()) fail("train dataset is empty");
                  if (eval.pairs.empty()) fail("eval dataset is empty");
                  write_file(runner_.artifact("train_pairs.tsv.partial"),
                             detail::serialize_pairs(train));
                  write_file(runner_.artifact("eval_pairs.tsv.partial"),
                             detail::serialize_pairs(eval));
                  (*log_) << "  pairs: train " << train.pairs.size() << ", eval "
                          << eval.pairs.size() << "\n";
                });
  }

  void index() {
    runner_.run("index", {cfg_.contexts}, cfg_.fingerprint(), {"index.tsv"}, [&] {
      std::vector<std::string> docs;
      for (auto& line : read_lines(cfg_.contexts)) {
        if (trim(line).empty()) continue;
        auto cleaned = clean_context(line, cfg_.cleaning);
        if (cleaned) docs.push_back(std::move(*cleaned));
      }
      if (docs.empty()) fail("context corpus is empty after cleaning");
      auto idx = build_index(docs, cfg_.tokenize_mode);
      write_file(runner_.artifact("index.tsv.partial"), serialize_index(idx));
      (*log_) << "  indexed " << idx.doc_count << " documents\n";
    });
  }

  void retrieve_contexts() {
    runner_.run(
        "retrieve",
        {runner_.artifact("index.tsv"), runner_.artifact("train_pairs.tsv"),
         runner_.artifact("eval_pairs.tsv")},
        cfg_.fingerprint(), {"contexts.tsv"}, [&] {
          auto idx = deserialize_index(read_file(runner_.artifact("index.tsv")));
          std::ostringstream out;
          std::size_t emitted = 0;
          for (auto [split, file] : {std::pair{'t', "train_pairs.tsv"},
                                     std::pair{'e', "eval_pairs.tsv"}}) {
            auto ds = load_pair_dataset(runner_.artifact(file), true);
            for (const auto& pair : ds.pairs)
              for (char side : {'a', 'b'}) {
                const std::string& text = side == 'a' ? pair.text_a : pair.text_b;
                for (const auto& hit : retrieve(idx, cfg_.retrieval, text)) {
                  out << detail::sentence_key(split, pair.id, side) << '\t'
                      << detail::format_double(hit.score, "%.17g") << '\t' << "doc"
                      << hit.doc << '\t' << idx.documents[hit.doc] << '\n';
                  ++emitted;
                }
              }
          }
          write_file(runner_.artifact("contexts.tsv.partial"), out.str());
          (*log_) << "  retrieved " << emitted << " contexts\n";
        });
  }

  void train_baseline() {
    runner_.run(
        "train-baseline",
        {runner_.artifact("train_pairs.tsv"), runner_.artifact("index.tsv")},
        cfg_.fingerprint(), {"vocab.txt", "baseline.ckpt", "baseline_log.tsv"}, [&] {
          auto vocab = build_vocab();
          write_file(runner_.artifact("vocab.txt.partial"), vocab.serialize());
          auto train = load_pair_dataset(runner_.artifact("train_pairs.tsv"), true,
                                         cfg_.dataset_name);
          std::vector<MatcherExample> examples;
          for (const auto& p : train.pairs)
            examples.push_back({p.id, p.text_a, p.text_b, {}, {}, *p.label});
          EncoderConfig enc = cfg_.encoder;
          enc.share_context_params = true;  // baseline has no context slots
          MatcherModel model(enc, cfg_.fusion, vocab.size(),
                             derive_seed(cfg_.seed, "baseline"));
          TrainConfig baseline_cfg = cfg_.train;
          if (cfg_.baseline_epochs > 0) baseline_cfg.epochs = cfg_.baseline_epochs;
          auto stats = train_matcher_model(model, vocab, examples, baseline_cfg,
                                           derive_seed(cfg_.seed, "baseline"));
          write_training_log("baseline_log.tsv", stats);
          save_checkpoint(model.store(), runner_.artifact("baseline.ckpt.partial"));
        });
  }

  void pseudo_label() {
    if (selector_bypassed()) {
      (*log_) << "stage pseudo-label: skipped (ablation " << to_string(cfg_.ablation)
              << ")\n";
      return;
    }
    runner_.run(
        "pseudo-label",
        {runner_.artifact("train_pairs.tsv"), runner_.artifact("contexts.tsv"),
         runner_.artifact("vocab.txt"), runner_.artifact("baseline.ckpt")},
        cfg_.fingerprint(), {"pseudo_labels.tsv", "selector_train.tsv"}, [&] {
          auto vocab = load_vocab();
          auto train = load_pair_dataset(runner_.artifact("train_pairs.tsv"), true,
                                         cfg_.dataset_name);
          auto store = load_context_store(runner_.artifact("contexts.tsv"), cfg_.cleaning);

          EncoderConfig enc = cfg_.encoder;
          enc.share_context_params = true;
          MatcherModel baseline(enc, cfg_.fusion, vocab.size(),
                                derive_seed(cfg_.seed, "baseline"));
          restore_params(baseline.store(), runner_.artifact("baseline.ckpt"));
          BaselineScorer scorer(baseline.sentence_encoder(), vocab);

          auto labels = make_pseudo_labels(
              train, store, scorer, cfg_.selector,
              [](const SentencePair& p, char side) {
                return detail::sentence_key('t', p.id, side);
              });
          write_file(runner_.artifact("pseudo_labels.tsv.partial"),
                     serialize_pseudo_labels(labels));

          std::ostringstream os;
          std::size_t used = 0;
          for (const auto& rec : labels) {
            const auto& pair = train.pairs[rec.pair_id];
            os << rec.pair_id << '\t' << rec.side << '\t' << rec.use << '\t'
               << pair.text_a << '\t' << pair.text_b << '\t' << rec.context_text << '\n';
            used += static_cast<std::size_t>(rec.use);
          }
          write_file(runner_.artifact("selector_train.tsv.partial"), os.str());
          (*log_) << "  pseudo-labels: " << labels.size() << " records, " << used
                  << " marked use=1\n";
        });
  }

  void train_selector_stage() {
    if (selector_bypassed()) {
      (*log_) << "stage train-selector: skipped (ablation " << to_string(cfg_.ablation)
              << ")\n";
      return;
    }
    runner_.run(
        "train-selector",
        {runner_.artifact("selector_train.tsv"), runner_.artifact("vocab.txt")},
        cfg_.fingerprint(), {"selector.ckpt", "selector_log.tsv"}, [&] {
          auto vocab = load_vocab();
          std::vector<SelectorExample> examples;
          auto lines = read_lines(runner_.artifact("selector_train.tsv"));
          for (std::size_t ln = 0; ln < lines.size(); ++ln) {
            if (trim(lines[ln]).empty()) continue;
            auto fields = split(lines[ln], '\t', 6);
            if (fields.size() != 6)
              fail("selector_train.tsv:", ln + 1, ": expected 6 fields");
            examples.push_back({fields[3], fields[4], fields[5],
                                fields[2] == "1" ? 1 : 0});
          }
          SelectorModel model(cfg_.encoder, vocab.size(),
                              derive_seed(cfg_.seed, "selector"));
          auto stats = train_selector(model, vocab, examples, cfg_.selector_train,
                                      derive_seed(cfg_.seed, "selector"));
          write_training_log("selector_log.tsv", stats);
          save_checkpoint(model.store(), runner_.artifact("selector.ckpt.partial"));
        });
  }

  void train_matcher_stage() {
    std::vector<fs::path> inputs = {runner_.artifact("train_pairs.tsv"),
                                    runner_.artifact("contexts.tsv"),
                                    runner_.artifact("vocab.txt")};
    if (!selector_bypassed()) inputs.push_back(runner_.artifact("selector.ckpt"));
    runner_.run(
        "train-matcher", inputs, cfg_.fingerprint(),
        {"matcher.ckpt", "matcher_log.tsv", "selected_contexts.tsv"}, [&] {
          auto vocab = load_vocab();
          auto train = load_pair_dataset(runner_.artifact("train_pairs.tsv"), true,
                                         cfg_.dataset_name);
          auto store = load_context_store(runner_.artifact("contexts.tsv"), cfg_.cleaning);
          auto selector_model = load_selector(vocab);

          std::ostringstream audit;
          std::vector<MatcherExample> examples;
          for (const auto& pair : train.pairs) {
            auto selection = select_for(selector_model.get(), vocab, pair, 't', store);
            MatcherExample ex{pair.id, pair.text_a, pair.text_b, {}, {}, *pair.label};
            for (auto& c : selection.kept_a) {
              ex.contexts_a.push_back(c.text);
              audit << pair.id << "\ta\t" << c.text << '\n';
            }
            for (auto& c : selection.kept_b) {
              ex.contexts_b.push_back(c.text);
              audit << pair.id << "\tb\t" << c.text << '\n';
            }
            examples.push_back(std::move(ex));
          }
          write_file(runner_.artifact("selected_contexts.tsv.partial"), audit.str());

          MatcherModel model(matcher_encoder_config(), cfg_.fusion, vocab.size(),
                             derive_seed(cfg_.seed, "matcher"));
          auto stats = train_matcher_model(model, vocab, examples, cfg_.train,
                                           derive_seed(cfg_.seed, "matcher"));
          write_training_log("matcher_log.tsv", stats);
          save_checkpoint(model.store(), runner_.artifact("matcher.ckpt.partial"));
        });
  }

  void evaluate_stage() {
    std::vector<fs::path> inputs = {
        runner_.artifact("eval_pairs.tsv"), runner_.artifact("contexts.tsv"),
        runner_.artifact("vocab.txt"), runner_.artifact("baseline.ckpt"),
        runner_.artifact("matcher.ckpt")};
    if (!selector_bypassed()) inputs.push_back(runner_.artifact("selector.ckpt"));
    runner_.run(
        "evaluate", inputs, cfg_.fingerprint(),
        {"predictions.tsv", "decisions.tsv", "report.tsv", "eval_selected_contexts.tsv"},
        [&] {
          auto vocab = load_vocab();
          auto eval = load_pair_dataset(runner_.artifact("eval_pairs.tsv"), true,
                                        cfg_.dataset_name);
          auto store = load_context_store(runner_.artifact("contexts.tsv"), cfg_.cleaning);

          EncoderConfig base_enc = cfg_.encoder;
          base_enc.share_context_params = true;
          MatcherModel baseline(base_enc, cfg_.fusion, vocab.size(),
                                derive_seed(cfg_.seed, "baseline"));
          restore_params(baseline.store(), runner_.artifact("baseline.ckpt"));
          MatcherModel matcher(matcher_encoder_config(), cfg_.fusion, vocab.size(),
                               derive_seed(cfg_.seed, "matcher"));
          restore_params(matcher.store(), runner_.artifact("matcher.ckpt"));
          auto selector_model = load_selector(vocab);

          std::ostringstream pred_log;
          std::ostringstream sel_log;
          std::vector<std::array<double, 2>> probs;
          for (const auto& pair : eval.pairs) {
            auto selection = select_for(selector_model.get(), vocab, pair, 'e', store);
            std::vector<std::string> ctx_a, ctx_b;
            for (auto& c : selection.kept_a) ctx_a.push_back(c.text);
            for (auto& c : selection.kept_b) ctx_b.push_back(c.text);
            for (auto& c : selection.kept_a) sel_log << pair.id << "\ta\t" << c.text << '\n';
            for (auto& c : selection.kept_b) sel_log << pair.id << "\tb\t" << c.text << '\n';
            const double y_hat =
                baseline.example_probability(vocab, pair.text_a, pair.text_b, {}, {}, 1)
                    ->value[0];
            const double y_bar =
                matcher
                    .example_probability(vocab, pair.text_a, pair.text_b, ctx_a, ctx_b,
                                         cfg_.train.context_k)
                    ->value[0];
            probs.push_back({y_hat, y_bar});
            pred_log << pair.id << '\t' << detail::format_double(y_hat) << '\t'
                     << detail::format_double(y_bar) << '\t' << *pair.label << '\n';
          }
          write_file(runner_.artifact("predictions.tsv.partial"), pred_log.str());
          write_file(runner_.artifact("eval_selected_contexts.tsv.partial"),
                     sel_log.str());
          write_decisions_and_report(eval, probs);
        });
  }

  // Applies the decision rule and evaluation to an existing predictions
  // file; used by the evaluate subcommand's --predictions mode.
  EvalReport evaluate_predictions_file(const fs::path& predictions) {
    auto lines = read_lines(predictions);
    PairDataset gold;
    std::vector<std::array<double, 2>> probs;
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
      if (trim(lines[ln]).empty()) continue;
      auto fields = split(lines[ln], '\t');
      if (fields.size() != 4)
        fail(predictions.string(), ":", ln + 1, ": expected 4 fields");
      SentencePair p;
      p.id = std::stoull(fields[0]);
      p.text_a = "-";
      p.text_b = "-";
      p.label = std::stoi(fields[3]);
      gold.pairs.push_back(p);
      probs.push_back({std::stod(fields[1]), std::stod(fields[2])});
    }
    gold.name = cfg_.dataset_name;
    auto report = write_decisions_and_report(gold, probs);
    for (const char* out : {"decisions.tsv", "report.tsv"})
      fs::rename(runner_.artifact(std::string(out) + ".partial"), runner_.artifact(out));
    return report;
  }

  // Full run. Stage order matters; ablations skip the selector stages.
  EvalReport run_all() {
    ingest();
    index();
    retrieve_contexts();
    train_baseline();
    pseudo_label();
    train_selector_stage();
    train_matcher_stage();
    evaluate_stage();
    return read_report(runner_.out_dir());
  }

  static EvalReport read_report(const fs::path& run_dir) {
    auto kv = read_report_map(run_dir);
    EvalReport r;
    r.accuracy = std::stod(kv.at("accuracy"));
    r.f1 = std::stod(kv.at("f1"));
    r.tp = std::stoull(kv.at("tp"));
    r.fp = std::stoull(kv.at("fp"));
    r.tn = std::stoull(kv.at("tn"));
    r.fn = std::stoull(kv.at("fn"));
    return r;
  }

  static std::map<std::string, std::string> read_report_map(const fs::path& run_dir) {
    std::map<std::string, std::string> kv;
    for (auto& line : read_lines(run_dir / "report.tsv")) {
      if (trim(line).empty()) continue;
      auto fields = split(line, '\t', 2);
      if (fields.size() == 2) kv[fields[0]] = fields[1];
    }
    if (kv.empty()) fail("empty report: ", (run_dir / "report.tsv").string());
    return kv;
  }

 private:
  bool selector_bypassed() const {
    return cfg_.ablation == AblationMode::CsRandom ||
           cfg_.ablation == AblationMode::CsTopk;
  }

  EncoderConfig matcher_encoder_config() const {
    EncoderConfig enc = cfg_.encoder;
    if (cfg_.ablation == AblationMode::ShareOff) enc.share_context_params = false;
    return enc;
  }

  Vocabulary build_vocab() const {
    std::vector<std::string> corpus;
    auto train = load_pair_dataset(runner_.artifact("train_pairs.tsv"), true);
    for (const auto& p : train.pairs) {
      corpus.push_back(p.text_a);
      corpus.push_back(p.text_b);
    }
    auto idx = deserialize_index(read_file(runner_.artifact("index.tsv")));
    for (auto& doc : idx.documents) corpus.push_back(doc);
    return build_vocabulary(corpus, cfg_.tokenize_mode);
  }

  Vocabulary load_vocab() const {
    return Vocabulary::deserialize(read_file(runner_.artifact("vocab.txt")),
                                   cfg_.tokenize_mode);
  }

  std::unique_ptr<SelectorModel> load_selector(const Vocabulary& vocab) const {
    if (selector_bypassed()) return nullptr;
    auto model = std::make_unique<SelectorModel>(cfg_.encoder, vocab.size(),
                                                 derive_seed(cfg_.seed, "selector"));
    restore_params(model->store(), runner_.artifact("selector.ckpt"));
    return model;
  }

  SelectionResult select_for(const SelectorModel* selector, const Vocabulary& vocab,
                             const SentencePair& pair, char split,
                             const ContextStore& store) const {
    static const std::vector<Context> kEmpty;
    auto find = [&](char side) -> const std::vector<Context>& {
      auto it = store.find(detail::sentence_key(split, pair.id, side));
      return it == store.end() ? kEmpty : it->second;
    };
    return select_contexts(selector, &vocab, pair, find('a'), find('b'), cfg_.selector,
                           cfg_.ablation, cfg_.seed);
  }

  void write_training_log(const std::string& name, const std::vector<EpochStats>& stats) {
    std::ostringstream os;
    os << "epoch\tloss\taccuracy\n";
    for (std::size_t e = 0; e < stats.size(); ++e)
      os << e << '\t' << detail::format_double(stats[e].mean_loss) << '\t'
         << detail::format_double(stats[e].accuracy) << '\n';
    write_file(runner_.artifact(name + ".partial"), os.str());
    for (std::size_t e = 0; e < stats.size(); ++e)
      (*log_) << "  epoch " << e << ": loss " << detail::format_double(stats[e].mean_loss)
              << ", accuracy " << detail::format_double(stats[e].accuracy) << "\n";
  }

  EvalReport write_decisions_and_report(const PairDataset& eval,
                                        const std::vector<std::array<double, 2>>& probs) {
    std::vector<MatchPrediction> combined, base_only, ctx_only;
    std::vector<std::pair<std::size_t, int>> gold;
    std::ostringstream decision_log;
    for (std::size_t i = 0; i < eval.pairs.size(); ++i) {
      const auto& pair = eval.pairs[i];
      if (!pair.label) fail("evaluate: eval pair ", pair.id, " has no gold label");
      gold.emplace_back(pair.id, *pair.label);
      DecisionOptions opts = cfg_.decision;
      opts.ablation = cfg_.ablation;
      auto pred = result_select(probs[i][0], probs[i][1], opts);
      pred.pair_id = pair.id;
      combined.push_back(pred);
      MatchPrediction b;
      b.pair_id = pair.id;
      b.y_hat = probs[i][0];
      b.label_out = probs[i][0] >= 0.5 ? 1 : 0;
      base_only.push_back(b);
      MatchPrediction c;
      c.pair_id = pair.id;
      c.y_bar = probs[i][1];
      c.label_out = probs[i][1] >= 0.5 ? 1 : 0;
      ctx_only.push_back(c);
      decision_log << pair.id << '\t' << pred.label_out << '\n';
    }
    auto report = evaluate(combined, gold);
    auto base_report = evaluate(base_only, gold);
    auto ctx_report = evaluate(ctx_only, gold);

    std::ostringstream os;
    os << "dataset\t" << cfg_.dataset_name << '\n';
    os << "ablation\t" << to_string(cfg_.ablation) << '\n';
    os << "n\t" << report.total() << '\n';
    os << "accuracy\t" << detail::format_double(report.accuracy) << '\n';
    os << "f1\t" << detail::format_double(report.f1) << '\n';
    os << "tp\t" << report.tp << "\nfp\t" << report.fp << "\ntn\t" << report.tn
       << "\nfn\t" << report.fn << '\n';
    os << "baseline_accuracy\t" << detail::format_double(base_report.accuracy) << '\n';
    os << "baseline_f1\t" << detail::format_double(base_report.f1) << '\n';
    os << "matcher_accuracy\t" << detail::format_double(ctx_report.accuracy) << '\n';
    os << "matcher_f1\t" << detail::format_double(ctx_report.f1) << '\n';
    write_file(runner_.artifact("decisions.tsv.partial"), decision_log.str());
    write_file(runner_.artifact("report.tsv.partial"), os.str());

    (*log_) << "  dataset " << cfg_.dataset_name << " (" << report.total()
            << " pairs), ablation " << to_string(cfg_.ablation) << "\n";
    (*log_) << "  accuracy " << detail::format_double(report.accuracy) << ", f1 "
            << detail::format_double(report.f1) << " (baseline acc "
            << detail::format_double(base_report.accuracy) << ", context acc "
            << detail::format_double(ctx_report.accuracy) << ")\n";
    return report;
  }

  RunConfig cfg_;
  StageRunner runner_;
  std::ostream* log_;
};

// Aligned ACC/F1 comparison across completed runs, deltas against the
// "none" row, two decimals (metrics scaled to percentages).
inline std::string report_ablation(const std::vector<fs::path>& run_dirs) {
  if (run_dirs.size() < 2) fail("ablate: need at least 2 completed runs");
  struct Row {
    std::string ablation;
    double acc, f1;
  };
  std::vector<Row> rows;
  std::string dataset;
  for (const auto& dir : run_dirs) {
    auto kv = Pipeline::read_report_map(dir);
    if (dataset.empty())
      dataset = kv.at("dataset");
    else if (dataset != kv.at("dataset"))
      fail("ablate: runs cover different datasets ('", dataset, "' vs '",
           kv.at("dataset"), "')");
    rows.push_back({kv.at("ablation"), std::stod(kv.at("accuracy")) * 100.0,
                    std::stod(kv.at("f1")) * 100.0});
  }
  const Row* base = nullptr;
  for (const auto& r : rows)
    if (r.ablation == "none") base = &r;
  if (!base) fail("ablate: no run with ablation mode 'none' to compare against");

  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof(line), "%-12s %8s %8s %8s %8s\n", "ablation", "ACC", "dACC",
                "F1", "dF1");
  os << "dataset: " << dataset << "\n" << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-12s %8.2f %+8.2f %8.2f %+8.2f\n",
                  r.ablation.c_str(), r.acc, r.acc - base->acc, r.f1, r.f1 - base->f1);
    os << line;
  }
  return os.str();
}

}  // namespace ctxmatch
