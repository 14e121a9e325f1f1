#pragma once

// Ranked lexical retrieval over a context corpus: an inverted index with
// Okapi BM25 scoring. This is the local, reproducible stand-in for a web
// search engine.
//
// Scoring contract (tests and the brute-force oracle both follow it):
//   - query terms are deduplicated and summed in ascending lexicographic
//     order; query term frequency is not used
//   - idf(t) = max(0, ln((N - df + 0.5) / (df + 0.5)))
//   - tf term = tf*(k1+1) / (tf + k1*(1 - b + b*len/avg_len))
//   - retrieve() sorts by descending score, ties by ascending doc id,
//     drops zero scores, and suppresses documents whose text is
//     byte-identical to the query sentence

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ctxmatch/tokenize.hpp"
#include "ctxmatch/util.hpp"

namespace ctxmatch {

struct RetrievalParams {
  double k1 = 1.2;
  double b = 0.75;
  std::size_t top_n = 10;

  void validate() const {
    if (!(k1 > 0)) fail("retrieval: k1 must be positive, got ", k1);
    if (!(b >= 0 && b <= 1)) fail("retrieval: b must be in [0,1], got ", b);
    if (top_n < 1) fail("retrieval: top_n must be at least 1");
  }
};

struct Posting {
  std::size_t doc = 0;
  std::size_t tf = 0;
};

struct ScoredDoc {
  std::size_t doc = 0;
  double score = 0.0;
};

class InvertedIndex {
 public:
  // ordered map keeps serialization and iteration deterministic
  std::map<std::string, std::vector<Posting>> vocabulary;
  std::vector<std::size_t> doc_lengths;
  double avg_doc_length = 0.0;
  std::size_t doc_count = 0;
  std::vector<std::string> documents;  // cleaned texts, id = position
  TokenizeMode mode = TokenizeMode::Word;

  const std::vector<Posting>* postings(const std::string& term) const {
    auto it = vocabulary.find(term);
    return it == vocabulary.end() ? nullptr : &it->second;
  }
};

inline InvertedIndex build_index(const std::vector<std::string>& documents,
                                 TokenizeMode mode = TokenizeMode::Word) {
  if (documents.empty()) fail("build_index: empty document list");
  InvertedIndex index;
  index.mode = mode;
  index.documents = documents;
  index.doc_count = documents.size();
  index.doc_lengths.resize(documents.size());
  std::size_t total = 0;
  for (std::size_t d = 0; d < documents.size(); ++d) {
    auto tokens = tokenize(documents[d], mode);
    index.doc_lengths[d] = tokens.size();
    total += tokens.size();
    std::map<std::string, std::size_t> counts;
    for (auto& t : tokens) ++counts[t];
    for (auto& [term, tf] : counts) index.vocabulary[term].push_back({d, tf});
  }
  index.avg_doc_length = static_cast<double>(total) / static_cast<double>(index.doc_count);
  return index;
}

namespace detail {

inline double bm25_idf(std::size_t doc_count, std::size_t df) {
  double idf = std::log((static_cast<double>(doc_count) - static_cast<double>(df) + 0.5) /
                        (static_cast<double>(df) + 0.5));
  return idf < 0.0 ? 0.0 : idf;
}

inline double bm25_tf_term(double tf, double k1, double b, double len, double avg_len) {
  return tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avg_len));
}

inline std::vector<std::string> sorted_unique(std::vector<std::string> tokens) {
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  return tokens;
}

}  // namespace detail

// BM25 score of one document against a token-list query.
inline double score(const InvertedIndex& index, const RetrievalParams& params,
                    const std::vector<std::string>& query_tokens, std::size_t doc) {
  params.validate();
  if (doc >= index.doc_count)
    fail("score: unknown doc id ", doc, " (doc_count ", index.doc_count, ")");
  double s = 0.0;
  const double len = static_cast<double>(index.doc_lengths[doc]);
  for (const auto& term : detail::sorted_unique(query_tokens)) {
    const auto* posts = index.postings(term);
    if (!posts) continue;
    auto it = std::lower_bound(posts->begin(), posts->end(), doc,
                               [](const Posting& p, std::size_t d) { return p.doc < d; });
    if (it == posts->end() || it->doc != doc) continue;
    s += detail::bm25_idf(index.doc_count, posts->size()) *
         detail::bm25_tf_term(static_cast<double>(it->tf), params.k1, params.b, len,
                              index.avg_doc_length);
  }
  return s;
}

// Top candidates for a sentence. Zero-score documents are excluded, as is
// any document byte-identical to the sentence (a crawled copy of the query
// itself carries no new information).
inline std::vector<ScoredDoc> retrieve(const InvertedIndex& index,
                                       const RetrievalParams& params,
                                       const std::string& sentence) {
  params.validate();
  auto terms = detail::sorted_unique(tokenize(sentence, index.mode));
  std::map<std::size_t, double> acc;
  for (const auto& term : terms) {
    const auto* posts = index.postings(term);
    if (!posts) continue;
    const double idf = detail::bm25_idf(index.doc_count, posts->size());
    for (const auto& p : *posts) {
      acc[p.doc] += idf * detail::bm25_tf_term(
                              static_cast<double>(p.tf), params.k1, params.b,
                              static_cast<double>(index.doc_lengths[p.doc]),
                              index.avg_doc_length);
    }
  }
  std::vector<ScoredDoc> hits;
  hits.reserve(acc.size());
  for (const auto& [doc, s] : acc) {
    if (s <= 0.0) continue;
    if (index.documents[doc] == sentence) continue;
    hits.push_back({doc, s});
  }
  std::sort(hits.begin(), hits.end(), [](const ScoredDoc& x, const ScoredDoc& y) {
    if (x.score != y.score) return x.score > y.score;
    return x.doc < y.doc;
  });
  if (hits.size() > params.top_n) hits.resize(params.top_n);
  return hits;
}

// --- index (de)serialization, versioned text format -------------------
//
//   ctxmatch-index v1
//   mode <word|char>
//   docs <N>
//   doc<TAB><id><TAB><text>           (N lines; cleaned text has no tabs)

inline std::string serialize_index(const InvertedIndex& index) {
  std::ostringstream os;
  os << "ctxmatch-index v1\n";
  os << "mode " << to_string(index.mode) << "\n";
  os << "docs " << index.doc_count << "\n";
  for (std::size_t d = 0; d < index.doc_count; ++d)
    os << "doc\t" << d << "\t" << index.documents[d] << "\n";
  return os.str();
}

// Postings are rebuilt from the stored documents; build_index is
// deterministic so the reload is equivalent to the original.
inline InvertedIndex deserialize_index(const std::string& blob) {
  std::istringstream is(blob);
  std::string line;
  if (!std::getline(is, line) || line != "ctxmatch-index v1")
    fail("index file: bad or missing version header");
  if (!std::getline(is, line) || line.rfind("mode ", 0) != 0)
    fail("index file: missing mode line");
  TokenizeMode mode = tokenize_mode_from_string(line.substr(5));
  if (!std::getline(is, line) || line.rfind("docs ", 0) != 0)
    fail("index file: missing docs line");
  std::size_t n = std::stoull(line.substr(5));
  std::vector<std::string> docs;
  docs.reserve(n);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto fields = split(line, '\t', 3);
    if (fields.size() != 3 || fields[0] != "doc") fail("index file: malformed doc line");
    if (std::stoull(fields[1]) != docs.size()) fail("index file: doc ids out of order");
    docs.push_back(fields[2]);
  }
  if (docs.size() != n) fail("index file: expected ", n, " docs, found ", docs.size());
  return build_index(docs, mode);
}

}  // namespace ctxmatch
