#pragma once

// Token vocabulary with a fixed reserved block. Ids are dense and assigned
// deterministically: reserved tokens first, then corpus tokens by
// descending frequency with lexicographic tie-break.

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "ctxmatch/tokenize.hpp"
#include "ctxmatch/util.hpp"

namespace ctxmatch {

class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kCls = 2;
  static constexpr std::size_t kSep = 3;
  static constexpr std::size_t kMask = 4;
  static constexpr std::size_t kReserved = 5;

  Vocabulary() = default;
  Vocabulary(std::vector<std::string> tokens, TokenizeMode mode)
      : tokens_(std::move(tokens)), mode_(mode) {
    for (std::size_t i = 0; i < tokens_.size(); ++i) ids_[tokens_[i]] = kReserved + i;
  }

  std::size_t size() const { return kReserved + tokens_.size(); }
  TokenizeMode mode() const { return mode_; }

  std::size_t id_of(const std::string& token) const {
    if (token == "<mask>") return kMask;
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
  }

  // tokens after the reserved block, in id order
  const std::vector<std::string>& corpus_tokens() const { return tokens_; }

  // One token per line; the n-th line holds the token whose id is
  // kReserved + n - 1. The tokenize mode is carried by the run config, not
  // the file.
  std::string serialize() const {
    std::string out;
    for (const auto& t : tokens_) {
      out += t;
      out += "\n";
    }
    return out;
  }

  static Vocabulary deserialize(const std::string& blob, TokenizeMode mode) {
    std::istringstream is(blob);
    std::string line;
    std::vector<std::string> tokens;
    while (std::getline(is, line))
      if (!line.empty()) tokens.push_back(line);
    return Vocabulary(std::move(tokens), mode);
  }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t> ids_;
  TokenizeMode mode_ = TokenizeMode::Word;
};

// Builds a vocabulary over a text corpus. Tokens seen fewer than min_freq
// times are excluded (default keeps everything).
inline Vocabulary build_vocabulary(const std::vector<std::string>& texts,
                                   TokenizeMode mode, std::size_t min_freq = 1) {
  if (texts.empty()) fail("build_vocabulary: empty corpus");
  std::map<std::string, std::size_t> freq;
  for (const auto& text : texts)
    for (auto& tok : tokenize(text, mode)) {
      if (tok == "<mask>") continue;  // reserved
      ++freq[tok];
    }
  std::vector<std::pair<std::string, std::size_t>> entries(freq.begin(), freq.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens;
  for (auto& [tok, count] : entries)
    if (count >= min_freq) tokens.push_back(tok);
  return Vocabulary(std::move(tokens), mode);
}

// [CLS] tokens [SEP], truncated so the total length never exceeds
// max_seq_len and [SEP] stays last.
inline std::vector<std::size_t> encode_ids(const Vocabulary& vocab,
                                           const std::string& text,
                                           std::size_t max_seq_len) {
  if (max_seq_len < 2) fail("encode_ids: max_seq_len must be at least 2");
  std::vector<std::size_t> ids;
  ids.push_back(Vocabulary::kCls);
  for (auto& tok : tokenize(text, vocab.mode())) {
    if (ids.size() == max_seq_len - 1) break;
    ids.push_back(vocab.id_of(tok));
  }
  ids.push_back(Vocabulary::kSep);
  return ids;
}

// [CLS] seg1 [SEP] seg2 [SEP] ... segN [SEP], truncated with [SEP] last.
inline std::vector<std::size_t> encode_joint_ids(const Vocabulary& vocab,
                                                 const std::vector<std::string>& segments,
                                                 std::size_t max_seq_len) {
  if (max_seq_len < 2) fail("encode_joint_ids: max_seq_len must be at least 2");
  std::vector<std::size_t> ids;
  ids.push_back(Vocabulary::kCls);
  for (const auto& segment : segments) {
    for (auto& tok : tokenize(segment, vocab.mode())) {
      if (ids.size() >= max_seq_len - 1) break;
      ids.push_back(vocab.id_of(tok));
    }
    if (ids.size() >= max_seq_len - 1) break;
    ids.push_back(Vocabulary::kSep);
  }
  if (ids.back() != Vocabulary::kSep) ids.push_back(Vocabulary::kSep);
  return ids;
}

inline void pad_to(std::vector<std::size_t>& ids, std::size_t width) {
  while (ids.size() < width) ids.push_back(Vocabulary::kPad);
}

}  // namespace ctxmatch
