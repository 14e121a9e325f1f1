#pragma once

// Data model for sentence pairs and external contexts, plus the loaders
// and the context cleaning rules.
//
// File formats (UTF-8, LF):
//   pair file:     text_a<TAB>text_b[<TAB>label]   one pair per line
//   context store: sentence_id<TAB>score<TAB>source<TAB>text

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ctxmatch/util.hpp"

namespace ctxmatch {

struct SentencePair {
  std::size_t id = 0;
  std::string text_a;
  std::string text_b;
  std::optional<int> label;  // 0 or 1 when present
};

struct Context {
  std::string sentence_id;
  std::string text;
  double retrieval_score = 0.0;
  std::string source;
};

struct PairDataset {
  std::string name;
  std::vector<SentencePair> pairs;
};

using ContextStore = std::map<std::string, std::vector<Context>>;

// Cleaning is rule-based and idempotent: tag stripping, control character
// removal, personal-information masking, whitespace collapsing. Texts that
// end up shorter than min_length codepoints are rejected (a normal outcome).
struct CleaningRules {
  bool strip_tags = true;
  std::size_t phone_min_digits = 7;
  bool mask_emails = true;
  std::string mask_token = "<MASK>";
  std::size_t min_length = 4;  // in codepoints
};

namespace detail {

inline std::size_t utf8_length(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++n;
  return n;
}

inline bool is_email_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
         c == '.' || c == '_' || c == '%' || c == '+' || c == '-';
}

// An email-like token: 1+ address chars, '@', then a domain containing at
// least one '.' with alphanumerics around it.
inline bool looks_like_email(std::string_view tok) {
  auto at = tok.find('@');
  if (at == std::string_view::npos || at == 0 || at + 1 >= tok.size()) return false;
  if (tok.find('@', at + 1) != std::string_view::npos) return false;
  for (char c : tok.substr(0, at))
    if (!is_email_char(c)) return false;
  std::string_view domain = tok.substr(at + 1);
  auto dot = domain.rfind('.');
  if (dot == std::string_view::npos || dot == 0 || dot + 1 >= domain.size()) return false;
  for (char c : domain)
    if (!is_email_char(c) || c == '@') return false;
  return true;
}

inline bool is_space_byte(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace detail

// Scans s for PII (digit runs of at least phone_min_digits, email-like
// tokens). Exposed so tests can assert the no-PII invariant on loaded
// stores with the same definition the cleaner uses.
inline bool contains_pii(std::string_view s, const CleaningRules& rules) {
  std::size_t digits = 0;
  for (char c : s) {
    if (c >= '0' && c <= '9') {
      if (++digits >= rules.phone_min_digits) return true;
    } else {
      digits = 0;
    }
  }
  if (rules.mask_emails) {
    std::size_t i = 0;
    while (i < s.size()) {
      while (i < s.size() && detail::is_space_byte(s[i])) ++i;
      std::size_t j = i;
      while (j < s.size() && !detail::is_space_byte(s[j])) ++j;
      if (j > i && detail::looks_like_email(s.substr(i, j - i))) return true;
      i = j;
    }
  }
  return false;
}

// Cleans one raw snippet. Returns nullopt when the cleaned text falls below
// the minimum length; that is a rejection, not an error.
inline std::optional<std::string> clean_context(std::string_view raw,
                                                const CleaningRules& rules = {}) {
  std::string s(raw);

  if (rules.strip_tags) {
    // Drop <...> spans, except occurrences of the mask token itself so
    // cleaning stays idempotent.
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
      if (s[i] == '<') {
        if (s.compare(i, rules.mask_token.size(), rules.mask_token) == 0) {
          out += rules.mask_token;
          i += rules.mask_token.size();
          continue;
        }
        auto close = s.find('>', i + 1);
        if (close != std::string::npos) {
          i = close + 1;
          continue;
        }
      }
      out.push_back(s[i]);
      ++i;
    }
    s = std::move(out);
  }

  // Control characters go away and whitespace runs collapse before the PII
  // scans, so token boundaries are already in canonical form when the
  // masking rules look at them (this is what makes cleaning idempotent).
  {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (unsigned char c : s) {
      if (detail::is_space_byte(static_cast<char>(c))) {
        pending_space = !out.empty();
        continue;
      }
      if (c < 0x20 || c == 0x7F) continue;
      if (pending_space) {
        out.push_back(' ');
        pending_space = false;
      }
      out.push_back(static_cast<char>(c));
    }
    s = std::move(out);
  }

  if (rules.mask_emails) {
    std::string out;
    std::size_t i = 0;
    while (i < s.size()) {
      if (detail::is_space_byte(s[i])) {
        out.push_back(s[i]);
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < s.size() && !detail::is_space_byte(s[j])) ++j;
      std::string_view tok(s.data() + i, j - i);
      if (detail::looks_like_email(tok))
        out += rules.mask_token;
      else
        out.append(tok);
      i = j;
    }
    s = std::move(out);
  }

  if (rules.phone_min_digits > 0) {
    std::string out;
    std::size_t i = 0;
    while (i < s.size()) {
      if (s[i] >= '0' && s[i] <= '9') {
        std::size_t j = i;
        while (j < s.size() && s[j] >= '0' && s[j] <= '9') ++j;
        if (j - i >= rules.phone_min_digits)
          out += rules.mask_token;
        else
          out.append(s, i, j - i);
        i = j;
      } else {
        out.push_back(s[i]);
        ++i;
      }
    }
    s = std::move(out);
  }

  if (detail::utf8_length(s) < rules.min_length) return std::nullopt;
  return s;
}

// Loads a TSV pair file. Lines that are empty (after trimming) are skipped;
// ids are assigned 0..n-1 over the surviving lines in file order.
inline PairDataset load_pair_dataset(const std::filesystem::path& path, bool has_labels,
                                     std::string name = {}) {
  PairDataset ds;
  ds.name = name.empty() ? path.filename().string() : std::move(name);
  auto lines = read_lines(path);
  const std::size_t want = has_labels ? 3 : 2;
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (trim(lines[ln]).empty()) continue;
    auto fields = split(lines[ln], '\t');
    if (fields.size() != want)
      fail(path.string(), ":", ln + 1, ": expected ", want, " tab-separated fields, got ",
           fields.size());
    SentencePair p;
    p.id = ds.pairs.size();
    p.text_a = trim(fields[0]);
    p.text_b = trim(fields[1]);
    if (p.text_a.empty() || p.text_b.empty())
      fail(path.string(), ":", ln + 1, ": empty sentence text");
    if (has_labels) {
      if (fields[2] == "0")
        p.label = 0;
      else if (fields[2] == "1")
        p.label = 1;
      else
        fail(path.string(), ":", ln + 1, ": label must be 0 or 1, got '", fields[2], "'");
    }
    ds.pairs.push_back(std::move(p));
  }
  return ds;
}

// Loads a context store file. Every context is passed through
// clean_context; rejected ones are dropped. Within each sentence group the
// order is descending retrieval score, ties broken by ascending text.
inline ContextStore load_context_store(const std::filesystem::path& path,
                                       const CleaningRules& rules = {}) {
  ContextStore store;
  auto lines = read_lines(path);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (trim(lines[ln]).empty()) continue;
    auto fields = split(lines[ln], '\t', 4);
    if (fields.size() != 4)
      fail(path.string(), ":", ln + 1, ": expected 4 tab-separated fields, got ",
           fields.size());
    Context c;
    c.sentence_id = fields[0];
    try {
      std::size_t used = 0;
      c.retrieval_score = std::stod(fields[1], &used);
      if (used != fields[1].size()) throw std::invalid_argument("trailing junk");
    } catch (const std::exception&) {
      fail(path.string(), ":", ln + 1, ": unparsable score '", fields[1], "'");
    }
    if (!(c.retrieval_score >= 0.0))
      fail(path.string(), ":", ln + 1, ": retrieval score must be non-negative");
    c.source = fields[2];
    auto cleaned = clean_context(fields[3], rules);
    if (!cleaned) continue;
    c.text = std::move(*cleaned);
    store[c.sentence_id].push_back(std::move(c));
  }
  for (auto& [id, group] : store) {
    std::stable_sort(group.begin(), group.end(), [](const Context& x, const Context& y) {
      if (x.retrieval_score != y.retrieval_score)
        return x.retrieval_score > y.retrieval_score;
      return x.text < y.text;
    });
  }
  return store;
}

}  // namespace ctxmatch
