#pragma once

#include <filesystem>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "buglistener/common.hpp"

namespace bl::text {

// The five low-frequency token categories that get replaced by bracketed
// placeholders during normalization.
enum class Placeholder { kUrl, kEmail, kHtml, kCode, kVersion };

using PlaceholderSet = std::set<Placeholder>;

const char* placeholder_token(Placeholder p);
std::optional<Placeholder> parse_placeholder_token(std::string_view token);
bool is_placeholder_token(std::string_view token);

// Pinned resource tables. All of them live as plain files under data/ so
// the exact lists used by a run are recorded in the repository.
struct NormalizerResources {
  std::unordered_set<std::string> stopwords;
  std::unordered_map<std::string, std::string> contractions;
  std::vector<std::pair<std::string, std::string>> emoji;  // utf-8 -> ascii
  std::unordered_map<std::string, std::string> lemma_exceptions;
  std::unordered_set<std::string> english_words;

  static NormalizerResources load(const std::filesystem::path& data_dir);
};

struct NormalizedText {
  std::string text;
  PlaceholderSet placeholders;
};

class TextNormalizer {
 public:
  explicit TextNormalizer(NormalizerResources res);

  // Full pipeline: placeholder substitution, emoji replacement, lowercase,
  // contraction expansion, tokenization, lemmatization, stopword removal.
  // Total and idempotent: normalize(normalize(x).text) == normalize(x).
  NormalizedText normalize(std::string_view raw) const;

  // Substitutions, emoji, lowercase and contractions only. Punctuation,
  // stopwords and newlines survive; sentence segmentation runs on this form.
  NormalizedText normalize_light(std::string_view raw) const;

  // Characters of `raw` consumed by code/stack-trace substitutions.
  std::size_t code_char_count(std::string_view raw) const;

  // >= 50% of ASCII-alphabetic tokens appear in the English lexicon.
  bool looks_english(const std::vector<std::string>& tokens) const;

  std::string lemmatize(const std::string& word) const;
  bool is_stopword(const std::string& word) const;

  const NormalizerResources& resources() const { return res_; }

 private:
  struct Segment {
    std::string text;
    std::optional<Placeholder> ph;
  };

  std::vector<Segment> substitute(std::string_view raw,
                                  PlaceholderSet* fired,
                                  std::size_t* code_chars) const;

  NormalizerResources res_;
  std::regex re_placeholder_;
  std::regex re_fenced_code_;
  std::regex re_inline_code_;
  std::regex re_url_;
  std::regex re_email_;
  std::regex re_html_;
  std::regex re_version_;
};

// Whitespace tokenization with leading/trailing punctuation stripped from
// each token. Placeholder tokens pass through untouched.
std::vector<std::string> tokenize(std::string_view s);

// Sentence boundaries: runs of . ! ? and newlines. Placeholders are atomic
// and never split. Empty pieces are dropped.
std::vector<std::string> split_sentence_texts(std::string_view light_text);

}  // namespace bl::text
