#include "buglistener/text.hpp"

#include <algorithm>
#include <cctype>

namespace bl::text {

namespace {

bool all_ascii_alpha(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isalpha(c) != 0;
  });
}

bool is_vowel(char c) {
  return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
}

bool has_vowel(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](char c) { return is_vowel(c); });
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Drops a doubled final consonant ("runn" -> "run"); l and s doubles stay
// because they are usually part of the lemma (fall, miss).
std::string undouble(std::string s) {
  if (s.size() >= 3 && s[s.size() - 1] == s[s.size() - 2] &&
      !is_vowel(s.back()) && s.back() != 'l' && s.back() != 's') {
    s.pop_back();
  }
  return s;
}

std::unordered_map<std::string, std::string> parse_pair_lines(
    const std::vector<std::string>& lines) {
  std::unordered_map<std::string, std::string> out;
  for (const auto& line : lines) {
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) continue;
    out[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return out;
}

}  // namespace

const char* placeholder_token(Placeholder p) {
  switch (p) {
    case Placeholder::kUrl: return "[URL]";
    case Placeholder::kEmail: return "[EMAIL]";
    case Placeholder::kHtml: return "[HTML]";
    case Placeholder::kCode: return "[CODE]";
    case Placeholder::kVersion: return "[VERSION]";
  }
  return "";
}

std::optional<Placeholder> parse_placeholder_token(std::string_view token) {
  if (token == "[URL]") return Placeholder::kUrl;
  if (token == "[EMAIL]") return Placeholder::kEmail;
  if (token == "[HTML]") return Placeholder::kHtml;
  if (token == "[CODE]") return Placeholder::kCode;
  if (token == "[VERSION]") return Placeholder::kVersion;
  return std::nullopt;
}

bool is_placeholder_token(std::string_view token) {
  return parse_placeholder_token(token).has_value();
}

NormalizerResources NormalizerResources::load(
    const std::filesystem::path& data_dir) {
  NormalizerResources res;
  for (const auto& line : read_lines(data_dir / "stopwords_en.txt")) {
    if (!line.empty() && line[0] != '#') res.stopwords.insert(line);
  }
  res.contractions = parse_pair_lines(read_lines(data_dir / "contractions.tsv"));
  for (const auto& line : read_lines(data_dir / "emoji_map.tsv")) {
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) continue;
    res.emoji.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  res.lemma_exceptions =
      parse_pair_lines(read_lines(data_dir / "lemma_exceptions.tsv"));
  for (const auto& line : read_lines(data_dir / "english_words.txt")) {
    if (!line.empty() && line[0] != '#') res.english_words.insert(line);
  }
  // Stopwords are strong English evidence; fold them into the lexicon.
  for (const auto& w : res.stopwords) res.english_words.insert(w);
  return res;
}

TextNormalizer::TextNormalizer(NormalizerResources res)
    : res_(std::move(res)),
      re_placeholder_(R"(\[(?:URL|EMAIL|HTML|CODE|VERSION)\])"),
      re_fenced_code_(R"(```[\s\S]*?```)"),
      re_inline_code_(R"(`[^`\n]+`)"),
      re_url_(R"([A-Za-z][A-Za-z0-9+.\-]*://[^\s]+)"),
      re_email_(R"([A-Za-z0-9._%+\-]+@[A-Za-z0-9.\-]+\.[A-Za-z]{2,})"),
      re_html_(R"(</?[A-Za-z!][^<>\n]*>)"),
      re_version_(
          R"((?:\bv[0-9]+(?:\.[0-9]+)+|\b[0-9]+\.[0-9]+(?:\.[0-9]+)+)\b)") {}

namespace {

struct Seg {
  std::string text;
  std::optional<Placeholder> ph;
};

void apply_regex_to_segments(std::vector<Seg>& segs, const std::regex& re,
                             std::optional<Placeholder> tag_as,
                             Placeholder substitute_as,
                             PlaceholderSet* fired, std::size_t* chars) {
  std::vector<Seg> out;
  for (auto& seg : segs) {
    if (seg.ph) {
      out.push_back(std::move(seg));
      continue;
    }
    const std::string& s = seg.text;
    auto begin = std::sregex_iterator(s.begin(), s.end(), re);
    auto end = std::sregex_iterator();
    std::size_t last = 0;
    for (auto it = begin; it != end; ++it) {
      const auto& m = *it;
      auto pos = static_cast<std::size_t>(m.position(0));
      auto len = static_cast<std::size_t>(m.length(0));
      if (pos > last) out.push_back({s.substr(last, pos - last), std::nullopt});
      Placeholder ph = substitute_as;
      if (tag_as) {
        // re-protecting an existing placeholder token: keep its own kind
        ph = *parse_placeholder_token(m.str(0));
      }
      out.push_back({placeholder_token(ph), ph});
      if (!tag_as && fired) fired->insert(ph);
      if (chars) *chars += len;
      last = pos + len;
    }
    if (last < s.size()) out.push_back({s.substr(last), std::nullopt});
  }
  segs = std::move(out);
}

// Runs of >= 2 lines indented by a tab or four spaces read as pasted code
// or stack traces.
void substitute_indented_runs(std::vector<Seg>& segs, PlaceholderSet* fired,
                              std::size_t* chars) {
  std::vector<Seg> out;
  for (auto& seg : segs) {
    if (seg.ph) {
      out.push_back(std::move(seg));
      continue;
    }
    const std::string& s = seg.text;
    std::vector<std::pair<std::size_t, std::size_t>> lines;  // [start, end)
    std::size_t pos = 0;
    while (pos <= s.size()) {
      std::size_t nl = s.find('\n', pos);
      std::size_t end = (nl == std::string::npos) ? s.size() : nl;
      lines.emplace_back(pos, end);
      if (nl == std::string::npos) break;
      pos = nl + 1;
    }
    auto indented = [&](std::size_t li) {
      std::string_view line(s.data() + lines[li].first,
                            lines[li].second - lines[li].first);
      return line.starts_with("\t") || line.starts_with("    ");
    };
    std::size_t emit_from = 0;
    std::size_t li = 0;
    while (li < lines.size()) {
      if (!indented(li)) {
        ++li;
        continue;
      }
      std::size_t run_end = li;
      while (run_end < lines.size() && indented(run_end)) ++run_end;
      if (run_end - li >= 2) {
        std::size_t start = lines[li].first;
        std::size_t stop = lines[run_end - 1].second;
        if (start > emit_from)
          out.push_back({s.substr(emit_from, start - emit_from), std::nullopt});
        out.push_back({placeholder_token(Placeholder::kCode),
                       Placeholder::kCode});
        if (fired) fired->insert(Placeholder::kCode);
        if (chars) *chars += stop - start;
        emit_from = stop;
      }
      li = run_end;
    }
    if (emit_from < s.size())
      out.push_back({s.substr(emit_from), std::nullopt});
  }
  segs = std::move(out);
}

}  // namespace

std::vector<TextNormalizer::Segment> TextNormalizer::substitute(
    std::string_view raw, PlaceholderSet* fired,
    std::size_t* code_chars) const {
  std::vector<Seg> segs{{std::string(raw), std::nullopt}};
  // Protect placeholder tokens already present so normalization is idempotent.
  apply_regex_to_segments(segs, re_placeholder_, Placeholder::kUrl,
                          Placeholder::kUrl, nullptr, nullptr);
  apply_regex_to_segments(segs, re_fenced_code_, std::nullopt,
                          Placeholder::kCode, fired, code_chars);
  substitute_indented_runs(segs, fired, code_chars);
  apply_regex_to_segments(segs, re_inline_code_, std::nullopt,
                          Placeholder::kCode, fired, code_chars);
  apply_regex_to_segments(segs, re_url_, std::nullopt, Placeholder::kUrl,
                          fired, nullptr);
  apply_regex_to_segments(segs, re_email_, std::nullopt, Placeholder::kEmail,
                          fired, nullptr);
  apply_regex_to_segments(segs, re_html_, std::nullopt, Placeholder::kHtml,
                          fired, nullptr);
  apply_regex_to_segments(segs, re_version_, std::nullopt,
                          Placeholder::kVersion, fired, nullptr);

  std::vector<Segment> out;
  out.reserve(segs.size());
  for (auto& s : segs) out.push_back({std::move(s.text), s.ph});
  return out;
}

namespace {

void replace_emoji(std::string& s,
                   const std::vector<std::pair<std::string, std::string>>& map) {
  for (const auto& [emoji, ascii] : map) {
    std::size_t pos = 0;
    while ((pos = s.find(emoji, pos)) != std::string::npos) {
      std::string repl = " " + ascii + " ";
      s.replace(pos, emoji.size(), repl);
      pos += repl.size();
    }
  }
}

void expand_contractions(
    std::string& s,
    const std::unordered_map<std::string, std::string>& map) {
  auto words = split_ws(s);
  bool changed = false;
  for (auto& w : words) {
    // contraction cores may carry trailing punctuation ("don't,")
    std::size_t end = w.size();
    while (end > 0 && (std::ispunct(static_cast<unsigned char>(w[end - 1])) &&
                       w[end - 1] != '\''))
      --end;
    auto it = map.find(w.substr(0, end));
    if (it != map.end()) {
      w = it->second + w.substr(end);
      changed = true;
    }
  }
  if (changed) s = join(words);
}

std::string collapse_spaces_keep_newlines(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (c == '\n') {
      while (!out.empty() && out.back() == ' ') out.pop_back();
      out += '\n';
      pending_space = false;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = true;
    } else {
      if (pending_space && !out.empty() && out.back() != '\n') out += ' ';
      out += c;
      pending_space = false;
    }
  }
  while (!out.empty() &&
         (out.back() == ' ' || out.back() == '\n'))
    out.pop_back();
  return out;
}

}  // namespace

NormalizedText TextNormalizer::normalize_light(std::string_view raw) const {
  PlaceholderSet fired;
  auto segs = substitute(raw, &fired, nullptr);
  std::string assembled;
  for (auto& seg : segs) {
    if (seg.ph) {
      if (!assembled.empty() && assembled.back() != ' ' &&
          assembled.back() != '\n')
        assembled += ' ';
      assembled += seg.text;
      assembled += ' ';
    } else {
      std::string t = seg.text;
      replace_emoji(t, res_.emoji);
      t = lowercase_ascii(t);
      expand_contractions(t, res_.contractions);
      assembled += t;
    }
  }
  return {collapse_spaces_keep_newlines(assembled), std::move(fired)};
}

NormalizedText TextNormalizer::normalize(std::string_view raw) const {
  NormalizedText light = normalize_light(raw);
  std::vector<std::string> kept;
  for (auto& tok : tokenize(light.text)) {
    if (is_placeholder_token(tok)) {
      kept.push_back(std::move(tok));
      continue;
    }
    std::string lemma = lemmatize(tok);
    if (lemma.empty() || is_stopword(lemma)) continue;
    kept.push_back(std::move(lemma));
  }
  return {join(kept), std::move(light.placeholders)};
}

std::size_t TextNormalizer::code_char_count(std::string_view raw) const {
  std::size_t chars = 0;
  PlaceholderSet fired;
  substitute(raw, &fired, &chars);
  return chars;
}

bool TextNormalizer::looks_english(
    const std::vector<std::string>& tokens) const {
  std::size_t alpha = 0, english = 0;
  for (const auto& t : tokens) {
    if (!all_ascii_alpha(t)) continue;
    ++alpha;
    if (res_.english_words.count(t) || res_.english_words.count(lemmatize(t)))
      ++english;
  }
  if (alpha == 0) return false;
  return 2 * english >= alpha;
}

std::string TextNormalizer::lemmatize(const std::string& word) const {
  auto it = res_.lemma_exceptions.find(word);
  if (it != res_.lemma_exceptions.end()) return it->second;
  if (word.size() < 4 || !all_ascii_alpha(word)) return word;
  const std::string& w = word;
  std::size_t n = w.size();
  if (ends_with(w, "sses")) return w.substr(0, n - 2);
  if (ends_with(w, "ies") && n > 4) return w.substr(0, n - 3) + "y";
  if (ends_with(w, "xes") || ends_with(w, "ches") || ends_with(w, "shes") ||
      ends_with(w, "zes") || ends_with(w, "oes"))
    return w.substr(0, n - 2);
  if (ends_with(w, "ss") || ends_with(w, "us") || ends_with(w, "is")) return w;
  if (ends_with(w, "s")) return w.substr(0, n - 1);
  if (ends_with(w, "ing") && n >= 6 && has_vowel(w.substr(0, n - 3)))
    return undouble(w.substr(0, n - 3));
  if (ends_with(w, "ed") && n >= 5 && has_vowel(w.substr(0, n - 2)))
    return undouble(w.substr(0, n - 2));
  return w;
}

bool TextNormalizer::is_stopword(const std::string& word) const {
  return res_.stopwords.count(word) != 0;
}

std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> out;
  for (auto& raw_tok : split_ws(s)) {
    if (is_placeholder_token(raw_tok)) {
      out.push_back(std::move(raw_tok));
      continue;
    }
    std::size_t b = 0, e = raw_tok.size();
    auto strippable = [&](char c) {
      return std::ispunct(static_cast<unsigned char>(c)) && c != '[' &&
             c != ']';
    };
    while (b < e && strippable(raw_tok[b])) ++b;
    while (e > b && strippable(raw_tok[e - 1])) --e;
    if (e > b) out.push_back(raw_tok.substr(b, e - b));
  }
  return out;
}

std::vector<std::string> split_sentence_texts(std::string_view light_text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    while (!cur.empty() && cur.front() == ' ') cur.erase(cur.begin());
    while (!cur.empty() && cur.back() == ' ') cur.pop_back();
    if (!cur.empty()) out.push_back(cur);
    cur.clear();
  };
  for (char c : light_text) {
    if (c == '.' || c == '!' || c == '?' || c == '\n') {
      flush();
    } else {
      cur += c;
    }
  }
  flush();
  return out;
}

}  // namespace bl::text
