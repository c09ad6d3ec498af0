#include "buglistener/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace bl {

using nlohmann::json;
using nlohmann::ordered_json;

const char* role_name(Role r) {
  return r == Role::kReporter ? "REPORTER" : "DISCUSSANT";
}

const char* dialog_label_name(DialogLabel l) {
  return l == DialogLabel::kBr ? "BR" : "NBR";
}

DialogLabel parse_dialog_label(std::string_view s) {
  if (s == "BR") return DialogLabel::kBr;
  if (s == "NBR") return DialogLabel::kNbr;
  fail(ErrorCode::kSchema, "unknown dialog label: " + std::string(s));
}

const Utterance* Dialog::find(const std::string& utterance_id) const {
  for (const auto& u : utterances)
    if (u.id == utterance_id) return &u;
  return nullptr;
}

namespace {

bool days_in_month_ok(int year, int month, int day) {
  static const int dim[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (month < 1 || month > 12 || day < 1) return false;
  int max_day = dim[month - 1];
  bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
  if (month == 2 && leap) max_day = 29;
  return day <= max_day;
}

std::int64_t days_from_civil(int y, int m, int d) {
  // Howard Hinnant's algorithm; proleptic Gregorian, epoch 1970-01-01.
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097LL + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<int>(yoe) + static_cast<int>(era) * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y += m <= 2;
}

}  // namespace

std::int64_t parse_iso8601_us(const std::string& s) {
  int year, month, day, hour, minute, second;
  int consumed = 0;
  if (std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%n", &year, &month, &day,
                  &hour, &minute, &second, &consumed) != 6 ||
      consumed != 19) {
    fail(ErrorCode::kParse, "bad ISO-8601 timestamp: " + s);
  }
  if (!days_in_month_ok(year, month, day) || hour > 23 || minute > 59 ||
      second > 60) {
    fail(ErrorCode::kParse, "out-of-range ISO-8601 timestamp: " + s);
  }
  std::size_t pos = 19;
  std::int64_t micros = 0;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    std::int64_t scale = 100000;
    std::size_t digits = 0;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
      if (digits < 6) micros += (s[pos] - '0') * scale;
      scale /= 10;
      ++digits;
      ++pos;
    }
    if (digits == 0) fail(ErrorCode::kParse, "bad fractional seconds: " + s);
  }
  std::int64_t offset_s = 0;
  if (pos == s.size()) {
    // no zone designator: read as UTC
  } else if (s[pos] == 'Z' && pos + 1 == s.size()) {
    // UTC
  } else if (s[pos] == '+' || s[pos] == '-') {
    int oh = 0, om = 0, n = 0;
    if (std::sscanf(s.c_str() + pos + 1, "%2d:%2d%n", &oh, &om, &n) != 2 ||
        pos + 1 + n != s.size() || oh > 14 || om > 59) {
      fail(ErrorCode::kParse, "bad timezone offset: " + s);
    }
    offset_s = (oh * 3600 + om * 60) * (s[pos] == '+' ? 1 : -1);
  } else {
    fail(ErrorCode::kParse, "trailing junk in timestamp: " + s);
  }
  std::int64_t days = days_from_civil(year, month, day);
  std::int64_t secs =
      days * 86400 + hour * 3600 + minute * 60 + second - offset_s;
  return secs * 1000000 + micros;
}

std::string format_iso8601_us(std::int64_t us) {
  std::int64_t secs = us / 1000000;
  std::int64_t micros = us % 1000000;
  if (micros < 0) {
    micros += 1000000;
    secs -= 1;
  }
  std::int64_t days = secs / 86400;
  std::int64_t rem = secs % 86400;
  if (rem < 0) {
    rem += 86400;
    days -= 1;
  }
  int y;
  unsigned m, d;
  civil_from_days(days, y, m, d);
  char buf[64];
  if (micros == 0) {
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", y, m,
                  d, static_cast<long long>(rem / 3600),
                  static_cast<long long>((rem / 60) % 60),
                  static_cast<long long>(rem % 60));
  } else {
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:%02lld:%02lld.%06lldZ",
                  y, m, d, static_cast<long long>(rem / 3600),
                  static_cast<long long>((rem / 60) % 60),
                  static_cast<long long>(rem % 60),
                  static_cast<long long>(micros));
  }
  return buf;
}

namespace {

json placeholders_to_json(const text::PlaceholderSet& ps) {
  json arr = json::array();
  for (auto p : ps) arr.push_back(text::placeholder_token(p));
  return arr;
}

text::PlaceholderSet placeholders_from_json(const json& arr) {
  text::PlaceholderSet ps;
  for (const auto& v : arr) {
    auto p = text::parse_placeholder_token(v.get<std::string>());
    if (!p) fail(ErrorCode::kSchema, "unknown placeholder: " + v.dump());
    ps.insert(*p);
  }
  return ps;
}

ordered_json utterance_to_json(const Utterance& u) {
  ordered_json j;
  j["id"] = u.id;
  j["timestamp"] = format_iso8601_us(u.timestamp_us);
  j["author"] = u.author;
  j["text"] = u.raw_text;
  if (!u.reply_to_ids.empty()) j["reply_to_ids"] = u.reply_to_ids;
  j["normalized_text"] = u.text;
  j["placeholders"] = placeholders_to_json(u.placeholders);
  j["role"] = role_name(u.role);
  return j;
}

Utterance utterance_from_json(const json& j, const text::TextNormalizer* norm,
                              int line_no) {
  auto ctx = [&](const std::string& what) {
    return "line " + std::to_string(line_no) + ": " + what;
  };
  for (const char* field : {"id", "timestamp", "author", "text"}) {
    if (!j.contains(field))
      fail(ErrorCode::kParse, ctx(std::string("missing field '") + field + "'"));
    if (!j.at(field).is_string())
      fail(ErrorCode::kParse,
           ctx(std::string("field '") + field + "' must be a string"));
  }
  Utterance u;
  u.id = j.at("id").get<std::string>();
  u.timestamp_us = parse_iso8601_us(j.at("timestamp").get<std::string>());
  u.author = j.at("author").get<std::string>();
  u.raw_text = j.at("text").get<std::string>();
  if (j.contains("reply_to_ids")) {
    if (!j.at("reply_to_ids").is_array())
      fail(ErrorCode::kParse, ctx("reply_to_ids must be an array"));
    for (const auto& r : j.at("reply_to_ids"))
      u.reply_to_ids.push_back(r.get<std::string>());
  }
  if (j.contains("normalized_text") && j.contains("placeholders")) {
    u.text = j.at("normalized_text").get<std::string>();
    u.placeholders = placeholders_from_json(j.at("placeholders"));
  } else if (norm) {
    auto n = norm->normalize(u.raw_text);
    u.text = std::move(n.text);
    u.placeholders = std::move(n.placeholders);
  }
  if (j.contains("role"))
    u.role = j.at("role").get<std::string>() == "REPORTER" ? Role::kReporter
                                                           : Role::kDiscussant;
  return u;
}

}  // namespace

ChatLog parse_chat_log(const std::string& jsonl,
                       const text::TextNormalizer& norm) {
  ChatLog log;
  std::unordered_set<std::string> seen;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= jsonl.size()) {
    std::size_t nl = jsonl.find('\n', pos);
    std::string_view line(jsonl.data() + pos,
                          (nl == std::string::npos ? jsonl.size() : nl) - pos);
    pos = (nl == std::string::npos) ? jsonl.size() + 1 : nl + 1;
    ++line_no;
    if (line.empty() ||
        line.find_first_not_of(" \t\r") == std::string_view::npos)
      continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      fail(ErrorCode::kParse,
           "line " + std::to_string(line_no) + ": malformed JSON");
    Utterance u = utterance_from_json(j, &norm, line_no);
    if (!seen.insert(u.id).second)
      fail(ErrorCode::kValidation, "line " + std::to_string(line_no) +
                                       ": duplicate utterance id '" + u.id +
                                       "'");
    log.utterances.push_back(std::move(u));
  }
  std::stable_sort(log.utterances.begin(), log.utterances.end(),
                   [](const Utterance& a, const Utterance& b) {
                     return a.timestamp_us < b.timestamp_us;
                   });
  return log;
}

std::string serialize_chat_log(const ChatLog& log) {
  std::string out;
  for (const auto& u : log.utterances) {
    out += utterance_to_json(u).dump();
    out += '\n';
  }
  return out;
}

void assign_roles(std::vector<Utterance>& utterances) {
  if (utterances.empty()) return;
  const std::string& reporter = utterances.front().author;
  for (auto& u : utterances)
    u.role = (u.author == reporter) ? Role::kReporter : Role::kDiscussant;
}

std::vector<Dialog> filter_dialogs(const std::vector<Dialog>& dialogs,
                                   const DialogFilterConfig& cfg,
                                   const text::TextNormalizer& norm) {
  std::unordered_set<std::string> bots(cfg.bot_authors.begin(),
                                       cfg.bot_authors.end());
  std::vector<Dialog> kept;
  for (const auto& d : dialogs) {
    if (d.utterances.empty()) continue;

    bool all_bot = !bots.empty();
    for (const auto& u : d.utterances)
      if (!bots.count(u.author)) {
        all_bot = false;
        break;
      }
    if (all_bot) continue;

    std::size_t code_chars = 0, total_chars = 0;
    for (const auto& u : d.utterances) {
      code_chars += norm.code_char_count(u.raw_text);
      total_chars += u.raw_text.size();
    }
    if (total_chars > 0 &&
        static_cast<double>(code_chars) >
            cfg.max_code_fraction * static_cast<double>(total_chars))
      continue;

    if (cfg.require_english) {
      std::vector<std::string> tokens;
      for (const auto& u : d.utterances) {
        auto light = norm.normalize_light(u.raw_text);
        for (auto& t : text::tokenize(light.text)) tokens.push_back(std::move(t));
      }
      if (!norm.looks_english(tokens)) continue;
    }

    kept.push_back(d);
  }
  return kept;
}

namespace {

ordered_json dialog_to_json(const Dialog& d) {
  ordered_json j;
  j["id"] = d.id;
  j["project"] = d.project;
  if (d.label) j["label"] = dialog_label_name(*d.label);
  if (d.augmented_from) j["augmented_from"] = *d.augmented_from;
  if (d.p_nbr) j["p_nbr"] = *d.p_nbr;
  if (d.p_br) j["p_br"] = *d.p_br;
  if (d.predicted_label) j["predicted_label"] = dialog_label_name(*d.predicted_label);
  ordered_json utts = ordered_json::array();
  for (const auto& u : d.utterances) utts.push_back(utterance_to_json(u));
  j["utterances"] = std::move(utts);
  ordered_json links = ordered_json::array();
  for (const auto& [a, b] : d.reply_links) links.push_back({a, b});
  j["reply_links"] = std::move(links);
  return j;
}

Dialog dialog_from_json(const json& j, int line_no) {
  Dialog d;
  d.id = j.at("id").get<std::string>();
  d.project = j.value("project", std::string{});
  if (j.contains("label"))
    d.label = parse_dialog_label(j.at("label").get<std::string>());
  if (j.contains("augmented_from"))
    d.augmented_from = j.at("augmented_from").get<std::string>();
  if (j.contains("p_nbr")) d.p_nbr = j.at("p_nbr").get<double>();
  if (j.contains("p_br")) d.p_br = j.at("p_br").get<double>();
  if (j.contains("predicted_label"))
    d.predicted_label =
        parse_dialog_label(j.at("predicted_label").get<std::string>());
  for (const auto& uj : j.at("utterances"))
    d.utterances.push_back(utterance_from_json(uj, nullptr, line_no));
  for (const auto& lj : j.at("reply_links")) {
    if (!lj.is_array() || lj.size() != 2)
      fail(ErrorCode::kSchema, "reply link must be a [replier, replied] pair");
    d.reply_links.emplace_back(lj[0].get<std::string>(),
                               lj[1].get<std::string>());
  }
  assign_roles(d.utterances);
  return d;
}

}  // namespace

std::string serialize_dialogs(const std::vector<Dialog>& dialogs) {
  std::string out;
  for (const auto& d : dialogs) {
    out += dialog_to_json(d).dump();
    out += '\n';
  }
  return out;
}

std::vector<Dialog> parse_dialogs(const std::string& jsonl) {
  std::vector<Dialog> dialogs;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= jsonl.size()) {
    std::size_t nl = jsonl.find('\n', pos);
    std::string_view line(jsonl.data() + pos,
                          (nl == std::string::npos ? jsonl.size() : nl) - pos);
    pos = (nl == std::string::npos) ? jsonl.size() + 1 : nl + 1;
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      fail(ErrorCode::kParse,
           "line " + std::to_string(line_no) + ": malformed JSON");
    dialogs.push_back(dialog_from_json(j, line_no));
  }
  return dialogs;
}

void validate_dialog(const Dialog& d) {
  std::unordered_map<std::string, const Utterance*> by_id;
  for (const auto& u : d.utterances) by_id[u.id] = &u;
  for (std::size_t i = 1; i < d.utterances.size(); ++i) {
    if (d.utterances[i].timestamp_us < d.utterances[i - 1].timestamp_us)
      fail(ErrorCode::kValidation,
           "dialog " + d.id + ": utterances out of chronological order");
  }
  for (const auto& [replier, replied] : d.reply_links) {
    auto a = by_id.find(replier);
    auto b = by_id.find(replied);
    if (a == by_id.end() || b == by_id.end())
      fail(ErrorCode::kValidation,
           "dialog " + d.id + ": reply link references unknown utterance");
    if (a->second->timestamp_us < b->second->timestamp_us)
      fail(ErrorCode::kValidation,
           "dialog " + d.id + ": replier precedes replied utterance");
  }
  // connectivity (single conversation thread); trivially true for singletons
  if (d.utterances.size() > 1) {
    std::unordered_map<std::string, std::vector<std::string>> adj;
    for (const auto& [a, b] : d.reply_links) {
      adj[a].push_back(b);
      adj[b].push_back(a);
    }
    std::unordered_set<std::string> seen;
    std::vector<std::string> stack{d.utterances.front().id};
    while (!stack.empty()) {
      auto cur = stack.back();
      stack.pop_back();
      if (!seen.insert(cur).second) continue;
      for (const auto& nxt : adj[cur]) stack.push_back(nxt);
    }
    if (seen.size() != d.utterances.size())
      fail(ErrorCode::kValidation,
           "dialog " + d.id + ": reply links do not connect all utterances");
  }
}

}  // namespace bl
