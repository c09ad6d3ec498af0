#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "buglistener/text.hpp"

namespace bl {

enum class Role { kReporter, kDiscussant };

const char* role_name(Role r);

// One timestamped chat message. `text` is the normalized form (lowercase,
// placeholders substituted, stopwords removed); `raw_text` is as exported.
struct Utterance {
  std::string id;
  std::int64_t timestamp_us = 0;  // UTC epoch microseconds
  std::string author;
  Role role = Role::kDiscussant;
  std::string raw_text;
  std::string text;
  text::PlaceholderSet placeholders;
  std::vector<std::string> reply_to_ids;  // optional, from the export

  bool operator==(const Utterance& other) const = default;
};

struct ChatLog {
  std::vector<Utterance> utterances;  // chronological
};

enum class DialogLabel { kBr, kNbr };

const char* dialog_label_name(DialogLabel l);
DialogLabel parse_dialog_label(std::string_view s);

using ReplyLink = std::pair<std::string, std::string>;  // replier -> replied

struct Dialog {
  std::string id;
  std::string project;
  std::vector<Utterance> utterances;  // chronological
  std::vector<ReplyLink> reply_links;
  std::optional<DialogLabel> label;
  std::optional<std::string> augmented_from;
  // set by predict-bri
  std::optional<double> p_nbr;
  std::optional<double> p_br;
  std::optional<DialogLabel> predicted_label;

  const Utterance* find(const std::string& utterance_id) const;
};

// ISO-8601 timestamp handling ("2021-07-01T12:30:00Z", fractional seconds
// and numeric offsets accepted). Serialization is canonical UTC.
std::int64_t parse_iso8601_us(const std::string& s);
std::string format_iso8601_us(std::int64_t us);

// Reads a JSON-lines chat export. Lines must carry id, timestamp, author and
// text; reply_to_ids is optional. Utterances come back sorted by timestamp
// (stable), normalized via `norm`. Malformed lines and duplicate ids are
// reported with their line number.
ChatLog parse_chat_log(const std::string& jsonl,
                       const text::TextNormalizer& norm);

std::string serialize_chat_log(const ChatLog& log);

// Reporter = author of the chronologically first utterance; everyone else is
// a discussant. Applied in place.
void assign_roles(std::vector<Utterance>& utterances);

struct DialogFilterConfig {
  std::vector<std::string> bot_authors;
  double max_code_fraction = 0.9;
  bool require_english = true;
};

// Noise filters over already-disentangled dialogs: non-English dialogs,
// dialogs that are >90% code/stack-trace characters, and dialogs authored
// solely by configured bot accounts. Order-preserving subset of the input.
std::vector<Dialog> filter_dialogs(const std::vector<Dialog>& dialogs,
                                   const DialogFilterConfig& cfg,
                                   const text::TextNormalizer& norm);

// Dialog (de)serialization: one JSON object per dialog with "utterances" and
// "reply_links" plus the optional label/prediction fields.
std::string serialize_dialogs(const std::vector<Dialog>& dialogs);
std::vector<Dialog> parse_dialogs(const std::string& jsonl);

void validate_dialog(const Dialog& d);

}  // namespace bl
