#include "buglistener/brs_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

namespace bl {

using nlohmann::json;
using nlohmann::ordered_json;
using nn::Mat;
using nn::Var;

const char* sentence_label_name(SentenceLabel l) {
  switch (l) {
    case SentenceLabel::kOb: return "OB";
    case SentenceLabel::kEb: return "EB";
    case SentenceLabel::kSr: return "SR";
    case SentenceLabel::kOther: return "OTHER";
  }
  return "";
}

SentenceLabel parse_sentence_label(std::string_view s) {
  if (s == "OB") return SentenceLabel::kOb;
  if (s == "EB") return SentenceLabel::kEb;
  if (s == "SR") return SentenceLabel::kSr;
  if (s == "OTHER" || s == "OTHERS") return SentenceLabel::kOther;
  fail(ErrorCode::kValidation, "unknown sentence label: " + std::string(s));
}

std::vector<Sentence> split_sentences(const Utterance& u,
                                      const text::TextNormalizer& norm,
                                      const std::string& dialog_id,
                                      int max_tokens) {
  auto light = norm.normalize_light(u.raw_text);
  std::vector<Sentence> out;
  int idx = 0;
  for (auto& piece : text::split_sentence_texts(light.text)) {
    if (static_cast<int>(split_ws(piece).size()) > max_tokens) continue;
    Sentence s;
    s.dialog_id = dialog_id;
    s.utterance_id = u.id;
    s.index = idx++;
    s.timestamp_us = u.timestamp_us;
    s.text = std::move(piece);
    out.push_back(std::move(s));
  }
  return out;
}

PruneConfig load_prune_config(const std::filesystem::path& greetings_file) {
  PruneConfig cfg;
  for (const auto& line : read_lines(greetings_file))
    if (!line.empty() && line[0] != '#') cfg.greetings.push_back(line);
  return cfg;
}

namespace {

std::string token_core(const std::string& tok) {
  std::size_t b = 0, e = tok.size();
  while (b < e && std::ispunct(static_cast<unsigned char>(tok[b]))) ++b;
  while (e > b && std::ispunct(static_cast<unsigned char>(tok[e - 1]))) --e;
  return lowercase_ascii(tok.substr(b, e - b));
}

bool has_placeholder(const std::vector<std::string>& tokens) {
  return std::any_of(tokens.begin(), tokens.end(), [](const std::string& t) {
    return text::is_placeholder_token(t);
  });
}

// removes every occurrence of each greeting phrase, longest phrases first,
// repeating until nothing matches
std::vector<std::string> strip_greetings(
    std::vector<std::string> tokens,
    const std::vector<std::vector<std::string>>& phrases) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& phrase : phrases) {
      if (phrase.empty() || phrase.size() > tokens.size()) continue;
      for (std::size_t i = 0; i + phrase.size() <= tokens.size();) {
        bool match = true;
        for (std::size_t k = 0; k < phrase.size(); ++k)
          if (token_core(tokens[i + k]) != phrase[k]) {
            match = false;
            break;
          }
        if (match) {
          tokens.erase(tokens.begin() + static_cast<long>(i),
                       tokens.begin() + static_cast<long>(i + phrase.size()));
          changed = true;
        } else {
          ++i;
        }
      }
    }
  }
  return tokens;
}

}  // namespace

std::vector<Sentence> prune_reporter_sentences(
    const std::vector<Sentence>& sentences, const PruneConfig& cfg) {
  std::vector<std::vector<std::string>> phrases;
  for (const auto& g : cfg.greetings) {
    std::vector<std::string> phrase;
    for (const auto& t : split_ws(g)) phrase.push_back(token_core(t));
    if (!phrase.empty()) phrases.push_back(std::move(phrase));
  }
  std::sort(phrases.begin(), phrases.end(),
            [](const auto& a, const auto& b) { return a.size() > b.size(); });

  std::vector<Sentence> kept;
  for (const auto& s : sentences) {
    auto tokens = split_ws(s.text);
    if (static_cast<int>(tokens.size()) < cfg.min_tokens &&
        !has_placeholder(tokens))
      continue;
    tokens = strip_greetings(std::move(tokens), phrases);
    if (tokens.empty()) continue;
    Sentence out = s;
    out.text = join(tokens);
    kept.push_back(std::move(out));
  }
  return kept;
}

BrsModel::BrsModel(BrsConfig cfg)
    : cfg_(cfg),
      vocab_(cfg.encoder.vocab_size),
      encoder_(cfg.encoder, derive_seed(cfg.seed, "brs_encoder")) {
  replace_head(0);
  encoder_.freeze_layers_up_to(cfg_.freeze_layers);
}

void BrsModel::replace_head(std::uint64_t seed_tag) {
  head_ = std::make_unique<nn::ParamStore>(
      derive_seed(cfg_.seed, "brs_head", seed_tag));
  head_->add_gaussian("head.w", cfg_.encoder.hidden, 4, 0.02);
  head_->add_zeros("head.b", 1, 4);
}

Var BrsModel::head_logits(const std::vector<int>& ids) const {
  Var states = encoder_.forward(ids);
  Var cls = nn::slice_rows(states, 0, 1);
  return nn::dense(cls, head_->get("head.w"), head_->get("head.b"));
}

SentenceScore BrsModel::classify(const Sentence& s) const {
  auto ids = vocab_.encode(split_ws(s.text));
  Mat probs = nn::row_softmax(head_logits(ids)).value();
  SentenceScore score;
  int best = 0;
  for (int k = 0; k < 4; ++k) {
    score.probs[static_cast<std::size_t>(k)] = probs(0, k);
    if (probs(0, k) > probs(0, best)) best = k;
  }
  score.label = static_cast<SentenceLabel>(best);
  return score;
}

MetricReport BrsModel::evaluate(const std::vector<Sentence>& sentences) const {
  std::vector<std::string> preds, gold;
  for (const auto& s : sentences) {
    if (!s.label) fail(ErrorCode::kValidation, "unlabeled sentence");
    preds.push_back(sentence_label_name(classify(s).label));
    gold.push_back(sentence_label_name(*s.label));
  }
  return compute_metrics(preds, gold);
}

BrsTrainStats BrsModel::run_stage(const std::vector<Sentence>& data,
                                  const BrsStageConfig& stage,
                                  std::uint64_t seed) {
  if (data.empty()) fail(ErrorCode::kValidation, "empty fine-tuning set");
  for (const auto& s : data)
    if (!s.label) fail(ErrorCode::kValidation, "unlabeled fine-tuning sentence");

  Rng rng(derive_seed(seed, "brs_stage"));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  // validation split for model selection (stage 1)
  std::size_t val_count = static_cast<std::size_t>(
      stage.val_fraction * static_cast<double>(data.size()));
  std::vector<std::size_t> val(order.begin(),
                               order.begin() + static_cast<long>(val_count));
  std::vector<std::size_t> train(order.begin() + static_cast<long>(val_count),
                                 order.end());
  if (train.empty())
    fail(ErrorCode::kValidation, "no training sentences after the split");

  std::vector<Var> trainable = encoder_.params().trainable();
  for (auto& v : head_->trainable()) trainable.push_back(v);
  nn::Adam opt(trainable,
               {.lr = stage.learning_rate, .weight_decay = stage.weight_decay});

  long steps_per_epoch = static_cast<long>(
      (train.size() + static_cast<std::size_t>(stage.batch_size) - 1) /
      static_cast<std::size_t>(stage.batch_size));
  long total_steps = steps_per_epoch * stage.epochs;
  long warmup_steps = static_cast<long>(stage.warmup_proportion *
                                        static_cast<double>(total_steps));

  auto batch_loss_value = [&](const std::vector<std::size_t>& idx,
                              bool update) -> double {
    double total = 0.0;
    std::size_t pos = 0;
    long step = 0;
    while (pos < idx.size()) {
      std::size_t end = std::min(
          idx.size(), pos + static_cast<std::size_t>(stage.batch_size));
      std::vector<Var> losses;
      for (std::size_t k = pos; k < end; ++k) {
        const Sentence& s = data[idx[k]];
        auto ids = vocab_.encode(split_ws(s.text));
        Var probs = nn::row_softmax(head_logits(ids));
        Var p_true =
            nn::pick(probs, 0, static_cast<long>(*s.label));
        losses.push_back(nn::mul_scalar(nn::log_clamped(p_true, 1e-12), -1.0));
      }
      Var loss = losses[0];
      for (std::size_t i = 1; i < losses.size(); ++i)
        loss = nn::add(loss, losses[i]);
      loss = nn::mul_scalar(loss, 1.0 / static_cast<double>(losses.size()));
      if (update) {
        opt.zero_grad();
        nn::backward(loss);
        opt.clip_global_norm(stage.gradient_clip);
        double lr_scale =
            warmup_steps > 0 && step < warmup_steps
                ? static_cast<double>(step + 1) / static_cast<double>(warmup_steps)
                : 1.0;
        opt.step(lr_scale);
      }
      total += loss.value()(0, 0) * static_cast<double>(losses.size());
      pos = end;
      ++step;
    }
    return total / static_cast<double>(idx.size());
  };

  BrsTrainStats stats;
  double best_val = std::numeric_limits<double>::infinity();
  std::map<std::string, Mat> best_encoder, best_head;
  for (int epoch = 1; epoch <= stage.epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    double loss = batch_loss_value(train, true);
    stats.epoch_loss.push_back(loss);
    if (!val.empty()) {
      double val_loss = batch_loss_value(val, false);
      if (val_loss < best_val) {
        best_val = val_loss;
        best_encoder = encoder_.params().snapshot();
        best_head = head_->snapshot();
      }
    }
  }
  if (!val.empty()) {
    encoder_.params().restore(best_encoder);
    head_->restore(best_head);
    stats.best_val_loss = best_val;
  }

  std::size_t correct = 0;
  for (auto i : train) {
    if (classify(data[i]).label == *data[i].label) ++correct;
  }
  stats.train_accuracy =
      static_cast<double>(correct) / static_cast<double>(train.size());
  return stats;
}

BrsTrainStats BrsModel::fine_tune_stage1(const std::vector<Sentence>& external) {
  encoder_.freeze_layers_up_to(cfg_.freeze_layers);
  return run_stage(external, cfg_.stage1, derive_seed(cfg_.seed, "stage1"));
}

BrsTrainStats BrsModel::fine_tune_stage2(const std::vector<Sentence>& sentences) {
  replace_head(1);  // fresh head, stage-1 encoder retained
  encoder_.freeze_layers_up_to(cfg_.freeze_layers);
  return run_stage(sentences, cfg_.stage2, derive_seed(cfg_.seed, "stage2"));
}

std::map<std::string, Mat> BrsModel::snapshot() const {
  std::map<std::string, Mat> out;
  for (const auto& [name, var] : encoder_.params().all())
    out["encoder." + name] = var.value();
  for (const auto& [name, var] : head_->all()) out[name] = var.value();
  return out;
}

void BrsModel::restore(const std::map<std::string, Mat>& tensors) {
  std::map<std::string, Mat> enc, head;
  for (const auto& [name, m] : tensors) {
    if (name.rfind("encoder.", 0) == 0)
      enc[name.substr(8)] = m;
    else
      head[name] = m;
  }
  encoder_.params().restore(enc);
  head_->restore(head);
}

namespace {

struct ChronoKey {
  std::int64_t ts;
  std::string utterance_id;
  int index;
  bool operator<(const ChronoKey& other) const {
    return std::tie(ts, utterance_id, index) <
           std::tie(other.ts, other.utterance_id, other.index);
  }
};

std::vector<std::string> section_texts(std::vector<std::pair<ChronoKey, std::string>> items) {
  std::sort(items.begin(), items.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::string> out;
  out.reserve(items.size());
  for (auto& [key, text] : items) out.push_back(std::move(text));
  return out;
}

std::string truncate_tokens(const std::string& s, int max_tokens) {
  auto tokens = split_ws(s);
  if (static_cast<int>(tokens.size()) <= max_tokens) return s;
  tokens.resize(static_cast<std::size_t>(max_tokens));
  return join(tokens);
}

}  // namespace

BugReport assemble_report(const Dialog& dialog,
                          const std::vector<Sentence>& labeled,
                          int title_max_tokens) {
  if (labeled.empty())
    fail(ErrorCode::kInsufficientContent,
         "dialog " + dialog.id + ": no sentences left to assemble");
  std::map<SentenceLabel, std::vector<std::pair<ChronoKey, std::string>>> buckets;
  for (const auto& s : labeled) {
    if (!s.label)
      fail(ErrorCode::kValidation, "unlabeled sentence reached assembly");
    buckets[*s.label].push_back(
        {{s.timestamp_us, s.utterance_id, s.index}, s.text});
  }
  BugReport report;
  report.dialog_id = dialog.id;
  report.project = dialog.project;
  report.description = section_texts(std::move(buckets[SentenceLabel::kOther]));
  report.observed_behavior = section_texts(std::move(buckets[SentenceLabel::kOb]));
  report.expected_behavior = section_texts(std::move(buckets[SentenceLabel::kEb]));
  report.steps_to_reproduce = section_texts(std::move(buckets[SentenceLabel::kSr]));

  if (!report.observed_behavior.empty())
    report.title = truncate_tokens(report.observed_behavior.front(), title_max_tokens);
  else if (!report.description.empty())
    report.title = truncate_tokens(report.description.front(), title_max_tokens);
  else if (!report.expected_behavior.empty())
    report.title = truncate_tokens(report.expected_behavior.front(), title_max_tokens);
  else
    report.title = truncate_tokens(report.steps_to_reproduce.front(), title_max_tokens);
  return report;
}

std::string report_to_markdown(const BugReport& report) {
  std::string md = "# " + report.title + "\n\n";
  auto section = [&md](const char* name, const std::vector<std::string>& body) {
    md += std::string("## ") + name + "\n\n";
    if (body.empty()) {
      md += "_(none)_\n\n";
      return;
    }
    for (const auto& s : body) md += "- " + s + "\n";
    md += "\n";
  };
  section("Description", report.description);
  section("Observed Behavior", report.observed_behavior);
  section("Expected Behavior", report.expected_behavior);
  section("Steps to Reproduce", report.steps_to_reproduce);
  return md;
}

std::string report_to_json(const BugReport& report) {
  ordered_json j;
  j["title"] = report.title;
  j["dialog_id"] = report.dialog_id;
  j["project"] = report.project;
  j["description"] = report.description;
  j["observed_behavior"] = report.observed_behavior;
  j["expected_behavior"] = report.expected_behavior;
  j["steps_to_reproduce"] = report.steps_to_reproduce;
  return j.dump(2);
}

std::vector<Sentence> parse_sentences(const std::string& jsonl) {
  std::vector<Sentence> out;
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
           "line " + std::to_string(line_no) + ": malformed sentence JSON");
    Sentence s;
    s.text = j.at("text").get<std::string>();
    if (s.text.empty())
      fail(ErrorCode::kValidation,
           "line " + std::to_string(line_no) + ": empty sentence text");
    if (j.contains("label"))
      s.label = parse_sentence_label(j.at("label").get<std::string>());
    s.dialog_id = j.value("dialog_id", std::string{});
    s.utterance_id = j.value("utterance_id", std::string{});
    s.index = j.value("index", 0);
    if (j.contains("timestamp"))
      s.timestamp_us = parse_iso8601_us(j.at("timestamp").get<std::string>());
    if (j.contains("augmented_from"))
      s.augmented_from = j.at("augmented_from").get<std::string>();
    out.push_back(std::move(s));
  }
  return out;
}

std::string serialize_sentences(const std::vector<Sentence>& sentences) {
  std::string out;
  for (const auto& s : sentences) {
    ordered_json j;
    j["text"] = s.text;
    if (s.label) j["label"] = sentence_label_name(*s.label);
    if (!s.dialog_id.empty()) j["dialog_id"] = s.dialog_id;
    if (!s.utterance_id.empty()) j["utterance_id"] = s.utterance_id;
    if (s.index != 0) j["index"] = s.index;
    if (s.timestamp_us != 0) j["timestamp"] = format_iso8601_us(s.timestamp_us);
    if (s.augmented_from) j["augmented_from"] = *s.augmented_from;
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace bl
