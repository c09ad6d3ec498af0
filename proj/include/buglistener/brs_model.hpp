#pragma once

#include <array>
#include <optional>

#include "buglistener/corpus.hpp"
#include "buglistener/encoder.hpp"
#include "buglistener/eval.hpp"

namespace bl {

enum class SentenceLabel { kOb, kEb, kSr, kOther };

const char* sentence_label_name(SentenceLabel l);
SentenceLabel parse_sentence_label(std::string_view s);

struct Sentence {
  std::string dialog_id;
  std::string utterance_id;
  int index = 0;  // position within the utterance
  std::int64_t timestamp_us = 0;
  std::string text;
  std::optional<SentenceLabel> label;
  std::optional<std::string> augmented_from;

  bool operator==(const Sentence& other) const = default;
};

// Punctuation-based segmentation of an utterance's lightly-normalized text
// (placeholders intact, never split). Segments longer than max_tokens are
// dropped as overlong.
std::vector<Sentence> split_sentences(const Utterance& u,
                                      const text::TextNormalizer& norm,
                                      const std::string& dialog_id = {},
                                      int max_tokens = 200);

struct PruneConfig {
  std::vector<std::string> greetings;
  // sentences with fewer content tokens than this (and no placeholder) drop
  int min_tokens = 5;
};

PruneConfig load_prune_config(const std::filesystem::path& greetings_file);

// Drops short placeholder-free sentences, strips greeting/thanks phrases
// (whole-phrase, case-insensitive, to a fixed point), and drops sentences
// emptied by stripping. Idempotent.
std::vector<Sentence> prune_reporter_sentences(
    const std::vector<Sentence>& sentences, const PruneConfig& cfg);

struct BrsStageConfig {
  int batch_size = 64;
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  double warmup_proportion = 0.1;
  double gradient_clip = 1.0;
  int epochs = 13;
  double val_fraction = 0.1;  // stage 1 model selection split
};

struct BrsConfig {
  nn::TransformerConfig encoder;
  int freeze_layers = 9;
  BrsStageConfig stage1;
  BrsStageConfig stage2{.batch_size = 8,
                        .learning_rate = 1e-6,
                        .epochs = 70,
                        .val_fraction = 0.0};
  int folds = 10;
  std::uint64_t seed = 1;
};

struct BrsTrainStats {
  std::vector<double> epoch_loss;
  double best_val_loss = 0.0;
  double train_accuracy = 0.0;
};

struct SentenceScore {
  std::array<double, 4> probs{};  // OB, EB, SR, OTHER
  SentenceLabel label = SentenceLabel::kOther;
};

// Sentence classifier: pretrained-style transformer encoder, [CLS] pooled,
// linear 4-way head. Fine-tuned twice: on an external bug-report corpus
// with the lower layers frozen, then on chat-derived sentences with a fresh
// head and the stage-2 schedule.
class BrsModel {
 public:
  explicit BrsModel(BrsConfig cfg);

  nn::TransformerEncoder& encoder() { return encoder_; }
  const nn::TransformerEncoder& encoder() const { return encoder_; }
  const BrsConfig& config() const { return cfg_; }
  const nn::ParamStore& head() const { return *head_; }

  // stage 1: external corpus, layers 1..freeze_layers frozen, CE loss,
  // best checkpoint by validation loss
  BrsTrainStats fine_tune_stage1(const std::vector<Sentence>& external);

  // stage 2: fresh head, stage-2 hyperparameters, frozen layers retained
  BrsTrainStats fine_tune_stage2(const std::vector<Sentence>& sentences);

  SentenceScore classify(const Sentence& s) const;

  MetricReport evaluate(const std::vector<Sentence>& sentences) const;

  std::map<std::string, nn::Mat> snapshot() const;
  void restore(const std::map<std::string, nn::Mat>& tensors);

 private:
  friend struct BrsModelTestAccess;
  void replace_head(std::uint64_t seed_tag);
  nn::Var head_logits(const std::vector<int>& ids) const;
  BrsTrainStats run_stage(const std::vector<Sentence>& data,
                          const BrsStageConfig& stage, std::uint64_t seed);

  BrsConfig cfg_;
  nn::Vocab vocab_;
  nn::TransformerEncoder encoder_;
  std::unique_ptr<nn::ParamStore> head_;
};

struct BugReport {
  std::string title;
  std::string dialog_id;
  std::string project;
  std::vector<std::string> description;
  std::vector<std::string> observed_behavior;
  std::vector<std::string> expected_behavior;
  std::vector<std::string> steps_to_reproduce;
};

// Partitions labeled sentences into the four report sections, each in
// chronological order. Fails with insufficient_content when no sentences
// remain.
BugReport assemble_report(const Dialog& dialog,
                          const std::vector<Sentence>& labeled,
                          int title_max_tokens = 12);

std::string report_to_markdown(const BugReport& report);
std::string report_to_json(const BugReport& report);

// {"text": ..., "label": "OB"|"EB"|"SR"|"OTHER"} JSON lines; extra keys
// (dialog_id, utterance_id, index, timestamp, augmented_from) round-trip.
std::vector<Sentence> parse_sentences(const std::string& jsonl);
std::string serialize_sentences(const std::vector<Sentence>& sentences);

}  // namespace bl
