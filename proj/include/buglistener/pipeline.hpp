#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "buglistener/augmentor.hpp"
#include "buglistener/bri_model.hpp"
#include "buglistener/brs_model.hpp"
#include "buglistener/corpus.hpp"
#include "buglistener/disentangler.hpp"

namespace bl {

// Every knob of the pipeline with its default. The JSON config file mirrors
// this structure; BUGLISTENER_* environment variables override single keys
// (section and key joined by a double underscore, e.g.
// BUGLISTENER_BRI__LEARNING_RATE=1e-3).
struct PipelineConfig {
  std::filesystem::path data_dir = "data";
  std::uint64_t seed = 7;
  std::string project = "default";

  DialogFilterConfig filter;
  bool apply_filters = true;

  struct {
    int window = 50;
    int hidden = 512;
    int neg_ratio = 5;
    int epochs = 10;
    double learning_rate = 1e-3;
    std::string weights_file;
  } disentangler;

  AugmentConfig augment;

  nn::TransformerConfig bri_encoder;
  nn::TextCnnConfig textcnn;
  BriTrainConfig bri;
  double bri_val_fraction = 0.1;
  int fc_hidden = 64;

  BrsConfig brs;
  bool brs_filter_external = true;
  bool brs_eda_balance = true;

  PruneConfig prune;
  int title_max_tokens = 12;

  static PipelineConfig load(const std::filesystem::path& config_file);
  static PipelineConfig defaults();
  void apply_env_overrides();
  void apply_override(const std::string& dotted_key, const std::string& value);
  std::string to_json() const;
};

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg);

  const PipelineConfig& config() const { return cfg_; }
  void set_seed(std::uint64_t seed) { cfg_.seed = seed; }

  void ingest(const std::vector<std::string>& inputs,
              const std::filesystem::path& out_file) const;

  void disentangle(const std::filesystem::path& corpus_file,
                   const std::optional<std::filesystem::path>& gold_links,
                   const std::filesystem::path& out_file) const;

  void train_bri(const std::filesystem::path& dialogs_file,
                 const std::filesystem::path& checkpoint_dir,
                 const std::filesystem::path& metrics_file) const;

  void predict_bri(const std::filesystem::path& dialogs_file,
                   const std::filesystem::path& checkpoint_dir,
                   const std::filesystem::path& out_file) const;

  void train_brs(const std::filesystem::path& external_file,
                 const std::filesystem::path& sentences_file,
                 const std::filesystem::path& checkpoint_dir,
                 const std::filesystem::path& metrics_file) const;

  void synthesize(const std::filesystem::path& dialogs_file,
                  const std::filesystem::path& checkpoint_dir,
                  const std::filesystem::path& out_dir) const;

  void eval(const std::string& task, const std::filesystem::path& pred_file,
            const std::filesystem::path& gold_file,
            const std::filesystem::path& out_file) const;

 private:
  const text::TextNormalizer& normalizer() const;
  PipelineConfig cfg_;
  mutable std::unique_ptr<text::TextNormalizer> normalizer_;
};

}  // namespace bl
