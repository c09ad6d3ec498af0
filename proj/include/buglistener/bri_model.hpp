#pragma once

#include <array>
#include <functional>
#include <optional>

#include "buglistener/dialog_graph.hpp"
#include "buglistener/encoder.hpp"
#include "buglistener/eval.hpp"

namespace bl {

struct BriPrediction {
  double p_nbr = 0.0;
  double p_br = 0.0;
  DialogLabel label = DialogLabel::kNbr;
};

// scalar losses, also used as oracles by the acceptance suite
double cross_entropy(const std::vector<double>& probs, std::size_t true_class,
                     double floor = 1e-12);
double focal_loss(const std::vector<double>& probs, std::size_t true_class,
                  double alpha, double gamma, double floor = 1e-12);

struct BriTrainConfig {
  int batch_size = 32;
  double learning_rate = 1e-4;
  double dropout = 0.5;
  double l2_lambda = 1e-5;
  // the loss is identically zero at alpha = 0, so the usable default is 1
  double focal_alpha = 1.0;
  double focal_gamma = 2.0;
  int max_epochs = 100;
  int patience = 10;
  std::uint64_t seed = 1;
};

struct BriModelConfig {
  nn::TextCnnConfig textcnn;  // utterance vectors, out_dim = vertex width
  int fc_hidden = 64;
  std::uint64_t seed = 1;
};

struct BriEpochStats {
  int epoch = 0;
  double loss = 0.0;
  double train_f1 = 0.0;
  double val_f1 = 0.0;
};

struct BriTrainResult {
  std::vector<BriEpochStats> history;
  double best_f1 = 0.0;  // on validation when provided, else training
  int best_epoch = 0;
  double final_train_f1 = 0.0;
};

// returns the word-embedding matrix (L x embed_dim) for an utterance
using WordEmbedFn = std::function<const nn::Mat&(const Utterance&)>;

// Dialog classifier: TextCNN utterance vectors, bilinear edge weights, a
// structure-level aggregation layer, a role-level relational layer, sum+max
// pooling and a two-layer softmax head trained with focal loss.
class BriModel {
 public:
  explicit BriModel(BriModelConfig cfg);

  int vertex_dim() const { return cfg_.textcnn.out_dim; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  const BriModelConfig& config() const { return cfg_; }

  // inference-mode pieces, exposed for unit and oracle tests
  nn::Mat encode_utterance(const nn::Mat& word_embeddings) const;
  nn::Mat edge_weights(const DialogGraph& g) const;  // n x n, rows = source
  nn::Mat structure_layer(const DialogGraph& g) const;
  nn::Mat role_layer(const DialogGraph& g, const nn::Mat& v1) const;
  static nn::Mat dialog_embedding(const nn::Mat& combined);  // 1 x 4d

  BriPrediction predict(const Dialog& dialog, const WordEmbedFn& embed) const;

  BriTrainResult train(const std::vector<Dialog>& train_dialogs,
                       const std::vector<Dialog>& val_dialogs,
                       const WordEmbedFn& embed, const BriTrainConfig& cfg);

  MetricReport evaluate(const std::vector<Dialog>& dialogs,
                        const WordEmbedFn& embed) const;

 private:
  struct Forward {
    nn::Var utterances;  // n x d
    nn::Var weights;     // n x n normalized
    nn::Var v1;          // structure layer
    nn::Var v2;          // role layer
    nn::Var combined;    // n x 2d
    nn::Var probs;       // 1 x 2
  };
  Forward forward(const Dialog& dialog, const WordEmbedFn& embed,
                  bool training, double dropout, Rng* rng) const;
  nn::Var weights_node(const nn::Var& u, const nn::Mat& mask) const;
  nn::Var structure_node(const nn::Var& u, const nn::Var& weights) const;
  nn::Var role_node(const nn::Var& v1,
                    const std::array<nn::Mat, 4>& type_agg) const;
  nn::Var head_node(const nn::Var& combined, bool training, double dropout,
                    Rng* rng) const;
  static std::array<nn::Mat, 4> type_aggregators(const DialogGraph& g);

  BriModelConfig cfg_;
  nn::ParamStore store_;
  nn::TextCnn textcnn_;
  nn::Var w_e_, w1_struct_, w2_struct_, w1_role_;
  std::array<nn::Var, 4> w_type_;
  nn::Var fc1_w_, fc1_b_, fc2_w_, fc2_b_;
};

}  // namespace bl
