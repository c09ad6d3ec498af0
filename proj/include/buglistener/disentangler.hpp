#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "buglistener/corpus.hpp"
#include "buglistener/nn.hpp"

namespace bl {

// Index over a chat log for pair featurization: position lookup and the
// averaged pretrained word embedding of each utterance.
class ChatLogIndex {
 public:
  using EmbedFn = std::function<Eigen::VectorXd(const Utterance&)>;

  ChatLogIndex(const ChatLog& log, EmbedFn embed, long embed_dim);

  const ChatLog& log() const { return *log_; }
  int position(const std::string& utterance_id) const;
  const Eigen::VectorXd& avg_embedding(int position) const;
  long embed_dim() const { return embed_dim_; }

 private:
  const ChatLog* log_;
  std::unordered_map<std::string, int> positions_;
  mutable std::vector<Eigen::VectorXd> embeddings_;
  mutable std::vector<char> computed_;
  EmbedFn embed_;
  long embed_dim_;
};

inline constexpr int kHandcraftedFeatures = 6;

// [avg-embed(a) | avg-embed(b) | log1p time gap (s), utterance distance,
//  same author, a mentions @b-author, token Jaccard, b is log opener].
// b must not come after a; a == b is the designated self option.
Eigen::VectorXd featurize_pair(const Utterance& a, const Utterance& b,
                               const ChatLogIndex& ctx);

struct LinkModelConfig {
  long input_dim = 0;  // 2 * embed_dim + handcrafted
  int hidden = 512;
  std::uint64_t seed = 1;
};

// Two dense layers with softsign non-linearity and a sigmoid head scoring
// how likely utterance a replies to utterance b.
class LinkModel {
 public:
  explicit LinkModel(LinkModelConfig cfg);

  double score(const Eigen::VectorXd& features) const;
  nn::Var score_node(const nn::Var& feature_row) const;  // training path

  nn::ParamStore& params() { return store_; }
  const LinkModelConfig& config() const { return cfg_; }

 private:
  LinkModelConfig cfg_;
  nn::ParamStore store_;
  nn::Var w1_, b1_, w2_, b2_;
};

struct ScoredCandidate {
  std::string replied_id;  // == replier id for the self / new-dialog option
  double score = 0.0;
};

struct UtteranceCandidates {
  std::string replier_id;
  // oldest first; the self option, when present, is last (most recent)
  std::vector<ScoredCandidate> candidates;
};

// Argmax per utterance, ties broken toward the most recent candidate.
// A winning self option yields no link.
std::vector<ReplyLink> link_decisions(
    const std::vector<UtteranceCandidates>& scored);

// Scores a whole log with the model over a bounded lookback window and
// applies link_decisions.
std::vector<ReplyLink> predict_links(const LinkModel& model,
                                     const ChatLogIndex& ctx, int window);

// Connected components of the undirected link graph, one dialog per
// component, utterances chronological, links restricted to the component.
std::vector<Dialog> cluster_dialogs(const ChatLog& log,
                                    const std::vector<ReplyLink>& links,
                                    const std::string& project = {});

std::vector<ReplyLink> load_gold_links(const std::string& jsonl);
std::string serialize_gold_links(const std::vector<ReplyLink>& links);

struct LinkTrainConfig {
  int window = 50;
  int neg_ratio = 5;
  int epochs = 10;
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

struct LinkTrainResult {
  double final_loss = 0.0;
  double train_accuracy = 0.0;
};

// Binary cross-entropy over gold pairs with negative candidates sampled
// from each replier's window.
LinkTrainResult train_link_model(LinkModel& model, const ChatLogIndex& ctx,
                                 const std::vector<ReplyLink>& gold,
                                 const LinkTrainConfig& cfg);

}  // namespace bl
