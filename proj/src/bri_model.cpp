#include "buglistener/bri_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bl {

using nn::Mat;
using nn::Var;

double cross_entropy(const std::vector<double>& probs, std::size_t true_class,
                     double floor) {
  if (true_class >= probs.size())
    fail(ErrorCode::kInvalidArgument, "true class out of range");
  return -std::log(std::max(probs[true_class], floor));
}

double focal_loss(const std::vector<double>& probs, std::size_t true_class,
                  double alpha, double gamma, double floor) {
  if (true_class >= probs.size())
    fail(ErrorCode::kInvalidArgument, "true class out of range");
  double p = probs[true_class];
  return -alpha * std::pow(1.0 - p, gamma) * std::log(std::max(p, floor));
}

BriModel::BriModel(BriModelConfig cfg)
    : cfg_(cfg),
      store_(derive_seed(cfg.seed, "bri")),
      textcnn_(cfg.textcnn, store_, "textcnn") {
  int d = cfg_.textcnn.out_dim;
  w_e_ = store_.add_glorot("graph.we", d, d);
  w1_struct_ = store_.add_glorot("gnn.struct.w1", d, d);
  w2_struct_ = store_.add_glorot("gnn.struct.w2", d, d);
  w1_role_ = store_.add_glorot("gnn.role.w1", d, d);
  const char* type_names[4] = {"r2r", "r2d", "d2r", "d2d"};
  for (int t = 0; t < 4; ++t)
    w_type_[static_cast<std::size_t>(t)] =
        store_.add_glorot(std::string("gnn.role.w_") + type_names[t], d, d);
  fc1_w_ = store_.add_glorot("head.fc1.w", 4 * d, cfg_.fc_hidden);
  fc1_b_ = store_.add_zeros("head.fc1.b", 1, cfg_.fc_hidden);
  fc2_w_ = store_.add_glorot("head.fc2.w", cfg_.fc_hidden, 2);
  fc2_b_ = store_.add_zeros("head.fc2.b", 1, 2);
}

Mat BriModel::encode_utterance(const Mat& word_embeddings) const {
  return textcnn_.encode(Var::constant(word_embeddings)).value();
}

Var BriModel::weights_node(const Var& u, const Mat& mask) const {
  Var scores = nn::matmul(nn::matmul(u, w_e_), nn::transpose(u));
  return nn::row_normalize_masked(scores, mask);
}

Var BriModel::structure_node(const Var& u, const Var& weights) const {
  // v_i = relu(W1 u_i + W2 * sum_{j in N(*,i)} w_ji u_j); the aggregation
  // gathers over incoming edges, hence the transpose
  Var agg = nn::matmul(nn::transpose(weights), u);
  return nn::relu(nn::add(nn::matmul(u, w1_struct_), nn::matmul(agg, w2_struct_)));
}

std::array<Mat, 4> BriModel::type_aggregators(const DialogGraph& g) {
  int n = g.vertex_count();
  std::array<Mat, 4> agg;
  for (auto& a : agg) a = Mat::Zero(n, n);
  std::array<std::vector<int>, 4> indeg;
  for (auto& v : indeg) v.assign(static_cast<std::size_t>(n), 0);
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    auto t = static_cast<std::size_t>(g.edge_types[e]);
    ++indeg[t][static_cast<std::size_t>(g.edges[e].second)];
  }
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    auto t = static_cast<std::size_t>(g.edge_types[e]);
    auto [i, j] = g.edges[e];
    // row j aggregates from i with 1/c_{j,t}
    agg[t](j, i) += 1.0 / static_cast<double>(indeg[t][static_cast<std::size_t>(j)]);
  }
  return agg;
}

Var BriModel::role_node(const Var& v1,
                        const std::array<Mat, 4>& type_agg) const {
  Var out = nn::matmul(v1, w1_role_);
  for (std::size_t t = 0; t < 4; ++t) {
    if (type_agg[t].cwiseAbs().sum() == 0.0) continue;
    Var gathered = nn::matmul(Var::constant(type_agg[t]), v1);
    out = nn::add(out, nn::matmul(gathered, w_type_[t]));
  }
  return nn::relu(out);
}

Var BriModel::head_node(const Var& combined, bool training, double dropout,
                        Rng* rng) const {
  Var c = combined;
  if (training && rng) c = nn::dropout(c, dropout, *rng, true);
  Var g = nn::concat_cols({nn::sum_rows(c), nn::max_rows(c)});
  Var h = nn::relu(nn::dense(g, fc1_w_, fc1_b_));
  if (training && rng) h = nn::dropout(h, dropout, *rng, true);
  Var logits = nn::dense(h, fc2_w_, fc2_b_);
  return nn::row_softmax(logits);
}

Mat BriModel::edge_weights(const DialogGraph& g) const {
  Var u = Var::constant(g.vertex_embeddings);
  return weights_node(u, g.edge_mask()).value();
}

Mat BriModel::structure_layer(const DialogGraph& g) const {
  int n = g.vertex_count();
  Mat w = Mat::Zero(n, n);
  for (std::size_t e = 0; e < g.edges.size(); ++e)
    w(g.edges[e].first, g.edges[e].second) = g.weights[e];
  return structure_node(Var::constant(g.vertex_embeddings), Var::constant(w))
      .value();
}

Mat BriModel::role_layer(const DialogGraph& g, const Mat& v1) const {
  return role_node(Var::constant(v1), type_aggregators(g)).value();
}

Mat BriModel::dialog_embedding(const Mat& combined) {
  Var c = Var::constant(combined);
  return nn::concat_cols({nn::sum_rows(c), nn::max_rows(c)}).value();
}

BriModel::Forward BriModel::forward(const Dialog& dialog,
                                    const WordEmbedFn& embed, bool training,
                                    double dropout, Rng* rng) const {
  DialogGraph topo = build_graph_topology(dialog);
  std::vector<Var> rows;
  rows.reserve(dialog.utterances.size());
  for (const auto& utt : dialog.utterances)
    rows.push_back(textcnn_.encode(Var::constant(embed(utt))));
  Forward f;
  f.utterances = nn::concat_rows(rows);
  f.weights = weights_node(f.utterances, topo.edge_mask());
  f.v1 = structure_node(f.utterances, f.weights);
  f.v2 = role_node(f.v1, type_aggregators(topo));
  f.combined = nn::concat_cols({f.utterances, f.v2});
  f.probs = head_node(f.combined, training, dropout, rng);
  return f;
}

BriPrediction BriModel::predict(const Dialog& dialog,
                                const WordEmbedFn& embed) const {
  Forward f = forward(dialog, embed, false, 0.0, nullptr);
  BriPrediction pred;
  pred.p_nbr = f.probs.value()(0, 0);
  pred.p_br = f.probs.value()(0, 1);
  pred.label = pred.p_br > pred.p_nbr ? DialogLabel::kBr : DialogLabel::kNbr;
  return pred;
}

MetricReport BriModel::evaluate(const std::vector<Dialog>& dialogs,
                                const WordEmbedFn& embed) const {
  std::vector<std::string> preds, gold;
  for (const auto& d : dialogs) {
    if (!d.label) fail(ErrorCode::kValidation, "unlabeled dialog: " + d.id);
    preds.push_back(dialog_label_name(predict(d, embed).label));
    gold.push_back(dialog_label_name(*d.label));
  }
  return compute_metrics(preds, gold);
}

BriTrainResult BriModel::train(const std::vector<Dialog>& train_dialogs,
                               const std::vector<Dialog>& val_dialogs,
                               const WordEmbedFn& embed,
                               const BriTrainConfig& cfg) {
  if (train_dialogs.empty())
    fail(ErrorCode::kValidation, "empty training set");
  for (const auto& d : train_dialogs)
    if (!d.label)
      fail(ErrorCode::kValidation, "unlabeled training dialog: " + d.id);

  nn::Adam opt(store_.trainable(), {.lr = cfg.learning_rate});
  Rng rng(derive_seed(cfg.seed, "bri_train"));

  const bool with_val = !val_dialogs.empty();
  BriTrainResult result;
  result.best_f1 = -1.0;
  std::map<std::string, Mat> best_params = store_.snapshot();
  int since_best = 0;

  std::vector<std::size_t> order(train_dialogs.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t pos = 0;
    while (pos < order.size()) {
      std::size_t batch_end = std::min(
          order.size(), pos + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Var> losses;
      for (std::size_t k = pos; k < batch_end; ++k) {
        const Dialog& d = train_dialogs[order[k]];
        Forward f = forward(d, embed, true, cfg.dropout, &rng);
        long y = *d.label == DialogLabel::kBr ? 1 : 0;
        Var p_true = nn::pick(f.probs, 0, y);
        Var one = Var::constant(Mat::Ones(1, 1));
        Var focal = nn::mul_scalar(
            nn::mul(nn::pow_scalar(nn::sub(one, p_true), cfg.focal_gamma),
                    nn::log_clamped(p_true, 1e-12)),
            -cfg.focal_alpha);
        losses.push_back(focal);
      }
      Var batch_loss = losses[0];
      for (std::size_t i = 1; i < losses.size(); ++i)
        batch_loss = nn::add(batch_loss, losses[i]);
      batch_loss =
          nn::mul_scalar(batch_loss, 1.0 / static_cast<double>(losses.size()));
      if (cfg.l2_lambda > 0.0)
        batch_loss = nn::add(batch_loss,
                             nn::mul_scalar(nn::l2_penalty(store_), cfg.l2_lambda));
      opt.zero_grad();
      nn::backward(batch_loss);
      opt.step();
      epoch_loss += batch_loss.value()(0, 0) * static_cast<double>(losses.size());
      pos = batch_end;
    }
    epoch_loss /= static_cast<double>(order.size());

    BriEpochStats stats;
    stats.epoch = epoch;
    stats.loss = epoch_loss;
    stats.train_f1 = evaluate(train_dialogs, embed).macro_f1;
    stats.val_f1 = with_val ? evaluate(val_dialogs, embed).macro_f1 : 0.0;
    result.history.push_back(stats);

    double monitored = with_val ? stats.val_f1 : stats.train_f1;
    if (monitored > result.best_f1) {
      result.best_f1 = monitored;
      result.best_epoch = epoch;
      best_params = store_.snapshot();
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }

  store_.restore(best_params);
  result.final_train_f1 = evaluate(train_dialogs, embed).macro_f1;
  return result;
}

}  // namespace bl
