#include "buglistener/disentangler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <json.hpp>

#include "buglistener/text.hpp"

namespace bl {

using nlohmann::json;
using nn::Mat;
using nn::Var;

ChatLogIndex::ChatLogIndex(const ChatLog& log, EmbedFn embed, long embed_dim)
    : log_(&log), embed_(std::move(embed)), embed_dim_(embed_dim) {
  for (std::size_t i = 0; i < log.utterances.size(); ++i)
    positions_[log.utterances[i].id] = static_cast<int>(i);
  embeddings_.resize(log.utterances.size());
  computed_.assign(log.utterances.size(), 0);
}

int ChatLogIndex::position(const std::string& utterance_id) const {
  auto it = positions_.find(utterance_id);
  if (it == positions_.end())
    fail(ErrorCode::kValidation, "unknown utterance id: " + utterance_id);
  return it->second;
}

const Eigen::VectorXd& ChatLogIndex::avg_embedding(int position) const {
  auto idx = static_cast<std::size_t>(position);
  if (!computed_[idx]) {
    embeddings_[idx] = embed_(log_->utterances[idx]);
    if (embeddings_[idx].size() != embed_dim_)
      fail(ErrorCode::kInternal, "embedding provider returned wrong dimension");
    computed_[idx] = 1;
  }
  return embeddings_[idx];
}

namespace {

double token_jaccard(const Utterance& a, const Utterance& b) {
  auto ta = split_ws(a.text);
  auto tb = split_ws(b.text);
  std::set<std::string> sa(ta.begin(), ta.end());
  std::set<std::string> sb(tb.begin(), tb.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  std::size_t uni = sa.size() + sb.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

bool mentions_author(const Utterance& a, const Utterance& b) {
  if (b.author.empty()) return false;
  std::string needle = "@" + lowercase_ascii(b.author);
  return lowercase_ascii(a.raw_text).find(needle) != std::string::npos;
}

}  // namespace

Eigen::VectorXd featurize_pair(const Utterance& a, const Utterance& b,
                               const ChatLogIndex& ctx) {
  int pa = ctx.position(a.id);
  int pb = ctx.position(b.id);
  if (a.timestamp_us < b.timestamp_us || pa < pb)
    fail(ErrorCode::kInvalidArgument,
         "featurize_pair: candidate '" + b.id + "' does not precede '" + a.id +
             "'");
  long d = ctx.embed_dim();
  Eigen::VectorXd f(2 * d + kHandcraftedFeatures);
  f.segment(0, d) = ctx.avg_embedding(pa);
  f.segment(d, d) = ctx.avg_embedding(pb);
  double gap_seconds =
      static_cast<double>(a.timestamp_us - b.timestamp_us) / 1e6;
  f(2 * d + 0) = std::log1p(gap_seconds);
  f(2 * d + 1) = static_cast<double>(pa - pb);
  f(2 * d + 2) = a.author == b.author ? 1.0 : 0.0;
  f(2 * d + 3) = mentions_author(a, b) ? 1.0 : 0.0;
  f(2 * d + 4) = token_jaccard(a, b);
  f(2 * d + 5) = pb == 0 ? 1.0 : 0.0;
  return f;
}

LinkModel::LinkModel(LinkModelConfig cfg)
    : cfg_(cfg), store_(derive_seed(cfg.seed, "link_model")) {
  if (cfg_.input_dim <= 0)
    fail(ErrorCode::kConfig, "link model input dimension not set");
  w1_ = store_.add_glorot("ff.w1", cfg_.input_dim, cfg_.hidden);
  b1_ = store_.add_zeros("ff.b1", 1, cfg_.hidden);
  w2_ = store_.add_glorot("ff.w2", cfg_.hidden, 1);
  b2_ = store_.add_zeros("ff.b2", 1, 1);
}

Var LinkModel::score_node(const Var& feature_row) const {
  if (feature_row.cols() != cfg_.input_dim)
    fail(ErrorCode::kInvalidArgument,
         "feature vector length " + std::to_string(feature_row.cols()) +
             " does not match model input " + std::to_string(cfg_.input_dim));
  Var h = softsign(nn::dense(feature_row, w1_, b1_));
  return sigmoid(nn::dense(h, w2_, b2_));
}

double LinkModel::score(const Eigen::VectorXd& features) const {
  Mat row(1, features.size());
  row.row(0) = features.transpose();
  return score_node(Var::constant(std::move(row))).value()(0, 0);
}

std::vector<ReplyLink> link_decisions(
    const std::vector<UtteranceCandidates>& scored) {
  std::vector<ReplyLink> links;
  for (const auto& uc : scored) {
    if (uc.candidates.empty()) continue;
    std::size_t best = 0;
    for (std::size_t i = 1; i < uc.candidates.size(); ++i)
      if (uc.candidates[i].score >= uc.candidates[best].score) best = i;
    const auto& winner = uc.candidates[best];
    if (winner.replied_id == uc.replier_id) continue;  // self: new dialog
    links.emplace_back(uc.replier_id, winner.replied_id);
  }
  return links;
}

std::vector<ReplyLink> predict_links(const LinkModel& model,
                                     const ChatLogIndex& ctx, int window) {
  const auto& utts = ctx.log().utterances;
  std::vector<UtteranceCandidates> scored;
  for (std::size_t i = 1; i < utts.size(); ++i) {
    UtteranceCandidates uc;
    uc.replier_id = utts[i].id;
    std::size_t first =
        i > static_cast<std::size_t>(window) ? i - static_cast<std::size_t>(window) : 0;
    for (std::size_t j = first; j <= i; ++j) {
      // j == i is the self / new-dialog option, scanned last (most recent)
      uc.candidates.push_back(
          {utts[j].id, model.score(featurize_pair(utts[i], utts[j], ctx))});
    }
    scored.push_back(std::move(uc));
  }
  return link_decisions(scored);
}

std::vector<Dialog> cluster_dialogs(const ChatLog& log,
                                    const std::vector<ReplyLink>& links,
                                    const std::string& project) {
  std::unordered_map<std::string, int> position;
  for (std::size_t i = 0; i < log.utterances.size(); ++i)
    position[log.utterances[i].id] = static_cast<int>(i);

  int n = static_cast<int>(log.utterances.size());
  std::vector<int> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  };

  for (const auto& [a, b] : links) {
    auto ia = position.find(a);
    auto ib = position.find(b);
    if (ia == position.end() || ib == position.end())
      fail(ErrorCode::kValidation,
           "reply link references unknown utterance: " + a + " -> " + b);
    int ra = find(ia->second), rb = find(ib->second);
    if (ra != rb) parent[static_cast<std::size_t>(ra)] = rb;
  }

  // components keyed by root, ordered by their earliest utterance
  std::map<int, std::vector<int>> components;  // root -> member positions
  std::map<int, int> first_seen;
  for (int i = 0; i < n; ++i) {
    int r = find(i);
    if (!components.count(r)) first_seen[r] = i;
    components[r].push_back(i);
  }
  std::vector<std::pair<int, int>> ordered;  // (first position, root)
  for (const auto& [root, first] : first_seen) ordered.emplace_back(first, root);
  std::sort(ordered.begin(), ordered.end());

  std::vector<Dialog> dialogs;
  int counter = 0;
  for (const auto& [first, root] : ordered) {
    Dialog d;
    d.project = project;
    char buf[16];
    std::snprintf(buf, sizeof buf, "d%04d", ++counter);
    d.id = (project.empty() ? std::string{} : project + "-") + buf;
    for (int pos : components[root])
      d.utterances.push_back(log.utterances[static_cast<std::size_t>(pos)]);
    // members were collected in position order, i.e. chronological
    for (const auto& [a, b] : links) {
      if (a == b) continue;
      if (find(position[a]) == root) d.reply_links.emplace_back(a, b);
    }
    assign_roles(d.utterances);
    dialogs.push_back(std::move(d));
  }
  return dialogs;
}

std::vector<ReplyLink> load_gold_links(const std::string& jsonl) {
  std::vector<ReplyLink> links;
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
           "line " + std::to_string(line_no) + ": malformed gold link");
    links.emplace_back(j.at("replier_id").get<std::string>(),
                       j.at("replied_id").get<std::string>());
  }
  return links;
}

std::string serialize_gold_links(const std::vector<ReplyLink>& links) {
  std::string out;
  for (const auto& [a, b] : links) {
    json j;
    j["replier_id"] = a;
    j["replied_id"] = b;
    out += j.dump();
    out += '\n';
  }
  return out;
}

LinkTrainResult train_link_model(LinkModel& model, const ChatLogIndex& ctx,
                                 const std::vector<ReplyLink>& gold,
                                 const LinkTrainConfig& cfg) {
  const auto& utts = ctx.log().utterances;
  struct Example {
    Eigen::VectorXd features;
    double label;
  };
  std::vector<Example> examples;
  std::set<std::pair<int, int>> gold_pairs;
  for (const auto& [a, b] : gold)
    gold_pairs.emplace(ctx.position(a), ctx.position(b));

  Rng rng(derive_seed(cfg.seed, "link_train"));
  for (const auto& [a, b] : gold) {
    int pa = ctx.position(a);
    int pb = ctx.position(b);
    examples.push_back({featurize_pair(utts[static_cast<std::size_t>(pa)],
                                       utts[static_cast<std::size_t>(pb)], ctx),
                        1.0});
    // negatives from the same replier's window
    int first = std::max(0, pa - cfg.window);
    std::vector<int> negatives;
    for (int j = first; j < pa; ++j)
      if (!gold_pairs.count({pa, j})) negatives.push_back(j);
    std::shuffle(negatives.begin(), negatives.end(), rng);
    int take = std::min<int>(cfg.neg_ratio, static_cast<int>(negatives.size()));
    for (int k = 0; k < take; ++k)
      examples.push_back(
          {featurize_pair(utts[static_cast<std::size_t>(pa)],
                          utts[static_cast<std::size_t>(negatives[static_cast<std::size_t>(k)])],
                          ctx),
           0.0});
  }
  if (examples.empty())
    fail(ErrorCode::kValidation, "no training pairs for the link model");

  nn::Adam opt(model.params().trainable(), {.lr = cfg.lr});
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  double last_loss = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    last_loss = 0.0;
    for (auto idx : order) {
      const auto& ex = examples[idx];
      Mat row(1, ex.features.size());
      row.row(0) = ex.features.transpose();
      Var p = model.score_node(Var::constant(std::move(row)));
      Var one = Var::constant(Mat::Ones(1, 1));
      Var loss;
      if (ex.label > 0.5) {
        loss = nn::mul_scalar(nn::log_clamped(p, 1e-12), -1.0);
      } else {
        loss = nn::mul_scalar(nn::log_clamped(nn::sub(one, p), 1e-12), -1.0);
      }
      opt.zero_grad();
      nn::backward(loss);
      opt.step();
      last_loss += loss.value()(0, 0);
    }
    last_loss /= static_cast<double>(examples.size());
  }

  std::size_t correct = 0;
  for (const auto& ex : examples) {
    double p = model.score(ex.features);
    if ((p >= 0.5) == (ex.label > 0.5)) ++correct;
  }
  return {last_loss,
          static_cast<double>(correct) / static_cast<double>(examples.size())};
}

}  // namespace bl
