#include "buglistener/encoder.hpp"

#include <algorithm>
#include <cmath>

namespace bl::nn {

namespace {
std::string layer_prefix(int i) { return "layer" + std::to_string(i); }
}  // namespace

TransformerEncoder::TransformerEncoder(TransformerConfig cfg,
                                       std::uint64_t seed)
    : cfg_(cfg), store_(derive_seed(seed, "transformer")) {
  if (cfg_.hidden % cfg_.heads != 0)
    fail(ErrorCode::kConfig, "hidden size must be divisible by head count");
  double sd = cfg_.init_stddev;
  store_.add_gaussian("emb.tok", cfg_.vocab_size, cfg_.hidden, sd);
  store_.add_gaussian("emb.pos", cfg_.max_tokens + 1, cfg_.hidden, sd);
  store_.add_value("emb.ln.g", Mat::Ones(1, cfg_.hidden));
  store_.add_zeros("emb.ln.b", 1, cfg_.hidden);
  for (int l = 1; l <= cfg_.layers; ++l) {
    const std::string p = layer_prefix(l);
    store_.add_gaussian(p + ".attn.wq", cfg_.hidden, cfg_.hidden, sd);
    store_.add_zeros(p + ".attn.bq", 1, cfg_.hidden);
    store_.add_gaussian(p + ".attn.wk", cfg_.hidden, cfg_.hidden, sd);
    store_.add_zeros(p + ".attn.bk", 1, cfg_.hidden);
    store_.add_gaussian(p + ".attn.wv", cfg_.hidden, cfg_.hidden, sd);
    store_.add_zeros(p + ".attn.bv", 1, cfg_.hidden);
    store_.add_gaussian(p + ".attn.wo", cfg_.hidden, cfg_.hidden, sd);
    store_.add_zeros(p + ".attn.bo", 1, cfg_.hidden);
    store_.add_value(p + ".ln1.g", Mat::Ones(1, cfg_.hidden));
    store_.add_zeros(p + ".ln1.b", 1, cfg_.hidden);
    store_.add_gaussian(p + ".ffn.w1", cfg_.hidden, cfg_.ffn, sd);
    store_.add_zeros(p + ".ffn.b1", 1, cfg_.ffn);
    store_.add_gaussian(p + ".ffn.w2", cfg_.ffn, cfg_.hidden, sd);
    store_.add_zeros(p + ".ffn.b2", 1, cfg_.hidden);
    store_.add_value(p + ".ln2.g", Mat::Ones(1, cfg_.hidden));
    store_.add_zeros(p + ".ln2.b", 1, cfg_.hidden);
  }
  if (!cfg_.weights_file.empty())
    store_.restore(load_tensors(cfg_.weights_file));
}

Var TransformerEncoder::encode_ids(const std::vector<int>& ids) const {
  long L = static_cast<long>(ids.size());
  Var x = embedding_rows(store_.get("emb.tok"), ids);
  std::vector<int> positions(ids.size());
  for (long i = 0; i < L; ++i)
    positions[static_cast<std::size_t>(i)] = static_cast<int>(i);
  Var pos = embedding_rows(store_.get("emb.pos"), positions);
  x = layer_norm_rows(add(x, pos), store_.get("emb.ln.g"),
                      store_.get("emb.ln.b"));

  int head_dim = cfg_.hidden / cfg_.heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  for (int l = 1; l <= cfg_.layers; ++l) {
    const std::string p = layer_prefix(l);
    Var q = dense(x, store_.get(p + ".attn.wq"), store_.get(p + ".attn.bq"));
    Var k = dense(x, store_.get(p + ".attn.wk"), store_.get(p + ".attn.bk"));
    Var v = dense(x, store_.get(p + ".attn.wv"), store_.get(p + ".attn.bv"));
    std::vector<Var> heads;
    heads.reserve(static_cast<std::size_t>(cfg_.heads));
    for (int h = 0; h < cfg_.heads; ++h) {
      long off = static_cast<long>(h) * head_dim;
      Var qh = slice_cols(q, off, head_dim);
      Var kh = slice_cols(k, off, head_dim);
      Var vh = slice_cols(v, off, head_dim);
      Var att = row_softmax(mul_scalar(matmul(qh, transpose(kh)), scale));
      heads.push_back(matmul(att, vh));
    }
    Var attn_out = dense(concat_cols(heads), store_.get(p + ".attn.wo"),
                         store_.get(p + ".attn.bo"));
    x = layer_norm_rows(add(x, attn_out), store_.get(p + ".ln1.g"),
                        store_.get(p + ".ln1.b"));
    Var ff = dense(gelu(dense(x, store_.get(p + ".ffn.w1"),
                              store_.get(p + ".ffn.b1"))),
                   store_.get(p + ".ffn.w2"), store_.get(p + ".ffn.b2"));
    x = layer_norm_rows(add(x, ff), store_.get(p + ".ln2.g"),
                        store_.get(p + ".ln2.b"));
  }
  return x;
}

Var TransformerEncoder::forward(const std::vector<int>& token_ids) const {
  std::vector<int> ids;
  ids.reserve(token_ids.size() + 1);
  ids.push_back(Vocab::kCls);
  std::size_t limit =
      std::min(token_ids.size(), static_cast<std::size_t>(cfg_.max_tokens));
  for (std::size_t i = 0; i < limit; ++i) ids.push_back(token_ids[i]);
  if (ids.size() == 1) ids.push_back(Vocab::kPad);
  return encode_ids(ids);
}

void TransformerEncoder::freeze_layers_up_to(int n) {
  for (auto& [name, var] : store_.all()) {
    bool frozen = false;
    if (name.rfind("emb.", 0) == 0) frozen = true;
    if (name.rfind("layer", 0) == 0) {
      int layer = std::stoi(name.substr(5, name.find('.') - 5));
      frozen = layer <= n;
    }
    const_cast<Var&>(var).set_requires_grad(!frozen);
  }
}

void TransformerEncoder::unfreeze_all() {
  for (auto& [name, var] : store_.all())
    const_cast<Var&>(var).set_requires_grad(true);
}

Mat TransformerEncoder::word_embeddings(
    const std::vector<int>& token_ids) const {
  Var out = forward(token_ids);
  return out.value().bottomRows(out.rows() - 1);
}

WordEncoder::WordEncoder(TransformerConfig cfg, std::uint64_t seed,
                         int vocab_size)
    : vocab_(vocab_size > 0 ? vocab_size : cfg.vocab_size),
      encoder_(cfg, seed) {}

const Mat& WordEncoder::embed_words(const std::string& normalized_text) const {
  auto it = cache_.find(normalized_text);
  if (it != cache_.end()) return it->second;
  auto tokens = split_ws(normalized_text);
  Mat m = encoder_.word_embeddings(vocab_.encode(tokens));
  return cache_.emplace(normalized_text, std::move(m)).first->second;
}

TextCnn::TextCnn(TextCnnConfig cfg, ParamStore& store,
                 const std::string& prefix)
    : cfg_(std::move(cfg)) {
  for (int k : cfg_.kernels) {
    conv_w_.push_back(store.add_glorot(
        prefix + ".conv" + std::to_string(k) + ".w",
        static_cast<long>(k) * cfg_.embed_dim, cfg_.maps));
    conv_b_.push_back(store.add_zeros(
        prefix + ".conv" + std::to_string(k) + ".b", 1, cfg_.maps));
  }
  long concat_dim = static_cast<long>(cfg_.kernels.size()) * cfg_.maps;
  dense_w_ = store.add_glorot(prefix + ".dense.w", concat_dim, cfg_.out_dim);
  dense_b_ = store.add_zeros(prefix + ".dense.b", 1, cfg_.out_dim);
}

Var TextCnn::encode(const Var& word_embeddings) const {
  if (word_embeddings.cols() != cfg_.embed_dim)
    fail(ErrorCode::kInvalidArgument,
         "utterance encoder expects " + std::to_string(cfg_.embed_dim) +
             "-wide word embeddings, got " +
             std::to_string(word_embeddings.cols()));
  int max_kernel = *std::max_element(cfg_.kernels.begin(), cfg_.kernels.end());
  Var x = word_embeddings;
  if (x.rows() < max_kernel) {
    Mat pad = Mat::Zero(max_kernel - x.rows(), cfg_.embed_dim);
    x = concat_rows({x, Var::constant(std::move(pad))});
  }
  std::vector<Var> pooled;
  pooled.reserve(cfg_.kernels.size());
  for (std::size_t i = 0; i < cfg_.kernels.size(); ++i) {
    Var conv = add_rowvec(matmul(im2col(x, cfg_.kernels[i]), conv_w_[i]),
                          conv_b_[i]);
    pooled.push_back(relu(max_rows(conv)));
  }
  return dense(concat_cols(pooled), dense_w_, dense_b_);
}

}  // namespace bl::nn
