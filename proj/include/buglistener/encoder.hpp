#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "buglistener/nn.hpp"

namespace bl::nn {

// Hash vocabulary: token ids are stable across runs and machines without
// shipping a vocabulary file. Ids 0..2 are reserved specials.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;

  explicit Vocab(int size) : size_(size) {
    if (size < 8) fail(ErrorCode::kConfig, "vocab size too small");
  }
  int size() const { return size_; }
  int id(std::string_view token) const {
    return 3 + static_cast<int>(fnv1a64(token) % static_cast<std::uint64_t>(size_ - 3));
  }
  std::vector<int> encode(const std::vector<std::string>& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id(t));
    return ids;
  }

 private:
  int size_;
};

struct TransformerConfig {
  int hidden = 768;
  int layers = 12;
  int heads = 12;
  int ffn = 3072;
  int vocab_size = 30522;
  int max_tokens = 200;  // word positions, excluding [CLS]
  double init_stddev = 0.02;
  std::string weights_file;  // optional pretrained tensors
};

// Bidirectional transformer encoder (post-layer-norm blocks, GELU feed
// forward, learned positions). Serves two roles: frozen contextual word
// encoder for dialog classification and the fine-tuned sentence encoder for
// report synthesis.
class TransformerEncoder {
 public:
  TransformerEncoder(TransformerConfig cfg, std::uint64_t seed);

  const TransformerConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  // Rows: [CLS] followed by one row per input token id.
  Var forward(const std::vector<int>& token_ids) const;

  // Freezes the embedding block plus encoder layers 1..n (1-based);
  // layers above stay trainable.
  void freeze_layers_up_to(int n);
  void unfreeze_all();

  // Contextual embeddings of the word tokens only (the [CLS] row dropped).
  // Empty input maps to a single [PAD] token row.
  Mat word_embeddings(const std::vector<int>& token_ids) const;

 private:
  Var encode_ids(const std::vector<int>& ids) const;
  TransformerConfig cfg_;
  ParamStore store_;
};

// Splits normalized text, truncates to max_tokens, and caches frozen
// word-embedding matrices per distinct text.
class WordEncoder {
 public:
  WordEncoder(TransformerConfig cfg, std::uint64_t seed, int vocab_size = 0);
  const Mat& embed_words(const std::string& normalized_text) const;
  const TransformerEncoder& encoder() const { return encoder_; }
  const Vocab& vocab() const { return vocab_; }

 private:
  Vocab vocab_;
  TransformerEncoder encoder_;
  mutable std::unordered_map<std::string, Mat> cache_;
};

struct TextCnnConfig {
  std::vector<int> kernels{2, 3, 4, 5};
  int maps = 100;
  int embed_dim = 768;
  int out_dim = 100;
};

// Shallow convolutional utterance encoder: one conv bank per kernel size,
// max-pool over time, ReLU, concat, and a linear projection to out_dim.
class TextCnn {
 public:
  TextCnn(TextCnnConfig cfg, ParamStore& store, const std::string& prefix);
  Var encode(const Var& word_embeddings) const;  // 1 x out_dim
  const TextCnnConfig& config() const { return cfg_; }

 private:
  TextCnnConfig cfg_;
  std::vector<Var> conv_w_, conv_b_;
  Var dense_w_, dense_b_;
};

}  // namespace bl::nn
