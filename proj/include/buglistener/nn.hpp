#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "buglistener/tensor.hpp"

namespace bl::nn {

Mat zeros(long rows, long cols);
Mat glorot_uniform(long rows, long cols, Rng& rng);
Mat gaussian(long rows, long cols, double stddev, Rng& rng);

// Named parameter registry. Initialization seeds derive from the store seed
// plus the parameter name, so values do not depend on registration order.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed) : seed_(seed) {}

  Var add_glorot(const std::string& name, long rows, long cols,
                 bool trainable = true);
  Var add_gaussian(const std::string& name, long rows, long cols,
                   double stddev, bool trainable = true);
  Var add_zeros(const std::string& name, long rows, long cols,
                bool trainable = true);
  Var add_value(const std::string& name, Mat value, bool trainable = true);

  Var get(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::vector<Var> trainable() const;
  const std::map<std::string, Var>& all() const { return params_; }
  std::uint64_t seed() const { return seed_; }

  std::map<std::string, Mat> snapshot() const;
  void restore(const std::map<std::string, Mat>& values);

 private:
  Var insert(const std::string& name, Mat value, bool trainable);
  std::uint64_t seed_;
  std::map<std::string, Var> params_;
};

// sum of squared entries over all trainable parameters, as a graph node
Var l2_penalty(const ParamStore& store);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled (applied to values, not grads)
};

class Adam {
 public:
  Adam(std::vector<Var> params, AdamConfig cfg);
  void zero_grad();
  // lr_scale supports warmup schedules
  void step(double lr_scale = 1.0);
  double global_grad_norm() const;
  void clip_global_norm(double max_norm);

 private:
  struct Slot {
    Var param;
    Mat m, v;
  };
  std::vector<Slot> slots_;
  AdamConfig cfg_;
  long t_ = 0;
};

// Flat binary tensor file: magic, version, count, then per-tensor
// name/rows/cols/row-major doubles. Used by every checkpoint directory.
void save_tensors(const std::filesystem::path& file,
                  const std::map<std::string, Mat>& tensors);
std::map<std::string, Mat> load_tensors(const std::filesystem::path& file);

Var dense(const Var& x, const Var& w, const Var& b);

}  // namespace bl::nn
