#include "buglistener/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace bl::nn {

Mat zeros(long rows, long cols) { return Mat::Zero(rows, cols); }

Mat glorot_uniform(long rows, long cols, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> uni(-limit, limit);
  Mat m(rows, cols);
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j) m(i, j) = uni(rng);
  return m;
}

Mat gaussian(long rows, long cols, double stddev, Rng& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Mat m(rows, cols);
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

Var ParamStore::insert(const std::string& name, Mat value, bool trainable) {
  if (params_.count(name))
    fail(ErrorCode::kInternal, "duplicate parameter name: " + name);
  Var v = trainable ? Var::param(std::move(value))
                    : Var::constant(std::move(value));
  params_.emplace(name, v);
  return v;
}

Var ParamStore::add_glorot(const std::string& name, long rows, long cols,
                           bool trainable) {
  Rng rng(derive_seed(seed_, name));
  return insert(name, glorot_uniform(rows, cols, rng), trainable);
}

Var ParamStore::add_gaussian(const std::string& name, long rows, long cols,
                             double stddev, bool trainable) {
  Rng rng(derive_seed(seed_, name));
  return insert(name, gaussian(rows, cols, stddev, rng), trainable);
}

Var ParamStore::add_zeros(const std::string& name, long rows, long cols,
                          bool trainable) {
  return insert(name, Mat::Zero(rows, cols), trainable);
}

Var ParamStore::add_value(const std::string& name, Mat value, bool trainable) {
  return insert(name, std::move(value), trainable);
}

Var ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end())
    fail(ErrorCode::kInternal, "unknown parameter: " + name);
  return it->second;
}

bool ParamStore::contains(const std::string& name) const {
  return params_.count(name) != 0;
}

std::vector<Var> ParamStore::trainable() const {
  std::vector<Var> out;
  for (const auto& [name, var] : params_)
    if (var.requires_grad()) out.push_back(var);
  return out;
}

std::map<std::string, Mat> ParamStore::snapshot() const {
  std::map<std::string, Mat> out;
  for (const auto& [name, var] : params_) out[name] = var.value();
  return out;
}

void ParamStore::restore(const std::map<std::string, Mat>& values) {
  for (auto& [name, var] : params_) {
    auto it = values.find(name);
    if (it == values.end())
      fail(ErrorCode::kCheckpointNotFound, "missing tensor in checkpoint: " + name);
    if (it->second.rows() != var.value().rows() ||
        it->second.cols() != var.value().cols())
      fail(ErrorCode::kSchema, "tensor shape mismatch for " + name);
    var.value_mut() = it->second;
  }
}

Var l2_penalty(const ParamStore& store) {
  Var total = Var::constant(Mat::Zero(1, 1));
  for (const auto& [name, var] : store.all()) {
    if (!var.requires_grad()) continue;
    total = add(total, sum_all(mul(var, var)));
  }
  return total;
}

Adam::Adam(std::vector<Var> params, AdamConfig cfg) : cfg_(cfg) {
  for (auto& p : params) {
    slots_.push_back(
        {p, Mat::Zero(p.rows(), p.cols()), Mat::Zero(p.rows(), p.cols())});
  }
}

void Adam::zero_grad() {
  for (auto& s : slots_) s.param.zero_grad();
}

double Adam::global_grad_norm() const {
  double sq = 0.0;
  for (const auto& s : slots_) {
    Var p = s.param;
    sq += p.grad().squaredNorm();
  }
  return std::sqrt(sq);
}

void Adam::clip_global_norm(double max_norm) {
  double norm = global_grad_norm();
  if (norm <= max_norm || norm == 0.0) return;
  double scale = max_norm / norm;
  for (auto& s : slots_) s.param.grad() *= scale;
}

void Adam::step(double lr_scale) {
  ++t_;
  double lr = cfg_.lr * lr_scale;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& s : slots_) {
    const Mat& g = s.param.grad();
    if (cfg_.weight_decay > 0.0)
      s.param.value_mut() -= lr * cfg_.weight_decay * s.param.value();
    s.m = cfg_.beta1 * s.m + (1.0 - cfg_.beta1) * g;
    s.v = cfg_.beta2 * s.v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    Mat mhat = s.m / bc1;
    Mat vhat = s.v / bc2;
    s.param.value_mut().array() -=
        lr * mhat.array() / (vhat.array().sqrt() + cfg_.eps);
  }
}

namespace {
constexpr char kMagic[4] = {'B', 'L', 'T', 'N'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
}  // namespace

void save_tensors(const std::filesystem::path& file,
                  const std::map<std::string, Mat>& tensors) {
  namespace fs = std::filesystem;
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  fs::path tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot write " + tmp.string());
    out.write(kMagic, 4);
    write_pod(out, kVersion);
    write_pod(out, static_cast<std::uint64_t>(tensors.size()));
    for (const auto& [name, m] : tensors) {
      write_pod(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_pod(out, static_cast<std::uint64_t>(m.rows()));
      write_pod(out, static_cast<std::uint64_t>(m.cols()));
      for (long i = 0; i < m.rows(); ++i)
        out.write(reinterpret_cast<const char*>(m.row(i).eval().data()),
                  static_cast<std::streamsize>(sizeof(double) * m.cols()));
    }
    if (!out) fail(ErrorCode::kIo, "short write: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, file, ec);
  if (ec) fail(ErrorCode::kIo, "rename failed: " + file.string());
}

std::map<std::string, Mat> load_tensors(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in)
    fail(ErrorCode::kCheckpointNotFound, "cannot open tensor file: " + file.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    fail(ErrorCode::kSchema, "not a tensor file: " + file.string());
  auto version = read_pod<std::uint32_t>(in);
  if (version != kVersion)
    fail(ErrorCode::kSchema, "unsupported tensor file version");
  auto count = read_pod<std::uint64_t>(in);
  std::map<std::string, Mat> out;
  for (std::uint64_t k = 0; k < count; ++k) {
    auto name_len = read_pod<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    auto rows = read_pod<std::uint64_t>(in);
    auto cols = read_pod<std::uint64_t>(in);
    Mat m(static_cast<long>(rows), static_cast<long>(cols));
    std::vector<double> row(cols);
    for (std::uint64_t i = 0; i < rows; ++i) {
      in.read(reinterpret_cast<char*>(row.data()),
              static_cast<std::streamsize>(sizeof(double) * cols));
      for (std::uint64_t j = 0; j < cols; ++j)
        m(static_cast<long>(i), static_cast<long>(j)) = row[j];
    }
    if (!in) fail(ErrorCode::kSchema, "truncated tensor file: " + file.string());
    out.emplace(std::move(name), std::move(m));
  }
  return out;
}

Var dense(const Var& x, const Var& w, const Var& b) {
  return add_rowvec(matmul(x, w), b);
}

}  // namespace bl::nn
