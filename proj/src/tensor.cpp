#include "buglistener/tensor.hpp"

#include <cmath>
#include <unordered_set>

namespace bl::nn {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865476;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

Var make_node(Mat value, std::vector<Var> parents,
              std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.requires_grad();
  n->requires_grad = needs;
  if (needs) {
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward_fn);
  }
  return Var(n);
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    fail(ErrorCode::kInvalidArgument,
         std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
             "x" + std::to_string(a.cols()) + " vs " +
             std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

// elementwise op with derivative computed from the input value
Var unary(const Var& a, Mat value, Mat dvalue_da) {
  return make_node(std::move(value), {a},
                   [pa = a.node(), d = std::move(dvalue_da)](Node& n) {
                     if (!pa->requires_grad) return;
                     pa->ensure_grad();
                     pa->grad.array() += n.grad.array() * d.array();
                   });
}

}  // namespace

Var Var::constant(Mat v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = false;
  return Var(n);
}

Var Var::param(Mat v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = true;
  return Var(n);
}

void backward(const Var& root) {
  if (root.rows() != 1 || root.cols() != 1)
    fail(ErrorCode::kInvalidArgument, "backward: root must be a scalar node");
  if (!root.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> scheduled;
  // iterative post-order DFS over a DAG; reverse(order) puts every node
  // before its parents, so grads are complete when a node is processed
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  scheduled.insert(root.node().get());
  while (!stack.empty()) {
    Node* node = stack.back().first;
    std::size_t& idx = stack.back().second;
    if (idx < node->parents.size()) {
      Node* next = node->parents[idx++].get();
      if (next->requires_grad && !scheduled.count(next)) {
        scheduled.insert(next);
        stack.emplace_back(next, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->ensure_grad();
  root.node()->grad(0, 0) = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  return make_node(a.value() + b.value(), {a, b},
                   [pa = a.node(), pb = b.node()](Node& n) {
                     if (pa->requires_grad) {
                       pa->ensure_grad();
                       pa->grad += n.grad;
                     }
                     if (pb->requires_grad) {
                       pb->ensure_grad();
                       pb->grad += n.grad;
                     }
                   });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  return make_node(a.value() - b.value(), {a, b},
                   [pa = a.node(), pb = b.node()](Node& n) {
                     if (pa->requires_grad) {
                       pa->ensure_grad();
                       pa->grad += n.grad;
                     }
                     if (pb->requires_grad) {
                       pb->ensure_grad();
                       pb->grad -= n.grad;
                     }
                   });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  return make_node(a.value().cwiseProduct(b.value()), {a, b},
                   [pa = a.node(), pb = b.node()](Node& n) {
                     if (pa->requires_grad) {
                       pa->ensure_grad();
                       pa->grad.array() += n.grad.array() * pb->value.array();
                     }
                     if (pb->requires_grad) {
                       pb->ensure_grad();
                       pb->grad.array() += n.grad.array() * pa->value.array();
                     }
                   });
}

Var mul_scalar(const Var& a, double s) {
  return make_node(a.value() * s, {a}, [pa = a.node(), s](Node& n) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    pa->grad += n.grad * s;
  });
}

Var add_rowvec(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    fail(ErrorCode::kInvalidArgument, "add_rowvec: bias must be 1 x cols(a)");
  Mat v = a.value();
  v.rowwise() += row.value().row(0);
  return make_node(std::move(v), {a, row},
                   [pa = a.node(), pr = row.node()](Node& n) {
                     if (pa->requires_grad) {
                       pa->ensure_grad();
                       pa->grad += n.grad;
                     }
                     if (pr->requires_grad) {
                       pr->ensure_grad();
                       pr->grad.row(0) += n.grad.colwise().sum();
                     }
                   });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows())
    fail(ErrorCode::kInvalidArgument,
         "matmul: inner dimensions differ (" + std::to_string(a.cols()) +
             " vs " + std::to_string(b.rows()) + ")");
  return make_node(a.value() * b.value(), {a, b},
                   [pa = a.node(), pb = b.node()](Node& n) {
                     if (pa->requires_grad) {
                       pa->ensure_grad();
                       pa->grad.noalias() += n.grad * pb->value.transpose();
                     }
                     if (pb->requires_grad) {
                       pb->ensure_grad();
                       pb->grad.noalias() += pa->value.transpose() * n.grad;
                     }
                   });
}

Var transpose(const Var& a) {
  return make_node(a.value().transpose(), {a}, [pa = a.node()](Node& n) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    pa->grad += n.grad.transpose();
  });
}

Var relu(const Var& a) {
  Mat v = a.value().cwiseMax(0.0);
  Mat d = (a.value().array() > 0.0).cast<double>();
  return unary(a, std::move(v), std::move(d));
}

Var softsign(const Var& a) {
  Mat denom = 1.0 + a.value().array().abs();
  Mat v = a.value().array() / denom.array();
  Mat d = 1.0 / (denom.array() * denom.array());
  return unary(a, std::move(v), std::move(d));
}

Var sigmoid(const Var& a) {
  Mat v = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  Mat d = v.array() * (1.0 - v.array());
  return unary(a, std::move(v), std::move(d));
}

Var gelu(const Var& a) {
  Mat v(a.rows(), a.cols());
  Mat d(a.rows(), a.cols());
  for (long i = 0; i < a.rows(); ++i)
    for (long j = 0; j < a.cols(); ++j) {
      double x = a.value()(i, j);
      double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
      v(i, j) = x * cdf;
      d(i, j) = cdf + x * std::exp(-0.5 * x * x) * kInvSqrt2Pi;
    }
  return unary(a, std::move(v), std::move(d));
}

Var log_clamped(const Var& a, double floor) {
  Mat clamped = a.value().cwiseMax(floor);
  Mat v = clamped.array().log();
  Mat d = (a.value().array() > floor).cast<double>() / clamped.array();
  return unary(a, std::move(v), std::move(d));
}

Var pow_scalar(const Var& a, double p) {
  Mat v = a.value().array().pow(p);
  Mat d(a.rows(), a.cols());
  for (long i = 0; i < d.rows(); ++i)
    for (long j = 0; j < d.cols(); ++j) {
      double base = a.value()(i, j);
      d(i, j) = (p == 0.0 || (base == 0.0 && p < 1.0))
                    ? 0.0
                    : p * std::pow(base, p - 1.0);
    }
  return unary(a, std::move(v), std::move(d));
}

Var row_softmax(const Var& a) {
  Mat v(a.rows(), a.cols());
  for (long i = 0; i < a.rows(); ++i) {
    double mx = a.value().row(i).maxCoeff();
    Eigen::ArrayXd e = (a.value().row(i).array() - mx).exp();
    v.row(i) = (e / e.sum()).matrix();
  }
  return make_node(std::move(v), {a}, [pa = a.node()](Node& n) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    for (long i = 0; i < n.value.rows(); ++i) {
      double dot = n.grad.row(i).dot(n.value.row(i));
      pa->grad.row(i).array() +=
          n.value.row(i).array() * (n.grad.row(i).array() - dot);
    }
  });
}

Var sum_all(const Var& a) {
  Mat v(1, 1);
  v(0, 0) = a.value().sum();
  return make_node(std::move(v), {a}, [pa = a.node()](Node& n) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    pa->grad.array() += n.grad(0, 0);
  });
}

Var mean_all(const Var& a) {
  return mul_scalar(sum_all(a),
                    1.0 / static_cast<double>(a.rows() * a.cols()));
}

Var sum_rows(const Var& a) {
  Mat v = a.value().colwise().sum();
  return make_node(std::move(v), {a}, [pa = a.node()](Node& n) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    pa->grad.rowwise() += n.grad.row(0);
  });
}

Var max_rows(const Var& a) {
  Mat v(1, a.cols());
  std::vector<long> arg(static_cast<std::size_t>(a.cols()));
  for (long j = 0; j < a.cols(); ++j) {
    long best = 0;
    for (long i = 1; i < a.rows(); ++i)
      if (a.value()(i, j) > a.value()(best, j)) best = i;
    v(0, j) = a.value()(best, j);
    arg[static_cast<std::size_t>(j)] = best;
  }
  return make_node(std::move(v), {a},
                   [pa = a.node(), arg = std::move(arg)](Node& n) {
                     if (!pa->requires_grad) return;
                     pa->ensure_grad();
                     for (long j = 0; j < n.value.cols(); ++j)
                       pa->grad(arg[static_cast<std::size_t>(j)], j) +=
                           n.grad(0, j);
                   });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty())
    fail(ErrorCode::kInvalidArgument, "concat_cols: empty input");
  long rows = parts[0].rows(), cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows)
      fail(ErrorCode::kInvalidArgument, "concat_cols: row mismatch");
    cols += p.cols();
  }
  Mat v(rows, cols);
  long off = 0;
  std::vector<long> offsets;
  for (const auto& p : parts) {
    v.middleCols(off, p.cols()) = p.value();
    offsets.push_back(off);
    off += p.cols();
  }
  return make_node(std::move(v), parts,
                   [parents = parts, offsets](Node& n) {
                     for (std::size_t k = 0; k < parents.size(); ++k) {
                       auto p = parents[k].node();
                       if (!p->requires_grad) continue;
                       p->ensure_grad();
                       p->grad += n.grad.middleCols(offsets[k], p->value.cols());
                     }
                   });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty())
    fail(ErrorCode::kInvalidArgument, "concat_rows: empty input");
  long cols = parts[0].cols(), rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols)
      fail(ErrorCode::kInvalidArgument, "concat_rows: column mismatch");
    rows += p.rows();
  }
  Mat v(rows, cols);
  long off = 0;
  std::vector<long> offsets;
  for (const auto& p : parts) {
    v.middleRows(off, p.rows()) = p.value();
    offsets.push_back(off);
    off += p.rows();
  }
  return make_node(std::move(v), parts,
                   [parents = parts, offsets](Node& n) {
                     for (std::size_t k = 0; k < parents.size(); ++k) {
                       auto p = parents[k].node();
                       if (!p->requires_grad) continue;
                       p->ensure_grad();
                       p->grad += n.grad.middleRows(offsets[k], p->value.rows());
                     }
                   });
}

Var slice_cols(const Var& a, long start, long n) {
  if (start < 0 || start + n > a.cols())
    fail(ErrorCode::kInvalidArgument, "slice_cols: out of range");
  return make_node(a.value().middleCols(start, n), {a},
                   [pa = a.node(), start, n](Node& nd) {
                     if (!pa->requires_grad) return;
                     pa->ensure_grad();
                     pa->grad.middleCols(start, n) += nd.grad;
                   });
}

Var slice_rows(const Var& a, long start, long n) {
  if (start < 0 || start + n > a.rows())
    fail(ErrorCode::kInvalidArgument, "slice_rows: out of range");
  return make_node(a.value().middleRows(start, n), {a},
                   [pa = a.node(), start, n](Node& nd) {
                     if (!pa->requires_grad) return;
                     pa->ensure_grad();
                     pa->grad.middleRows(start, n) += nd.grad;
                   });
}

Var pick(const Var& a, long r, long c) {
  if (r < 0 || r >= a.rows() || c < 0 || c >= a.cols())
    fail(ErrorCode::kInvalidArgument, "pick: out of range");
  Mat v(1, 1);
  v(0, 0) = a.value()(r, c);
  return make_node(std::move(v), {a}, [pa = a.node(), r, c](Node& n) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    pa->grad(r, c) += n.grad(0, 0);
  });
}

Var dropout(const Var& a, double p, Rng& rng, bool training) {
  if (!training || p <= 0.0) return a;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Mat mask(a.rows(), a.cols());
  double keep = 1.0 - p;
  for (long i = 0; i < a.rows(); ++i)
    for (long j = 0; j < a.cols(); ++j)
      mask(i, j) = uni(rng) < keep ? 1.0 / keep : 0.0;
  return mul(a, Var::constant(std::move(mask)));
}

Var im2col(const Var& x, int k) {
  long L = x.rows(), d = x.cols();
  if (k < 1 || L < k)
    fail(ErrorCode::kInvalidArgument,
         "im2col: need at least " + std::to_string(k) + " rows, got " +
             std::to_string(L));
  long out_rows = L - k + 1;
  Mat v(out_rows, k * d);
  for (long t = 0; t < out_rows; ++t)
    for (int w = 0; w < k; ++w)
      v.block(t, w * d, 1, d) = x.value().row(t + w);
  return make_node(std::move(v), {x}, [px = x.node(), k, d](Node& n) {
    if (!px->requires_grad) return;
    px->ensure_grad();
    for (long t = 0; t < n.value.rows(); ++t)
      for (int w = 0; w < k; ++w)
        px->grad.row(t + w) += n.grad.block(t, w * d, 1, d);
  });
}

Var embedding_rows(const Var& table, const std::vector<int>& ids) {
  Mat v(static_cast<long>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows())
      fail(ErrorCode::kInvalidArgument, "embedding_rows: id out of range");
    v.row(static_cast<long>(i)) = table.value().row(ids[i]);
  }
  return make_node(std::move(v), {table}, [pt = table.node(), ids](Node& n) {
    if (!pt->requires_grad) return;
    pt->ensure_grad();
    for (std::size_t i = 0; i < ids.size(); ++i)
      pt->grad.row(ids[i]) += n.grad.row(static_cast<long>(i));
  });
}

Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias,
                    double eps) {
  long d = x.cols();
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 ||
      bias.cols() != d)
    fail(ErrorCode::kInvalidArgument, "layer_norm_rows: gain/bias must be 1 x d");
  Mat xhat(x.rows(), d);
  Eigen::VectorXd inv_std(x.rows());
  for (long i = 0; i < x.rows(); ++i) {
    double mean = x.value().row(i).mean();
    double var =
        (x.value().row(i).array() - mean).square().sum() / static_cast<double>(d);
    double is = 1.0 / std::sqrt(var + eps);
    inv_std(i) = is;
    xhat.row(i) = ((x.value().row(i).array() - mean) * is).matrix();
  }
  Mat v = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  v.rowwise() += bias.value().row(0);
  return make_node(
      std::move(v), {x, gain, bias},
      [px = x.node(), pg = gain.node(), pb = bias.node(), xhat,
       inv_std](Node& n) {
        if (pb->requires_grad) {
          pb->ensure_grad();
          pb->grad.row(0) += n.grad.colwise().sum();
        }
        if (pg->requires_grad) {
          pg->ensure_grad();
          pg->grad.row(0) += (n.grad.array() * xhat.array()).colwise().sum().matrix();
        }
        if (px->requires_grad) {
          px->ensure_grad();
          using RowArray = Eigen::Array<double, 1, Eigen::Dynamic>;
          for (long i = 0; i < xhat.rows(); ++i) {
            RowArray dy = n.grad.row(i).array() * pg->value.row(0).array();
            RowArray xh = xhat.row(i).array();
            double m1 = dy.mean();
            double m2 = (dy * xh).mean();
            px->grad.row(i).array() += inv_std(i) * (dy - m1 - xh * m2);
          }
        }
      });
}

Var row_normalize_masked(const Var& scores, const Mat& mask,
                         double fallback_eps) {
  if (mask.rows() != scores.rows() || mask.cols() != scores.cols())
    fail(ErrorCode::kInvalidArgument, "row_normalize_masked: mask shape");
  long n = scores.rows(), m = scores.cols();
  Mat v = Mat::Zero(n, m);
  std::vector<char> uniform_row(static_cast<std::size_t>(n), 0);
  for (long i = 0; i < n; ++i) {
    double denom = 0.0;
    long count = 0;
    for (long j = 0; j < m; ++j)
      if (mask(i, j) != 0.0) {
        denom += scores.value()(i, j);
        ++count;
      }
    if (count == 0) continue;
    if (denom <= fallback_eps) {
      uniform_row[static_cast<std::size_t>(i)] = 1;
      for (long j = 0; j < m; ++j)
        if (mask(i, j) != 0.0) v(i, j) = 1.0 / static_cast<double>(count);
    } else {
      for (long j = 0; j < m; ++j)
        if (mask(i, j) != 0.0) v(i, j) = scores.value()(i, j) / denom;
    }
  }
  return make_node(
      std::move(v), {scores},
      [ps = scores.node(), mask, uniform_row](Node& nd) {
        if (!ps->requires_grad) return;
        ps->ensure_grad();
        for (long i = 0; i < nd.value.rows(); ++i) {
          if (uniform_row[static_cast<std::size_t>(i)]) continue;  // constant branch
          double denom = 0.0;
          for (long j = 0; j < nd.value.cols(); ++j)
            if (mask(i, j) != 0.0) denom += ps->value(i, j);
          if (denom == 0.0) continue;
          double weighted = 0.0;  // sum_k g_ik * w_ik
          for (long j = 0; j < nd.value.cols(); ++j)
            if (mask(i, j) != 0.0) weighted += nd.grad(i, j) * nd.value(i, j);
          for (long j = 0; j < nd.value.cols(); ++j)
            if (mask(i, j) != 0.0)
              ps->grad(i, j) += (nd.grad(i, j) - weighted) / denom;
        }
      });
}

}  // namespace bl::nn
