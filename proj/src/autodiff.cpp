#include "vagpo/autodiff.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace vagpo::ad {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

Tape::Id Tape::push(Mat value, bool requires_grad, std::function<void(Tape&, const Mat&)> fn) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.backward = requires_grad ? std::move(fn) : nullptr;
  nodes_.push_back(std::move(node));
  return static_cast<Id>(nodes_.size()) - 1;
}

Mat& Tape::grad_ref(Id id) {
  Node& node = nodes_[static_cast<std::size_t>(id)];
  if (node.grad.size() == 0) node.grad = Mat::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

void Tape::accumulate(Id id, const Mat& g) {
  if (!needs(id)) return;
  grad_ref(id) += g;
}

Tape::Id Tape::constant(Mat value) { return push(std::move(value), false, nullptr); }

Tape::Id Tape::param(const Mat* value, Mat* grad) {
  Node node;
  node.value = *value;
  node.requires_grad = grad != nullptr;
  node.param_grad = grad;
  nodes_.push_back(std::move(node));
  return static_cast<Id>(nodes_.size()) - 1;
}

Tape::Id Tape::add(Id a, Id b) {
  return push(value(a) + value(b), needs(a) || needs(b), [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Tape::Id Tape::sub(Id a, Id b) {
  return push(value(a) - value(b), needs(a) || needs(b), [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    if (t.needs(b)) t.grad_ref(b) -= g;
  });
}

Tape::Id Tape::scale(Id a, double c) {
  return push(value(a) * c, needs(a), [a, c](Tape& t, const Mat& g) { t.accumulate(a, g * c); });
}

Tape::Id Tape::scale_by(Id a, Id scalar) {
  if (value(scalar).size() != 1) throw std::invalid_argument("scale_by: scalar must be 1x1");
  const double s = value(scalar)(0, 0);
  return push(value(a) * s, needs(a) || needs(scalar), [a, scalar, s](Tape& t, const Mat& g) {
    t.accumulate(a, g * s);
    if (t.needs(scalar)) {
      Mat ds(1, 1);
      ds(0, 0) = (g.array() * t.value(a).array()).sum();
      t.grad_ref(scalar) += ds;
    }
  });
}

Tape::Id Tape::matmul(Id a, Id b) {
  return push(value(a) * value(b), needs(a) || needs(b), [a, b](Tape& t, const Mat& g) {
    if (t.needs(a)) t.grad_ref(a) += g * t.value(b).transpose();
    if (t.needs(b)) t.grad_ref(b) += t.value(a).transpose() * g;
  });
}

Tape::Id Tape::matmul_nt(Id a, Id b) {
  return push(value(a) * value(b).transpose(), needs(a) || needs(b),
              [a, b](Tape& t, const Mat& g) {
                if (t.needs(a)) t.grad_ref(a) += g * t.value(b);
                if (t.needs(b)) t.grad_ref(b) += g.transpose() * t.value(a);
              });
}

Tape::Id Tape::matmul_tn(Id a, Id b) {
  return push(value(a).transpose() * value(b), needs(a) || needs(b),
              [a, b](Tape& t, const Mat& g) {
                if (t.needs(a)) t.grad_ref(a) += t.value(b) * g.transpose();
                if (t.needs(b)) t.grad_ref(b) += t.value(a) * g;
              });
}

Tape::Id Tape::add_row_broadcast(Id a, Id row) {
  if (value(row).rows() != 1 || value(row).cols() != value(a).cols()) {
    throw std::invalid_argument("add_row_broadcast: row must be 1 x cols(a)");
  }
  Mat out = value(a);
  out.rowwise() += value(row).row(0);
  return push(std::move(out), needs(a) || needs(row), [a, row](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    if (t.needs(row)) t.grad_ref(row) += g.colwise().sum();
  });
}

Tape::Id Tape::mul_row_broadcast(Id a, Id row) {
  if (value(row).rows() != 1 || value(row).cols() != value(a).cols()) {
    throw std::invalid_argument("mul_row_broadcast: row must be 1 x cols(a)");
  }
  Mat out = value(a).array().rowwise() * value(row).row(0).array();
  return push(std::move(out), needs(a) || needs(row), [a, row](Tape& t, const Mat& g) {
    if (t.needs(a)) {
      t.grad_ref(a) += (g.array().rowwise() * t.value(row).row(0).array()).matrix();
    }
    if (t.needs(row)) {
      t.grad_ref(row) += (g.array() * t.value(a).array()).colwise().sum().matrix();
    }
  });
}

Tape::Id Tape::concat_cols(Id a, Id b) {
  if (value(a).rows() != value(b).rows()) {
    throw std::invalid_argument("concat_cols: row counts differ");
  }
  Mat out(value(a).rows(), value(a).cols() + value(b).cols());
  out << value(a), value(b);
  const int cols_a = static_cast<int>(value(a).cols());
  return push(std::move(out), needs(a) || needs(b), [a, b, cols_a](Tape& t, const Mat& g) {
    if (t.needs(a)) t.grad_ref(a) += g.leftCols(cols_a);
    if (t.needs(b)) t.grad_ref(b) += g.rightCols(g.cols() - cols_a);
  });
}

Tape::Id Tape::slice_cols(Id a, int begin, int len) {
  return push(value(a).middleCols(begin, len), needs(a), [a, begin, len](Tape& t, const Mat& g) {
    if (t.needs(a)) t.grad_ref(a).middleCols(begin, len) += g;
  });
}

Tape::Id Tape::gather_rows(Id a, std::vector<int> rows) {
  Mat out(static_cast<Eigen::Index>(rows.size()), value(a).cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = value(a).row(rows[r]);
  }
  return push(std::move(out), needs(a), [a, rows = std::move(rows)](Tape& t, const Mat& g) {
    if (!t.needs(a)) return;
    Mat& da = t.grad_ref(a);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      da.row(rows[r]) += g.row(static_cast<Eigen::Index>(r));
    }
  });
}

Tape::Id Tape::gather_entry_per_row(Id a, std::vector<int> cols) {
  if (static_cast<Eigen::Index>(cols.size()) != value(a).rows()) {
    throw std::invalid_argument("gather_entry_per_row: one column index per row required");
  }
  Mat out(value(a).rows(), 1);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    out(r, 0) = value(a)(r, cols[static_cast<std::size_t>(r)]);
  }
  return push(std::move(out), needs(a), [a, cols = std::move(cols)](Tape& t, const Mat& g) {
    if (!t.needs(a)) return;
    Mat& da = t.grad_ref(a);
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      da(r, cols[static_cast<std::size_t>(r)]) += g(r, 0);
    }
  });
}

Tape::Id Tape::mean_rows(Id a) {
  Mat out = value(a).colwise().mean();
  const double inv_rows = 1.0 / static_cast<double>(value(a).rows());
  return push(std::move(out), needs(a), [a, inv_rows](Tape& t, const Mat& g) {
    if (!t.needs(a)) return;
    Mat& da = t.grad_ref(a);
    da += (g.row(0) * inv_rows).replicate(da.rows(), 1);
  });
}

Tape::Id Tape::sum_all(Id a) {
  Mat out(1, 1);
  out(0, 0) = value(a).sum();
  return push(std::move(out), needs(a), [a](Tape& t, const Mat& g) {
    if (t.needs(a)) {
      t.grad_ref(a).array() += g(0, 0);
    }
  });
}

Tape::Id Tape::dot_const(Id a, Mat weights) {
  if (weights.rows() != value(a).rows() || weights.cols() != value(a).cols()) {
    throw std::invalid_argument("dot_const: shape mismatch");
  }
  Mat out(1, 1);
  out(0, 0) = (value(a).array() * weights.array()).sum();
  return push(std::move(out), needs(a), [a, weights = std::move(weights)](Tape& t, const Mat& g) {
    if (t.needs(a)) t.grad_ref(a) += g(0, 0) * weights;
  });
}

Tape::Id Tape::tanh_op(Id a) {
  Mat out = value(a).array().tanh();
  return push(std::move(out), needs(a), [a, self = static_cast<Id>(nodes_.size())](Tape& t, const Mat& g) {
    if (t.needs(a)) {
      const Mat& y = t.value(self);
      t.grad_ref(a) += (g.array() * (1.0 - y.array().square())).matrix();
    }
  });
}

Tape::Id Tape::relu(Id a) {
  Mat out = value(a).array().max(0.0);
  return push(std::move(out), needs(a), [a](Tape& t, const Mat& g) {
    if (t.needs(a)) {
      t.grad_ref(a) += (g.array() * (t.value(a).array() > 0.0).cast<double>()).matrix();
    }
  });
}

Tape::Id Tape::softplus(Id a) {
  Mat out = value(a);
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const double x = out(i);
    out(i) = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  }
  return push(std::move(out), needs(a), [a](Tape& t, const Mat& g) {
    if (!t.needs(a)) return;
    const Mat& x = t.value(a);
    Mat sig = x;
    for (Eigen::Index i = 0; i < sig.size(); ++i) {
      sig(i) = 1.0 / (1.0 + std::exp(-x(i)));
    }
    t.grad_ref(a) += (g.array() * sig.array()).matrix();
  });
}

Tape::Id Tape::layer_norm_rows(Id a, double eps) {
  const Mat& x = value(a);
  const Eigen::Index cols = x.cols();
  Mat y(x.rows(), cols);
  Mat inv_std(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    const double s = 1.0 / std::sqrt(var + eps);
    inv_std(r, 0) = s;
    y.row(r) = ((x.row(r).array() - mean) * s).matrix();
  }
  return push(std::move(y), needs(a),
              [a, inv_std = std::move(inv_std), self = static_cast<Id>(nodes_.size())](
                  Tape& t, const Mat& g) {
                if (!t.needs(a)) return;
                const Mat& y = t.value(self);
                Mat& da = t.grad_ref(a);
                for (Eigen::Index r = 0; r < g.rows(); ++r) {
                  const double g_mean = g.row(r).mean();
                  const double gy_mean = (g.row(r).array() * y.row(r).array()).mean();
                  da.row(r) += (inv_std(r, 0) *
                                (g.row(r).array() - g_mean - y.row(r).array() * gy_mean))
                                   .matrix();
                }
              });
}

Tape::Id Tape::softmax_rows(Id a) {
  const Mat& x = value(a);
  Mat y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double row_max = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - row_max).exp();
    y.row(r) /= y.row(r).sum();
  }
  return push(std::move(y), needs(a),
              [a, self = static_cast<Id>(nodes_.size())](Tape& t, const Mat& g) {
                if (!t.needs(a)) return;
                const Mat& y = t.value(self);
                Mat& da = t.grad_ref(a);
                for (Eigen::Index r = 0; r < g.rows(); ++r) {
                  const double dot = (g.row(r).array() * y.row(r).array()).sum();
                  da.row(r) += ((g.row(r).array() - dot) * y.row(r).array()).matrix();
                }
              });
}

Tape::Id Tape::masked_log_softmax_rows(Id a, const Mat& mask) {
  const Mat& x = value(a);
  if (mask.rows() != x.rows() || mask.cols() != x.cols()) {
    throw std::invalid_argument("masked_log_softmax_rows: mask shape mismatch");
  }
  Mat y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double row_max = kNegInf;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (mask(r, c) != 0.0 && x(r, c) > row_max) row_max = x(r, c);
    }
    if (row_max == kNegInf) {
      throw std::invalid_argument("masked_log_softmax_rows: row has no feasible entry");
    }
    double sum = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (mask(r, c) != 0.0) sum += std::exp(x(r, c) - row_max);
    }
    const double lse = row_max + std::log(sum);
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      y(r, c) = mask(r, c) != 0.0 ? x(r, c) - lse : kNegInf;
    }
  }
  return push(std::move(y), needs(a),
              [a, mask, self = static_cast<Id>(nodes_.size())](Tape& t, const Mat& g) {
                if (!t.needs(a)) return;
                const Mat& y = t.value(self);
                Mat& da = t.grad_ref(a);
                for (Eigen::Index r = 0; r < g.rows(); ++r) {
                  double g_sum = 0.0;
                  for (Eigen::Index c = 0; c < g.cols(); ++c) {
                    if (mask(r, c) != 0.0) g_sum += g(r, c);
                  }
                  for (Eigen::Index c = 0; c < g.cols(); ++c) {
                    if (mask(r, c) != 0.0) {
                      da(r, c) += g(r, c) - std::exp(y(r, c)) * g_sum;
                    }
                  }
                }
              });
}

void Tape::backward(Id root) {
  Node& root_node = nodes_[static_cast<std::size_t>(root)];
  if (root_node.value.size() != 1) {
    throw std::invalid_argument("backward: root must be a 1x1 scalar");
  }
  if (!root_node.requires_grad) return;
  grad_ref(root)(0, 0) = 1.0;
  for (Id id = root; id >= 0; --id) {
    Node& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.requires_grad || node.grad.size() == 0) continue;
    if (node.backward) node.backward(*this, node.grad);
    if (node.param_grad) *node.param_grad += node.grad;
  }
}

}  // namespace vagpo::ad
