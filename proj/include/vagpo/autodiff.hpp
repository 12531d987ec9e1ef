#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace vagpo::ad {

using Mat = Eigen::MatrixXd;

// Reverse-mode tape over dense double matrices. Values are computed eagerly
// on op creation; backward() walks the tape in reverse and accumulates
// parameter gradients into the external matrices registered via param().
// Scalars are 1x1 matrices.
class Tape {
 public:
  using Id = int;

  Id constant(Mat value);
  // Leaf bound to external storage. `grad` may be null, in which case the
  // leaf behaves like a constant (detached evaluation).
  Id param(const Mat* value, Mat* grad);

  const Mat& value(Id id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  std::size_t size() const { return nodes_.size(); }

  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id scale(Id a, double c);
  Id scale_by(Id a, Id scalar);  // scalar is 1x1
  Id matmul(Id a, Id b);         // A * B
  Id matmul_nt(Id a, Id b);      // A * B^T
  Id matmul_tn(Id a, Id b);      // A^T * B
  Id add_row_broadcast(Id a, Id row);  // row is 1xC, added to every row of A
  Id mul_row_broadcast(Id a, Id row);  // per-column scaling by a 1xC row
  Id concat_cols(Id a, Id b);
  Id slice_cols(Id a, int begin, int len);
  Id gather_rows(Id a, std::vector<int> rows);
  Id gather_entry_per_row(Id a, std::vector<int> cols);  // Rx1
  Id mean_rows(Id a);                                    // 1xC
  Id sum_all(Id a);                                      // 1x1
  Id dot_const(Id a, Mat weights);                       // sum(A .* W), 1x1
  Id tanh_op(Id a);
  Id relu(Id a);
  Id softplus(Id a);
  Id layer_norm_rows(Id a, double eps = 1e-6);
  Id softmax_rows(Id a);
  // Rows are normalized over entries where mask != 0; masked entries get
  // -inf log-probability and zero gradient.
  Id masked_log_softmax_rows(Id a, const Mat& mask);

  // Seeds d(root)/d(root) = 1 (root must be 1x1) and accumulates into every
  // registered parameter gradient. May be called once per tape.
  void backward(Id root);

 private:
  struct Node {
    Mat value;
    Mat grad;  // allocated lazily during backward
    std::function<void(Tape&, const Mat&)> backward;
    bool requires_grad = false;
    Mat* param_grad = nullptr;
  };

  Id push(Mat value, bool requires_grad, std::function<void(Tape&, const Mat&)> fn);
  Mat& grad_ref(Id id);
  bool needs(Id id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  void accumulate(Id id, const Mat& g);

  std::vector<Node> nodes_;
};

using Id = Tape::Id;

}  // namespace vagpo::ad
