#pragma once

#include <Eigen/Core>
#include <functional>
#include <utility>
#include <vector>

namespace autolabel {
namespace neural {

// Reverse-mode autodiff over dense matrices. Nodes are created per forward
// pass; backward() seeds the target with 1 and accumulates into grad().
class Tape {
 public:
  using Matrix = Eigen::MatrixXd;

  int input(Matrix v);

  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& grad(int id) const { return nodes_[id].grad; }

  // value = A * B
  int matmul(int a, int b);
  // value = A with the 1 x C row node broadcast-added to every row
  int add_row(int a, int row);
  int relu(int a);
  // Batch normalization over rows (per-column statistics). In training mode
  // statistics come from the batch and flow through the gradient; otherwise
  // mean/var are the fixed running statistics.
  int batchnorm(int x, int gamma, int beta, bool training,
                const Eigen::RowVectorXd& running_mean,
                const Eigen::RowVectorXd& running_var,
                Eigen::RowVectorXd* batch_mean = nullptr,
                Eigen::RowVectorXd* batch_var = nullptr, double eps = 1e-5);
  // 1 x C column-wise max over rows; gradient flows to the first argmax row.
  int colmax(int a);
  int tile_rows(int a, int n);
  int concat_cols(int a, int b);
  int slice_cols(int a, int from, int n);
  int select_rows(int a, std::vector<int> rows);

  // Scalars (1 x 1 nodes).
  int softmax_cross_entropy_mean(int logits, std::vector<int> labels);
  int smooth_l1_sum(int pred, Matrix target, double delta = 1.0);
  int weighted_sum(const std::vector<std::pair<double, int>>& terms);

  void backward(int id);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void()> backward;
  };

  int push(Matrix value, std::function<void()> backward = nullptr);
  Matrix& grad_ref(int id);

  std::vector<Node> nodes_;
};

}  // namespace neural
}  // namespace autolabel
