#include "autolabel/neural/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace autolabel {
namespace neural {

int Tape::push(Matrix value, std::function<void()> backward) {
  Node n;
  n.value = std::move(value);
  n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tape::Matrix& Tape::grad_ref(int id) { return nodes_[id].grad; }

int Tape::input(Matrix v) { return push(std::move(v)); }

int Tape::matmul(int a, int b) {
  const int id = push(value(a) * value(b));
  nodes_[id].backward = [this, id, a, b]() {
    grad_ref(a) += grad(id) * value(b).transpose();
    grad_ref(b) += value(a).transpose() * grad(id);
  };
  return id;
}

int Tape::add_row(int a, int row) {
  if (value(row).rows() != 1 || value(row).cols() != value(a).cols()) {
    throw std::invalid_argument("add_row: bias must be 1 x C");
  }
  Matrix v = value(a);
  v.rowwise() += Eigen::RowVectorXd(value(row).row(0));
  const int id = push(std::move(v));
  nodes_[id].backward = [this, id, a, row]() {
    grad_ref(a) += grad(id);
    grad_ref(row) += grad(id).colwise().sum();
  };
  return id;
}

int Tape::relu(int a) {
  const int id = push(value(a).cwiseMax(0.0));
  nodes_[id].backward = [this, id, a]() {
    grad_ref(a).array() += grad(id).array() * (value(a).array() > 0.0).cast<double>();
  };
  return id;
}

int Tape::batchnorm(int x, int gamma, int beta, bool training,
                    const Eigen::RowVectorXd& running_mean,
                    const Eigen::RowVectorXd& running_var, Eigen::RowVectorXd* batch_mean,
                    Eigen::RowVectorXd* batch_var, double eps) {
  const Matrix& in = value(x);
  const int64_t n = in.rows();
  Eigen::RowVectorXd mean, var;
  if (training) {
    mean = in.colwise().mean();
    var = (in.rowwise() - mean).array().square().colwise().mean();
  } else {
    mean = running_mean;
    var = running_var;
  }
  if (batch_mean) *batch_mean = mean;
  if (batch_var) *batch_var = var;
  const Eigen::RowVectorXd inv_std = (var.array() + eps).sqrt().inverse();
  Matrix xhat = (in.rowwise() - mean).array().rowwise() * inv_std.array();
  Matrix out = (xhat.array().rowwise() * Eigen::RowVectorXd(value(gamma).row(0)).array())
                   .rowwise() +
               Eigen::RowVectorXd(value(beta).row(0)).array();
  const int id = push(std::move(out));
  // Keep xhat and inv_std for the backward pass.
  nodes_[id].backward = [this, id, x, gamma, beta, training, n,
                         xhat = std::move(xhat), inv_std]() {
    const Matrix& g = grad(id);
    const Eigen::RowVectorXd gvec = value(gamma).row(0);
    grad_ref(gamma) += (g.array() * xhat.array()).colwise().sum().matrix();
    grad_ref(beta) += g.colwise().sum();
    Matrix gxhat = g.array().rowwise() * gvec.array();
    if (!training) {
      grad_ref(x).array() += gxhat.array().rowwise() * inv_std.array();
      return;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    const Eigen::RowVectorXd sum_g = gxhat.colwise().sum();
    const Eigen::RowVectorXd sum_gx = (gxhat.array() * xhat.array()).colwise().sum();
    Matrix dx = gxhat;
    dx.array().rowwise() -= inv_n * sum_g.array();
    dx.array() -= xhat.array().rowwise() * (inv_n * sum_gx.array());
    dx.array().rowwise() *= inv_std.array();
    grad_ref(x) += dx;
  };
  return id;
}

int Tape::colmax(int a) {
  const Matrix& in = value(a);
  Matrix out(1, in.cols());
  std::vector<int> argmax(in.cols());
  for (int64_t c = 0; c < in.cols(); ++c) {
    int64_t r = 0;
    out(0, c) = in.col(c).maxCoeff(&r);
    argmax[c] = static_cast<int>(r);
  }
  const int id = push(std::move(out));
  nodes_[id].backward = [this, id, a, argmax = std::move(argmax)]() {
    for (size_t c = 0; c < argmax.size(); ++c) {
      grad_ref(a)(argmax[c], static_cast<int64_t>(c)) += grad(id)(0, static_cast<int64_t>(c));
    }
  };
  return id;
}

int Tape::tile_rows(int a, int n) {
  if (value(a).rows() != 1) throw std::invalid_argument("tile_rows: need a row vector");
  const int id = push(value(a).replicate(n, 1));
  nodes_[id].backward = [this, id, a]() { grad_ref(a) += grad(id).colwise().sum(); };
  return id;
}

int Tape::concat_cols(int a, int b) {
  if (value(a).rows() != value(b).rows()) {
    throw std::invalid_argument("concat_cols: row mismatch");
  }
  Matrix v(value(a).rows(), value(a).cols() + value(b).cols());
  v << value(a), value(b);
  const int id = push(std::move(v));
  nodes_[id].backward = [this, id, a, b]() {
    grad_ref(a) += grad(id).leftCols(value(a).cols());
    grad_ref(b) += grad(id).rightCols(value(b).cols());
  };
  return id;
}

int Tape::slice_cols(int a, int from, int n) {
  const int id = push(value(a).middleCols(from, n));
  nodes_[id].backward = [this, id, a, from, n]() {
    grad_ref(a).middleCols(from, n) += grad(id);
  };
  return id;
}

int Tape::select_rows(int a, std::vector<int> rows) {
  Matrix v(static_cast<int64_t>(rows.size()), value(a).cols());
  for (size_t i = 0; i < rows.size(); ++i) v.row(static_cast<int64_t>(i)) = value(a).row(rows[i]);
  const int id = push(std::move(v));
  nodes_[id].backward = [this, id, a, rows = std::move(rows)]() {
    for (size_t i = 0; i < rows.size(); ++i) {
      grad_ref(a).row(rows[i]) += grad(id).row(static_cast<int64_t>(i));
    }
  };
  return id;
}

int Tape::softmax_cross_entropy_mean(int logits, std::vector<int> labels) {
  const Matrix& in = value(logits);
  if (static_cast<int64_t>(labels.size()) != in.rows()) {
    throw std::invalid_argument("softmax_ce: one label per row required");
  }
  Matrix softmax(in.rows(), in.cols());
  double loss = 0.0;
  for (int64_t r = 0; r < in.rows(); ++r) {
    const double m = in.row(r).maxCoeff();
    const Eigen::RowVectorXd e = (in.row(r).array() - m).exp();
    const double z = e.sum();
    softmax.row(r) = e / z;
    loss += std::log(z) - (in(r, labels[r]) - m);
  }
  loss /= static_cast<double>(in.rows());
  Matrix v(1, 1);
  v(0, 0) = loss;
  const int id = push(std::move(v));
  nodes_[id].backward = [this, id, logits, labels = std::move(labels),
                         softmax = std::move(softmax)]() {
    const double g = grad(id)(0, 0) / static_cast<double>(softmax.rows());
    Matrix d = softmax;
    for (int64_t r = 0; r < d.rows(); ++r) d(r, labels[r]) -= 1.0;
    grad_ref(logits) += g * d;
  };
  return id;
}

int Tape::smooth_l1_sum(int pred, Matrix target, double delta) {
  const Matrix diff = value(pred) - target;
  double loss = 0.0;
  Matrix d(diff.rows(), diff.cols());
  for (int64_t r = 0; r < diff.rows(); ++r) {
    for (int64_t c = 0; c < diff.cols(); ++c) {
      const double x = diff(r, c);
      const double a = std::abs(x);
      if (a < delta) {
        loss += 0.5 * x * x / delta;
        d(r, c) = x / delta;
      } else {
        loss += a - 0.5 * delta;
        d(r, c) = x > 0 ? 1.0 : -1.0;
      }
    }
  }
  Matrix v(1, 1);
  v(0, 0) = loss;
  const int id = push(std::move(v));
  nodes_[id].backward = [this, id, pred, d = std::move(d)]() {
    grad_ref(pred) += grad(id)(0, 0) * d;
  };
  return id;
}

int Tape::weighted_sum(const std::vector<std::pair<double, int>>& terms) {
  double total = 0.0;
  for (const auto& [w, node] : terms) {
    if (value(node).size() != 1) throw std::invalid_argument("weighted_sum: scalars only");
    total += w * value(node)(0, 0);
  }
  Matrix v(1, 1);
  v(0, 0) = total;
  const int id = push(std::move(v));
  nodes_[id].backward = [this, id, terms]() {
    for (const auto& [w, node] : terms) grad_ref(node)(0, 0) += w * grad(id)(0, 0);
  };
  return id;
}

void Tape::backward(int id) {
  if (value(id).size() != 1) throw std::invalid_argument("backward: target must be scalar");
  grad_ref(id)(0, 0) = 1.0;
  for (int i = id; i >= 0; --i) {
    if (nodes_[i].backward && nodes_[i].grad.cwiseAbs().maxCoeff() != 0.0) {
      nodes_[i].backward();
    }
  }
}

}  // namespace neural
}  // namespace autolabel
