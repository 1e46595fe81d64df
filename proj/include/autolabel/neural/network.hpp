#pragma once

#include <string>
#include <vector>

#include "autolabel/box_codec.hpp"
#include "autolabel/neural/tape.hpp"

namespace autolabel {
namespace neural {

// Deterministic parameter init stream.
class InitRng {
 public:
  explicit InitRng(uint64_t seed) : state_(seed ^ 0x6a09e667f3bcc908ULL) {}
  double uniform(double lo, double hi);

 private:
  uint64_t state_;
};

struct LinearLayer {
  Eigen::MatrixXd w;       // in x out
  Eigen::RowVectorXd b;    // 1 x out
};

struct BatchNormLayer {
  Eigen::RowVectorXd gamma, beta, running_mean, running_var;
};

// [linear (+ batchnorm + relu)] stack; the last layer is plain linear when
// `final_plain` is set (logit / regression heads).
class Mlp {
 public:
  Mlp() = default;
  Mlp(int in_width, std::vector<int> widths, bool use_batchnorm, bool final_plain,
      InitRng& rng);

  // Returns post-activation node ids per layer; updates running stats when
  // training. Parameter nodes accumulate across forwards (shared-weight
  // passes) until clear_pass().
  std::vector<int> forward(Tape& tape, int x, bool training);
  void clear_pass() { param_nodes_.clear(); }
  // Trainable tensors in fixed order (w, b, gamma, beta per layer).
  void visit_params(const std::function<void(Eigen::MatrixXd&)>& fn);
  // Non-trainable batchnorm running statistics.
  void visit_buffers(const std::function<void(Eigen::RowVectorXd&)>& fn);
  // Accumulates tape gradients (post-backward) into `grads`, matching the
  // visit_params order. `grads` entries must be pre-sized.
  void collect_grads(const Tape& tape, std::vector<Eigen::MatrixXd>::iterator& it) const;

  int out_width() const { return widths_.empty() ? in_width_ : widths_.back(); }
  int in_width() const { return in_width_; }

 private:
  int in_width_ = 0;
  std::vector<int> widths_;
  bool use_batchnorm_ = false;
  bool final_plain_ = false;
  std::vector<LinearLayer> linear_;
  std::vector<BatchNormLayer> bn_;
  std::vector<int> param_nodes_;
  double bn_momentum_ = 0.9;
};

// PointNet segmentation network: per-point MLP, max pool, pooled feature
// tiled and concatenated with an intermediate per-point layer, then a second
// per-point MLP ending in per-point class logits.
class SegNet {
 public:
  SegNet() = default;
  SegNet(int in_channels, std::vector<int> point_widths, int skip_layer,
         std::vector<int> head_widths, InitRng& rng);

  // points: N x in_channels. Returns per-point logit node (N x n_classes).
  int forward(Tape& tape, int points, bool training);

  void visit_params(const std::function<void(Eigen::MatrixXd&)>& fn);
  void visit_buffers(const std::function<void(Eigen::RowVectorXd&)>& fn);
  void collect_grads(const Tape& tape, std::vector<Eigen::MatrixXd>::iterator& it) const;
  void clear_pass();
  int in_channels() const { return point_mlp_.in_width(); }

  Mlp point_mlp_;
  Mlp head_mlp_;
  int skip_layer_ = 1;
};

// PointNet encoder / regressor: per-point MLP, max pool, pooled MLP, optional
// final linear head. Without a head the pooled MLP output is the embedding.
class BoxNet {
 public:
  BoxNet() = default;
  BoxNet(int in_channels, std::vector<int> point_widths, std::vector<int> pooled_widths,
         int head_dim, InitRng& rng);  // head_dim 0 = embedding only

  // Returns a 1 x D node (head output or embedding).
  int forward(Tape& tape, int points, bool training);

  void visit_params(const std::function<void(Eigen::MatrixXd&)>& fn);
  void visit_buffers(const std::function<void(Eigen::RowVectorXd&)>& fn);
  void collect_grads(const Tape& tape, std::vector<Eigen::MatrixXd>::iterator& it) const;
  void clear_pass();

  Mlp point_mlp_;
  Mlp pooled_mlp_;
  bool has_head_ = false;
  Mlp head_;  // single plain linear layer
};

using ParamVisitor = std::function<void(const std::function<void(Eigen::MatrixXd&)>&)>;

// Flat views over a parameter-bearing object (anything with visit_params).
Eigen::VectorXd flatten_params(const ParamVisitor& visit);
void unflatten_params(const Eigen::VectorXd& flat, const ParamVisitor& visit);

}  // namespace neural
}  // namespace autolabel
