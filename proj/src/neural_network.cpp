#include "autolabel/neural/network.hpp"

#include <cmath>
#include <stdexcept>

namespace autolabel {
namespace neural {

double InitRng::uniform(double lo, double hi) {
  uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  const double u = static_cast<double>(z >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

Mlp::Mlp(int in_width, std::vector<int> widths, bool use_batchnorm, bool final_plain,
         InitRng& rng)
    : in_width_(in_width),
      widths_(std::move(widths)),
      use_batchnorm_(use_batchnorm),
      final_plain_(final_plain) {
  int in = in_width_;
  for (size_t i = 0; i < widths_.size(); ++i) {
    const int out = widths_[i];
    LinearLayer l;
    l.w.resize(in, out);
    const double bound = std::sqrt(6.0 / (in + out));  // Glorot uniform
    for (int r = 0; r < in; ++r)
      for (int c = 0; c < out; ++c) l.w(r, c) = rng.uniform(-bound, bound);
    l.b = Eigen::RowVectorXd::Zero(out);
    linear_.push_back(std::move(l));
    const bool plain = final_plain_ && i + 1 == widths_.size();
    if (use_batchnorm_ && !plain) {
      BatchNormLayer bn;
      bn.gamma = Eigen::RowVectorXd::Ones(out);
      bn.beta = Eigen::RowVectorXd::Zero(out);
      bn.running_mean = Eigen::RowVectorXd::Zero(out);
      bn.running_var = Eigen::RowVectorXd::Ones(out);
      bn_.push_back(std::move(bn));
    }
    in = out;
  }
}

std::vector<int> Mlp::forward(Tape& tape, int x, bool training) {
  std::vector<int> outputs;
  int cur = x;
  size_t bn_idx = 0;
  for (size_t i = 0; i < linear_.size(); ++i) {
    const bool plain = final_plain_ && i + 1 == linear_.size();
    const int w = tape.input(linear_[i].w);
    const int b = tape.input(Eigen::MatrixXd(linear_[i].b));
    param_nodes_.push_back(w);
    param_nodes_.push_back(b);
    cur = tape.add_row(tape.matmul(cur, w), b);
    if (use_batchnorm_ && !plain) {
      auto& bn = bn_[bn_idx++];
      const int gamma = tape.input(Eigen::MatrixXd(bn.gamma));
      const int beta = tape.input(Eigen::MatrixXd(bn.beta));
      param_nodes_.push_back(gamma);
      param_nodes_.push_back(beta);
      Eigen::RowVectorXd bmean, bvar;
      cur = tape.batchnorm(cur, gamma, beta, training, bn.running_mean, bn.running_var,
                           &bmean, &bvar);
      if (training) {
        bn.running_mean = bn_momentum_ * bn.running_mean + (1.0 - bn_momentum_) * bmean;
        bn.running_var = bn_momentum_ * bn.running_var + (1.0 - bn_momentum_) * bvar;
      }
    }
    if (!plain) cur = tape.relu(cur);
    outputs.push_back(cur);
  }
  return outputs;
}

void Mlp::visit_params(const std::function<void(Eigen::MatrixXd&)>& fn) {
  size_t bn_idx = 0;
  for (size_t i = 0; i < linear_.size(); ++i) {
    const bool plain = final_plain_ && i + 1 == linear_.size();
    fn(linear_[i].w);
    Eigen::MatrixXd bmat = linear_[i].b;
    fn(bmat);
    linear_[i].b = bmat.row(0);
    if (use_batchnorm_ && !plain) {
      auto& bn = bn_[bn_idx++];
      Eigen::MatrixXd g = bn.gamma, be = bn.beta;
      fn(g);
      fn(be);
      bn.gamma = g.row(0);
      bn.beta = be.row(0);
    }
  }
}

void Mlp::visit_buffers(const std::function<void(Eigen::RowVectorXd&)>& fn) {
  for (auto& bn : bn_) {
    fn(bn.running_mean);
    fn(bn.running_var);
  }
}

void Mlp::collect_grads(const Tape& tape,
                        std::vector<Eigen::MatrixXd>::iterator& it) const {
  // Multiple recorded passes (shared weights) contribute to the same tensors.
  int per_pass = 0;
  for (size_t i = 0; i < linear_.size(); ++i) {
    const bool plain = final_plain_ && i + 1 == linear_.size();
    per_pass += 2 + ((use_batchnorm_ && !plain) ? 2 : 0);
  }
  for (size_t at = 0; at + per_pass <= param_nodes_.size(); at += per_pass) {
    for (int k = 0; k < per_pass; ++k) *(it + k) += tape.grad(param_nodes_[at + k]);
  }
  it += per_pass;
}

SegNet::SegNet(int in_channels, std::vector<int> point_widths, int skip_layer,
               std::vector<int> head_widths, InitRng& rng)
    : skip_layer_(skip_layer) {
  point_mlp_ = Mlp(in_channels, point_widths, true, false, rng);
  const int pooled_width = point_widths.back();
  const int skip_width = point_widths.at(static_cast<size_t>(skip_layer));
  head_mlp_ = Mlp(pooled_width + skip_width, std::move(head_widths), true, true, rng);
}

int SegNet::forward(Tape& tape, int points, bool training) {
  const auto layers = point_mlp_.forward(tape, points, training);
  const int pooled = tape.colmax(layers.back());
  const int n = static_cast<int>(tape.value(points).rows());
  const int tiled = tape.tile_rows(pooled, n);
  const int cat = tape.concat_cols(layers.at(static_cast<size_t>(skip_layer_)), tiled);
  return head_mlp_.forward(tape, cat, training).back();
}

void SegNet::visit_params(const std::function<void(Eigen::MatrixXd&)>& fn) {
  point_mlp_.visit_params(fn);
  head_mlp_.visit_params(fn);
}

void SegNet::visit_buffers(const std::function<void(Eigen::RowVectorXd&)>& fn) {
  point_mlp_.visit_buffers(fn);
  head_mlp_.visit_buffers(fn);
}

void SegNet::collect_grads(const Tape& tape,
                           std::vector<Eigen::MatrixXd>::iterator& it) const {
  point_mlp_.collect_grads(tape, it);
  head_mlp_.collect_grads(tape, it);
}

void SegNet::clear_pass() {
  point_mlp_.clear_pass();
  head_mlp_.clear_pass();
}

BoxNet::BoxNet(int in_channels, std::vector<int> point_widths,
               std::vector<int> pooled_widths, int head_dim, InitRng& rng) {
  point_mlp_ = Mlp(in_channels, std::move(point_widths), true, false, rng);
  // The pooled path sees a single row per object; per-batch normalization is
  // degenerate there, so it runs plain linear+ReLU.
  pooled_mlp_ = Mlp(point_mlp_.out_width(), std::move(pooled_widths), false, false, rng);
  if (head_dim > 0) {
    has_head_ = true;
    head_ = Mlp(pooled_mlp_.out_width(), {head_dim}, false, true, rng);
  }
}

int BoxNet::forward(Tape& tape, int points, bool training) {
  const auto layers = point_mlp_.forward(tape, points, training);
  const int pooled = tape.colmax(layers.back());
  const int emb = pooled_mlp_.forward(tape, pooled, training).back();
  if (!has_head_) return emb;
  return head_.forward(tape, emb, training).back();
}

void BoxNet::visit_params(const std::function<void(Eigen::MatrixXd&)>& fn) {
  point_mlp_.visit_params(fn);
  pooled_mlp_.visit_params(fn);
  if (has_head_) head_.visit_params(fn);
}

void BoxNet::visit_buffers(const std::function<void(Eigen::RowVectorXd&)>& fn) {
  point_mlp_.visit_buffers(fn);
  pooled_mlp_.visit_buffers(fn);
  if (has_head_) head_.visit_buffers(fn);
}

void BoxNet::collect_grads(const Tape& tape,
                           std::vector<Eigen::MatrixXd>::iterator& it) const {
  point_mlp_.collect_grads(tape, it);
  pooled_mlp_.collect_grads(tape, it);
  if (has_head_) head_.collect_grads(tape, it);
}

void BoxNet::clear_pass() {
  point_mlp_.clear_pass();
  pooled_mlp_.clear_pass();
  if (has_head_) head_.clear_pass();
}

Eigen::VectorXd flatten_params(const ParamVisitor& visit) {
  int64_t total = 0;
  visit([&](Eigen::MatrixXd& m) { total += m.size(); });
  Eigen::VectorXd flat(total);
  int64_t at = 0;
  visit([&](Eigen::MatrixXd& m) {
    flat.segment(at, m.size()) = Eigen::Map<Eigen::VectorXd>(m.data(), m.size());
    at += m.size();
  });
  return flat;
}

void unflatten_params(const Eigen::VectorXd& flat, const ParamVisitor& visit) {
  int64_t at = 0;
  visit([&](Eigen::MatrixXd& m) {
    Eigen::Map<Eigen::VectorXd>(m.data(), m.size()) = flat.segment(at, m.size());
    at += m.size();
  });
}

}  // namespace neural
}  // namespace autolabel
