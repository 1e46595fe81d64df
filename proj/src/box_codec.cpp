#include "autolabel/box_codec.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace autolabel {

const std::vector<Eigen::Vector3d>& size_clusters(ObjectClass cls) {
  static const std::vector<Eigen::Vector3d> vehicle = {
      {4.8, 1.8, 1.5}, {10.0, 2.6, 3.2}, {2.0, 1.0, 1.6}};
  static const std::vector<Eigen::Vector3d> pedestrian = {{0.9, 0.9, 1.7}};
  return cls == ObjectClass::Vehicle ? vehicle : pedestrian;
}

BoxTargets BoxTargets::zeros(ObjectClass cls) {
  const int k = static_cast<int>(size_clusters(cls).size());
  BoxTargets t;
  t.size_logits = Eigen::VectorXd::Zero(k);
  t.size_residuals = Eigen::MatrixXd::Zero(k, 3);
  return t;
}

int BoxTargets::flat_size(ObjectClass cls) {
  const int k = static_cast<int>(size_clusters(cls).size());
  return 3 + k + 3 * k + 2 * kHeadingBins;
}

Eigen::VectorXd BoxTargets::flatten() const {
  const int k = static_cast<int>(size_logits.size());
  Eigen::VectorXd v(3 + k + 3 * k + 2 * kHeadingBins);
  v.head<3>() = center_residual;
  v.segment(3, k) = size_logits;
  for (int i = 0; i < k; ++i) v.segment(3 + k + 3 * i, 3) = size_residuals.row(i);
  v.segment(3 + 4 * k, kHeadingBins) = heading_logits;
  v.segment(3 + 4 * k + kHeadingBins, kHeadingBins) = heading_residuals;
  return v;
}

BoxTargets BoxTargets::unflatten(const Eigen::VectorXd& v, ObjectClass cls) {
  const int k = static_cast<int>(size_clusters(cls).size());
  if (v.size() != flat_size(cls)) throw std::invalid_argument("BoxTargets: bad flat size");
  BoxTargets t = zeros(cls);
  t.center_residual = v.head<3>();
  t.size_logits = v.segment(3, k);
  for (int i = 0; i < k; ++i) t.size_residuals.row(i) = v.segment(3 + k + 3 * i, 3);
  t.heading_logits = v.segment(3 + 4 * k, kHeadingBins);
  t.heading_residuals = v.segment(3 + 4 * k + kHeadingBins, kHeadingBins);
  return t;
}

double heading_bin_center(int bin) { return normalize_angle(bin * kPi / 6.0); }

int nearest_heading_bin(double heading) {
  int best = 0;
  double best_abs = std::abs(cyclic_diff(heading, heading_bin_center(0)));
  for (int k = 1; k < kHeadingBins; ++k) {
    const double d = std::abs(cyclic_diff(heading, heading_bin_center(k)));
    if (d < best_abs) {
      best_abs = d;
      best = k;
    }
  }
  return best;
}

namespace {

int nearest_size_cluster(const Box3D& box, ObjectClass cls) {
  const auto& clusters = size_clusters(cls);
  const Eigen::Vector3d size{box.length, box.width, box.height};
  int best = 0;
  double best_d = (size - clusters[0]).squaredNorm();
  for (size_t i = 1; i < clusters.size(); ++i) {
    const double d = (size - clusters[i]).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace

BoxTargets encode_box(const Box3D& box, ObjectClass cls) {
  BoxTargets t = BoxTargets::zeros(cls);
  t.center_residual = box.center();

  const int cluster = nearest_size_cluster(box, cls);
  t.size_logits(cluster) = 1.0;
  t.size_residuals.row(cluster) =
      (Eigen::Vector3d{box.length, box.width, box.height} - size_clusters(cls)[cluster])
          .transpose();

  const int bin = nearest_heading_bin(box.heading);
  t.heading_logits(bin) = 1.0;
  t.heading_residuals(bin) = cyclic_diff(box.heading, heading_bin_center(bin));
  return t;
}

Box3D decode_box(const BoxTargets& targets, ObjectClass cls, const Box3D& ref) {
  int cluster = 0;
  targets.size_logits.maxCoeff(&cluster);
  int bin = 0;
  targets.heading_logits.maxCoeff(&bin);

  const Eigen::Vector3d size =
      size_clusters(cls)[cluster] + targets.size_residuals.row(cluster).transpose();
  const double local_heading =
      normalize_angle(heading_bin_center(bin) + targets.heading_residuals(bin));

  Box3D out;
  const Eigen::Vector3d world = from_box_frame(targets.center_residual, ref);
  out.cx = world.x();
  out.cy = world.y();
  out.cz = world.z();
  out.length = std::max(size.x(), 1e-3);
  out.width = std::max(size.y(), 1e-3);
  out.height = std::max(size.z(), 1e-3);
  out.heading = normalize_angle(local_heading + ref.heading);
  out.score = ref.score;
  out.cls = cls;
  return out;
}

namespace {

constexpr double kSmoothL1Delta = 1.0;

double smooth_l1(double x, double* dx) {
  const double a = std::abs(x);
  if (a < kSmoothL1Delta) {
    if (dx) *dx = x / kSmoothL1Delta;
    return 0.5 * x * x / kSmoothL1Delta;
  }
  if (dx) *dx = x > 0 ? 1.0 : -1.0;
  return a - 0.5 * kSmoothL1Delta;
}

// Cross-entropy of logits against a hard label; grad = softmax - onehot.
double cross_entropy(const Eigen::VectorXd& logits, int label, Eigen::VectorXd* grad) {
  const double m = logits.maxCoeff();
  const Eigen::VectorXd e = (logits.array() - m).exp();
  const double z = e.sum();
  if (grad) {
    *grad = e / z;
    (*grad)(label) -= 1.0;
  }
  return std::log(z) - (logits(label) - m);
}

}  // namespace

double box_loss(const BoxTargets& pred, const Box3D& gt, ObjectClass cls,
                const BoxLossWeights& weights, Eigen::VectorXd* grad) {
  const BoxTargets gt_enc = encode_box(gt, cls);
  const int k = static_cast<int>(size_clusters(cls).size());
  int gt_cluster = 0;
  gt_enc.size_logits.maxCoeff(&gt_cluster);
  int gt_bin = 0;
  gt_enc.heading_logits.maxCoeff(&gt_bin);

  BoxTargets g = BoxTargets::zeros(cls);
  double loss = 0.0;

  for (int i = 0; i < 3; ++i) {
    double d = 0.0;
    loss += smooth_l1(pred.center_residual(i) - gt_enc.center_residual(i), &d);
    g.center_residual(i) = d;
  }

  Eigen::VectorXd ce_grad;
  loss += weights.size_cls * cross_entropy(pred.size_logits, gt_cluster, &ce_grad);
  g.size_logits = weights.size_cls * ce_grad;

  for (int i = 0; i < 3; ++i) {
    double d = 0.0;
    loss += weights.size_reg *
            smooth_l1(pred.size_residuals(gt_cluster, i) - gt_enc.size_residuals(gt_cluster, i),
                      &d);
    g.size_residuals(gt_cluster, i) = weights.size_reg * d;
  }

  Eigen::VectorXd hce_grad;
  loss += weights.heading_cls *
          cross_entropy(Eigen::VectorXd(pred.heading_logits), gt_bin, &hce_grad);
  g.heading_logits = weights.heading_cls * hce_grad;

  {
    double d = 0.0;
    loss += weights.heading_reg *
            smooth_l1(pred.heading_residuals(gt_bin) - gt_enc.heading_residuals(gt_bin), &d);
    g.heading_residuals(gt_bin) = weights.heading_reg * d;
  }

  (void)k;
  if (grad) *grad = g.flatten();
  return loss;
}

std::vector<Box3D> weighted_box_fusion(const std::vector<Box3D>& boxes,
                                       const WbfParams& params) {
  std::vector<size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return boxes[a].score > boxes[b].score; });

  struct Cluster {
    std::vector<Box3D> members;
    Box3D fused;
  };
  std::vector<Cluster> clusters;
  std::vector<Box3D> passthrough;

  auto refuse = [&](Cluster& c) {
    const Box3D& leader = c.members.front();
    double wsum = 0.0;
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    Eigen::Vector3d size = Eigen::Vector3d::Zero();
    std::vector<double> angles, angle_weights;
    double score_sum = 0.0;
    int score_n = 0;
    for (const auto& m : c.members) {
      wsum += m.score;
      center += m.score * m.center();
      size += m.score * Eigen::Vector3d{m.length, m.width, m.height};
      angles.push_back(align_heading(m.heading, leader.heading));
      angle_weights.push_back(m.score);
      if (m.score >= params.score_floor) {
        score_sum += m.score;
        ++score_n;
      }
    }
    center /= wsum;
    size /= wsum;
    Box3D f = leader;
    f.cx = center.x();
    f.cy = center.y();
    f.cz = center.z();
    f.length = size.x();
    f.width = size.y();
    f.height = size.z();
    f.heading = cyclic_mean(angles, angle_weights);
    f.score = score_n > 0 ? score_sum / score_n : leader.score;
    c.fused = f;
  };

  for (size_t idx : order) {
    const Box3D& b = boxes[idx];
    Cluster* home = nullptr;
    for (auto& c : clusters) {
      if (bev_iou(b, c.fused) >= params.iou_floor) {
        home = &c;
        break;
      }
    }
    if (home != nullptr) {
      home->members.push_back(b);
      refuse(*home);
    } else if (b.score >= params.score_floor) {
      Cluster c;
      c.members.push_back(b);
      c.fused = b;
      clusters.push_back(std::move(c));
    } else if (params.passthrough_low_score) {
      passthrough.push_back(b);
    }
  }

  std::vector<Box3D> out;
  for (const auto& c : clusters) out.push_back(c.fused);
  for (const auto& b : passthrough) out.push_back(b);
  return out;
}

std::array<double, 10> tta_angles() {
  return {0.0,          kPi / 8.0,      -kPi / 8.0,     kPi / 4.0, -kPi / 4.0,
          3.0 * kPi / 4.0, -3.0 * kPi / 4.0, 7.0 * kPi / 8.0, -7.0 * kPi / 8.0, kPi};
}

}  // namespace autolabel
