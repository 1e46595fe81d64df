#pragma once

#include <Eigen/Core>
#include <array>
#include <vector>

#include "autolabel/geometry.hpp"

namespace autolabel {

inline constexpr int kHeadingBins = 12;

// Template (l, w, h) sizes per class.
const std::vector<Eigen::Vector3d>& size_clusters(ObjectClass cls);

// Bin + residual box parameterization. Encoded form carries one-hot logits.
struct BoxTargets {
  Eigen::Vector3d center_residual = Eigen::Vector3d::Zero();
  Eigen::VectorXd size_logits;              // K
  Eigen::MatrixXd size_residuals;           // K x 3
  Eigen::Matrix<double, kHeadingBins, 1> heading_logits =
      Eigen::Matrix<double, kHeadingBins, 1>::Zero();
  Eigen::Matrix<double, kHeadingBins, 1> heading_residuals =
      Eigen::Matrix<double, kHeadingBins, 1>::Zero();

  static BoxTargets zeros(ObjectClass cls);
  // Flat layout: [center(3), size_logits(K), size_residuals(K*3 row-major),
  // heading_logits(12), heading_residuals(12)].
  Eigen::VectorXd flatten() const;
  static BoxTargets unflatten(const Eigen::VectorXd& v, ObjectClass cls);
  static int flat_size(ObjectClass cls);
};

double heading_bin_center(int bin);
int nearest_heading_bin(double heading);

// Box expressed in the reference coordinate -> one-hot targets.
BoxTargets encode_box(const Box3D& box, ObjectClass cls);

// Argmax bins + residuals recomposed; the result is mapped back to the world
// frame through `ref`.
Box3D decode_box(const BoxTargets& targets, ObjectClass cls, const Box3D& ref);

struct BoxLossWeights {
  double size_cls = 0.1;      // w1
  double size_reg = 2.0;      // w2
  double heading_cls = 0.1;   // w3
  double heading_reg = 2.0;   // w4
};

// Smooth-L1 regression (gt bin only) + cross-entropy classification. The
// gradient, when requested, is with respect to pred.flatten().
double box_loss(const BoxTargets& pred, const Box3D& gt, ObjectClass cls,
                const BoxLossWeights& weights = {}, Eigen::VectorXd* grad = nullptr);

struct WbfParams {
  double iou_floor = 0.275;   // vehicles; pedestrians use 0.2
  double score_floor = 0.5;
  bool passthrough_low_score = false;
};

std::vector<Box3D> weighted_box_fusion(const std::vector<Box3D>& boxes,
                                       const WbfParams& params);

// Yaw angles used for test-time augmentation.
std::array<double, 10> tta_angles();

}  // namespace autolabel
