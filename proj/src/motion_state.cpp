#include "autolabel/motion_state.hpp"

#include <cmath>
#include <stdexcept>

namespace autolabel {

double LinearMotionClassifier::decision(const MotionFeatures& f) const {
  // log1p compresses the heavy-tailed features (fast long tracks dominate the
  // raw scale otherwise) before standardization.
  const Eigen::Vector2d x{std::log1p(f.center_variance), std::log1p(f.begin_end_distance)};
  const Eigen::Vector2d z = (x - feature_mean).cwiseQuotient(feature_scale);
  return weights.dot(z) + bias;
}

MotionFeatures track_features(const Track& track) {
  if (track.entries.size() < 2) {
    throw std::invalid_argument("track_features: need at least 2 entries");
  }
  const int64_t n = static_cast<int64_t>(track.entries.size());
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& e : track.entries) mean += e.detection.center();
  mean /= static_cast<double>(n);
  double trace = 0.0;
  for (const auto& e : track.entries) trace += (e.detection.center() - mean).squaredNorm();
  trace /= static_cast<double>(n - 1);  // sample convention

  MotionFeatures f;
  f.center_variance = trace;
  f.begin_end_distance = (track.last_box().center() - track.first_box().center()).norm();
  return f;
}

MotionState classify_motion(const Track& track, const LinearMotionClassifier& clf,
                            int min_measurements) {
  if (static_cast<int>(track.entries.size()) < min_measurements) {
    return MotionState::Indeterminate;
  }
  if (track.cls == ObjectClass::Pedestrian) return MotionState::Dynamic;
  return clf.decision(track_features(track)) >= 0.0 ? MotionState::Dynamic
                                                    : MotionState::Static;
}

MotionState gt_motion_label(const std::vector<Box3D>& gt_boxes, double frequency) {
  if (gt_boxes.size() < 2) {
    throw std::invalid_argument("gt_motion_label: need at least 2 boxes");
  }
  const double dt = 1.0 / frequency;
  const double begin_end = (gt_boxes.back().center() - gt_boxes.front().center()).norm();
  double max_speed = 0.0;
  for (size_t i = 1; i < gt_boxes.size(); ++i) {
    const double step = (gt_boxes[i].center() - gt_boxes[i - 1].center()).norm();
    max_speed = std::max(max_speed, step / dt);
  }
  return (begin_end < 1.0 && max_speed < 1.0) ? MotionState::Static : MotionState::Dynamic;
}

FitResult fit_linear_classifier(const std::vector<MotionFeatures>& features,
                                const std::vector<MotionState>& labels, int max_iters,
                                double ridge) {
  if (features.size() != labels.size() || features.empty()) {
    throw std::invalid_argument("fit_linear_classifier: size mismatch or empty");
  }
  const int64_t n = static_cast<int64_t>(features.size());
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd y(n);
  int n_static = 0, n_dynamic = 0;
  for (int64_t i = 0; i < n; ++i) {
    x(i, 0) = std::log1p(features[i].center_variance);
    x(i, 1) = std::log1p(features[i].begin_end_distance);
    switch (labels[i]) {
      case MotionState::Static:
        y(i) = 0.0;
        ++n_static;
        break;
      case MotionState::Dynamic:
        y(i) = 1.0;
        ++n_dynamic;
        break;
      default:
        throw std::invalid_argument("fit_linear_classifier: indeterminate training label");
    }
  }
  if (n_static == 0 || n_dynamic == 0) {
    throw std::invalid_argument("fit_linear_classifier: both classes required");
  }

  LinearMotionClassifier clf;
  clf.feature_mean = x.colwise().mean();
  for (int j = 0; j < 2; ++j) {
    const double var = (x.col(j).array() - clf.feature_mean(j)).square().mean();
    clf.feature_scale(j) = std::max(std::sqrt(var), 1e-12);
  }
  Eigen::MatrixXd z = x;
  for (int j = 0; j < 2; ++j) {
    z.col(j) = (x.col(j).array() - clf.feature_mean(j)) / clf.feature_scale(j);
  }

  // Newton/IRLS on the augmented design [z 1]; the ridge keeps the Hessian
  // invertible (the classes are often linearly separable).
  Eigen::MatrixXd za(n, 3);
  za.leftCols<2>() = z;
  za.col(2).setOnes();
  Eigen::Vector3d wb = Eigen::Vector3d::Zero();
  for (int step = 0; step < max_iters; ++step) {
    const Eigen::VectorXd logits = za * wb;
    const Eigen::VectorXd p = 1.0 / (1.0 + (-logits.array()).exp());
    const Eigen::Vector3d grad =
        za.transpose() * (p - y) / static_cast<double>(n) + ridge * wb;
    if (grad.norm() < 1e-10) break;
    const Eigen::VectorXd wgt = p.array() * (1.0 - p.array());
    const Eigen::Matrix3d hess =
        za.transpose() * wgt.asDiagonal() * za / static_cast<double>(n) +
        ridge * Eigen::Matrix3d::Identity();
    wb -= hess.ldlt().solve(grad);
  }
  clf.weights = wb.head<2>();
  clf.bias = wb(2);

  int correct = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = clf.decision(features[i]);
    const bool dynamic = d >= 0.0;
    if (dynamic == (y(i) > 0.5)) ++correct;
  }
  return {clf, static_cast<double>(correct) / static_cast<double>(n)};
}

}  // namespace autolabel
