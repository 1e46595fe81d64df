#pragma once

#include <Eigen/Core>
#include <vector>

#include "autolabel/tracking.hpp"

namespace autolabel {

struct MotionFeatures {
  double center_variance = 0.0;    // m^2, trace of the center covariance
  double begin_end_distance = 0.0;  // m
};

struct LinearMotionClassifier {
  Eigen::Vector2d weights = Eigen::Vector2d::Zero();
  double bias = 0.0;
  // log1p then standardization applied before the linear layer.
  Eigen::Vector2d feature_mean = Eigen::Vector2d::Zero();
  Eigen::Vector2d feature_scale = Eigen::Vector2d::Ones();

  double decision(const MotionFeatures& f) const;
};

// Trace of the sample covariance of associated detection centers plus the
// first-to-last center distance, all in the world frame.
MotionFeatures track_features(const Track& track);

// Tracks shorter than min_measurements stay Indeterminate; pedestrian tracks
// are always Dynamic.
MotionState classify_motion(const Track& track, const LinearMotionClassifier& clf,
                            int min_measurements = 7);

// GT rule: static iff begin-to-end < 1 m and max per-step speed < 1 m/s.
MotionState gt_motion_label(const std::vector<Box3D>& gt_boxes, double frequency);

struct FitResult {
  LinearMotionClassifier classifier;
  double train_accuracy = 0.0;
};

// Ridge-regularized logistic regression on standardized features, fit by
// Newton iterations (stops early once the gradient vanishes).
FitResult fit_linear_classifier(const std::vector<MotionFeatures>& features,
                                const std::vector<MotionState>& labels, int max_iters = 100,
                                double ridge = 1e-4);

}  // namespace autolabel
