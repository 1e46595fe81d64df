#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "autolabel/sequence.hpp"
#include "autolabel/tracking.hpp"

namespace autolabel {

enum class IouMode : uint8_t { BEV = 0, ThreeD = 1 };

struct FrameBoxes {
  std::vector<Box3D> predictions;   // scored, world frame
  std::vector<Box3D> ground_truth;  // world frame
  // Per-GT interior point counts; GT with zero points are ineligible. Empty
  // means "assume all eligible".
  std::vector<int> gt_point_counts;
  // Sensor origin in the world frame (range bucketing).
  Eigen::Vector3d sensor_origin = Eigen::Vector3d::Zero();
};

// All-point interpolated AP with greedy highest-IoU matching per frame.
// Returns nullopt when there is no eligible ground truth.
std::optional<double> average_precision(const std::vector<FrameBoxes>& frames, double tau,
                                        IouMode mode);

// Fraction of predictions whose assigned GT reaches IoU >= tau, over
// predictions with an assigned GT.
double box_accuracy(const std::vector<FrameBoxes>& frames, double tau,
                    IouMode mode = IouMode::ThreeD);

struct MotResult {
  double mota = 0.0;  // percent, higher better
  double motp = 0.0;  // percent mean(1 - IoU), lower better
  int false_negatives = 0;
  int false_positives = 0;
  int id_switches = 0;
  int total_gt = 0;
};

MotResult mota_motp(const std::vector<Track>& pred_tracks,
                    const std::map<int64_t, std::map<int, Box3D>>& gt_tracks,
                    double tau_match = 0.5);

struct MeanIouBucket {
  int valid_boxes = 0;
  double mean_iou_3d = 0.0;   // percent
  double mean_iou_bev = 0.0;  // percent
};

struct MeanIouReport {
  MeanIouBucket all;
  MeanIouBucket near;  // [0, 30) m
  MeanIouBucket mid;   // [30, 50) m
  MeanIouBucket far;   // [50, inf) m
};

// Pairs gated at BEV IoU > 0.03; buckets keyed by GT distance to the sensor.
MeanIouReport mean_iou_report(const std::vector<FrameBoxes>& frames);

struct EvalReport {
  std::map<std::string, double> ap;        // "{class}_{mode}_ap@{tau}"
  std::map<std::string, double> accuracy;  // "accuracy@{tau}"
  std::optional<MotResult> mot;
  std::optional<MeanIouReport> mean_iou;
};

std::string format_report(const EvalReport& report);

}  // namespace autolabel
