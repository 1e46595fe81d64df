#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "autolabel/sequence.hpp"

namespace autolabel {

// State layout: [cx, cy, cz, l, w, h, heading, vx, vy, vz].
struct TrackState {
  Eigen::Matrix<double, 10, 1> mean = Eigen::Matrix<double, 10, 1>::Zero();
  Eigen::Matrix<double, 10, 10> covariance = Eigen::Matrix<double, 10, 10>::Identity();
};

enum class TrackStatus : uint8_t { Tentative = 0, Confirmed = 1, Dead = 2 };

struct TrackEntry {
  int frame = 0;
  Box3D detection;  // world frame, associated measurement
  TrackState posterior;
};

struct Track {
  int64_t object_id = -1;
  ObjectClass cls = ObjectClass::Vehicle;
  std::vector<TrackEntry> entries;  // strictly increasing frame indices
  int hits = 0;
  int consecutive_misses = 0;
  TrackStatus status = TrackStatus::Tentative;

  const Box3D& first_box() const { return entries.front().detection; }
  const Box3D& last_box() const { return entries.back().detection; }
};

struct TrackerParams {
  double score_floor = 0.1;
  double iou_floor = 0.1;
  int max_misses = 3;
  int confirm_hits = 2;
  // Diagonal process / measurement noise.
  double q_position = 0.1;   // m^2
  double q_size = 0.01;      // m^2
  double q_heading = 0.01;   // rad^2
  double q_velocity = 1.0;   // (m/s)^2
  double r_position = 0.1;
  double r_size = 0.01;
  double r_heading = 0.01;
  double initial_velocity_variance = 100.0;
  // When true, detections are matched to GT object ids instead of running
  // the Kalman/Hungarian loop (analysis mode).
  bool oracle = false;
  double oracle_iou_floor = 0.3;
};

TrackState kalman_predict(const TrackState& state, double dt, const TrackerParams& params);
TrackState kalman_update(const TrackState& state, const Box3D& det, const TrackerParams& params);

Box3D state_to_box(const TrackState& state, ObjectClass cls, double score);

std::vector<Track> run_tracker(const SequenceDataset& ds, const TrackerParams& params);

}  // namespace autolabel
