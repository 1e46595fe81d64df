#pragma once

#include <map>
#include <optional>
#include <string>

#include "autolabel/motion_state.hpp"
#include "autolabel/neural/network.hpp"
#include "autolabel/synth.hpp"
#include "autolabel/track_extraction.hpp"

namespace autolabel {
namespace neural {

struct NetWidths {
  std::vector<int> seg_point = {64, 64, 64, 128, 1024};
  int seg_skip = 1;
  std::vector<int> seg_head = {512, 256, 128, 128, 2};
  std::vector<int> box_point = {128, 128, 256, 512};
  std::vector<int> box_pooled = {512, 256};
  std::vector<int> traj_point = {64, 64, 128, 512};
  std::vector<int> traj_pooled = {128, 128};
  std::vector<int> head_hidden = {128, 128};

  static NetWidths full() { return {}; }
  // Reduced widths for tests and desk-scale training.
  static NetWidths tiny();
};

// Static object model: foreground segmentation + (iteratively applied) box
// regression, both on xyz points in the keyframe box coordinate.
struct StaticRefinerModel {
  ObjectClass cls = ObjectClass::Vehicle;
  bool shared_weights = true;
  SegNet seg;
  BoxNet box;
  BoxNet box_second;  // used only when !shared_weights

  StaticRefinerModel() = default;
  StaticRefinerModel(ObjectClass cls, const NetWidths& w, bool shared, InitRng& rng);

  void visit_params(const std::function<void(Eigen::MatrixXd&)>& fn);
  void visit_buffers(const std::function<void(Eigen::RowVectorXd&)>& fn);
  void collect_grads(const Tape& tape, std::vector<Eigen::MatrixXd>::iterator& it) const;
  void clear_pass();

  // Per-point foreground mask from the segmentation head (inference mode).
  std::vector<bool> segment(const PointCloud& local_points);
  // Two-pass box regression from foreground points in the reference frame;
  // returns the refined box in that reference frame's coordinates.
  Box3D regress(const PointCloud& local_foreground, int passes);
};

// Dynamic object model: temporal segmentation, point-sequence encoder, box-
// sequence encoder and three box heads (trajectory / object points / joint).
struct DynamicRefinerModel {
  ObjectClass cls = ObjectClass::Vehicle;
  SegNet seg;          // xyz + time channel
  BoxNet pc_encoder;   // embedding over foreground points
  BoxNet traj_encoder; // embedding over the box sequence (8-dim "points")
  Mlp head_joint;
  Mlp head_pc;
  Mlp head_traj;

  DynamicRefinerModel() = default;
  DynamicRefinerModel(ObjectClass cls, const NetWidths& w, InitRng& rng);

  void visit_params(const std::function<void(Eigen::MatrixXd&)>& fn);
  void visit_buffers(const std::function<void(Eigen::RowVectorXd&)>& fn);
  void collect_grads(const Tape& tape, std::vector<Eigen::MatrixXd>::iterator& it) const;
  void clear_pass();

  std::vector<bool> segment(const PointCloud& encoded_points);
  // Joint-head prediction from encoded foreground points (N x 4) and box
  // sequence rows (M x 8), both in the center-frame box coordinate.
  BoxTargets predict(const PointCloud& encoded_foreground, const Eigen::MatrixXd& box_seq);
};

// Whole model bundle persisted to disk alongside the motion classifier.
struct ModelBundle {
  NetWidths widths;
  bool shared_weights = true;
  std::map<ObjectClass, StaticRefinerModel> static_models;
  std::map<ObjectClass, DynamicRefinerModel> dynamic_models;
  std::optional<LinearMotionClassifier> motion_classifier;
};

// Versioned JSON header line + little-endian 64-bit parameter blob. The
// stream overloads let the bundle embed into a larger container (checkpoints).
void save_model(const ModelBundle& bundle, const std::string& path);
void save_model(const ModelBundle& bundle, std::ostream& out);
ModelBundle load_model(const std::string& path);
ModelBundle load_model(std::istream& in, const std::string& name);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Eigen::VectorXd m, v;
  int64_t t = 0;
};

// One bias-corrected Adam update; lr_scale multiplies the step size (schedule).
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state,
               const AdamConfig& cfg, double lr_scale = 1.0);

struct AugmentConfig {
  bool flip_x = true;          // 50% chance, mirrors across the X axis
  bool flip_y = true;
  double max_rotation_deg = 10.0;  // Uniform[-d, d] about Z
  double shift_sigma = 0.0;        // light random shift (dynamic model)
  double scale_range = 0.0;        // multiplicative Uniform[1-s, 1+s]
  int subsample = 4096;            // 0 = keep all
};

// Applies one sampled rigid transform to points and box(es) jointly, then
// subsamples without replacement when the budget allows.
void augment(PointCloud& points, Box3D& box, const AugmentConfig& cfg,
             synth::CounterRng& rng);
void augment(PointCloud& points, const std::vector<Box3D*>& boxes,
             const AugmentConfig& cfg, synth::CounterRng& rng);

// Adds a time channel: 0 for the center frame, +-0.1r for the r-th frame
// after/before. Inputs are (frame offset, cloud) pairs; xyz columns only are
// kept from each cloud.
PointCloud temporal_encode(const std::vector<std::pair<int, PointCloud>>& frames);

// Subsample to `count` rows without replacement (keeps all when count >= N).
PointCloud subsample_points(const PointCloud& pc, int count, synth::CounterRng& rng);

}  // namespace neural
}  // namespace autolabel
