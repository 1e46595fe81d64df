#pragma once

#include <map>
#include <vector>

#include "autolabel/neural/model.hpp"

namespace autolabel {
namespace neural {

struct TrainConfig {
  AdamConfig adam;                 // lr 1e-3, standard betas
  int batch_size = 32;
  int epochs = 10;
  std::vector<int> decay_epochs;   // learning rate x0.1 at each listed epoch
  bool augment_enabled = true;
  AugmentConfig augment_static{true, true, 10.0, 0.0, 0.0, 4096};
  AugmentConfig augment_dynamic{true, true, 10.0, 0.1, 0.05, 1024};  // light shift + scale
  int point_window = 2;            // r: frames each side of the center frame
  int box_window = 50;             // s: boxes each side of the center frame
  double w_box = 10.0;             // static total: L_seg + w (L_box1 + L_box2)
  double v_traj = 0.3;             // dynamic head weights
  double v_pc = 0.3;
  double v_joint = 0.4;
  bool shared_weights = true;
  uint64_t seed = 0;
};

// One labeled track: extracted frames plus the per-frame GT world boxes.
struct TrackSample {
  ObjectTrackData data;
  std::map<int, Box3D> gt_world;
};

// A materialized static training example in the keyframe box coordinate.
struct StaticExample {
  PointCloud points;            // N x 3
  std::vector<int> seg_labels;  // 1 = inside the GT box
  Box3D gt_local;
};

// A materialized dynamic example in the center-frame box coordinate.
struct DynamicExample {
  PointCloud points;            // N x 4 (xyz + time channel)
  std::vector<int> seg_labels;
  Eigen::MatrixXd box_seq;      // (2s+1) x 8, zero rows for missing frames
  Box3D gt_local;
};

// Box-regression loss subgraph on a 1 x flat_size output node: smooth-L1
// center/size/heading residuals at the GT bin plus cross-entropy bin terms.
int box_loss_graph(Tape& tape, int out_node, const Box3D& gt_local, ObjectClass cls,
                   const BoxLossWeights& weights = {});

// Full loss graphs (shared by training and the gradient-check tests). The box
// branches consume GT-labeled foreground points; recorded passes are cleared
// on entry.
int static_loss_graph(Tape& tape, StaticRefinerModel& model, const StaticExample& ex,
                      bool training, double w_box);
int dynamic_loss_graph(Tape& tape, DynamicRefinerModel& model, const DynamicExample& ex,
                       bool training, double v_traj, double v_pc, double v_joint);

// Sampled example builders: random keyframe / center frame, random visible
// frame subset of size Uniform[1, |S|] (static), windowed branches with zero
// placeholders (dynamic), optional augmentation.
StaticExample make_static_example(const TrackSample& sample, const TrainConfig& cfg,
                                  synth::CounterRng& rng);
DynamicExample make_dynamic_example(const TrackSample& sample, size_t center_idx,
                                    const TrainConfig& cfg, synth::CounterRng& rng);

struct TrainStats {
  std::vector<double> step_loss;   // per optimizer step (batch mean)
  std::vector<double> epoch_loss;  // mean over the epoch's steps
};

// Full-dataset Adam training loops; deterministic given (dataset, cfg, seed).
TrainStats train_static_refiner(StaticRefinerModel& model,
                                const std::vector<TrackSample>& dataset,
                                const TrainConfig& cfg);
TrainStats train_dynamic_refiner(DynamicRefinerModel& model,
                                 const std::vector<TrackSample>& dataset,
                                 const TrainConfig& cfg);

// Trains one static and one dynamic model per class present in the samples;
// static models additionally consume dynamic tracks aligned into pseudo-static
// ones. Fits the motion-state classifier from the same tracks.
ModelBundle train_bundle(const std::vector<TrackSample>& samples, const NetWidths& widths,
                         const TrainConfig& cfg);

// Mid-training snapshot: the model bundle plus per-model optimizer state
// (keyed "s<class>" / "d<class>") and the next epoch to run. Because every
// RNG stream is keyed by (seed, epoch, example), training in epoch slices
// reproduces the single-shot run bit for bit.
struct BundleTrainState {
  ModelBundle bundle;
  std::map<std::string, AdamState> adam;
  int next_epoch = 0;
};

// Initializes the per-class models for `samples`; no optimizer steps yet.
BundleTrainState init_bundle_training(const std::vector<TrackSample>& samples,
                                      const NetWidths& widths, const TrainConfig& cfg);

// Advances every model from state.next_epoch up to min(until_epoch,
// cfg.epochs); fits the motion classifier once the final epoch is reached.
void train_bundle_epochs(BundleTrainState& state, const std::vector<TrackSample>& samples,
                         const TrainConfig& cfg, int until_epoch);

// Checkpoint file: versioned JSON header line, Adam moment blobs, then the
// embedded model bundle.
void save_checkpoint(const BundleTrainState& state, const std::string& path);
BundleTrainState load_checkpoint(const std::string& path);

}  // namespace neural
}  // namespace autolabel
