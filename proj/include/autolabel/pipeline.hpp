#pragma once

#include <string>
#include <vector>

#include "autolabel/evaluation.hpp"
#include "autolabel/motion_state.hpp"
#include "autolabel/refiners.hpp"
#include "autolabel/synth.hpp"

namespace autolabel {

struct PipelineConfig {
  TrackerParams tracker;
  int min_measurements = 7;
  double alpha = 1.0;  // crop enlargement, meters per face
  KeyframeStrategy keyframe = KeyframeStrategy::HighestScore;
  RefinerConfig refiner;
  std::string model_path;     // neural backend weights; empty = none
  bool use_gt_motion = false; // ablation: swap in the GT motion-state rule
  int workers = 0;            // 0 = logical cores
  uint64_t seed = 0;
};

PipelineConfig pipeline_config_from_file(const std::string& path);

struct StageTiming {
  std::string name;
  double seconds = 0.0;
};

struct PipelineResult {
  AutoLabelSet labels;
  std::vector<Track> tracks;
  std::vector<ObjectTrackData> track_data;
  std::vector<StageTiming> timings;
};

// Detections file -> tracking -> extraction -> motion state -> refinement.
// `bundle` supplies neural weights and the trained motion classifier; without
// one the geometric backend and the default classifier are used.
PipelineResult run_pipeline(const SequenceDataset& ds, const PipelineConfig& cfg,
                            const neural::ModelBundle* bundle = nullptr);

// Classifier fitted once on an internal synthetic track set (deterministic);
// stands in when no trained model file is supplied.
const LinearMotionClassifier& default_motion_classifier();

// Per-frame prediction/GT pairs for the evaluation module: GT mapped to the
// world frame with interior-point counts, predictions taken from the labels.
std::vector<FrameBoxes> frames_from_labels(const SequenceDataset& ds,
                                           const AutoLabelSet& labels);
// Same, with the raw detections standing in as predictions.
std::vector<FrameBoxes> frames_from_detections(const SequenceDataset& ds);

// Labels regrouped into per-object tracks (for MOTA/MOTP).
std::vector<Track> tracks_from_labels(const AutoLabelSet& labels);
// GT boxes regrouped as object -> frame -> world box.
std::map<int64_t, std::map<int, Box3D>> gt_track_map(const SequenceDataset& ds);

}  // namespace autolabel
