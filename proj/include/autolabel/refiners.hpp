#pragma once

#include <string>
#include <vector>

#include "autolabel/neural/model.hpp"

namespace autolabel {

enum class KeyframeStrategy : uint8_t { Random = 0, Average = 1, HighestScore = 2 };
enum class RefinerBackend : uint8_t { Geometric = 0, Neural = 1 };

KeyframeStrategy keyframe_strategy_from_string(const std::string& s);
const char* to_string(KeyframeStrategy s);

struct RefinerConfig {
  RefinerBackend backend = RefinerBackend::Geometric;
  const neural::ModelBundle* model = nullptr;  // required for the neural backend
  int passes = 2;          // iterative static regression
  bool tta = false;
  int point_window = 2;    // r: dynamic point branch half-window
  int box_window = 50;     // s: dynamic box branch half-window
  int static_context = -1; // merged frames around the keyframe; -1 = all
  bool causal = false;     // restrict every window to history
  int dynamic_subsample = 1024;  // per-frame point budget (dynamic branch)
  uint64_t seed = 0;
  WbfParams wbf_vehicle{0.275, 0.5, false};
  WbfParams wbf_pedestrian{0.2, 0.5, false};

  const WbfParams& wbf(ObjectClass cls) const {
    return cls == ObjectClass::Vehicle ? wbf_vehicle : wbf_pedestrian;
  }
};

struct KeyframeChoice {
  Box3D box;       // world frame
  int frame = -1;  // -1 for the synthetic Average box
};

// Random draws uniformly (seeded per object), Average takes component-wise
// means with a cyclic heading mean, HighestScore takes the top score with
// earliest-frame tie break.
KeyframeChoice select_keyframe(const ObjectTrackData& data, KeyframeStrategy strategy,
                               uint64_t seed = 0);

// Heading grid search over init.heading +-15 deg (0.5 deg steps) minimizing the
// BEV bounding-rectangle area, extents from the bounds clamped to +-50% of the
// nearest class size cluster. Fewer than 3 points returns init and flags.
Box3D geometric_box_fit(const PointCloud& points, const Box3D& init, ObjectClass cls,
                        bool* low_evidence = nullptr);

// Geometric backend: inside `ref` enlarged by 0.2 m. Neural backend: the
// static segmentation head on points in ref's box frame.
std::vector<bool> segment_foreground(const PointCloud& points, const Box3D& ref,
                                     const RefinerConfig& cfg, ObjectClass cls);

struct RefineResult {
  Box3D box;  // world frame
  bool flagged = false;
  std::string note;
};

// Single amodal box for a static track; score comes from the keyframe.
RefineResult refine_static(const ObjectTrackData& data, const RefinerConfig& cfg,
                           KeyframeStrategy strategy);

// Per-frame box for a dynamic track at frames[center_idx].
RefineResult refine_dynamic(const ObjectTrackData& data, size_t center_idx,
                            const RefinerConfig& cfg);

// Static boxes broadcast over visible frames, dynamic refined per frame,
// indeterminate tracks passed through. Objects refine independently across
// `workers` threads; output order is (object order, frame).
AutoLabelSet assemble_labels(const std::vector<ObjectTrackData>& tracks,
                             const RefinerConfig& cfg, KeyframeStrategy strategy,
                             int workers = 1);

}  // namespace autolabel
