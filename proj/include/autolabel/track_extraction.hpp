#pragma once

#include <map>
#include <vector>

#include "autolabel/tracking.hpp"

namespace autolabel {

struct ObjectFrameData {
  int frame = 0;
  PointCloud points;  // world frame; last channel tags the source frame index
  Box3D box;          // world frame, tracked detection
  double score = 0.0;
};

struct ObjectTrackData {
  int64_t object_id = -1;
  ObjectClass cls = ObjectClass::Vehicle;
  MotionState motion_state = MotionState::Indeterminate;
  std::vector<ObjectFrameData> frames;
};

// Crops each visible frame's world points to the tracked box enlarged by
// alpha meters on every face (closed bound). Appends a source-frame channel.
ObjectTrackData extract_track_data(const SequenceDataset& ds, const Track& track,
                                   double alpha = 1.0);

// Concatenation over a frame subset (empty subset = all frames).
PointCloud merge_track_points(const ObjectTrackData& data,
                              const std::vector<int>& frame_subset = {});

// Maps every frame's points by the rigid transform taking that frame's GT box
// onto the reference (first) frame's GT box, turning a dynamic track into a
// pseudo-static one for training.
ObjectTrackData dynamic_to_static_augment(const ObjectTrackData& data,
                                          const std::map<int, Box3D>& gt_boxes);

}  // namespace autolabel
