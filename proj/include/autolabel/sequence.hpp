#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "autolabel/geometry.hpp"

namespace autolabel {

enum class MotionState : uint8_t { Static = 0, Dynamic = 1, Indeterminate = 2 };

const char* to_string(MotionState s);
const char* to_string(ObjectClass c);
ObjectClass class_from_string(const std::string& s);
MotionState motion_from_string(const std::string& s);

struct GroundTruthBox {
  Box3D box;  // sensor frame
  int64_t object_id = -1;
};

struct Frame {
  int index = 0;
  double timestamp = 0.0;  // seconds
  SensorPose pose;         // sensor -> world
  PointCloud points;       // sensor frame
  std::vector<Box3D> detections;  // sensor frame
  std::optional<std::vector<GroundTruthBox>> ground_truth;
};

struct SequenceDataset {
  std::string sequence_id;
  double frequency = 10.0;  // Hz, nominal
  std::vector<std::string> channels = {"x", "y", "z"};
  std::vector<Frame> frames;

  bool has_ground_truth() const;
};

struct AutoLabel {
  int frame = 0;
  int64_t object_id = -1;
  Box3D box;  // world frame
  MotionState motion_state = MotionState::Indeterminate;
};

struct AutoLabelSet {
  std::string sequence_id;
  std::vector<AutoLabel> labels;  // unique per (frame, object_id)
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Line-delimited container: one JSON header line, one JSON frame record per
// line after it. Validates every dataset invariant on load.
SequenceDataset load_sequence(const std::string& path);
void save_sequence(const SequenceDataset& ds, const std::string& path);

AutoLabelSet load_labels(const std::string& path);
void save_labels(const AutoLabelSet& labels, const std::string& path);

// Frame contents mapped into the world frame through the sensor pose. Box
// headings stay yaw-only: heading += pose yaw.
Box3D box_to_world(const Box3D& box, const SensorPose& pose);
std::pair<PointCloud, std::vector<Box3D>> to_world(const Frame& frame);

}  // namespace autolabel
