#include "autolabel/track_extraction.hpp"

#include <algorithm>
#include <stdexcept>

namespace autolabel {

ObjectTrackData extract_track_data(const SequenceDataset& ds, const Track& track,
                                   double alpha) {
  if (alpha < 0.0) throw std::invalid_argument("extract_track_data: alpha must be >= 0");
  ObjectTrackData data;
  data.object_id = track.object_id;
  data.cls = track.cls;

  for (const auto& entry : track.entries) {
    const Frame& frame = ds.frames.at(static_cast<size_t>(entry.frame));
    const PointCloud world = transform_points(frame.points, frame.pose);
    const Box3D& box = entry.detection;
    const double bx = 0.5 * box.length + alpha;
    const double by = 0.5 * box.width + alpha;
    const double bz = 0.5 * box.height + alpha;

    std::vector<int64_t> keep;
    for (int64_t i = 0; i < world.size(); ++i) {
      const Eigen::Vector3d local =
          to_box_frame(Eigen::Vector3d(world.points.row(i).head<3>()), box);
      if (std::abs(local.x()) <= bx && std::abs(local.y()) <= by && std::abs(local.z()) <= bz) {
        keep.push_back(i);
      }
    }
    ObjectFrameData ofd;
    ofd.frame = entry.frame;
    ofd.box = box;
    ofd.score = box.score;
    const int64_t c = world.channels();
    ofd.points.points.resize(static_cast<int64_t>(keep.size()), c + 1);
    for (size_t j = 0; j < keep.size(); ++j) {
      ofd.points.points.row(static_cast<int64_t>(j)).head(c) = world.points.row(keep[j]);
      ofd.points.points(static_cast<int64_t>(j), c) = entry.frame;
    }
    data.frames.push_back(std::move(ofd));
  }
  return data;
}

PointCloud merge_track_points(const ObjectTrackData& data,
                              const std::vector<int>& frame_subset) {
  std::vector<const ObjectFrameData*> selected;
  for (const auto& f : data.frames) {
    if (frame_subset.empty() ||
        std::find(frame_subset.begin(), frame_subset.end(), f.frame) != frame_subset.end()) {
      selected.push_back(&f);
    }
  }
  int64_t n = 0;
  int64_t c = 0;
  for (const auto* f : selected) {
    n += f->points.size();
    c = std::max(c, f->points.channels());
  }
  PointCloud merged;
  merged.points.resize(n, c);
  int64_t at = 0;
  for (const auto* f : selected) {
    if (f->points.size() == 0) continue;
    merged.points.middleRows(at, f->points.size()) = f->points.points;
    at += f->points.size();
  }
  return merged;
}

ObjectTrackData dynamic_to_static_augment(const ObjectTrackData& data,
                                          const std::map<int, Box3D>& gt_boxes) {
  if (data.frames.empty()) return data;
  for (const auto& f : data.frames) {
    if (gt_boxes.find(f.frame) == gt_boxes.end()) {
      throw std::invalid_argument("dynamic_to_static_augment: missing GT box for frame " +
                                  std::to_string(f.frame));
    }
  }
  const Box3D& ref_gt = gt_boxes.at(data.frames.front().frame);

  ObjectTrackData out = data;
  for (auto& f : out.frames) {
    const Box3D& frame_gt = gt_boxes.at(f.frame);
    for (int64_t i = 0; i < f.points.size(); ++i) {
      const Eigen::Vector3d p(f.points.points.row(i).head<3>());
      const Eigen::Vector3d aligned = from_box_frame(to_box_frame(p, frame_gt), ref_gt);
      f.points.points.row(i).head<3>() = aligned.transpose();
    }
    // The tracked box rides along under the same rigid map.
    Box3D b = f.box;
    const Eigen::Vector3d c = from_box_frame(to_box_frame(b.center(), frame_gt), ref_gt);
    b.cx = c.x();
    b.cy = c.y();
    b.cz = c.z();
    b.heading = normalize_angle(b.heading - frame_gt.heading + ref_gt.heading);
    f.box = b;
  }
  out.motion_state = MotionState::Static;
  return out;
}

}  // namespace autolabel
