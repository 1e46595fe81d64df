#include <doctest.h>

#include <map>

#include "autolabel/synth.hpp"
#include "autolabel/track_extraction.hpp"
#include "autolabel/tracking.hpp"
#include "helpers.hpp"

using namespace autolabel;
using testutil::make_box;

namespace {

SequenceDataset single_frame_dataset(const std::vector<Eigen::Vector3d>& points,
                                     const Box3D& det) {
  SequenceDataset ds;
  ds.sequence_id = "manual";
  Frame f;
  f.index = 0;
  f.points.points.resize(static_cast<int64_t>(points.size()), 3);
  for (size_t i = 0; i < points.size(); ++i) f.points.points.row(i) = points[i].transpose();
  f.detections.push_back(det);
  ds.frames.push_back(std::move(f));
  return ds;
}

Track track_on_frames(const std::vector<int>& frames, const Box3D& det) {
  Track t;
  t.object_id = 0;
  t.cls = det.cls;
  t.status = TrackStatus::Confirmed;
  for (int f : frames) t.entries.push_back({f, det, {}});
  return t;
}

}  // namespace

TEST_CASE("crop bound is closed and respects alpha") {
  const Box3D det = make_box(0, 0, 0, 4, 2, 1, 0.0);
  const double alpha = 0.4;
  const std::vector<Eigen::Vector3d> pts = {
      {2.0, 1.0, 0.5},            // exact corner
      {2.0 + 0.5 * alpha, 0, 0},  // half an alpha outside a face
      {2.0 + 1.5 * alpha, 0, 0},  // well outside
  };
  const SequenceDataset ds = single_frame_dataset(pts, det);
  const Track t = track_on_frames({0}, det);

  SUBCASE("alpha = 0 keeps only the corner") {
    const ObjectTrackData data = extract_track_data(ds, t, 0.0);
    REQUIRE(data.frames.size() == 1);
    CHECK(data.frames[0].points.size() == 1);
  }
  SUBCASE("alpha covers the near point but not the far one") {
    const ObjectTrackData data = extract_track_data(ds, t, alpha);
    CHECK(data.frames[0].points.size() == 2);
  }
  SUBCASE("negative alpha is rejected") {
    CHECK_THROWS_AS(extract_track_data(ds, t, -0.1), std::invalid_argument);
  }
}

TEST_CASE("extraction appends the source frame as the last channel") {
  synth::SceneConfig cfg;
  cfg.n_frames = 6;
  cfg.n_static = 1;
  cfg.n_dynamic = 0;
  cfg.points_per_object = 30;
  cfg.seed = 19;
  const SequenceDataset ds = synth::generate_scene(cfg);
  const auto tracks = run_tracker(ds, TrackerParams{});
  REQUIRE(tracks.size() == 1);
  const ObjectTrackData data = extract_track_data(ds, tracks[0], 1.0);
  REQUIRE(data.frames.size() == 6);
  for (const auto& f : data.frames) {
    CHECK(f.points.channels() == 4);
    for (int64_t i = 0; i < f.points.size(); ++i) {
      CHECK(f.points.points(i, 3) == doctest::Approx(static_cast<double>(f.frame)));
    }
  }
}

TEST_CASE("extraction is deterministic and captures all surface points") {
  synth::SceneConfig cfg;
  cfg.n_frames = 10;
  cfg.n_static = 1;
  cfg.n_dynamic = 1;
  cfg.points_per_object = 50;
  cfg.min_spawn_gap = 10.0;
  cfg.seed = 23;
  const SequenceDataset ds = synth::generate_scene(cfg);
  const auto tracks = run_tracker(ds, TrackerParams{});
  REQUIRE(tracks.size() == 2);

  for (const auto& t : tracks) {
    const ObjectTrackData a = extract_track_data(ds, t, 1.0);
    const ObjectTrackData b = extract_track_data(ds, t, 1.0);
    REQUIRE(a.frames.size() == b.frames.size());
    int64_t total = 0;
    for (size_t i = 0; i < a.frames.size(); ++i) {
      CHECK((a.frames[i].points.points - b.frames[i].points.points).cwiseAbs().maxCoeff() ==
            0.0);
      total += a.frames[i].points.size();
      // alpha (1.0) exceeds the jitter bound, so every surface point of this
      // well-separated object is captured.
      const Frame& frame = ds.frames.at(static_cast<size_t>(a.frames[i].frame));
      const auto [world_pts, dets] = to_world(frame);
      const Box3D world_gt =
          box_to_world((*frame.ground_truth)[static_cast<size_t>(t.object_id)].box, frame.pose);
      int inside = 0;
      for (int64_t p = 0; p < world_pts.size(); ++p) {
        if (point_in_box(Eigen::Vector3d(world_pts.points.row(p).head<3>()), world_gt,
                         cfg.surface_jitter + 1e-9)) {
          ++inside;
        }
      }
      CHECK(a.frames[i].points.size() >= inside);
    }
    CHECK(total > 0);
  }
}

TEST_CASE("merge_track_points preserves counts and tags") {
  synth::SceneConfig cfg;
  cfg.n_frames = 5;
  cfg.n_static = 1;
  cfg.n_dynamic = 0;
  cfg.points_per_object = 25;
  cfg.seed = 29;
  const SequenceDataset ds = synth::generate_scene(cfg);
  const auto tracks = run_tracker(ds, TrackerParams{});
  const ObjectTrackData data = extract_track_data(ds, tracks[0], 1.0);

  int64_t expected = 0;
  for (const auto& f : data.frames) expected += f.points.size();
  const PointCloud all = merge_track_points(data);
  CHECK(all.size() == expected);

  const PointCloud one = merge_track_points(data, {2});
  CHECK(one.size() == data.frames[2].points.size());
  CHECK((one.points - data.frames[2].points.points).cwiseAbs().maxCoeff() == 0.0);

  const PointCloud two = merge_track_points(data, {0, 3});
  CHECK(two.size() == data.frames[0].points.size() + data.frames[3].points.size());
  // Source-frame tags survive the merge.
  for (int64_t i = 0; i < two.size(); ++i) {
    const double tag = two.points(i, two.channels() - 1);
    CHECK((tag == 0.0 || tag == 3.0));
  }
}

TEST_CASE("dynamic_to_static_augment is the identity for static objects") {
  synth::SceneConfig cfg;
  cfg.n_frames = 8;
  cfg.n_static = 1;
  cfg.n_dynamic = 0;
  cfg.points_per_object = 30;
  cfg.seed = 31;
  const SequenceDataset ds = synth::generate_scene(cfg);
  const auto tracks = run_tracker(ds, TrackerParams{});
  const ObjectTrackData data = extract_track_data(ds, tracks[0], 1.0);

  std::map<int, Box3D> gt;
  for (const auto& f : ds.frames) {
    gt[f.index] = box_to_world((*f.ground_truth)[0].box, f.pose);
  }
  const ObjectTrackData aligned = dynamic_to_static_augment(data, gt);
  REQUIRE(aligned.frames.size() == data.frames.size());
  for (size_t i = 0; i < data.frames.size(); ++i) {
    CHECK((aligned.frames[i].points.points - data.frames[i].points.points)
              .cwiseAbs()
              .maxCoeff() < 1e-9);
    CHECK((aligned.frames[i].box.center() - data.frames[i].box.center()).norm() < 1e-9);
  }
  CHECK(aligned.motion_state == MotionState::Static);
}

TEST_CASE("dynamic_to_static_augment aligns a constant-velocity object") {
  synth::SceneConfig cfg;
  cfg.n_frames = 12;
  cfg.n_static = 0;
  cfg.n_dynamic = 1;
  cfg.points_per_object = 40;
  cfg.seed = 37;
  const SequenceDataset ds = synth::generate_scene(cfg);
  const auto tracks = run_tracker(ds, TrackerParams{});
  REQUIRE(tracks.size() == 1);
  const ObjectTrackData data = extract_track_data(ds, tracks[0], 0.2);

  std::map<int, Box3D> gt;
  for (const auto& f : ds.frames) {
    gt[f.index] = box_to_world((*f.ground_truth)[0].box, f.pose);
  }
  const ObjectTrackData aligned = dynamic_to_static_augment(data, gt);
  const Box3D& ref = gt.at(aligned.frames.front().frame);
  const PointCloud merged = merge_track_points(aligned);
  CHECK(merged.size() > 0);
  for (int64_t i = 0; i < merged.size(); ++i) {
    CHECK(point_in_box(Eigen::Vector3d(merged.points.row(i).head<3>()), ref,
                       cfg.surface_jitter + 0.2 + 1e-9));
  }
}

TEST_CASE("dynamic_to_static_augment carries rotation, not just translation") {
  // Hand-built track: the GT box turns 90 degrees between the two frames; a
  // point on the front face must stay on the front face after alignment.
  const Box3D gt0 = make_box(0, 0, 0, 4, 2, 1, 0.0);
  const Box3D gt1 = make_box(10, 0, 0, 4, 2, 1, 0.5 * kPi);

  ObjectTrackData data;
  data.object_id = 0;
  data.cls = ObjectClass::Vehicle;
  auto frame_data = [](int frame, const Eigen::Vector3d& p, const Box3D& box) {
    ObjectFrameData f;
    f.frame = frame;
    f.points.points.resize(1, 4);
    f.points.points << p.x(), p.y(), p.z(), static_cast<double>(frame);
    f.box = box;
    f.score = 1.0;
    return f;
  };
  data.frames.push_back(frame_data(0, {2.0, 0.0, 0.0}, gt0));   // front face center
  data.frames.push_back(frame_data(1, {10.0, 2.0, 0.0}, gt1));  // front face after the turn

  std::map<int, Box3D> gt{{0, gt0}, {1, gt1}};
  const ObjectTrackData aligned = dynamic_to_static_augment(data, gt);
  const Eigen::Vector3d p1 = aligned.frames[1].points.points.row(0).head<3>();
  CHECK((p1 - Eigen::Vector3d(2.0, 0.0, 0.0)).norm() < 1e-9);
  // Frame boxes ride along: frame 1's tracked box lands on the reference GT.
  CHECK((aligned.frames[1].box.center() - gt0.center()).norm() < 1e-9);
  CHECK(std::abs(cyclic_diff(aligned.frames[1].box.heading, gt0.heading)) < 1e-9);

  std::map<int, Box3D> missing{{0, gt0}};
  CHECK_THROWS_AS(dynamic_to_static_augment(data, missing), std::invalid_argument);
}
