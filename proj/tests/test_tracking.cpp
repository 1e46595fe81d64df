#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "autolabel/hungarian.hpp"
#include "autolabel/synth.hpp"
#include "autolabel/tracking.hpp"
#include "helpers.hpp"

using namespace autolabel;
using testutil::make_box;

namespace {

double assignment_cost(const Eigen::MatrixXd& cost, const std::vector<int>& assign) {
  double total = 0.0;
  for (int i = 0; i < static_cast<int>(assign.size()); ++i) {
    if (assign[i] >= 0) total += cost(i, assign[i]);
  }
  return total;
}

// Exhaustive minimum over all ways to injectively map rows to columns (rows
// may stay unassigned only when rows > cols).
double brute_force_min(const Eigen::MatrixXd& cost) {
  const int nr = static_cast<int>(cost.rows());
  const int nc = static_cast<int>(cost.cols());
  std::vector<int> cols(nc);
  std::iota(cols.begin(), cols.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  if (nr <= nc) {
    std::sort(cols.begin(), cols.end());
    do {
      double t = 0.0;
      for (int i = 0; i < nr; ++i) t += cost(i, cols[i]);
      best = std::min(best, t);
    } while (std::next_permutation(cols.begin(), cols.end()));
  } else {
    // Choose which nc rows get a column, then permute.
    std::vector<int> rows(nr);
    std::iota(rows.begin(), rows.end(), 0);
    std::vector<bool> pick(nr, false);
    std::fill(pick.begin(), pick.begin() + nc, true);
    std::sort(pick.begin(), pick.end());
    do {
      std::vector<int> chosen;
      for (int i = 0; i < nr; ++i)
        if (pick[i]) chosen.push_back(i);
      std::sort(cols.begin(), cols.end());
      do {
        double t = 0.0;
        for (int i = 0; i < nc; ++i) t += cost(chosen[i], cols[i]);
        best = std::min(best, t);
      } while (std::next_permutation(cols.begin(), cols.end()));
    } while (std::next_permutation(pick.begin(), pick.end()));
  }
  return best;
}

SequenceDataset dataset_from_boxes(const std::vector<std::vector<Box3D>>& per_frame,
                                   const std::vector<std::vector<int64_t>>& gt_ids = {}) {
  SequenceDataset ds;
  ds.sequence_id = "manual";
  ds.frequency = 10.0;
  for (size_t k = 0; k < per_frame.size(); ++k) {
    Frame f;
    f.index = static_cast<int>(k);
    f.timestamp = 0.1 * static_cast<double>(k);
    f.points.points.resize(0, 3);
    f.detections = per_frame[k];
    if (!gt_ids.empty()) {
      std::vector<GroundTruthBox> gt;
      for (size_t d = 0; d < per_frame[k].size(); ++d) {
        if (gt_ids[k][d] >= 0) gt.push_back({per_frame[k][d], gt_ids[k][d]});
      }
      f.ground_truth = std::move(gt);
    }
    ds.frames.push_back(std::move(f));
  }
  return ds;
}

}  // namespace

TEST_CASE("hungarian matches brute force on random matrices up to 6x6") {
  synth::CounterRng rng(77, 0, 0, 6);
  for (int trial = 0; trial < 120; ++trial) {
    const int nr = 1 + rng.uniform_int(6);
    const int nc = 1 + rng.uniform_int(6);
    if (nr > nc && nr > 5) continue;  // keep the subset enumeration cheap
    Eigen::MatrixXd cost(nr, nc);
    for (int i = 0; i < nr; ++i)
      for (int j = 0; j < nc; ++j) cost(i, j) = rng.uniform(0.0, 10.0);
    const auto assign = hungarian_assign(cost);
    REQUIRE(static_cast<int>(assign.size()) == nr);

    // Validity: injective, -1 only when rows exceed columns.
    std::vector<bool> used(nc, false);
    int assigned = 0;
    for (int i = 0; i < nr; ++i) {
      if (assign[i] < 0) continue;
      CHECK(assign[i] < nc);
      CHECK_FALSE(used[assign[i]]);
      used[assign[i]] = true;
      ++assigned;
    }
    CHECK(assigned == std::min(nr, nc));
    CHECK(assignment_cost(cost, assign) == doctest::Approx(brute_force_min(cost)).epsilon(1e-9));
  }
}

TEST_CASE("hungarian handles ties and the identity case deterministically") {
  Eigen::MatrixXd eye(3, 3);
  eye << 0, 1, 1, 1, 0, 1, 1, 1, 0;
  const auto assign = hungarian_assign(eye);
  CHECK(assign == std::vector<int>{0, 1, 2});

  Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(2, 2, 3.0);
  const auto a1 = hungarian_assign(flat);
  const auto a2 = hungarian_assign(flat);
  CHECK(a1 == a2);
}

TEST_CASE("kalman predict advances the center by velocity * dt") {
  TrackerParams params;
  TrackState s;
  s.mean << 1, 2, 3, 4, 2, 1.5, 0.3, 2.0, -1.0, 0.5;
  const TrackState p = kalman_predict(s, 0.1, params);
  CHECK(p.mean(0) == doctest::Approx(1.2));
  CHECK(p.mean(1) == doctest::Approx(1.9));
  CHECK(p.mean(2) == doctest::Approx(3.05));
  CHECK(p.mean(3) == doctest::Approx(4.0));
  CHECK(p.mean(6) == doctest::Approx(0.3));
  // Covariance grows under prediction.
  CHECK(p.covariance(0, 0) > s.covariance(0, 0));
}

TEST_CASE("kalman update uses the cyclic heading innovation across the wrap") {
  TrackerParams params;
  TrackState s;
  s.mean << 0, 0, 0, 4, 2, 1.5, 3.0, 0, 0, 0;
  Box3D det = make_box(0, 0, 0, 4, 2, 1.5, -3.0);
  const TrackState u = kalman_update(s, det, params);
  // The innovation is 2*pi - 6 (about +0.283), so the posterior heading moves
  // forward through the wrap, not backward across the circle.
  const double step = cyclic_diff(u.mean(6), 3.0);
  CHECK(step > 0.0);
  CHECK(step < 2.0 * kPi - 6.0 + 1e-9);
  CHECK(std::abs(cyclic_diff(u.mean(6), 2.0 * kPi - 3.0)) < 0.05);
}

TEST_CASE("kalman update flips obtuse detection headings before the innovation") {
  TrackerParams params;
  TrackState s;
  s.mean << 0, 0, 0, 4, 2, 1.5, 0.0, 0, 0, 0;
  Box3D det = make_box(0, 0, 0, 4, 2, 1.5, kPi - 0.05);  // near-opposite heading
  const TrackState u = kalman_update(s, det, params);
  CHECK(std::abs(u.mean(6)) < 0.1);  // stays near 0, no half-turn jump
}

TEST_CASE("noiseless measurements contract the update toward the detection") {
  TrackerParams params;
  TrackState s;
  s.mean << 0, 0, 0, 4, 2, 1.5, 0.0, 0, 0, 0;
  const Box3D det = make_box(0.5, 0, 0, 4, 2, 1.5, 0.0);
  TrackState cur = s;
  for (int i = 0; i < 20; ++i) {
    cur = kalman_predict(cur, 0.1, params);
    cur = kalman_update(cur, det, params);
  }
  CHECK(cur.mean(0) == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("single static noiseless object yields one full-length track") {
  synth::SceneConfig cfg;
  cfg.n_frames = 200;
  cfg.n_static = 1;
  cfg.n_dynamic = 0;
  cfg.points_per_object = 0;
  cfg.seed = 3;
  const SequenceDataset ds = synth::generate_scene(cfg);
  const auto tracks = run_tracker(ds, TrackerParams{});
  REQUIRE(tracks.size() == 1);
  CHECK(tracks[0].entries.size() == 200);
  CHECK(tracks[0].status == TrackStatus::Confirmed);
  for (size_t i = 1; i < tracks[0].entries.size(); ++i) {
    CHECK(tracks[0].entries[i].frame == tracks[0].entries[i - 1].frame + 1);
  }
}

TEST_CASE("detections below the score floor start no tracks") {
  std::vector<std::vector<Box3D>> frames(10);
  for (auto& f : frames) f.push_back(make_box(0, 0, 0.75, 4, 2, 1.5, 0.0, 0.05));
  const SequenceDataset ds = dataset_from_boxes(frames);
  CHECK(run_tracker(ds, TrackerParams{}).empty());
}

TEST_CASE("track confirmation and death follow the hit/miss thresholds") {
  // Object visible frames 0..4, gone 5..9, visible again 10..14.
  std::vector<std::vector<Box3D>> frames(15);
  for (int k = 0; k < 15; ++k) {
    if (k < 5 || k >= 10) frames[k].push_back(make_box(0, 0, 0.75, 4, 2, 1.5, 0.0));
  }
  const SequenceDataset ds = dataset_from_boxes(frames);
  const auto tracks = run_tracker(ds, TrackerParams{});
  REQUIRE(tracks.size() == 2);  // the 5-frame gap exceeds max_misses
  CHECK(tracks[0].entries.size() == 5);
  CHECK(tracks[1].entries.size() == 5);
  CHECK(tracks[0].object_id != tracks[1].object_id);

  // A single isolated detection never reaches confirm_hits.
  std::vector<std::vector<Box3D>> lone(6);
  lone[0].push_back(make_box(20, 0, 0.75, 4, 2, 1.5, 0.0));
  const auto lone_tracks = run_tracker(dataset_from_boxes(lone), TrackerParams{});
  REQUIRE(lone_tracks.size() == 1);
  CHECK(lone_tracks[0].status != TrackStatus::Confirmed);
}

TEST_CASE("two well-separated objects stay on distinct tracks") {
  synth::SceneConfig cfg;
  cfg.n_frames = 60;
  cfg.n_static = 1;
  cfg.n_dynamic = 1;
  cfg.points_per_object = 0;
  cfg.seed = 5;
  const SequenceDataset ds = synth::generate_scene(cfg);
  const auto tracks = run_tracker(ds, TrackerParams{});
  REQUIRE(tracks.size() == 2);
  for (const auto& t : tracks) CHECK(t.entries.size() == 60);
}

TEST_CASE("oracle tracker assigns GT object ids and drops false positives") {
  synth::SceneConfig cfg;
  cfg.n_frames = 40;
  cfg.n_static = 2;
  cfg.n_dynamic = 1;
  cfg.points_per_object = 0;
  cfg.seed = 8;
  SequenceDataset ds = synth::generate_scene(cfg);
  synth::NoiseConfig noise;
  noise.false_positive_rate = 1.0;
  noise.score_noise_gain = 0.0;
  ds = synth::perturb_detections(ds, noise, 4);

  TrackerParams params;
  params.oracle = true;
  const auto tracks = run_tracker(ds, params);
  REQUIRE(tracks.size() == 3);
  for (const auto& t : tracks) {
    CHECK(t.object_id >= 0);
    CHECK(t.object_id < 3);
    CHECK(t.entries.size() == 40);  // every GT matched, every FP dropped
    CHECK(t.status == TrackStatus::Confirmed);
  }
}

TEST_CASE("state_to_box clamps extents and normalizes the heading") {
  TrackState s;
  s.mean << 1, 2, 3, -0.5, 2, 1.5, 4.0, 0, 0, 0;
  const Box3D b = state_to_box(s, ObjectClass::Vehicle, 0.7);
  CHECK(b.length == doctest::Approx(1e-3));
  CHECK(b.heading == doctest::Approx(normalize_angle(4.0)));
  CHECK(b.score == doctest::Approx(0.7));
  CHECK(b.valid());
}
