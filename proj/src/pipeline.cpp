#include "autolabel/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <thread>

#include <json.hpp>

#include "autolabel/track_extraction.hpp"

namespace autolabel {

using nlohmann::json;

namespace {

RefinerBackend backend_from_string(const std::string& s) {
  if (s == "geometric") return RefinerBackend::Geometric;
  if (s == "neural") return RefinerBackend::Neural;
  throw ParseError("unknown refiner backend: " + s);
}

}  // namespace

PipelineConfig pipeline_config_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError(path + ": invalid JSON config");

  PipelineConfig cfg;
  if (j.contains("tracker")) {
    const json& t = j.at("tracker");
    cfg.tracker.score_floor = t.value("score_floor", cfg.tracker.score_floor);
    cfg.tracker.iou_floor = t.value("iou_floor", cfg.tracker.iou_floor);
    cfg.tracker.max_misses = t.value("max_misses", cfg.tracker.max_misses);
    cfg.tracker.confirm_hits = t.value("confirm_hits", cfg.tracker.confirm_hits);
    cfg.tracker.oracle = t.value("oracle", cfg.tracker.oracle);
    cfg.tracker.oracle_iou_floor = t.value("oracle_iou_floor", cfg.tracker.oracle_iou_floor);
  }
  cfg.min_measurements = j.value("min_measurements", cfg.min_measurements);
  cfg.alpha = j.value("alpha", cfg.alpha);
  if (j.contains("keyframe")) {
    cfg.keyframe = keyframe_strategy_from_string(j.at("keyframe").get<std::string>());
  }
  if (j.contains("refiner")) {
    const json& r = j.at("refiner");
    if (r.contains("backend")) {
      cfg.refiner.backend = backend_from_string(r.at("backend").get<std::string>());
    }
    cfg.refiner.passes = r.value("passes", cfg.refiner.passes);
    cfg.refiner.tta = r.value("tta", cfg.refiner.tta);
    cfg.refiner.point_window = r.value("point_window", cfg.refiner.point_window);
    cfg.refiner.box_window = r.value("box_window", cfg.refiner.box_window);
    cfg.refiner.static_context = r.value("static_context", cfg.refiner.static_context);
    cfg.refiner.causal = r.value("causal", cfg.refiner.causal);
    cfg.refiner.dynamic_subsample = r.value("dynamic_subsample", cfg.refiner.dynamic_subsample);
    if (r.contains("wbf_vehicle")) {
      cfg.refiner.wbf_vehicle.iou_floor = r.at("wbf_vehicle").value("iou_floor", 0.275);
      cfg.refiner.wbf_vehicle.score_floor = r.at("wbf_vehicle").value("score_floor", 0.5);
    }
    if (r.contains("wbf_pedestrian")) {
      cfg.refiner.wbf_pedestrian.iou_floor = r.at("wbf_pedestrian").value("iou_floor", 0.2);
      cfg.refiner.wbf_pedestrian.score_floor = r.at("wbf_pedestrian").value("score_floor", 0.5);
    }
  }
  cfg.model_path = j.value("model_path", cfg.model_path);
  cfg.use_gt_motion = j.value("use_gt_motion", cfg.use_gt_motion);
  cfg.workers = j.value("workers", cfg.workers);
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

const LinearMotionClassifier& default_motion_classifier() {
  static const LinearMotionClassifier clf = [] {
    std::vector<MotionFeatures> features;
    std::vector<MotionState> labels;
    const double dt = 0.1;
    for (uint64_t i = 0; i < 400; ++i) {
      synth::CounterRng rng(0x7e57, i, 0, 0xc1f);
      const bool dynamic = i % 2 == 1;
      const int n = 7 + rng.uniform_int(94);
      const double speed = dynamic ? rng.uniform(1.0, 8.0) : 0.0;
      const double heading = rng.uniform(-kPi, kPi);
      const double sigma = rng.uniform(0.0, 0.4);
      std::vector<Eigen::Vector3d> centers;
      for (int t = 0; t < n; ++t) {
        Eigen::Vector3d c{speed * dt * t * std::cos(heading),
                          speed * dt * t * std::sin(heading), 0.0};
        c += sigma * Eigen::Vector3d(rng.gaussian(), rng.gaussian(), rng.gaussian());
        centers.push_back(c);
      }
      Eigen::Vector3d mean = Eigen::Vector3d::Zero();
      for (const auto& c : centers) mean += c;
      mean /= static_cast<double>(n);
      double trace = 0.0;
      for (const auto& c : centers) trace += (c - mean).squaredNorm();
      MotionFeatures f;
      f.center_variance = trace / static_cast<double>(n - 1);
      f.begin_end_distance = (centers.back() - centers.front()).norm();
      features.push_back(f);
      labels.push_back(dynamic ? MotionState::Dynamic : MotionState::Static);
    }
    return fit_linear_classifier(features, labels).classifier;
  }();
  return clf;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Majority GT object id over the track's entries, by per-frame best BEV IoU.
MotionState gt_motion_for_track(const Track& track, const SequenceDataset& ds) {
  std::map<int64_t, int> votes;
  for (const auto& e : track.entries) {
    const Frame& frame = ds.frames.at(static_cast<size_t>(e.frame));
    if (!frame.ground_truth) continue;
    int64_t best_id = -1;
    double best_iou = 0.0;
    for (const auto& g : *frame.ground_truth) {
      const double iou = bev_iou(e.detection, box_to_world(g.box, frame.pose));
      if (iou > best_iou) {
        best_iou = iou;
        best_id = g.object_id;
      }
    }
    if (best_id >= 0) ++votes[best_id];
  }
  int64_t winner = -1;
  int most = 0;
  for (const auto& [id, n] : votes) {
    if (n > most) {
      most = n;
      winner = id;
    }
  }
  if (winner < 0) return MotionState::Indeterminate;

  std::vector<Box3D> gt_boxes;
  for (const auto& e : track.entries) {
    const Frame& frame = ds.frames.at(static_cast<size_t>(e.frame));
    if (!frame.ground_truth) continue;
    for (const auto& g : *frame.ground_truth) {
      if (g.object_id == winner) {
        gt_boxes.push_back(box_to_world(g.box, frame.pose));
        break;
      }
    }
  }
  if (gt_boxes.size() < 2) return MotionState::Indeterminate;
  return gt_motion_label(gt_boxes, ds.frequency);
}

}  // namespace

PipelineResult run_pipeline(const SequenceDataset& ds, const PipelineConfig& cfg,
                            const neural::ModelBundle* bundle) {
  PipelineResult result;
  const auto total0 = Clock::now();

  auto t0 = Clock::now();
  result.tracks = run_tracker(ds, cfg.tracker);
  result.timings.push_back({"tracking", seconds_since(t0)});

  t0 = Clock::now();
  for (const auto& track : result.tracks) {
    result.track_data.push_back(extract_track_data(ds, track, cfg.alpha));
  }
  result.timings.push_back({"extraction", seconds_since(t0)});

  t0 = Clock::now();
  const LinearMotionClassifier& clf =
      bundle != nullptr && bundle->motion_classifier ? *bundle->motion_classifier
                                                     : default_motion_classifier();
  for (size_t i = 0; i < result.tracks.size(); ++i) {
    MotionState state;
    if (cfg.use_gt_motion && ds.has_ground_truth()) {
      state = static_cast<int>(result.tracks[i].entries.size()) < cfg.min_measurements
                  ? MotionState::Indeterminate
                  : gt_motion_for_track(result.tracks[i], ds);
    } else {
      state = classify_motion(result.tracks[i], clf, cfg.min_measurements);
    }
    result.track_data[i].motion_state = state;
  }
  result.timings.push_back({"motion_state", seconds_since(t0)});

  t0 = Clock::now();
  RefinerConfig rcfg = cfg.refiner;
  rcfg.seed = cfg.seed;
  rcfg.model = bundle;
  const int workers = cfg.workers > 0
                          ? cfg.workers
                          : static_cast<int>(std::thread::hardware_concurrency());
  result.labels = assemble_labels(result.track_data, rcfg, cfg.keyframe,
                                  std::max(workers, 1));
  result.labels.sequence_id = ds.sequence_id;
  result.timings.push_back({"refinement", seconds_since(t0)});

  result.timings.push_back({"total", seconds_since(total0)});
  return result;
}

std::vector<FrameBoxes> frames_from_labels(const SequenceDataset& ds,
                                           const AutoLabelSet& labels) {
  std::vector<FrameBoxes> out(ds.frames.size());
  for (size_t i = 0; i < ds.frames.size(); ++i) {
    const Frame& frame = ds.frames[i];
    out[i].sensor_origin = frame.pose.translation;
    if (!frame.ground_truth) continue;
    const auto [world_pts, dets] = to_world(frame);
    (void)dets;
    for (const auto& g : *frame.ground_truth) {
      const Box3D world = box_to_world(g.box, frame.pose);
      int count = 0;
      for (int64_t p = 0; p < world_pts.size(); ++p) {
        if (point_in_box(Eigen::Vector3d(world_pts.points.row(p).head<3>()), world)) ++count;
      }
      out[i].ground_truth.push_back(world);
      out[i].gt_point_counts.push_back(count);
    }
  }
  for (const auto& l : labels.labels) {
    if (l.frame >= 0 && static_cast<size_t>(l.frame) < out.size()) {
      out[static_cast<size_t>(l.frame)].predictions.push_back(l.box);
    }
  }
  return out;
}

std::vector<FrameBoxes> frames_from_detections(const SequenceDataset& ds) {
  AutoLabelSet raw;
  for (const auto& frame : ds.frames) {
    for (const auto& d : frame.detections) {
      raw.labels.push_back({frame.index, -1, box_to_world(d, frame.pose),
                            MotionState::Indeterminate});
    }
  }
  return frames_from_labels(ds, raw);
}

std::vector<Track> tracks_from_labels(const AutoLabelSet& labels) {
  std::map<int64_t, Track> by_id;
  for (const auto& l : labels.labels) {
    Track& t = by_id[l.object_id];
    t.object_id = l.object_id;
    t.cls = l.box.cls;
    t.entries.push_back({l.frame, l.box, {}});
    t.status = TrackStatus::Confirmed;
  }
  std::vector<Track> out;
  for (auto& [id, t] : by_id) {
    std::sort(t.entries.begin(), t.entries.end(),
              [](const TrackEntry& a, const TrackEntry& b) { return a.frame < b.frame; });
    out.push_back(std::move(t));
  }
  return out;
}

std::map<int64_t, std::map<int, Box3D>> gt_track_map(const SequenceDataset& ds) {
  std::map<int64_t, std::map<int, Box3D>> out;
  for (const auto& frame : ds.frames) {
    if (!frame.ground_truth) continue;
    for (const auto& g : *frame.ground_truth) {
      out[g.object_id][frame.index] = box_to_world(g.box, frame.pose);
    }
  }
  return out;
}

}  // namespace autolabel
