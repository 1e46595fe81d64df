#include "autolabel/refiners.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>

namespace autolabel {

KeyframeStrategy keyframe_strategy_from_string(const std::string& s) {
  if (s == "random") return KeyframeStrategy::Random;
  if (s == "average") return KeyframeStrategy::Average;
  if (s == "highest") return KeyframeStrategy::HighestScore;
  throw std::invalid_argument("unknown keyframe strategy: " + s);
}

const char* to_string(KeyframeStrategy s) {
  switch (s) {
    case KeyframeStrategy::Random: return "random";
    case KeyframeStrategy::Average: return "average";
    case KeyframeStrategy::HighestScore: return "highest";
  }
  return "?";
}

KeyframeChoice select_keyframe(const ObjectTrackData& data, KeyframeStrategy strategy,
                               uint64_t seed) {
  if (data.frames.empty()) {
    throw std::invalid_argument("select_keyframe: empty track");
  }
  const auto& frames = data.frames;
  switch (strategy) {
    case KeyframeStrategy::Random: {
      synth::CounterRng rng(seed, 0, static_cast<uint64_t>(data.object_id), 0x6b);
      const size_t i = static_cast<size_t>(rng.uniform_int(static_cast<int>(frames.size())));
      return {frames[i].box, frames[i].frame};
    }
    case KeyframeStrategy::Average: {
      Box3D avg = frames.front().box;
      Eigen::Vector3d center = Eigen::Vector3d::Zero();
      Eigen::Vector3d size = Eigen::Vector3d::Zero();
      std::vector<double> angles, weights;
      double score = 0.0;
      for (const auto& f : frames) {
        center += f.box.center();
        size += Eigen::Vector3d{f.box.length, f.box.width, f.box.height};
        angles.push_back(align_heading(f.box.heading, frames.front().box.heading));
        weights.push_back(1.0);
        score += f.score;
      }
      const double n = static_cast<double>(frames.size());
      avg.cx = center.x() / n;
      avg.cy = center.y() / n;
      avg.cz = center.z() / n;
      avg.length = size.x() / n;
      avg.width = size.y() / n;
      avg.height = size.z() / n;
      avg.heading = cyclic_mean(angles, weights);
      avg.score = score / n;
      return {avg, -1};
    }
    case KeyframeStrategy::HighestScore: {
      size_t best = 0;
      for (size_t i = 1; i < frames.size(); ++i) {
        if (frames[i].score > frames[best].score) best = i;  // ties keep earliest
      }
      return {frames[best].box, frames[best].frame};
    }
  }
  throw std::logic_error("select_keyframe: unhandled strategy");
}

namespace {

int nearest_cluster(double l, double w, double h, ObjectClass cls) {
  const auto& clusters = size_clusters(cls);
  const Eigen::Vector3d size{l, w, h};
  int best = 0;
  double best_d = (size - clusters[0]).squaredNorm();
  for (size_t i = 1; i < clusters.size(); ++i) {
    const double d = (size - clusters[i]).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

PointCloud rotate_points_z(const PointCloud& pc, const Eigen::Vector3d& pivot, double a) {
  PointCloud out = pc;
  const double c = std::cos(a), s = std::sin(a);
  for (int64_t i = 0; i < pc.size(); ++i) {
    const double x = pc.points(i, 0) - pivot.x();
    const double y = pc.points(i, 1) - pivot.y();
    out.points(i, 0) = c * x - s * y + pivot.x();
    out.points(i, 1) = s * x + c * y + pivot.y();
  }
  return out;
}

Box3D rotate_box_z(const Box3D& b, const Eigen::Vector3d& pivot, double a) {
  Box3D out = b;
  const double c = std::cos(a), s = std::sin(a);
  const double x = b.cx - pivot.x();
  const double y = b.cy - pivot.y();
  out.cx = c * x - s * y + pivot.x();
  out.cy = s * x + c * y + pivot.y();
  out.heading = normalize_angle(b.heading + a);
  return out;
}

PointCloud select_points(const PointCloud& pc, const std::vector<bool>& mask) {
  int64_t n = 0;
  for (bool m : mask) n += m ? 1 : 0;
  PointCloud out;
  out.points.resize(n, pc.channels());
  int64_t at = 0;
  for (int64_t i = 0; i < pc.size(); ++i) {
    if (mask[static_cast<size_t>(i)]) out.points.row(at++) = pc.points.row(i);
  }
  return out;
}

}  // namespace

Box3D geometric_box_fit(const PointCloud& points, const Box3D& init, ObjectClass cls,
                        bool* low_evidence) {
  if (low_evidence) *low_evidence = false;
  if (points.size() < 3) {
    if (low_evidence) *low_evidence = true;
    return init;
  }

  // Search relative heading offsets so the fit is exactly equivariant to
  // joint rotations of points and init.
  constexpr double kRange = 15.0 * kPi / 180.0;
  constexpr double kStep = 0.5 * kPi / 180.0;
  double best_area = std::numeric_limits<double>::infinity();
  double best_h = init.heading;
  double bx0 = 0, bx1 = 0, by0 = 0, by1 = 0;
  for (int k = -30; k <= 30; ++k) {
    const double h = init.heading + k * kStep;
    const double c = std::cos(h), s = std::sin(h);
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (int64_t i = 0; i < points.size(); ++i) {
      const double px = points.points(i, 0), py = points.points(i, 1);
      const double x = c * px + s * py;   // rotate by -h
      const double y = -s * px + c * py;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
    const double area = (x1 - x0) * (y1 - y0);
    if (area < best_area - 1e-12) {
      best_area = area;
      best_h = h;
      bx0 = x0;
      bx1 = x1;
      by0 = y0;
      by1 = y1;
    }
  }
  (void)kRange;

  double z0 = std::numeric_limits<double>::infinity(), z1 = -z0;
  for (int64_t i = 0; i < points.size(); ++i) {
    z0 = std::min(z0, points.points(i, 2));
    z1 = std::max(z1, points.points(i, 2));
  }

  double l = bx1 - bx0, w = by1 - by0, h = z1 - z0;
  const auto& prior = size_clusters(cls)[static_cast<size_t>(nearest_cluster(l, w, h, cls))];
  l = std::clamp(l, 0.5 * prior.x(), 1.5 * prior.x());
  w = std::clamp(w, 0.5 * prior.y(), 1.5 * prior.y());
  h = std::clamp(h, 0.5 * prior.z(), 1.5 * prior.z());

  const double mx = 0.5 * (bx0 + bx1), my = 0.5 * (by0 + by1);
  const double c = std::cos(best_h), s = std::sin(best_h);
  Box3D out = init;
  out.cx = c * mx - s * my;
  out.cy = s * mx + c * my;
  out.cz = 0.5 * (z0 + z1);
  out.length = l;
  out.width = w;
  out.height = h;
  out.heading = normalize_angle(best_h);
  out.cls = cls;
  return out;
}

std::vector<bool> segment_foreground(const PointCloud& points, const Box3D& ref,
                                     const RefinerConfig& cfg, ObjectClass cls) {
  std::vector<bool> mask(static_cast<size_t>(points.size()), false);
  if (cfg.backend == RefinerBackend::Geometric) {
    for (int64_t i = 0; i < points.size(); ++i) {
      mask[static_cast<size_t>(i)] =
          point_in_box(Eigen::Vector3d(points.points.row(i).head<3>()), ref, 0.2);
    }
    return mask;
  }
  if (cfg.model == nullptr) {
    throw std::invalid_argument("segment_foreground: neural backend without a model");
  }
  // Local copy: inference mutates recorded-pass bookkeeping.
  neural::StaticRefinerModel model = cfg.model->static_models.at(cls);
  PointCloud local = to_box_frame(points, ref);
  local.points.conservativeResize(local.points.rows(), 3);
  return model.segment(local);
}

namespace {

// One backend fit of the merged static cloud against an initial world box.
std::optional<Box3D> static_fit_once(const PointCloud& merged, const Box3D& init,
                                     const RefinerConfig& cfg, ObjectClass cls,
                                     bool* flagged) {
  if (cfg.backend == RefinerBackend::Geometric) {
    Box3D est = init;
    for (int pass = 0; pass < std::max(cfg.passes, 1); ++pass) {
      const auto mask = segment_foreground(merged, est, cfg, cls);
      const PointCloud fg = select_points(merged, mask);
      if (fg.size() == 0) return std::nullopt;
      bool low = false;
      est = geometric_box_fit(fg, est, cls, &low);
      if (low && flagged) *flagged = true;
    }
    return est;
  }
  if (cfg.model == nullptr) {
    throw std::invalid_argument("refine_static: neural backend without a model");
  }
  neural::StaticRefinerModel model = cfg.model->static_models.at(cls);
  PointCloud local = to_box_frame(merged, init);
  local.points.conservativeResize(local.points.rows(), 3);
  const auto mask = model.segment(local);
  const PointCloud fg = select_points(local, mask);
  if (fg.size() == 0) return std::nullopt;
  const Box3D local_est = model.regress(fg, cfg.passes);
  return box_from_frame(local_est, init);
}

}  // namespace

RefineResult refine_static(const ObjectTrackData& data, const RefinerConfig& cfg,
                           KeyframeStrategy strategy) {
  if (data.frames.empty()) {
    throw std::invalid_argument("refine_static: empty track");
  }
  const KeyframeChoice key = select_keyframe(data, strategy, cfg.seed);

  // Context anchor: the keyframe where one exists, else the top-score frame.
  int anchor = key.frame;
  if (anchor < 0) {
    size_t best = 0;
    for (size_t i = 1; i < data.frames.size(); ++i) {
      if (data.frames[i].score > data.frames[best].score) best = i;
    }
    anchor = data.frames[best].frame;
  }
  std::vector<int> subset;
  for (const auto& f : data.frames) {
    if (cfg.causal && f.frame > anchor) continue;
    if (cfg.static_context >= 0 && std::abs(f.frame - anchor) > cfg.static_context) continue;
    subset.push_back(f.frame);
  }

  RefineResult result;
  result.box = key.box;
  const PointCloud merged = merge_track_points(data, subset);
  if (merged.size() == 0) {
    result.flagged = true;
    result.note = "empty merged cloud";
    return result;
  }

  std::optional<Box3D> est;
  if (!cfg.tta) {
    est = static_fit_once(merged, key.box, cfg, data.cls, &result.flagged);
  } else {
    const Eigen::Vector3d pivot = key.box.center();
    std::vector<Box3D> candidates;
    for (double a : tta_angles()) {
      const PointCloud rotated = rotate_points_z(merged, pivot, a);
      const Box3D init = rotate_box_z(key.box, pivot, a);
      auto fit = static_fit_once(rotated, init, cfg, data.cls, &result.flagged);
      if (!fit) continue;
      Box3D back = rotate_box_z(*fit, pivot, -a);
      back.score = key.box.score;
      candidates.push_back(back);
    }
    if (!candidates.empty()) {
      const auto fused = weighted_box_fusion(candidates, cfg.wbf(data.cls));
      if (!fused.empty()) {
        size_t best = 0;
        for (size_t i = 1; i < fused.size(); ++i) {
          if (fused[i].score > fused[best].score) best = i;
        }
        est = fused[best];
      } else {
        est = candidates.front();
      }
    }
  }

  if (!est) {
    result.flagged = true;
    result.note = "empty foreground";
    return result;
  }
  result.box = *est;
  result.box.score = key.box.score;
  result.box.cls = data.cls;
  return result;
}

namespace {

RefineResult dynamic_geometric(const ObjectTrackData& data, size_t center_idx,
                               const RefinerConfig& cfg) {
  const auto& frames = data.frames;
  const int t_center = frames[center_idx].frame;

  std::vector<double> dts, wts;
  std::vector<const ObjectFrameData*> window;
  int max_abs = 1;
  for (const auto& f : frames) {
    const int dt = f.frame - t_center;
    if (std::abs(dt) > cfg.box_window) continue;
    if (cfg.causal && dt > 0) continue;
    window.push_back(&f);
    dts.push_back(static_cast<double>(dt));
    max_abs = std::max(max_abs, std::abs(dt));
  }
  for (double dt : dts) {
    const double u = std::abs(dt) / static_cast<double>(max_abs + 1);
    const double w = std::pow(1.0 - u * u * u, 3);  // tricube
    wts.push_back(w);
  }

  // Weighted linear regression of centers against dt; the intercept is the
  // smoothed center at the middle frame. Exact on linear trajectories.
  Eigen::Vector3d smoothed = frames[center_idx].box.center();
  double sw = 0, swt = 0, swt2 = 0;
  Eigen::Vector3d sy = Eigen::Vector3d::Zero(), syt = Eigen::Vector3d::Zero();
  for (size_t i = 0; i < window.size(); ++i) {
    const double w = wts[i], t = dts[i];
    const Eigen::Vector3d c = window[i]->box.center();
    sw += w;
    swt += w * t;
    swt2 += w * t * t;
    sy += w * c;
    syt += w * t * c;
  }
  const double det = sw * swt2 - swt * swt;
  if (std::abs(det) > 1e-12) {
    smoothed = (swt2 * sy - swt * syt) / det;
  } else if (sw > 0.0) {
    smoothed = sy / sw;
  }

  std::vector<double> angles;
  for (size_t i = 0; i < window.size(); ++i) {
    angles.push_back(align_heading(window[i]->box.heading, frames[center_idx].box.heading));
  }
  const double heading = cyclic_mean(angles, wts);

  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  std::vector<double> ls, ws, hs;
  for (const auto& f : frames) {
    ls.push_back(f.box.length);
    ws.push_back(f.box.width);
    hs.push_back(f.box.height);
  }

  RefineResult out;
  out.box = frames[center_idx].box;
  out.box.cx = smoothed.x();
  out.box.cy = smoothed.y();
  out.box.cz = smoothed.z();
  out.box.heading = heading;
  out.box.length = median(ls);
  out.box.width = median(ws);
  out.box.height = median(hs);
  out.box.score = frames[center_idx].score;
  out.box.cls = data.cls;
  return out;
}

RefineResult dynamic_neural(const ObjectTrackData& data, size_t center_idx,
                            const RefinerConfig& cfg) {
  if (cfg.model == nullptr) {
    throw std::invalid_argument("refine_dynamic: neural backend without a model");
  }
  neural::DynamicRefinerModel model = cfg.model->dynamic_models.at(data.cls);
  const auto& frames = data.frames;
  const Box3D& ref = frames[center_idx].box;
  const int t_center = frames[center_idx].frame;

  std::map<int, size_t> by_frame;
  for (size_t i = 0; i < frames.size(); ++i) by_frame[frames[i].frame] = i;

  std::vector<Eigen::MatrixXd> chunks;
  int64_t total = 0;
  for (int off = -cfg.point_window; off <= cfg.point_window; ++off) {
    if (cfg.causal && off > 0) continue;
    const auto it = by_frame.find(t_center + off);
    if (it == by_frame.end()) {
      chunks.push_back(Eigen::MatrixXd::Zero(1, 4));
      ++total;
      continue;
    }
    PointCloud pc;
    pc.points = frames[it->second].points.points.leftCols(3);
    synth::CounterRng rng(cfg.seed, static_cast<uint64_t>(t_center + off),
                          static_cast<uint64_t>(data.object_id), 0xd5);
    pc = neural::subsample_points(pc, cfg.dynamic_subsample, rng);
    Eigen::MatrixXd chunk(pc.size(), 4);
    for (int64_t p = 0; p < pc.size(); ++p) {
      chunk.row(p).head<3>() =
          to_box_frame(Eigen::Vector3d(pc.points.row(p).head<3>()), ref).transpose();
      chunk(p, 3) = 0.1 * off;
    }
    total += pc.size();
    chunks.push_back(std::move(chunk));
  }
  PointCloud encoded;
  encoded.points.resize(total, 4);
  int64_t at = 0;
  for (const auto& c : chunks) {
    encoded.points.middleRows(at, c.rows()) = c;
    at += c.rows();
  }

  const int s = cfg.box_window;
  Eigen::MatrixXd box_seq = Eigen::MatrixXd::Zero(2 * s + 1, 8);
  for (int off = -s; off <= s; ++off) {
    if (cfg.causal && off > 0) continue;
    const auto it = by_frame.find(t_center + off);
    if (it == by_frame.end()) continue;
    const Box3D b = box_to_frame(frames[it->second].box, ref);
    box_seq.row(off + s) << b.cx, b.cy, b.cz, b.length, b.width, b.height, b.heading,
        0.1 * off;
  }

  RefineResult out;
  const auto mask = model.segment(encoded);
  const PointCloud fg = select_points(encoded, mask);
  BoxTargets targets;
  if (fg.size() > 0) {
    targets = model.predict(fg, box_seq);
  } else {
    // Box-branch-only fallback.
    out.flagged = true;
    out.note = "empty foreground; trajectory head only";
    model.clear_pass();
    neural::Tape tape;
    const int traj = tape.input(box_seq);
    const int emb = model.traj_encoder.forward(tape, traj, false);
    const int head = model.head_traj.forward(tape, emb, false).back();
    targets = BoxTargets::unflatten(tape.value(head).row(0).transpose(), data.cls);
  }
  out.box = decode_box(targets, data.cls, ref);
  out.box.score = frames[center_idx].score;
  out.box.cls = data.cls;
  return out;
}

}  // namespace

RefineResult refine_dynamic(const ObjectTrackData& data, size_t center_idx,
                            const RefinerConfig& cfg) {
  if (center_idx >= data.frames.size()) {
    throw std::invalid_argument("refine_dynamic: center index out of range");
  }
  return cfg.backend == RefinerBackend::Geometric ? dynamic_geometric(data, center_idx, cfg)
                                                  : dynamic_neural(data, center_idx, cfg);
}

AutoLabelSet assemble_labels(const std::vector<ObjectTrackData>& tracks,
                             const RefinerConfig& cfg, KeyframeStrategy strategy,
                             int workers) {
  std::vector<std::vector<AutoLabel>> per_track(tracks.size());

  auto refine_one = [&](size_t i) {
    const auto& data = tracks[i];
    std::vector<AutoLabel> out;
    if (data.frames.empty()) return out;
    switch (data.motion_state) {
      case MotionState::Static: {
        const RefineResult r = refine_static(data, cfg, strategy);
        for (const auto& f : data.frames) {
          out.push_back({f.frame, data.object_id, r.box, MotionState::Static});
        }
        break;
      }
      case MotionState::Dynamic: {
        for (size_t k = 0; k < data.frames.size(); ++k) {
          const RefineResult r = refine_dynamic(data, k, cfg);
          out.push_back({data.frames[k].frame, data.object_id, r.box, MotionState::Dynamic});
        }
        break;
      }
      case MotionState::Indeterminate: {
        for (const auto& f : data.frames) {
          out.push_back({f.frame, data.object_id, f.box, MotionState::Indeterminate});
        }
        break;
      }
    }
    return out;
  };

  if (workers <= 1 || tracks.size() <= 1) {
    for (size_t i = 0; i < tracks.size(); ++i) per_track[i] = refine_one(i);
  } else {
    const size_t n_workers = std::min<size_t>(static_cast<size_t>(workers), tracks.size());
    std::vector<std::future<void>> jobs;
    for (size_t w = 0; w < n_workers; ++w) {
      jobs.push_back(std::async(std::launch::async, [&, w]() {
        for (size_t i = w; i < tracks.size(); i += n_workers) per_track[i] = refine_one(i);
      }));
    }
    for (auto& j : jobs) j.get();
  }

  AutoLabelSet set;
  for (auto& labels : per_track) {
    for (auto& l : labels) set.labels.push_back(std::move(l));
  }
  return set;
}

}  // namespace autolabel
