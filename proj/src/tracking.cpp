#include "autolabel/tracking.hpp"

#include <algorithm>

#include "autolabel/geometry.hpp"
#include "autolabel/hungarian.hpp"

namespace autolabel {

namespace {

constexpr int kMeasDim = 7;
constexpr double kGatedCost = 1e5;

Eigen::Matrix<double, 10, 10> process_noise(const TrackerParams& p, double dt) {
  Eigen::Matrix<double, 10, 10> q = Eigen::Matrix<double, 10, 10>::Zero();
  const double scale = std::max(dt, 1e-6);
  q.diagonal() << p.q_position, p.q_position, p.q_position, p.q_size, p.q_size, p.q_size,
      p.q_heading, p.q_velocity, p.q_velocity, p.q_velocity;
  q.diagonal() *= scale;
  return q;
}

Eigen::Matrix<double, kMeasDim, kMeasDim> measurement_noise(const TrackerParams& p) {
  Eigen::Matrix<double, kMeasDim, kMeasDim> r =
      Eigen::Matrix<double, kMeasDim, kMeasDim>::Zero();
  r.diagonal() << p.r_position, p.r_position, p.r_position, p.r_size, p.r_size, p.r_size,
      p.r_heading;
  return r;
}

void enforce_psd(Eigen::Matrix<double, 10, 10>& p) {
  p = 0.5 * (p + p.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 10, 10>> es(p);
  if (es.eigenvalues().minCoeff() < 0.0) {
    const Eigen::Matrix<double, 10, 1> clamped = es.eigenvalues().cwiseMax(0.0);
    p = es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
    p = 0.5 * (p + p.transpose()).eval();
  }
}

TrackState init_state(const Box3D& det, const TrackerParams& params) {
  TrackState s;
  s.mean << det.cx, det.cy, det.cz, det.length, det.width, det.height, det.heading, 0, 0, 0;
  s.covariance = Eigen::Matrix<double, 10, 10>::Zero();
  s.covariance.diagonal() << params.r_position, params.r_position, params.r_position,
      params.r_size, params.r_size, params.r_size, params.r_heading,
      params.initial_velocity_variance, params.initial_velocity_variance,
      params.initial_velocity_variance;
  return s;
}

}  // namespace

TrackState kalman_predict(const TrackState& state, double dt, const TrackerParams& params) {
  Eigen::Matrix<double, 10, 10> f = Eigen::Matrix<double, 10, 10>::Identity();
  f(0, 7) = dt;
  f(1, 8) = dt;
  f(2, 9) = dt;
  TrackState out;
  out.mean = f * state.mean;
  out.mean(6) = normalize_angle(out.mean(6));
  out.covariance = f * state.covariance * f.transpose() + process_noise(params, dt);
  return out;
}

TrackState kalman_update(const TrackState& state, const Box3D& det,
                         const TrackerParams& params) {
  Eigen::Matrix<double, kMeasDim, 10> h = Eigen::Matrix<double, kMeasDim, 10>::Zero();
  h.leftCols<kMeasDim>().setIdentity();

  Eigen::Matrix<double, kMeasDim, 1> innovation;
  innovation << det.cx - state.mean(0), det.cy - state.mean(1), det.cz - state.mean(2),
      det.length - state.mean(3), det.width - state.mean(4), det.height - state.mean(5), 0.0;
  // Obtuse flip then cyclic innovation for the heading channel.
  const double aligned = align_heading(det.heading, state.mean(6));
  innovation(6) = cyclic_diff(aligned, state.mean(6));

  const Eigen::Matrix<double, kMeasDim, kMeasDim> s =
      h * state.covariance * h.transpose() + measurement_noise(params);
  const Eigen::Matrix<double, 10, kMeasDim> k =
      state.covariance * h.transpose() * s.inverse();

  TrackState out;
  out.mean = state.mean + k * innovation;
  out.mean(6) = normalize_angle(out.mean(6));
  const Eigen::Matrix<double, 10, 10> ikh = Eigen::Matrix<double, 10, 10>::Identity() - k * h;
  out.covariance = ikh * state.covariance;
  enforce_psd(out.covariance);
  return out;
}

Box3D state_to_box(const TrackState& state, ObjectClass cls, double score) {
  Box3D b;
  b.cx = state.mean(0);
  b.cy = state.mean(1);
  b.cz = state.mean(2);
  b.length = std::max(state.mean(3), 1e-3);
  b.width = std::max(state.mean(4), 1e-3);
  b.height = std::max(state.mean(5), 1e-3);
  b.heading = normalize_angle(state.mean(6));
  b.score = score;
  b.cls = cls;
  return b;
}

namespace {

struct LiveTrack {
  Track track;
  TrackState state;  // prior for the next frame after prediction
};

std::vector<Track> run_oracle_tracker(const SequenceDataset& ds, const TrackerParams& params) {
  std::vector<Track> done;
  std::vector<LiveTrack> live;
  auto find_live = [&](int64_t id) -> LiveTrack* {
    for (auto& lt : live)
      if (lt.track.object_id == id) return &lt;
    return nullptr;
  };

  double prev_ts = 0.0;
  for (const auto& frame : ds.frames) {
    const double dt = frame.index == 0 ? 0.0 : frame.timestamp - prev_ts;
    prev_ts = frame.timestamp;
    auto [pts, world_dets] = to_world(frame);
    (void)pts;
    if (!frame.ground_truth) continue;
    std::vector<Box3D> world_gt;
    for (const auto& g : *frame.ground_truth) world_gt.push_back(box_to_world(g.box, frame.pose));

    // Hungarian matching of detections onto GT boxes gives the oracle ids.
    const int nd = static_cast<int>(world_dets.size());
    const int ng = static_cast<int>(world_gt.size());
    std::vector<int> det_gt(nd, -1);
    if (nd > 0 && ng > 0) {
      Eigen::MatrixXd cost(nd, ng);
      for (int i = 0; i < nd; ++i) {
        for (int j = 0; j < ng; ++j) {
          const double iou = bev_iou(world_dets[i], world_gt[j]);
          cost(i, j) = iou >= params.oracle_iou_floor ? 1.0 - iou : kGatedCost;
        }
      }
      auto assign = hungarian_assign(cost);
      for (int i = 0; i < nd; ++i) {
        if (assign[i] >= 0 && cost(i, assign[i]) < kGatedCost) det_gt[i] = assign[i];
      }
    }

    for (int i = 0; i < nd; ++i) {
      if (world_dets[i].score < params.score_floor) continue;
      if (det_gt[i] < 0) continue;  // FPs are dropped by the oracle
      const int64_t id = (*frame.ground_truth)[det_gt[i]].object_id;
      LiveTrack* lt = find_live(id);
      if (lt == nullptr) {
        LiveTrack fresh;
        fresh.track.object_id = id;
        fresh.track.cls = world_dets[i].cls;
        fresh.state = init_state(world_dets[i], params);
        fresh.track.status = TrackStatus::Confirmed;
        live.push_back(fresh);
        lt = &live.back();
      } else {
        lt->state = kalman_predict(lt->state, dt, params);
        lt->state = kalman_update(lt->state, world_dets[i], params);
      }
      ++lt->track.hits;
      lt->track.entries.push_back({frame.index, world_dets[i], lt->state});
    }
  }
  for (auto& lt : live) done.push_back(std::move(lt.track));
  std::sort(done.begin(), done.end(),
            [](const Track& a, const Track& b) { return a.object_id < b.object_id; });
  return done;
}

}  // namespace

std::vector<Track> run_tracker(const SequenceDataset& ds, const TrackerParams& params) {
  if (params.oracle) return run_oracle_tracker(ds, params);

  std::vector<Track> done;
  std::vector<LiveTrack> live;
  int64_t next_id = 0;
  double prev_ts = 0.0;

  for (const auto& frame : ds.frames) {
    const double dt = frame.index == 0 ? 0.1 : frame.timestamp - prev_ts;
    prev_ts = frame.timestamp;

    auto [pts, world_all] = to_world(frame);
    (void)pts;
    std::vector<Box3D> dets;
    for (const auto& d : world_all) {
      if (d.score >= params.score_floor) dets.push_back(d);
    }

    for (auto& lt : live) lt.state = kalman_predict(lt.state, dt, params);

    const int nt = static_cast<int>(live.size());
    const int nd = static_cast<int>(dets.size());
    std::vector<int> track_det(nt, -1);
    std::vector<char> det_used(nd, false);
    if (nt > 0 && nd > 0) {
      Eigen::MatrixXd cost(nt, nd);
      Eigen::MatrixXd iou(nt, nd);
      for (int i = 0; i < nt; ++i) {
        const Box3D pred = state_to_box(live[i].state, live[i].track.cls, 1.0);
        for (int j = 0; j < nd; ++j) {
          iou(i, j) = bev_iou(pred, dets[j]);
          cost(i, j) = iou(i, j) >= params.iou_floor ? 1.0 - iou(i, j) : kGatedCost;
        }
      }
      auto assign = hungarian_assign(cost);
      for (int i = 0; i < nt; ++i) {
        if (assign[i] >= 0 && iou(i, assign[i]) >= params.iou_floor) {
          track_det[i] = assign[i];
          det_used[assign[i]] = true;
        }
      }
    }

    for (int i = 0; i < nt; ++i) {
      auto& lt = live[i];
      if (track_det[i] >= 0) {
        lt.state = kalman_update(lt.state, dets[track_det[i]], params);
        ++lt.track.hits;
        lt.track.consecutive_misses = 0;
        if (lt.track.status == TrackStatus::Tentative && lt.track.hits >= params.confirm_hits) {
          lt.track.status = TrackStatus::Confirmed;
        }
        lt.track.entries.push_back({frame.index, dets[track_det[i]], lt.state});
      } else {
        ++lt.track.consecutive_misses;
        if (lt.track.consecutive_misses >= params.max_misses) {
          lt.track.status = TrackStatus::Dead;
        }
      }
    }
    for (int i = nt - 1; i >= 0; --i) {
      if (live[i].track.status == TrackStatus::Dead) {
        done.push_back(std::move(live[i].track));
        live.erase(live.begin() + i);
      }
    }

    for (int j = 0; j < nd; ++j) {
      if (det_used[j]) continue;
      LiveTrack fresh;
      fresh.track.object_id = next_id++;
      fresh.track.cls = dets[j].cls;
      fresh.track.hits = 1;
      fresh.state = init_state(dets[j], params);
      fresh.track.entries.push_back({frame.index, dets[j], fresh.state});
      live.push_back(std::move(fresh));
    }
  }

  for (auto& lt : live) done.push_back(std::move(lt.track));
  std::sort(done.begin(), done.end(),
            [](const Track& a, const Track& b) { return a.object_id < b.object_id; });
  return done;
}

}  // namespace autolabel
