#include "autolabel/evaluation.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

namespace autolabel {

namespace {

double iou_for_mode(const Box3D& a, const Box3D& b, IouMode mode) {
  return mode == IouMode::BEV ? bev_iou(a, b) : iou_3d(a, b);
}

struct RankedPrediction {
  int frame = 0;
  int index = 0;  // index within the frame
  double score = 0.0;
};

std::vector<RankedPrediction> rank_predictions(const std::vector<FrameBoxes>& frames) {
  std::vector<RankedPrediction> ranked;
  for (size_t f = 0; f < frames.size(); ++f) {
    for (size_t i = 0; i < frames[f].predictions.size(); ++i) {
      ranked.push_back({static_cast<int>(f), static_cast<int>(i),
                        frames[f].predictions[i].score});
    }
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.frame != b.frame) return a.frame < b.frame;
    return a.index < b.index;
  });
  return ranked;
}

bool gt_eligible(const FrameBoxes& fb, size_t gi) {
  if (fb.gt_point_counts.empty()) return true;
  return fb.gt_point_counts.at(gi) >= 1;
}

}  // namespace

std::optional<double> average_precision(const std::vector<FrameBoxes>& frames, double tau,
                                        IouMode mode) {
  if (tau <= 0.0 || tau >= 1.0) throw std::invalid_argument("average_precision: bad tau");
  int total_gt = 0;
  for (const auto& fb : frames) {
    for (size_t gi = 0; gi < fb.ground_truth.size(); ++gi) {
      if (gt_eligible(fb, gi)) ++total_gt;
    }
  }
  if (total_gt == 0) return std::nullopt;

  const auto ranked = rank_predictions(frames);
  std::vector<std::vector<char>> gt_matched(frames.size());
  for (size_t f = 0; f < frames.size(); ++f) {
    gt_matched[f].assign(frames[f].ground_truth.size(), false);
  }

  std::vector<char> is_tp;
  is_tp.reserve(ranked.size());
  for (const auto& rp : ranked) {
    const auto& fb = frames[rp.frame];
    const Box3D& pred = fb.predictions[rp.index];
    int best_gt = -1;
    double best_iou = 0.0;
    for (size_t gi = 0; gi < fb.ground_truth.size(); ++gi) {
      if (gt_matched[rp.frame][gi] || !gt_eligible(fb, gi)) continue;
      const double iou = iou_for_mode(pred, fb.ground_truth[gi], mode);
      if (iou > best_iou) {
        best_iou = iou;
        best_gt = static_cast<int>(gi);
      }
    }
    if (best_gt >= 0 && best_iou >= tau) {
      gt_matched[rp.frame][best_gt] = true;
      is_tp.push_back(true);
    } else {
      is_tp.push_back(false);
    }
  }

  // All-point interpolation: area under the precision envelope.
  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (char t : is_tp) {
    if (t)
      ++tp;
    else
      ++fp;
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / total_gt);
  }
  for (int i = static_cast<int>(precision.size()) - 2; i >= 0; --i) {
    precision[i] = std::max(precision[i], precision[i + 1]);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

double box_accuracy(const std::vector<FrameBoxes>& frames, double tau, IouMode mode) {
  int assigned = 0, correct = 0;
  for (const auto& fb : frames) {
    std::vector<char> gt_used(fb.ground_truth.size(), false);
    std::vector<size_t> order(fb.predictions.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return fb.predictions[a].score > fb.predictions[b].score;
    });
    for (size_t pi : order) {
      int best_gt = -1;
      double best_iou = 0.0;
      for (size_t gi = 0; gi < fb.ground_truth.size(); ++gi) {
        if (gt_used[gi] || !gt_eligible(fb, gi)) continue;
        const double iou = iou_for_mode(fb.predictions[pi], fb.ground_truth[gi], mode);
        if (iou > best_iou) {
          best_iou = iou;
          best_gt = static_cast<int>(gi);
        }
      }
      if (best_gt < 0) continue;  // no overlapping GT: not assigned
      gt_used[best_gt] = true;
      ++assigned;
      if (best_iou >= tau) ++correct;
    }
  }
  return assigned > 0 ? static_cast<double>(correct) / assigned : 0.0;
}

MotResult mota_motp(const std::vector<Track>& pred_tracks,
                    const std::map<int64_t, std::map<int, Box3D>>& gt_tracks,
                    double tau_match) {
  std::set<int> frame_set;
  int total_gt = 0;
  for (const auto& [id, boxes] : gt_tracks) {
    for (const auto& [f, b] : boxes) {
      frame_set.insert(f);
      ++total_gt;
    }
  }
  if (total_gt == 0) throw std::invalid_argument("mota_motp: no ground truth");

  // frame -> (track id, box)
  std::map<int, std::vector<std::pair<int64_t, Box3D>>> preds_by_frame;
  for (const auto& t : pred_tracks) {
    for (const auto& e : t.entries) {
      preds_by_frame[e.frame].push_back({t.object_id, e.detection});
      frame_set.insert(e.frame);
    }
  }

  std::map<int64_t, int64_t> last_match;  // gt id -> last matched track id
  int fn = 0, fp = 0, ids = 0, matches = 0;
  double dist_sum = 0.0;

  for (int frame : frame_set) {
    std::vector<std::pair<int64_t, Box3D>> gts;
    for (const auto& [id, boxes] : gt_tracks) {
      auto it = boxes.find(frame);
      if (it != boxes.end()) gts.push_back({id, it->second});
    }
    auto preds = preds_by_frame.count(frame) ? preds_by_frame[frame]
                                             : std::vector<std::pair<int64_t, Box3D>>{};

    std::vector<int> gt_match(gts.size(), -1);
    std::vector<char> pred_used(preds.size(), false);

    // Continuity first: keep last frame's pairing when it still overlaps.
    for (size_t gi = 0; gi < gts.size(); ++gi) {
      auto it = last_match.find(gts[gi].first);
      if (it == last_match.end()) continue;
      for (size_t pi = 0; pi < preds.size(); ++pi) {
        if (pred_used[pi] || preds[pi].first != it->second) continue;
        if (bev_iou(gts[gi].second, preds[pi].second) >= tau_match) {
          gt_match[gi] = static_cast<int>(pi);
          pred_used[pi] = true;
        }
        break;
      }
    }
    // Greedy highest-IoU for the rest.
    while (true) {
      double best_iou = tau_match;
      int best_gi = -1, best_pi = -1;
      for (size_t gi = 0; gi < gts.size(); ++gi) {
        if (gt_match[gi] >= 0) continue;
        for (size_t pi = 0; pi < preds.size(); ++pi) {
          if (pred_used[pi]) continue;
          const double iou = bev_iou(gts[gi].second, preds[pi].second);
          if (iou > best_iou) {
            best_iou = iou;
            best_gi = static_cast<int>(gi);
            best_pi = static_cast<int>(pi);
          }
        }
      }
      if (best_gi < 0) break;
      gt_match[best_gi] = best_pi;
      pred_used[best_pi] = true;
    }

    for (size_t gi = 0; gi < gts.size(); ++gi) {
      if (gt_match[gi] < 0) {
        ++fn;
        continue;
      }
      const auto& [track_id, box] = preds[gt_match[gi]];
      auto it = last_match.find(gts[gi].first);
      if (it != last_match.end() && it->second != track_id) ++ids;
      last_match[gts[gi].first] = track_id;
      ++matches;
      dist_sum += 1.0 - bev_iou(gts[gi].second, box);
    }
    for (size_t pi = 0; pi < preds.size(); ++pi) {
      if (!pred_used[pi]) ++fp;
    }
  }

  MotResult r;
  r.false_negatives = fn;
  r.false_positives = fp;
  r.id_switches = ids;
  r.total_gt = total_gt;
  r.mota = 100.0 * (1.0 - static_cast<double>(fn + fp + ids) / total_gt);
  r.motp = matches > 0 ? 100.0 * dist_sum / matches : 0.0;
  return r;
}

MeanIouReport mean_iou_report(const std::vector<FrameBoxes>& frames) {
  struct Acc {
    int n = 0;
    double iou3d = 0.0, ioubev = 0.0;
    void add(double i3, double ib) {
      ++n;
      iou3d += i3;
      ioubev += ib;
    }
    MeanIouBucket finish() const {
      MeanIouBucket b;
      b.valid_boxes = n;
      b.mean_iou_3d = n > 0 ? 100.0 * iou3d / n : 0.0;
      b.mean_iou_bev = n > 0 ? 100.0 * ioubev / n : 0.0;
      return b;
    }
  };
  Acc all, near, mid, far;

  for (const auto& fb : frames) {
    for (const auto& pred : fb.predictions) {
      int best_gt = -1;
      double best_bev = 0.0;
      for (size_t gi = 0; gi < fb.ground_truth.size(); ++gi) {
        if (!gt_eligible(fb, gi)) continue;
        const double iou = bev_iou(pred, fb.ground_truth[gi]);
        if (iou > best_bev) {
          best_bev = iou;
          best_gt = static_cast<int>(gi);
        }
      }
      if (best_gt < 0 || best_bev <= 0.03) continue;  // validity gate
      const Box3D& gt = fb.ground_truth[best_gt];
      const double i3 = iou_3d(pred, gt);
      const double dist = (gt.center() - fb.sensor_origin).norm();
      all.add(i3, best_bev);
      if (dist < 30.0)
        near.add(i3, best_bev);
      else if (dist < 50.0)
        mid.add(i3, best_bev);
      else
        far.add(i3, best_bev);
    }
  }
  MeanIouReport r;
  r.all = all.finish();
  r.near = near.finish();
  r.mid = mid.finish();
  r.far = far.finish();
  return r;
}

std::string format_report(const EvalReport& report) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  for (const auto& [name, value] : report.ap) os << name << ": " << 100.0 * value << "\n";
  for (const auto& [name, value] : report.accuracy)
    os << name << ": " << 100.0 * value << "\n";
  if (report.mot) {
    os << "MOTA: " << report.mot->mota << "  MOTP: " << report.mot->motp
       << "  (FN " << report.mot->false_negatives << ", FP " << report.mot->false_positives
       << ", IDS " << report.mot->id_switches << ", GT " << report.mot->total_gt << ")\n";
  }
  if (report.mean_iou) {
    auto line = [&](const char* name, const MeanIouBucket& b) {
      os << "mean_iou[" << name << "]: 3D " << b.mean_iou_3d << "  BEV " << b.mean_iou_bev
         << "  valid " << b.valid_boxes << "\n";
    };
    line("all", report.mean_iou->all);
    line("0-30m", report.mean_iou->near);
    line("30-50m", report.mean_iou->mid);
    line("50m+", report.mean_iou->far);
  }
  return os.str();
}

}  // namespace autolabel
