#include "autolabel/neural/train.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace autolabel {
namespace neural {

using nlohmann::json;

namespace {

int argmax_index(const Eigen::VectorXd& v) {
  int idx = 0;
  v.maxCoeff(&idx);
  return idx;
}

Box3D identity_ref() {
  Box3D ref;
  ref.cx = ref.cy = ref.cz = 0.0;
  ref.heading = 0.0;
  return ref;
}

}  // namespace

int box_loss_graph(Tape& tape, int out_node, const Box3D& gt_local, ObjectClass cls,
                   const BoxLossWeights& weights) {
  const BoxTargets enc = encode_box(gt_local, cls);
  const int k = static_cast<int>(size_clusters(cls).size());
  const int gt_cluster = argmax_index(enc.size_logits);
  const int gt_bin = argmax_index(enc.heading_logits);

  const int c_loss = tape.smooth_l1_sum(tape.slice_cols(out_node, 0, 3),
                                        enc.center_residual.transpose());
  const int s_cls =
      tape.softmax_cross_entropy_mean(tape.slice_cols(out_node, 3, k), {gt_cluster});
  const int s_reg = tape.smooth_l1_sum(tape.slice_cols(out_node, 3 + k + 3 * gt_cluster, 3),
                                       enc.size_residuals.row(gt_cluster));
  const int h_cls = tape.softmax_cross_entropy_mean(
      tape.slice_cols(out_node, 3 + 4 * k, kHeadingBins), {gt_bin});
  Eigen::MatrixXd h_target(1, 1);
  h_target(0, 0) = enc.heading_residuals(gt_bin);
  const int h_reg = tape.smooth_l1_sum(
      tape.slice_cols(out_node, 3 + 4 * k + kHeadingBins + gt_bin, 1), h_target);

  return tape.weighted_sum({{1.0, c_loss},
                            {weights.size_cls, s_cls},
                            {weights.size_reg, s_reg},
                            {weights.heading_cls, h_cls},
                            {weights.heading_reg, h_reg}});
}

int static_loss_graph(Tape& tape, StaticRefinerModel& model, const StaticExample& ex,
                      bool training, double w_box) {
  if (ex.points.size() == 0) throw std::invalid_argument("static_loss_graph: no points");
  if (ex.seg_labels.size() != static_cast<size_t>(ex.points.size())) {
    throw std::invalid_argument("static_loss_graph: label/point count mismatch");
  }
  model.clear_pass();

  const int x = tape.input(ex.points.points.leftCols(3));
  const int seg_logits = model.seg.forward(tape, x, training);
  const int seg_loss = tape.softmax_cross_entropy_mean(seg_logits, ex.seg_labels);

  std::vector<int> fg;
  for (size_t i = 0; i < ex.seg_labels.size(); ++i) {
    if (ex.seg_labels[i] == 1) fg.push_back(static_cast<int>(i));
  }
  if (fg.empty()) return seg_loss;

  // The box branch trains on the GT foreground mask; inference swaps in the
  // predicted mask.
  const int fg_node = tape.select_rows(x, fg);
  const int out1 = model.box.forward(tape, fg_node, training);
  const int loss1 = box_loss_graph(tape, out1, ex.gt_local, model.cls);

  // Second pass re-expresses the foreground in the first-pass estimate's
  // frame; the decode itself carries no gradient.
  const BoxTargets t1 = BoxTargets::unflatten(tape.value(out1).row(0).transpose(), model.cls);
  const Box3D est = decode_box(t1, model.cls, identity_ref());
  PointCloud fg_cloud;
  fg_cloud.points.resize(static_cast<int64_t>(fg.size()), 3);
  for (size_t i = 0; i < fg.size(); ++i) {
    fg_cloud.points.row(static_cast<int64_t>(i)) = ex.points.points.row(fg[i]).head(3);
  }
  const PointCloud pts2 = to_box_frame(fg_cloud, est);
  const int x2 = tape.input(pts2.points);
  BoxNet& second = model.shared_weights ? model.box : model.box_second;
  const int out2 = second.forward(tape, x2, training);
  const int loss2 = box_loss_graph(tape, out2, box_to_frame(ex.gt_local, est), model.cls);

  return tape.weighted_sum({{1.0, seg_loss}, {w_box, loss1}, {w_box, loss2}});
}

int dynamic_loss_graph(Tape& tape, DynamicRefinerModel& model, const DynamicExample& ex,
                       bool training, double v_traj, double v_pc, double v_joint) {
  if (ex.points.size() == 0) throw std::invalid_argument("dynamic_loss_graph: no points");
  if (ex.seg_labels.size() != static_cast<size_t>(ex.points.size())) {
    throw std::invalid_argument("dynamic_loss_graph: label/point count mismatch");
  }
  model.clear_pass();

  const int x = tape.input(ex.points.points.leftCols(4));
  const int seg_logits = model.seg.forward(tape, x, training);
  const int seg_loss = tape.softmax_cross_entropy_mean(seg_logits, ex.seg_labels);

  std::vector<int> fg;
  for (size_t i = 0; i < ex.seg_labels.size(); ++i) {
    if (ex.seg_labels[i] == 1) fg.push_back(static_cast<int>(i));
  }
  // All-background examples still train the heads through a zero placeholder.
  const int fg_node =
      fg.empty() ? tape.input(Eigen::MatrixXd::Zero(1, 4)) : tape.select_rows(x, fg);

  const int pc_emb = model.pc_encoder.forward(tape, fg_node, training);
  const int traj = tape.input(ex.box_seq);
  const int traj_emb = model.traj_encoder.forward(tape, traj, training);

  const int out_joint =
      model.head_joint.forward(tape, tape.concat_cols(pc_emb, traj_emb), training).back();
  const int out_pc = model.head_pc.forward(tape, pc_emb, training).back();
  const int out_traj = model.head_traj.forward(tape, traj_emb, training).back();

  const int loss_joint = box_loss_graph(tape, out_joint, ex.gt_local, model.cls);
  const int loss_pc = box_loss_graph(tape, out_pc, ex.gt_local, model.cls);
  const int loss_traj = box_loss_graph(tape, out_traj, ex.gt_local, model.cls);

  return tape.weighted_sum(
      {{1.0, seg_loss}, {v_traj, loss_traj}, {v_pc, loss_pc}, {v_joint, loss_joint}});
}

StaticExample make_static_example(const TrackSample& sample, const TrainConfig& cfg,
                                  synth::CounterRng& rng) {
  const auto& frames = sample.data.frames;
  if (frames.empty()) throw std::invalid_argument("make_static_example: empty track");
  const int n = static_cast<int>(frames.size());

  const int key = rng.uniform_int(n);
  const int subset_size = 1 + rng.uniform_int(n);  // Uniform[1, |S|]
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < subset_size; ++i) {
    const int j = i + rng.uniform_int(n - i);
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  idx.resize(static_cast<size_t>(subset_size));
  if (std::find(idx.begin(), idx.end(), key) == idx.end()) idx[0] = key;
  std::sort(idx.begin(), idx.end());

  const Box3D& ref = frames[static_cast<size_t>(key)].box;
  const auto gt_key = sample.gt_world.find(frames[static_cast<size_t>(key)].frame);
  if (gt_key == sample.gt_world.end()) {
    throw std::invalid_argument("make_static_example: keyframe lacks a GT box");
  }

  int64_t total = 0;
  for (int i : idx) total += frames[static_cast<size_t>(i)].points.size();
  // xyz in the keyframe box frame + a label channel that rides through
  // augmentation/subsampling.
  PointCloud staged;
  staged.points.resize(std::max<int64_t>(total, 0), 4);
  int64_t at = 0;
  for (int i : idx) {
    const auto& fd = frames[static_cast<size_t>(i)];
    const auto gt_it = sample.gt_world.find(fd.frame);
    for (int64_t p = 0; p < fd.points.size(); ++p) {
      const Eigen::Vector3d world(fd.points.points.row(p).head<3>());
      staged.points.row(at).head<3>() = to_box_frame(world, ref).transpose();
      staged.points(at, 3) =
          (gt_it != sample.gt_world.end() && point_in_box(world, gt_it->second)) ? 1.0 : 0.0;
      ++at;
    }
  }

  Box3D gt_local = box_to_frame(gt_key->second, ref);
  if (cfg.augment_enabled) {
    augment(staged, gt_local, cfg.augment_static, rng);
  } else if (cfg.augment_static.subsample > 0) {
    staged = subsample_points(staged, cfg.augment_static.subsample, rng);
  }

  StaticExample ex;
  ex.points.points = staged.points.leftCols(3);
  ex.seg_labels.resize(static_cast<size_t>(staged.size()));
  for (int64_t i = 0; i < staged.size(); ++i) {
    ex.seg_labels[static_cast<size_t>(i)] = staged.points(i, 3) > 0.5 ? 1 : 0;
  }
  ex.gt_local = gt_local;
  return ex;
}

DynamicExample make_dynamic_example(const TrackSample& sample, size_t center_idx,
                                    const TrainConfig& cfg, synth::CounterRng& rng) {
  const auto& frames = sample.data.frames;
  if (center_idx >= frames.size()) {
    throw std::invalid_argument("make_dynamic_example: center index out of range");
  }
  const Box3D& ref = frames[center_idx].box;
  const int center_frame = frames[center_idx].frame;
  const auto gt_it = sample.gt_world.find(center_frame);
  if (gt_it == sample.gt_world.end()) {
    throw std::invalid_argument("make_dynamic_example: center frame lacks a GT box");
  }

  std::map<int, size_t> by_frame;
  for (size_t i = 0; i < frames.size(); ++i) by_frame[frames[i].frame] = i;

  // Point branch: [T-r, T+r], per-frame subsample, xyz + time + label channel.
  std::vector<Eigen::MatrixXd> chunks;
  int64_t total = 0;
  for (int off = -cfg.point_window; off <= cfg.point_window; ++off) {
    const auto it = by_frame.find(center_frame + off);
    if (it == by_frame.end()) {
      chunks.push_back(Eigen::MatrixXd::Zero(1, 5));  // missing frame placeholder
      ++total;
      continue;
    }
    const auto& fd = frames[it->second];
    PointCloud world;
    world.points = fd.points.points.leftCols(3);
    world = subsample_points(world, cfg.augment_dynamic.subsample, rng);
    const auto frame_gt = sample.gt_world.find(fd.frame);
    Eigen::MatrixXd chunk(world.size(), 5);
    for (int64_t p = 0; p < world.size(); ++p) {
      const Eigen::Vector3d w(world.points.row(p).head<3>());
      chunk.row(p).head<3>() = to_box_frame(w, ref).transpose();
      chunk(p, 3) = 0.1 * off;
      chunk(p, 4) = (frame_gt != sample.gt_world.end() && point_in_box(w, frame_gt->second))
                        ? 1.0
                        : 0.0;
    }
    total += world.size();
    chunks.push_back(std::move(chunk));
  }
  PointCloud staged;
  staged.points.resize(total, 5);
  int64_t at = 0;
  for (const auto& c : chunks) {
    staged.points.middleRows(at, c.rows()) = c;
    at += c.rows();
  }

  // Box branch: [T-s, T+s] as 8-tuples in the center box frame.
  const int s = cfg.box_window;
  std::vector<bool> present(static_cast<size_t>(2 * s + 1), false);
  std::vector<Box3D> seq_boxes(static_cast<size_t>(2 * s + 1));
  for (int off = -s; off <= s; ++off) {
    const auto it = by_frame.find(center_frame + off);
    if (it == by_frame.end()) continue;
    present[static_cast<size_t>(off + s)] = true;
    seq_boxes[static_cast<size_t>(off + s)] = box_to_frame(frames[it->second].box, ref);
  }

  Box3D gt_local = box_to_frame(gt_it->second, ref);
  if (cfg.augment_enabled) {
    std::vector<Box3D*> boxes{&gt_local};
    for (size_t i = 0; i < seq_boxes.size(); ++i) {
      if (present[i]) boxes.push_back(&seq_boxes[i]);
    }
    AugmentConfig acfg = cfg.augment_dynamic;
    acfg.subsample = 0;  // already budgeted per frame
    augment(staged, boxes, acfg, rng);
  }

  DynamicExample ex;
  ex.points.points = staged.points.leftCols(4);
  ex.seg_labels.resize(static_cast<size_t>(staged.size()));
  for (int64_t i = 0; i < staged.size(); ++i) {
    ex.seg_labels[static_cast<size_t>(i)] = staged.points(i, 4) > 0.5 ? 1 : 0;
  }
  ex.box_seq = Eigen::MatrixXd::Zero(2 * s + 1, 8);
  for (int off = -s; off <= s; ++off) {
    const size_t i = static_cast<size_t>(off + s);
    if (!present[i]) continue;
    const Box3D& b = seq_boxes[i];
    ex.box_seq.row(static_cast<int64_t>(i)) << b.cx, b.cy, b.cz, b.length, b.width, b.height,
        b.heading, 0.1 * off;
  }
  ex.gt_local = gt_local;
  return ex;
}

namespace {

template <typename Model>
std::vector<Eigen::MatrixXd> zero_like_params(Model& model) {
  std::vector<Eigen::MatrixXd> out;
  model.visit_params(
      [&](Eigen::MatrixXd& t) { out.push_back(Eigen::MatrixXd::Zero(t.rows(), t.cols())); });
  return out;
}

// Shared Adam loop over [epoch_begin, epoch_end); `example_loss` records one
// example's graph on the tape and returns the scalar loss node. The optimizer
// state lives outside so training can be sliced into epoch ranges.
template <typename Model, typename LossFn>
TrainStats run_training(Model& model, int64_t n_samples, const TrainConfig& cfg,
                        int epoch_begin, int epoch_end, AdamState& adam,
                        LossFn&& example_loss) {
  if (n_samples <= 0) throw std::invalid_argument("train_refiner: empty dataset");
  if (cfg.epochs < 1 || cfg.batch_size < 1) {
    throw std::invalid_argument("train_refiner: epochs and batch size must be >= 1");
  }

  auto grads = zero_like_params(model);
  TrainStats stats;

  for (int epoch = epoch_begin; epoch < epoch_end; ++epoch) {
    double lr_scale = 1.0;
    for (int d : cfg.decay_epochs) {
      if (epoch >= d) lr_scale *= 0.1;
    }

    std::vector<int64_t> order(static_cast<size_t>(n_samples));
    std::iota(order.begin(), order.end(), 0);
    synth::CounterRng shuffle_rng(cfg.seed, static_cast<uint64_t>(epoch), 0, 0x5f0f);
    for (int64_t i = n_samples - 1; i > 0; --i) {
      const int j = shuffle_rng.uniform_int(static_cast<int>(i) + 1);
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }

    double epoch_sum = 0.0;
    int epoch_steps = 0;
    for (int64_t at = 0; at < n_samples; at += cfg.batch_size) {
      const int64_t bsz = std::min<int64_t>(cfg.batch_size, n_samples - at);
      for (auto& g : grads) g.setZero();
      double batch_loss = 0.0;
      for (int64_t i = at; i < at + bsz; ++i) {
        Tape tape;
        const int loss = example_loss(tape, order[static_cast<size_t>(i)], epoch);
        tape.backward(loss);
        auto it = grads.begin();
        model.collect_grads(tape, it);
        batch_loss += tape.value(loss)(0, 0);
      }
      batch_loss /= static_cast<double>(bsz);

      Eigen::VectorXd flat_params = flatten_params([&](auto&& fn) { model.visit_params(fn); });
      Eigen::VectorXd flat_grads(flat_params.size());
      int64_t pos = 0;
      for (const auto& g : grads) {
        flat_grads.segment(pos, g.size()) =
            Eigen::Map<const Eigen::VectorXd>(g.data(), g.size()) / static_cast<double>(bsz);
        pos += g.size();
      }
      adam_step(flat_params, flat_grads, adam, cfg.adam, lr_scale);
      unflatten_params(flat_params, [&](auto&& fn) { model.visit_params(fn); });

      stats.step_loss.push_back(batch_loss);
      epoch_sum += batch_loss;
      ++epoch_steps;
    }
    stats.epoch_loss.push_back(epoch_sum / std::max(epoch_steps, 1));
  }
  return stats;
}

MotionFeatures features_from_track_data(const ObjectTrackData& data) {
  const int64_t n = static_cast<int64_t>(data.frames.size());
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& f : data.frames) mean += f.box.center();
  mean /= static_cast<double>(n);
  double trace = 0.0;
  for (const auto& f : data.frames) trace += (f.box.center() - mean).squaredNorm();
  MotionFeatures out;
  out.center_variance = trace / static_cast<double>(std::max<int64_t>(n - 1, 1));
  out.begin_end_distance = (data.frames.back().box.center() - data.frames.front().box.center()).norm();
  return out;
}

template <typename Model>
TrainStats train_static_epochs(Model& model, const std::vector<TrackSample>& dataset,
                               const TrainConfig& cfg, int epoch_begin, int epoch_end,
                               AdamState& adam) {
  return run_training(
      model, static_cast<int64_t>(dataset.size()), cfg, epoch_begin, epoch_end, adam,
      [&](Tape& tape, int64_t idx, int epoch) {
        synth::CounterRng rng(cfg.seed, static_cast<uint64_t>(epoch),
                              static_cast<uint64_t>(idx), 0x57a71c);
        const StaticExample ex = make_static_example(dataset[static_cast<size_t>(idx)], cfg, rng);
        return static_loss_graph(tape, model, ex, true, cfg.w_box);
      });
}

template <typename Model>
TrainStats train_dynamic_epochs(Model& model, const std::vector<TrackSample>& dataset,
                                const TrainConfig& cfg, int epoch_begin, int epoch_end,
                                AdamState& adam) {
  return run_training(
      model, static_cast<int64_t>(dataset.size()), cfg, epoch_begin, epoch_end, adam,
      [&](Tape& tape, int64_t idx, int epoch) {
        synth::CounterRng rng(cfg.seed, static_cast<uint64_t>(epoch),
                              static_cast<uint64_t>(idx), 0xd74a1c);
        const auto& sample = dataset[static_cast<size_t>(idx)];
        const size_t center = static_cast<size_t>(
            rng.uniform_int(static_cast<int>(sample.data.frames.size())));
        const DynamicExample ex = make_dynamic_example(sample, center, cfg, rng);
        return dynamic_loss_graph(tape, model, ex, true, cfg.v_traj, cfg.v_pc, cfg.v_joint);
      });
}

// Class-partitioned training sets plus motion-classifier features.
struct SamplePartition {
  std::map<ObjectClass, std::vector<TrackSample>> static_sets, dynamic_sets;
  std::vector<MotionFeatures> clf_features;
  std::vector<MotionState> clf_labels;
};

SamplePartition partition_samples(const std::vector<TrackSample>& samples) {
  SamplePartition p;
  for (const auto& s : samples) {
    if (s.data.frames.empty()) continue;
    if (s.data.motion_state == MotionState::Static) {
      p.static_sets[s.data.cls].push_back(s);
    } else if (s.data.motion_state == MotionState::Dynamic) {
      p.dynamic_sets[s.data.cls].push_back(s);
      // Aligned into a pseudo-static track for extra static training data.
      bool full_gt = true;
      for (const auto& f : s.data.frames) full_gt &= s.gt_world.count(f.frame) > 0;
      if (full_gt) {
        TrackSample aligned;
        aligned.data = dynamic_to_static_augment(s.data, s.gt_world);
        const Box3D ref_gt = s.gt_world.at(s.data.frames.front().frame);
        for (const auto& [frame, box] : s.gt_world) aligned.gt_world[frame] = ref_gt;
        p.static_sets[s.data.cls].push_back(std::move(aligned));
      }
    }
    if (s.data.frames.size() >= 2 && s.data.motion_state != MotionState::Indeterminate) {
      p.clf_features.push_back(features_from_track_data(s.data));
      p.clf_labels.push_back(s.data.motion_state);
    }
  }
  return p;
}

std::string adam_key(bool is_static, ObjectClass cls) {
  return (is_static ? "s" : "d") + std::to_string(static_cast<int>(cls));
}

}  // namespace

TrainStats train_static_refiner(StaticRefinerModel& model,
                                const std::vector<TrackSample>& dataset,
                                const TrainConfig& cfg) {
  AdamState adam;
  return train_static_epochs(model, dataset, cfg, 0, cfg.epochs, adam);
}

TrainStats train_dynamic_refiner(DynamicRefinerModel& model,
                                 const std::vector<TrackSample>& dataset,
                                 const TrainConfig& cfg) {
  AdamState adam;
  return train_dynamic_epochs(model, dataset, cfg, 0, cfg.epochs, adam);
}

BundleTrainState init_bundle_training(const std::vector<TrackSample>& samples,
                                      const NetWidths& widths, const TrainConfig& cfg) {
  if (samples.empty()) throw std::invalid_argument("train_bundle: empty dataset");
  const SamplePartition p = partition_samples(samples);

  BundleTrainState state;
  state.bundle.widths = widths;
  state.bundle.shared_weights = cfg.shared_weights;
  for (const auto& [cls, set] : p.static_sets) {
    (void)set;
    InitRng rng(cfg.seed * 4 + static_cast<uint64_t>(cls) * 2);
    state.bundle.static_models.emplace(cls,
                                       StaticRefinerModel(cls, widths, cfg.shared_weights, rng));
    state.adam[adam_key(true, cls)] = AdamState{};
  }
  for (const auto& [cls, set] : p.dynamic_sets) {
    (void)set;
    InitRng rng(cfg.seed * 4 + static_cast<uint64_t>(cls) * 2 + 1);
    state.bundle.dynamic_models.emplace(cls, DynamicRefinerModel(cls, widths, rng));
    state.adam[adam_key(false, cls)] = AdamState{};
  }
  return state;
}

void train_bundle_epochs(BundleTrainState& state, const std::vector<TrackSample>& samples,
                         const TrainConfig& cfg, int until_epoch) {
  const int end = std::min(until_epoch, cfg.epochs);
  SamplePartition p = partition_samples(samples);
  if (state.next_epoch < end) {
    for (auto& [cls, model] : state.bundle.static_models) {
      train_static_epochs(model, p.static_sets.at(cls), cfg, state.next_epoch, end,
                          state.adam.at(adam_key(true, cls)));
    }
    for (auto& [cls, model] : state.bundle.dynamic_models) {
      train_dynamic_epochs(model, p.dynamic_sets.at(cls), cfg, state.next_epoch, end,
                           state.adam.at(adam_key(false, cls)));
    }
    state.next_epoch = end;
  }

  if (state.next_epoch >= cfg.epochs && !state.bundle.motion_classifier) {
    bool has_static = false, has_dynamic = false;
    for (const auto& l : p.clf_labels) {
      has_static |= l == MotionState::Static;
      has_dynamic |= l == MotionState::Dynamic;
    }
    if (has_static && has_dynamic) {
      state.bundle.motion_classifier =
          fit_linear_classifier(p.clf_features, p.clf_labels).classifier;
    }
  }
}

ModelBundle train_bundle(const std::vector<TrackSample>& samples, const NetWidths& widths,
                         const TrainConfig& cfg) {
  BundleTrainState state = init_bundle_training(samples, widths, cfg);
  train_bundle_epochs(state, samples, cfg, cfg.epochs);
  return std::move(state.bundle);
}

void save_checkpoint(const BundleTrainState& state, const std::string& path) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);

  json entries = json::array();
  for (const auto& [key, adam] : state.adam) {
    entries.push_back({{"key", key}, {"t", adam.t}, {"count", adam.m.size()}});
  }
  const json header = {{"format", "autolabel-checkpoint"},
                       {"version", 1},
                       {"next_epoch", state.next_epoch},
                       {"adam", entries}};
  out << header.dump() << "\n";
  for (const auto& [key, adam] : state.adam) {
    (void)key;
    out.write(reinterpret_cast<const char*>(adam.m.data()),
              static_cast<std::streamsize>(adam.m.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(adam.v.data()),
              static_cast<std::streamsize>(adam.v.size() * sizeof(double)));
  }
  save_model(state.bundle, out);
  if (!out) throw std::runtime_error("write failed: " + path);
}

BundleTrainState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty checkpoint file");
  json header = json::parse(line, nullptr, false);
  if (header.is_discarded() || header.value("format", "") != "autolabel-checkpoint" ||
      header.value("version", 0) != 1) {
    throw std::runtime_error(path + ": bad checkpoint header");
  }

  BundleTrainState state;
  state.next_epoch = header.at("next_epoch").get<int>();
  for (const auto& e : header.at("adam")) {
    AdamState adam;
    adam.t = e.at("t").get<int64_t>();
    const int64_t count = e.at("count").get<int64_t>();
    adam.m.resize(count);
    adam.v.resize(count);
    in.read(reinterpret_cast<char*>(adam.m.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    in.read(reinterpret_cast<char*>(adam.v.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw std::runtime_error(path + ": truncated optimizer state");
    state.adam[e.at("key").get<std::string>()] = std::move(adam);
  }
  state.bundle = load_model(in, path);
  return state;
}

}  // namespace neural
}  // namespace autolabel
