#include "autolabel/neural/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace autolabel {
namespace neural {

using nlohmann::json;

NetWidths NetWidths::tiny() {
  NetWidths w;
  w.seg_point = {16, 16, 32};
  w.seg_skip = 1;
  w.seg_head = {32, 32, 2};
  w.box_point = {16, 32, 64};
  w.box_pooled = {32, 32};
  w.traj_point = {16, 16, 32};
  w.traj_pooled = {16, 16};
  w.head_hidden = {16, 16};
  return w;
}

StaticRefinerModel::StaticRefinerModel(ObjectClass cls_in, const NetWidths& w, bool shared,
                                       InitRng& rng)
    : cls(cls_in), shared_weights(shared) {
  seg = SegNet(3, w.seg_point, w.seg_skip, w.seg_head, rng);
  const int out = BoxTargets::flat_size(cls);
  box = BoxNet(3, w.box_point, w.box_pooled, out, rng);
  if (!shared_weights) box_second = BoxNet(3, w.box_point, w.box_pooled, out, rng);
}

void StaticRefinerModel::visit_params(const std::function<void(Eigen::MatrixXd&)>& fn) {
  seg.visit_params(fn);
  box.visit_params(fn);
  if (!shared_weights) box_second.visit_params(fn);
}

void StaticRefinerModel::visit_buffers(const std::function<void(Eigen::RowVectorXd&)>& fn) {
  seg.visit_buffers(fn);
  box.visit_buffers(fn);
  if (!shared_weights) box_second.visit_buffers(fn);
}

void StaticRefinerModel::collect_grads(const Tape& tape,
                                       std::vector<Eigen::MatrixXd>::iterator& it) const {
  seg.collect_grads(tape, it);
  box.collect_grads(tape, it);
  if (!shared_weights) box_second.collect_grads(tape, it);
}

void StaticRefinerModel::clear_pass() {
  seg.clear_pass();
  box.clear_pass();
  if (!shared_weights) box_second.clear_pass();
}

std::vector<bool> StaticRefinerModel::segment(const PointCloud& local_points) {
  std::vector<bool> mask(static_cast<size_t>(local_points.size()), false);
  if (local_points.size() == 0) return mask;
  clear_pass();
  Tape tape;
  const int x = tape.input(local_points.points.leftCols<3>());
  const int logits = seg.forward(tape, x, false);
  const auto& v = tape.value(logits);
  for (int64_t i = 0; i < v.rows(); ++i) mask[static_cast<size_t>(i)] = v(i, 1) > v(i, 0);
  return mask;
}

Box3D StaticRefinerModel::regress(const PointCloud& local_foreground, int passes) {
  Box3D ref;  // identity frame: keyframe coordinates
  ref.cx = ref.cy = ref.cz = 0.0;
  ref.heading = 0.0;
  Box3D estimate = ref;
  PointCloud pts = local_foreground;
  clear_pass();
  for (int pass = 0; pass < std::max(passes, 1); ++pass) {
    Tape tape;
    const int x = tape.input(pts.points.leftCols<3>());
    BoxNet& net = (pass == 0 || shared_weights) ? box : box_second;
    const int out = net.forward(tape, x, false);
    const BoxTargets targets =
        BoxTargets::unflatten(tape.value(out).row(0).transpose(), cls);
    const Box3D frame = pass == 0 ? ref : estimate;
    estimate = decode_box(targets, cls, frame);
    if (pass + 1 < std::max(passes, 1)) {
      pts = to_box_frame(local_foreground, estimate);
    }
  }
  return estimate;
}

DynamicRefinerModel::DynamicRefinerModel(ObjectClass cls_in, const NetWidths& w, InitRng& rng)
    : cls(cls_in) {
  seg = SegNet(4, w.seg_point, w.seg_skip, w.seg_head, rng);
  pc_encoder = BoxNet(4, w.box_point, w.box_pooled, 0, rng);
  traj_encoder = BoxNet(8, w.traj_point, w.traj_pooled, 0, rng);
  const int out = BoxTargets::flat_size(cls);
  std::vector<int> head_widths = w.head_hidden;
  head_widths.push_back(out);
  head_joint = Mlp(pc_encoder.pooled_mlp_.out_width() + traj_encoder.pooled_mlp_.out_width(),
                   head_widths, false, true, rng);
  head_pc = Mlp(pc_encoder.pooled_mlp_.out_width(), head_widths, false, true, rng);
  head_traj = Mlp(traj_encoder.pooled_mlp_.out_width(), head_widths, false, true, rng);
}

void DynamicRefinerModel::visit_params(const std::function<void(Eigen::MatrixXd&)>& fn) {
  seg.visit_params(fn);
  pc_encoder.visit_params(fn);
  traj_encoder.visit_params(fn);
  head_joint.visit_params(fn);
  head_pc.visit_params(fn);
  head_traj.visit_params(fn);
}

void DynamicRefinerModel::visit_buffers(const std::function<void(Eigen::RowVectorXd&)>& fn) {
  seg.visit_buffers(fn);
  pc_encoder.visit_buffers(fn);
  traj_encoder.visit_buffers(fn);
  head_joint.visit_buffers(fn);
  head_pc.visit_buffers(fn);
  head_traj.visit_buffers(fn);
}

void DynamicRefinerModel::collect_grads(const Tape& tape,
                                        std::vector<Eigen::MatrixXd>::iterator& it) const {
  seg.collect_grads(tape, it);
  pc_encoder.collect_grads(tape, it);
  traj_encoder.collect_grads(tape, it);
  head_joint.collect_grads(tape, it);
  head_pc.collect_grads(tape, it);
  head_traj.collect_grads(tape, it);
}

void DynamicRefinerModel::clear_pass() {
  seg.clear_pass();
  pc_encoder.clear_pass();
  traj_encoder.clear_pass();
  head_joint.clear_pass();
  head_pc.clear_pass();
  head_traj.clear_pass();
}

std::vector<bool> DynamicRefinerModel::segment(const PointCloud& encoded_points) {
  std::vector<bool> mask(static_cast<size_t>(encoded_points.size()), false);
  if (encoded_points.size() == 0) return mask;
  clear_pass();
  Tape tape;
  const int x = tape.input(encoded_points.points.leftCols(4));
  const int logits = seg.forward(tape, x, false);
  const auto& v = tape.value(logits);
  for (int64_t i = 0; i < v.rows(); ++i) mask[static_cast<size_t>(i)] = v(i, 1) > v(i, 0);
  return mask;
}

BoxTargets DynamicRefinerModel::predict(const PointCloud& encoded_foreground,
                                        const Eigen::MatrixXd& box_seq) {
  clear_pass();
  Tape tape;
  const int pts = tape.input(encoded_foreground.points.leftCols(4));
  const int pc_emb = pc_encoder.forward(tape, pts, false);
  const int boxes = tape.input(box_seq);
  const int traj_emb = traj_encoder.forward(tape, boxes, false);
  const int joint = tape.concat_cols(pc_emb, traj_emb);
  const int out = head_joint.forward(tape, joint, false).back();
  return BoxTargets::unflatten(tape.value(out).row(0).transpose(), cls);
}

namespace {

json widths_to_json(const NetWidths& w) {
  return {{"seg_point", w.seg_point},   {"seg_skip", w.seg_skip},
          {"seg_head", w.seg_head},     {"box_point", w.box_point},
          {"box_pooled", w.box_pooled}, {"traj_point", w.traj_point},
          {"traj_pooled", w.traj_pooled}, {"head_hidden", w.head_hidden}};
}

NetWidths widths_from_json(const json& j) {
  NetWidths w;
  w.seg_point = j.at("seg_point").get<std::vector<int>>();
  w.seg_skip = j.at("seg_skip");
  w.seg_head = j.at("seg_head").get<std::vector<int>>();
  w.box_point = j.at("box_point").get<std::vector<int>>();
  w.box_pooled = j.at("box_pooled").get<std::vector<int>>();
  w.traj_point = j.at("traj_point").get<std::vector<int>>();
  w.traj_pooled = j.at("traj_pooled").get<std::vector<int>>();
  w.head_hidden = j.at("head_hidden").get<std::vector<int>>();
  return w;
}

template <typename Model>
Eigen::VectorXd model_blob(Model& m) {
  Eigen::VectorXd params = flatten_params([&](auto&& fn) { m.visit_params(fn); });
  std::vector<double> buf;
  m.visit_buffers([&](Eigen::RowVectorXd& b) {
    for (int64_t i = 0; i < b.size(); ++i) buf.push_back(b(i));
  });
  Eigen::VectorXd out(params.size() + static_cast<int64_t>(buf.size()));
  out.head(params.size()) = params;
  for (size_t i = 0; i < buf.size(); ++i) out(params.size() + static_cast<int64_t>(i)) = buf[i];
  return out;
}

template <typename Model>
void model_from_blob(Model& m, const Eigen::VectorXd& blob) {
  int64_t n_params = 0;
  m.visit_params([&](Eigen::MatrixXd& t) { n_params += t.size(); });
  unflatten_params(blob.head(n_params), [&](auto&& fn) { m.visit_params(fn); });
  int64_t at = n_params;
  m.visit_buffers([&](Eigen::RowVectorXd& b) {
    for (int64_t i = 0; i < b.size(); ++i) b(i) = blob(at++);
  });
}

}  // namespace

void save_model(const ModelBundle& bundle, const std::string& path) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  save_model(bundle, out);
  if (!out) throw std::runtime_error("write failed: " + path);
}

void save_model(const ModelBundle& bundle, std::ostream& out) {
  ModelBundle& b = const_cast<ModelBundle&>(bundle);
  std::vector<Eigen::VectorXd> blobs;
  json statics = json::array();
  for (auto& [cls, m] : b.static_models) {
    blobs.push_back(model_blob(m));
    statics.push_back({{"class", static_cast<int>(cls)},
                       {"shared_weights", m.shared_weights},
                       {"count", blobs.back().size()}});
  }
  json dynamics = json::array();
  for (auto& [cls, m] : b.dynamic_models) {
    blobs.push_back(model_blob(m));
    dynamics.push_back({{"class", static_cast<int>(cls)}, {"count", blobs.back().size()}});
  }
  json header = {{"format", "autolabel-model"},
                 {"version", 1},
                 {"widths", widths_to_json(bundle.widths)},
                 {"shared_weights", bundle.shared_weights},
                 {"static", statics},
                 {"dynamic", dynamics}};
  if (bundle.motion_classifier) {
    const auto& c = *bundle.motion_classifier;
    header["motion_classifier"] = {
        {"weights", {c.weights(0), c.weights(1)}},
        {"bias", c.bias},
        {"feature_mean", {c.feature_mean(0), c.feature_mean(1)}},
        {"feature_scale", {c.feature_scale(0), c.feature_scale(1)}}};
  }
  out << header.dump() << "\n";
  for (const auto& blob : blobs) {
    out.write(reinterpret_cast<const char*>(blob.data()),
              static_cast<std::streamsize>(blob.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("model write failed");
}

ModelBundle load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file: " + path);
  return load_model(in, path);
}

ModelBundle load_model(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty model file");
  json header = json::parse(line, nullptr, false);
  if (header.is_discarded() || header.value("format", "") != "autolabel-model" ||
      header.value("version", 0) != 1) {
    throw std::runtime_error(path + ": bad model header");
  }
  ModelBundle bundle;
  bundle.widths = widths_from_json(header.at("widths"));
  bundle.shared_weights = header.value("shared_weights", true);

  auto read_blob = [&](int64_t count) {
    Eigen::VectorXd blob(count);
    in.read(reinterpret_cast<char*>(blob.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw std::runtime_error(path + ": truncated parameter blob");
    return blob;
  };

  InitRng rng(0);  // overwritten immediately by the blob
  for (const auto& s : header.at("static")) {
    const auto cls = static_cast<ObjectClass>(s.at("class").get<int>());
    StaticRefinerModel m(cls, bundle.widths, s.at("shared_weights").get<bool>(), rng);
    model_from_blob(m, read_blob(s.at("count").get<int64_t>()));
    bundle.static_models.emplace(cls, std::move(m));
  }
  for (const auto& s : header.at("dynamic")) {
    const auto cls = static_cast<ObjectClass>(s.at("class").get<int>());
    DynamicRefinerModel m(cls, bundle.widths, rng);
    model_from_blob(m, read_blob(s.at("count").get<int64_t>()));
    bundle.dynamic_models.emplace(cls, std::move(m));
  }
  if (header.contains("motion_classifier")) {
    const auto& c = header.at("motion_classifier");
    LinearMotionClassifier clf;
    clf.weights << c.at("weights")[0], c.at("weights")[1];
    clf.bias = c.at("bias");
    clf.feature_mean << c.at("feature_mean")[0], c.at("feature_mean")[1];
    clf.feature_scale << c.at("feature_scale")[0], c.at("feature_scale")[1];
    bundle.motion_classifier = clf;
  }
  return bundle;
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state,
               const AdamConfig& cfg, double lr_scale) {
  if (state.t == 0) {
    state.m = Eigen::VectorXd::Zero(params.size());
    state.v = Eigen::VectorXd::Zero(params.size());
  }
  ++state.t;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grads;
  state.v = cfg.beta2 * state.v.array().matrix() +
            (1.0 - cfg.beta2) * grads.array().square().matrix();
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  const Eigen::ArrayXd mhat = state.m.array() / bc1;
  const Eigen::ArrayXd vhat = state.v.array() / bc2;
  params.array() -= lr_scale * cfg.learning_rate * mhat / (vhat.sqrt() + cfg.eps);
}

void augment(PointCloud& points, const std::vector<Box3D*>& boxes,
             const AugmentConfig& cfg, synth::CounterRng& rng) {
  const bool do_flip_x = cfg.flip_x && rng.uniform() < 0.5;
  const bool do_flip_y = cfg.flip_y && rng.uniform() < 0.5;
  const double angle = cfg.max_rotation_deg > 0.0
                           ? rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg) * kPi /
                                 180.0
                           : 0.0;
  const double scale =
      cfg.scale_range > 0.0 ? rng.uniform(1.0 - cfg.scale_range, 1.0 + cfg.scale_range) : 1.0;
  Eigen::Vector3d shift = Eigen::Vector3d::Zero();
  if (cfg.shift_sigma > 0.0) {
    shift = cfg.shift_sigma * Eigen::Vector3d(rng.gaussian(), rng.gaussian(), rng.gaussian());
  }

  auto map_xy = [&](double& x, double& y) {
    if (do_flip_x) y = -y;  // mirror across the X axis
    if (do_flip_y) x = -x;  // mirror across the Y axis
    const double c = std::cos(angle), s = std::sin(angle);
    const double xr = c * x - s * y;
    const double yr = s * x + c * y;
    x = xr;
    y = yr;
  };

  for (int64_t i = 0; i < points.size(); ++i) {
    double x = points.points(i, 0), y = points.points(i, 1), z = points.points(i, 2);
    map_xy(x, y);
    points.points(i, 0) = scale * x + shift.x();
    points.points(i, 1) = scale * y + shift.y();
    points.points(i, 2) = scale * z + shift.z();
  }

  for (Box3D* box : boxes) {
    double h = box->heading;
    if (do_flip_x) h = -h;
    if (do_flip_y) h = normalize_angle(kPi - h);
    h = normalize_angle(h + angle);
    double bx = box->cx, by = box->cy;
    map_xy(bx, by);
    box->cx = scale * bx + shift.x();
    box->cy = scale * by + shift.y();
    box->cz = scale * box->cz + shift.z();
    box->length *= scale;
    box->width *= scale;
    box->height *= scale;
    box->heading = h;
  }

  if (cfg.subsample > 0 && points.size() > cfg.subsample) {
    PointCloud sub = subsample_points(points, cfg.subsample, rng);
    points = std::move(sub);
  }
}

void augment(PointCloud& points, Box3D& box, const AugmentConfig& cfg,
             synth::CounterRng& rng) {
  augment(points, std::vector<Box3D*>{&box}, cfg, rng);
}

PointCloud temporal_encode(const std::vector<std::pair<int, PointCloud>>& frames) {
  int64_t total = 0;
  for (const auto& [off, pc] : frames) total += pc.size();
  PointCloud out;
  out.points.resize(total, 4);
  int64_t at = 0;
  for (const auto& [off, pc] : frames) {
    for (int64_t i = 0; i < pc.size(); ++i) {
      out.points.row(at).head<3>() = pc.points.row(i).head<3>();
      out.points(at, 3) = 0.1 * off;
      ++at;
    }
  }
  return out;
}

PointCloud subsample_points(const PointCloud& pc, int count, synth::CounterRng& rng) {
  if (count <= 0 || pc.size() <= count) return pc;
  std::vector<int64_t> idx(static_cast<size_t>(pc.size()));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < count; ++i) {
    const int j = i + rng.uniform_int(static_cast<int>(idx.size()) - i);
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  idx.resize(static_cast<size_t>(count));
  std::sort(idx.begin(), idx.end());
  PointCloud out;
  out.points.resize(count, pc.channels());
  for (int i = 0; i < count; ++i) out.points.row(i) = pc.points.row(idx[static_cast<size_t>(i)]);
  return out;
}

}  // namespace neural
}  // namespace autolabel
