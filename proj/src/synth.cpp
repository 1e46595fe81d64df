#include "autolabel/synth.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace autolabel {
namespace synth {

namespace {

constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += kGolden);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

uint64_t mix_key(uint64_t acc, uint64_t v) {
  uint64_t s = acc ^ (v + kGolden + (acc << 6) + (acc >> 2));
  return splitmix64(s);
}

}  // namespace

CounterRng::CounterRng(uint64_t seed, uint64_t frame, uint64_t object, uint64_t stream) {
  uint64_t s = seed;
  s = mix_key(s, frame);
  s = mix_key(s, object);
  s = mix_key(s, stream);
  state_ = s;
}

uint64_t CounterRng::next_u64() { return splitmix64(state_); }

double CounterRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double CounterRng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double CounterRng::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  has_spare_ = true;
  spare_ = r * std::sin(2.0 * kPi * u2);
  return r * std::cos(2.0 * kPi * u2);
}

int CounterRng::uniform_int(int n) {
  return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
}

bool SceneConfig::valid() const {
  return n_frames >= 1 && frequency > 0.0 && n_static >= 0 && n_dynamic >= 0 &&
         speed_min >= 0.0 && speed_max >= speed_min && ego_speed >= 0.0 &&
         pedestrian_fraction >= 0.0 && pedestrian_fraction <= 1.0 && points_per_object >= 0 &&
         surface_jitter >= 0.0;
}

bool NoiseConfig::valid() const {
  return center_sigma >= 0.0 && size_sigma >= 0.0 && heading_sigma >= 0.0 &&
         false_positive_rate >= 0.0 && drop_probability >= 0.0 && drop_probability <= 1.0;
}

namespace {

using nlohmann::json;

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw std::runtime_error("malformed config JSON: " + path);
  return j;
}

}  // namespace

SceneConfig scene_config_from_file(const std::string& path) {
  const json j = load_json_file(path);
  SceneConfig c;
  c.n_frames = j.value("n_frames", c.n_frames);
  c.frequency = j.value("frequency", c.frequency);
  c.n_static = j.value("n_static", c.n_static);
  c.n_dynamic = j.value("n_dynamic", c.n_dynamic);
  c.speed_min = j.value("speed_min", c.speed_min);
  c.speed_max = j.value("speed_max", c.speed_max);
  c.ego_speed = j.value("ego_speed", c.ego_speed);
  c.pedestrian_fraction = j.value("pedestrian_fraction", c.pedestrian_fraction);
  c.spawn_half_extent = j.value("spawn_half_extent", c.spawn_half_extent);
  c.min_spawn_gap = j.value("min_spawn_gap", c.min_spawn_gap);
  c.points_per_object = j.value("points_per_object", c.points_per_object);
  c.point_falloff_distance = j.value("point_falloff_distance", c.point_falloff_distance);
  c.surface_jitter = j.value("surface_jitter", c.surface_jitter);
  c.seed = j.value("seed", c.seed);
  if (!c.valid()) throw std::runtime_error("invalid scene config: " + path);
  return c;
}

NoiseConfig noise_config_from_file(const std::string& path) {
  const json j = load_json_file(path);
  NoiseConfig c;
  c.center_sigma = j.value("center_sigma", c.center_sigma);
  c.size_sigma = j.value("size_sigma", c.size_sigma);
  c.heading_sigma = j.value("heading_sigma", c.heading_sigma);
  c.score_noise_gain = j.value("score_noise_gain", c.score_noise_gain);
  c.false_positive_rate = j.value("false_positive_rate", c.false_positive_rate);
  c.drop_probability = j.value("drop_probability", c.drop_probability);
  if (!c.valid()) throw std::runtime_error("invalid noise config: " + path);
  return c;
}

namespace {

struct SynthObject {
  int64_t id;
  ObjectClass cls;
  double length, width, height;
  Eigen::Vector2d start;   // world XY at frame 0
  Eigen::Vector2d velocity;  // world m/s
  double heading;            // world, fixed (motion direction for dynamic)
  bool is_static;

  Box3D world_box(double t) const {
    Box3D b;
    const Eigen::Vector2d c = start + t * velocity;
    b.cx = c.x();
    b.cy = c.y();
    b.cz = 0.5 * height;
    b.length = length;
    b.width = width;
    b.height = height;
    b.heading = heading;
    b.score = 1.0;
    b.cls = cls;
    return b;
  }
};

// Minimum center distance between two constant-velocity objects over [0, T].
double min_trajectory_gap(const SynthObject& a, const SynthObject& b, double duration) {
  const Eigen::Vector2d dp = a.start - b.start;
  const Eigen::Vector2d dv = a.velocity - b.velocity;
  const double dv2 = dv.squaredNorm();
  double t_min = 0.0;
  if (dv2 > 1e-12) t_min = std::clamp(-dp.dot(dv) / dv2, 0.0, duration);
  const double at_min = (dp + t_min * dv).norm();
  return std::min({dp.norm(), (dp + duration * dv).norm(), at_min});
}

PointCloud sample_surface_points(const Box3D& box, int count, CounterRng& rng,
                                 double jitter) {
  PointCloud pc;
  pc.points.resize(count, 3);
  // Face areas: two of each (l*w top/bottom, l*h sides, w*h ends).
  const double a_top = box.length * box.width;
  const double a_side = box.length * box.height;
  const double a_end = box.width * box.height;
  const double total = 2.0 * (a_top + a_side + a_end);
  for (int i = 0; i < count; ++i) {
    const double pick = rng.uniform(0.0, total);
    double x, y, z;
    const double u = rng.uniform(-0.5, 0.5);
    const double v = rng.uniform(-0.5, 0.5);
    const double off = jitter > 0.0 ? rng.uniform(-jitter, jitter) : 0.0;
    if (pick < 2.0 * a_top) {
      x = u * box.length;
      y = v * box.width;
      z = (pick < a_top ? 0.5 : -0.5) * box.height + off;
    } else if (pick < 2.0 * (a_top + a_side)) {
      x = u * box.length;
      z = v * box.height;
      y = (pick < 2.0 * a_top + a_side ? 0.5 : -0.5) * box.width + off;
    } else {
      y = u * box.width;
      z = v * box.height;
      x = (pick < total - a_end ? 0.5 : -0.5) * box.length + off;
    }
    const Eigen::Vector3d world = from_box_frame(Eigen::Vector3d(x, y, z), box);
    pc.points.row(i) = world.transpose();
  }
  return pc;
}

}  // namespace

SequenceDataset generate_scene(const SceneConfig& cfg) {
  if (!cfg.valid()) throw std::invalid_argument("generate_scene: invalid config");
  const double dt = 1.0 / cfg.frequency;
  const double duration = (cfg.n_frames - 1) * dt;

  std::vector<SynthObject> objects;
  const int total_objects = cfg.n_static + cfg.n_dynamic;
  for (int i = 0; i < total_objects; ++i) {
    const bool is_static = i < cfg.n_static;
    SynthObject obj;
    obj.id = i;
    obj.is_static = is_static;
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      CounterRng rng(cfg.seed, 0xA11CE, static_cast<uint64_t>(i), attempt);
      obj.cls = rng.uniform() < cfg.pedestrian_fraction ? ObjectClass::Pedestrian
                                                        : ObjectClass::Vehicle;
      const SizeDistribution& dist =
          obj.cls == ObjectClass::Vehicle ? cfg.vehicle_size : cfg.pedestrian_size;
      obj.length = std::max(0.3, dist.length_mean + dist.sigma * rng.gaussian());
      obj.width = std::max(0.3, dist.width_mean + dist.sigma * rng.gaussian());
      obj.height = std::max(0.3, dist.height_mean + dist.sigma * rng.gaussian());
      obj.start = {rng.uniform(-cfg.spawn_half_extent, cfg.spawn_half_extent),
                   rng.uniform(-cfg.spawn_half_extent, cfg.spawn_half_extent)};
      if (is_static) {
        obj.velocity = {0.0, 0.0};
        obj.heading = normalize_angle(rng.uniform(-kPi, kPi));
      } else {
        double speed = rng.uniform(cfg.speed_min, cfg.speed_max);
        if (obj.cls == ObjectClass::Pedestrian) speed = std::min(speed, 2.0);
        const double dir = rng.uniform(-kPi, kPi);
        obj.velocity = {speed * std::cos(dir), speed * std::sin(dir)};
        obj.heading = normalize_angle(dir);
      }
      placed = true;
      for (const auto& other : objects) {
        if (min_trajectory_gap(obj, other, duration) < cfg.min_spawn_gap) {
          placed = false;
          break;
        }
      }
    }
    if (!placed) {
      throw std::runtime_error("generate_scene: could not place object " + std::to_string(i) +
                               " without overlap; loosen the config");
    }
    objects.push_back(obj);
  }

  SequenceDataset ds;
  ds.sequence_id = "synth-" + std::to_string(cfg.seed);
  ds.frequency = cfg.frequency;
  ds.channels = {"x", "y", "z"};
  ds.frames.reserve(cfg.n_frames);
  for (int k = 0; k < cfg.n_frames; ++k) {
    Frame f;
    f.index = k;
    f.timestamp = k * dt;
    f.pose.rotation = Eigen::Matrix3d::Identity();
    f.pose.translation = {cfg.ego_speed * f.timestamp, 0.0, 0.0};
    const SensorPose world_to_sensor = f.pose.inverse();

    std::vector<Eigen::MatrixXd> chunks;
    int64_t n_total = 0;
    std::vector<GroundTruthBox> gts;
    std::vector<Box3D> dets;
    for (const auto& obj : objects) {
      Box3D world = obj.world_box(f.timestamp);
      const double dist =
          (world.center().head<2>() - f.pose.translation.head<2>()).norm();
      int count = static_cast<int>(std::lround(
          cfg.points_per_object / (1.0 + dist / cfg.point_falloff_distance)));
      count = std::max(count, cfg.points_per_object > 0 ? 8 : 0);
      CounterRng rng(cfg.seed, static_cast<uint64_t>(k), static_cast<uint64_t>(obj.id), 1);
      PointCloud world_pts = sample_surface_points(world, count, rng, cfg.surface_jitter);
      PointCloud sensor_pts = transform_points(world_pts, world_to_sensor);
      if (sensor_pts.size() > 0) {
        chunks.push_back(sensor_pts.points);
        n_total += sensor_pts.size();
      }
      // Sensor-frame GT: identity ego rotation keeps this a pure translation.
      Box3D sensor_box = world;
      sensor_box.cx = world.cx - f.pose.translation.x();
      sensor_box.cy = world.cy - f.pose.translation.y();
      sensor_box.cz = world.cz - f.pose.translation.z();
      gts.push_back({sensor_box, obj.id});
      dets.push_back(sensor_box);
    }
    f.points.points.resize(n_total, 3);
    int64_t at = 0;
    for (const auto& c : chunks) {
      f.points.points.middleRows(at, c.rows()) = c;
      at += c.rows();
    }
    f.ground_truth = std::move(gts);
    f.detections = std::move(dets);
    ds.frames.push_back(std::move(f));
  }
  return ds;
}

SequenceDataset perturb_detections(const SequenceDataset& ds, const NoiseConfig& noise,
                                   uint64_t seed) {
  if (!noise.valid()) throw std::invalid_argument("perturb_detections: invalid noise config");
  if (!ds.has_ground_truth()) {
    throw std::invalid_argument("perturb_detections: dataset has no ground truth");
  }
  SequenceDataset out = ds;
  for (auto& f : out.frames) {
    f.detections.clear();
    if (!f.ground_truth) continue;
    for (size_t gi = 0; gi < f.ground_truth->size(); ++gi) {
      const auto& gt = (*f.ground_truth)[gi];
      CounterRng rng(seed, static_cast<uint64_t>(f.index),
                     static_cast<uint64_t>(gt.object_id), 2);
      if (noise.drop_probability > 0.0 && rng.uniform() < noise.drop_probability) continue;
      Box3D d = gt.box;
      Eigen::Vector3d dc{0, 0, 0}, dsz{0, 0, 0};
      double dh = 0.0;
      if (noise.center_sigma > 0.0) {
        dc = noise.center_sigma * Eigen::Vector3d(rng.gaussian(), rng.gaussian(), rng.gaussian());
      }
      if (noise.size_sigma > 0.0) {
        dsz = noise.size_sigma * Eigen::Vector3d(rng.gaussian(), rng.gaussian(), rng.gaussian());
      }
      if (noise.heading_sigma > 0.0) dh = noise.heading_sigma * rng.gaussian();
      d.cx += dc.x();
      d.cy += dc.y();
      d.cz += dc.z();
      d.length = std::max(0.1, d.length + dsz.x());
      d.width = std::max(0.1, d.width + dsz.y());
      d.height = std::max(0.1, d.height + dsz.z());
      d.heading = normalize_angle(d.heading + dh);
      const double magnitude =
          std::sqrt(dc.squaredNorm() + dsz.squaredNorm() + 4.0 * dh * dh);
      d.score = std::clamp(1.0 - noise.score_noise_gain * magnitude, 0.05, 1.0);
      f.detections.push_back(d);
    }
    if (noise.false_positive_rate > 0.0) {
      CounterRng rng(seed, static_cast<uint64_t>(f.index), 0xF9ULL, 3);
      int n_fp = static_cast<int>(noise.false_positive_rate);
      if (rng.uniform() < noise.false_positive_rate - n_fp) ++n_fp;
      for (int i = 0; i < n_fp; ++i) {
        Box3D fp;
        fp.cx = rng.uniform(-60.0, 60.0);
        fp.cy = rng.uniform(-60.0, 60.0);
        fp.cz = rng.uniform(0.5, 1.5);
        fp.length = rng.uniform(3.5, 6.0);
        fp.width = rng.uniform(1.5, 2.2);
        fp.height = rng.uniform(1.2, 2.0);
        fp.heading = normalize_angle(rng.uniform(-kPi, kPi));
        fp.score = rng.uniform(0.05, 0.5);
        fp.cls = ObjectClass::Vehicle;
        f.detections.push_back(fp);
      }
    }
  }
  return out;
}

}  // namespace synth
}  // namespace autolabel
