#pragma once

#include <cstdint>
#include <string>

#include "autolabel/sequence.hpp"

namespace autolabel {
namespace synth {

// Counter-based generator: every draw is keyed by (seed, frame, object,
// stream), so per-object streams do not depend on iteration order.
class CounterRng {
 public:
  CounterRng(uint64_t seed, uint64_t frame, uint64_t object, uint64_t stream);

  uint64_t next_u64();
  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);   // [lo, hi)
  double gaussian();                      // N(0, 1)
  int uniform_int(int n);                 // [0, n)

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

struct SizeDistribution {
  double length_mean, width_mean, height_mean;
  double sigma;  // common extent sigma
};

struct SceneConfig {
  int n_frames = 200;
  double frequency = 10.0;  // Hz
  int n_static = 5;
  int n_dynamic = 5;
  double speed_min = 1.5;  // m/s, dynamic objects
  double speed_max = 8.0;
  double ego_speed = 0.0;  // m/s along +X
  SizeDistribution vehicle_size{4.8, 1.8, 1.5, 0.2};
  SizeDistribution pedestrian_size{0.9, 0.9, 1.7, 0.05};
  double pedestrian_fraction = 0.0;
  double spawn_half_extent = 40.0;  // m, square around origin
  double min_spawn_gap = 6.0;       // m, center separation between spawns
  int points_per_object = 120;      // at reference distance
  double point_falloff_distance = 30.0;  // density halves past this range
  double surface_jitter = 0.05;     // m, bound on point offset from surface
  uint64_t seed = 0;

  bool valid() const;
};

struct NoiseConfig {
  double center_sigma = 0.0;   // m
  double size_sigma = 0.0;     // m
  double heading_sigma = 0.0;  // rad
  double score_noise_gain = 1.0;  // score = clamp(1 - gain*|noise|, 0.05, 1)
  double false_positive_rate = 0.0;  // expected FP boxes per frame
  double drop_probability = 0.0;     // FN probability per detection

  bool valid() const;
};

SceneConfig scene_config_from_file(const std::string& path);
NoiseConfig noise_config_from_file(const std::string& path);

// Deterministic scene generation: static objects have exactly constant world
// GT boxes, dynamic objects move at constant velocity, points are sampled on
// box surfaces with jitter bounded by cfg.surface_jitter. Detections are the
// noiseless GT boxes in the sensor frame (score 1).
SequenceDataset generate_scene(const SceneConfig& cfg);

// Replaces detections with noisy copies of the GT boxes plus false positives.
SequenceDataset perturb_detections(const SequenceDataset& ds, const NoiseConfig& noise,
                                   uint64_t seed);

}  // namespace synth
}  // namespace autolabel
