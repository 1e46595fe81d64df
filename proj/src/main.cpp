#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "autolabel/neural/train.hpp"
#include "autolabel/pipeline.hpp"
#include "autolabel/track_extraction.hpp"

namespace {

using namespace autolabel;
using nlohmann::json;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInvariant = 3;
constexpr int kExitInternal = 4;

bool log_enabled() {
  const char* v = std::getenv("AUTOLABEL_LOG");
  return v != nullptr && std::string(v) != "quiet" && std::string(v) != "0";
}

void print_timings(const std::vector<StageTiming>& timings) {
  std::cerr << "stage timings:\n";
  for (const auto& t : timings) {
    std::cerr << "  " << t.name << ": " << t.seconds << " s\n";
  }
}

std::vector<FrameBoxes> filter_class(const std::vector<FrameBoxes>& frames, ObjectClass cls) {
  std::vector<FrameBoxes> out = frames;
  for (auto& f : out) {
    std::vector<Box3D> preds, gts;
    std::vector<int> counts;
    for (const auto& b : f.predictions) {
      if (b.cls == cls) preds.push_back(b);
    }
    for (size_t i = 0; i < f.ground_truth.size(); ++i) {
      if (f.ground_truth[i].cls == cls) {
        gts.push_back(f.ground_truth[i]);
        if (i < f.gt_point_counts.size()) counts.push_back(f.gt_point_counts[i]);
      }
    }
    f.predictions = std::move(preds);
    f.ground_truth = std::move(gts);
    f.gt_point_counts = std::move(counts);
  }
  return out;
}

EvalReport build_report(const SequenceDataset& ds, const AutoLabelSet& labels,
                        const std::vector<double>& taus) {
  const auto frames = frames_from_labels(ds, labels);
  EvalReport report;
  for (ObjectClass cls : {ObjectClass::Vehicle, ObjectClass::Pedestrian}) {
    const auto class_frames = filter_class(frames, cls);
    for (double tau : taus) {
      for (IouMode mode : {IouMode::ThreeD, IouMode::BEV}) {
        const auto ap = average_precision(class_frames, tau, mode);
        if (!ap) continue;
        const std::string key = std::string(to_string(cls)) + "_" +
                                (mode == IouMode::ThreeD ? "3d" : "bev") + "_ap@" +
                                std::to_string(tau).substr(0, 4);
        report.ap[key] = *ap;
      }
    }
  }
  for (double tau : taus) {
    report.accuracy["accuracy@" + std::to_string(tau).substr(0, 4)] =
        box_accuracy(frames, tau);
  }
  const auto gt_tracks = gt_track_map(ds);
  if (!gt_tracks.empty()) {
    report.mot = mota_motp(tracks_from_labels(labels), gt_tracks);
  }
  report.mean_iou = mean_iou_report(frames);
  return report;
}

struct RunOverrides {
  std::optional<uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> backend;
  std::optional<std::string> keyframe;
  std::optional<double> alpha;
  bool causal = false;
  bool tta = false;
  bool oracle_tracker = false;
  bool gt_motion = false;
  std::optional<std::string> model_path;
};

PipelineConfig resolve_config(const std::string& config_path, const RunOverrides& ov) {
  PipelineConfig cfg;
  if (!config_path.empty()) cfg = pipeline_config_from_file(config_path);
  if (ov.seed) cfg.seed = *ov.seed;
  if (ov.workers) cfg.workers = *ov.workers;
  if (ov.backend) {
    cfg.refiner.backend =
        *ov.backend == "neural" ? RefinerBackend::Neural : RefinerBackend::Geometric;
  }
  if (ov.keyframe) cfg.keyframe = keyframe_strategy_from_string(*ov.keyframe);
  if (ov.alpha) cfg.alpha = *ov.alpha;
  if (ov.causal) cfg.refiner.causal = true;
  if (ov.tta) cfg.refiner.tta = true;
  if (ov.oracle_tracker) cfg.tracker.oracle = true;
  if (ov.gt_motion) cfg.use_gt_motion = true;
  if (ov.model_path) cfg.model_path = *ov.model_path;
  return cfg;
}

std::vector<neural::TrackSample> samples_from_sequence(const SequenceDataset& ds,
                                                       double alpha) {
  TrackerParams params;
  params.oracle = true;
  const auto tracks = run_tracker(ds, params);
  const auto gt_tracks = gt_track_map(ds);

  std::vector<neural::TrackSample> samples;
  for (const auto& track : tracks) {
    const auto gt_it = gt_tracks.find(track.object_id);
    if (gt_it == gt_tracks.end()) continue;
    neural::TrackSample s;
    s.data = extract_track_data(ds, track, alpha);
    s.gt_world = gt_it->second;
    std::vector<Box3D> gt_boxes;
    for (const auto& [frame, box] : gt_it->second) gt_boxes.push_back(box);
    s.data.motion_state = gt_boxes.size() >= 2 ? gt_motion_label(gt_boxes, ds.frequency)
                                               : MotionState::Indeterminate;
    samples.push_back(std::move(s));
  }
  return samples;
}

int cmd_run(const std::string& seq_path, const std::string& out_path,
            const std::string& config_path, const RunOverrides& ov) {
  PipelineConfig cfg = resolve_config(config_path, ov);
  const SequenceDataset ds = load_sequence(seq_path);
  std::optional<neural::ModelBundle> bundle;
  if (!cfg.model_path.empty()) bundle = neural::load_model(cfg.model_path);
  if (cfg.refiner.backend == RefinerBackend::Neural && !bundle) {
    throw std::invalid_argument("neural backend requires --model or model_path in config");
  }
  const PipelineResult result = run_pipeline(ds, cfg, bundle ? &*bundle : nullptr);
  save_labels(result.labels, out_path);
  if (log_enabled()) print_timings(result.timings);
  return 0;
}

int cmd_synth(const std::string& scene_path, const std::string& noise_path,
              std::optional<uint64_t> seed, const std::string& out_path) {
  synth::SceneConfig scene;
  if (!scene_path.empty()) scene = synth::scene_config_from_file(scene_path);
  if (seed) scene.seed = *seed;
  SequenceDataset ds = synth::generate_scene(scene);
  if (!noise_path.empty()) {
    const synth::NoiseConfig noise = synth::noise_config_from_file(noise_path);
    ds = synth::perturb_detections(ds, noise, scene.seed + 1);
  }
  save_sequence(ds, out_path);
  return 0;
}

int cmd_train(const std::vector<std::string>& seq_paths, const std::string& out_path,
              const std::string& widths_name, const neural::TrainConfig& cfg, double alpha,
              const std::string& checkpoint_path, bool resume, int checkpoint_every) {
  std::vector<neural::TrackSample> samples;
  for (const auto& path : seq_paths) {
    const SequenceDataset ds = load_sequence(path);
    if (!ds.has_ground_truth()) {
      throw std::invalid_argument(path + ": training requires ground truth");
    }
    auto s = samples_from_sequence(ds, alpha);
    samples.insert(samples.end(), std::make_move_iterator(s.begin()),
                   std::make_move_iterator(s.end()));
  }
  const neural::NetWidths widths =
      widths_name == "full" ? neural::NetWidths::full() : neural::NetWidths::tiny();

  neural::BundleTrainState state = resume ? neural::load_checkpoint(checkpoint_path)
                                          : neural::init_bundle_training(samples, widths, cfg);
  while (state.next_epoch < cfg.epochs) {
    const int until = checkpoint_path.empty()
                          ? cfg.epochs
                          : std::min(cfg.epochs, state.next_epoch + checkpoint_every);
    neural::train_bundle_epochs(state, samples, cfg, until);
    if (!checkpoint_path.empty()) {
      neural::save_checkpoint(state, checkpoint_path);
      if (log_enabled()) {
        std::cerr << "checkpoint at epoch " << state.next_epoch << " -> " << checkpoint_path
                  << "\n";
      }
    }
  }
  neural::train_bundle_epochs(state, samples, cfg, cfg.epochs);  // classifier on 0 epochs
  neural::save_model(state.bundle, out_path);
  return 0;
}

int cmd_eval(const std::string& seq_path, const std::string& labels_path,
             std::vector<double> taus) {
  if (taus.empty()) taus = {0.7, 0.8};
  const SequenceDataset ds = load_sequence(seq_path);
  if (!ds.has_ground_truth()) {
    throw std::invalid_argument(seq_path + ": evaluation requires ground truth");
  }
  const AutoLabelSet labels = load_labels(labels_path);
  const EvalReport report = build_report(ds, labels, taus);
  std::cout << format_report(report);

  json table;
  for (const auto& [k, v] : report.ap) table[k] = v;
  for (const auto& [k, v] : report.accuracy) table[k] = v;
  if (report.mot) {
    table["mota"] = report.mot->mota;
    table["motp"] = report.mot->motp;
  }
  if (report.mean_iou) {
    table["mean_iou_3d"] = report.mean_iou->all.mean_iou_3d;
    table["mean_iou_bev"] = report.mean_iou->all.mean_iou_bev;
    table["valid_boxes"] = report.mean_iou->all.valid_boxes;
  }
  std::cout << table.dump() << "\n";
  return 0;
}

int cmd_ablate(const std::string& seq_path, const std::string& config_path,
               const RunOverrides& ov) {
  const SequenceDataset ds = load_sequence(seq_path);
  if (!ds.has_ground_truth()) {
    throw std::invalid_argument(seq_path + ": ablation requires ground truth");
  }
  const PipelineConfig base = resolve_config(config_path, ov);

  struct Variant {
    std::string name;
    PipelineConfig cfg;
  };
  std::vector<Variant> variants;
  auto add = [&](const std::string& name, auto&& mutate) {
    Variant v{name, base};
    mutate(v.cfg);
    variants.push_back(std::move(v));
  };

  add("keyframe=random", [](PipelineConfig& c) { c.keyframe = KeyframeStrategy::Random; });
  add("keyframe=average", [](PipelineConfig& c) { c.keyframe = KeyframeStrategy::Average; });
  add("keyframe=highest",
      [](PipelineConfig& c) { c.keyframe = KeyframeStrategy::HighestScore; });
  add("context=all", [](PipelineConfig& c) {
    c.refiner.static_context = -1;
    c.refiner.box_window = 50;
    c.refiner.point_window = 2;
  });
  add("context=pm2", [](PipelineConfig& c) {
    c.refiner.static_context = 2;
    c.refiner.box_window = 2;
    c.refiner.point_window = 2;
  });
  add("context=single", [](PipelineConfig& c) {
    c.refiner.static_context = 0;
    c.refiner.box_window = 0;
    c.refiner.point_window = 0;
  });
  add("causal=off", [](PipelineConfig& c) { c.refiner.causal = false; });
  add("causal=on", [](PipelineConfig& c) { c.refiner.causal = true; });
  add("tracker=kalman", [](PipelineConfig& c) { c.tracker.oracle = false; });
  add("tracker=oracle", [](PipelineConfig& c) { c.tracker.oracle = true; });
  add("motion=classifier", [](PipelineConfig& c) { c.use_gt_motion = false; });
  add("motion=gt", [](PipelineConfig& c) { c.use_gt_motion = true; });

  std::optional<neural::ModelBundle> bundle;
  if (!base.model_path.empty()) bundle = neural::load_model(base.model_path);

  std::cout << "variant                accuracy@0.7      mota      motp\n";
  for (const auto& v : variants) {
    const PipelineResult result = run_pipeline(ds, v.cfg, bundle ? &*bundle : nullptr);
    const auto frames = frames_from_labels(ds, result.labels);
    const double acc = box_accuracy(frames, 0.7);
    const MotResult mot = mota_motp(tracks_from_labels(result.labels), gt_track_map(ds));
    std::cout << v.name;
    for (size_t i = v.name.size(); i < 23; ++i) std::cout << ' ';
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%12.4f %9.2f %9.2f\n", acc, mot.mota, mot.motp);
    std::cout << buf;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"offboard 3d auto labeling pipeline"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "run the full pipeline on a sequence file");
  std::string run_seq, run_out, run_config;
  RunOverrides ov;
  run->add_option("sequence", run_seq, "input sequence file")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_option("-o,--out", run_out, "output label file")->required();
  run->add_option("--config", run_config, "pipeline config file")->check(CLI::ExistingFile);
  uint64_t ov_seed = 0;
  int ov_workers = 0;
  double ov_alpha = 0.0;
  std::string ov_backend, ov_keyframe, ov_model;
  auto* seed_opt = run->add_option("--seed", ov_seed, "seed override");
  auto* workers_opt = run->add_option("--workers", ov_workers, "worker thread count");
  auto* backend_opt =
      run->add_option("--backend", ov_backend, "refiner backend")
          ->check(CLI::IsMember({"geometric", "neural"}));
  auto* keyframe_opt =
      run->add_option("--keyframe", ov_keyframe, "keyframe strategy")
          ->check(CLI::IsMember({"random", "average", "highest"}));
  auto* alpha_opt = run->add_option("--alpha", ov_alpha, "crop enlargement (m)");
  auto* model_opt = run->add_option("--model", ov_model, "model file")
                        ->check(CLI::ExistingFile);
  run->add_flag("--causal", ov.causal, "restrict refinement to history");
  run->add_flag("--tta", ov.tta, "test-time augmentation for static refinement");
  run->add_flag("--oracle-tracker", ov.oracle_tracker, "assign detections to GT ids");
  run->add_flag("--gt-motion", ov.gt_motion, "use the GT motion-state rule");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic sequence");
  std::string synth_scene, synth_noise, synth_out;
  uint64_t synth_seed = 0;
  synth_cmd->add_option("--scene", synth_scene, "scene config file")
      ->check(CLI::ExistingFile);
  synth_cmd->add_option("--noise", synth_noise, "detection noise config file")
      ->check(CLI::ExistingFile);
  auto* synth_seed_opt = synth_cmd->add_option("--seed", synth_seed, "seed override");
  synth_cmd->add_option("-o,--out", synth_out, "output sequence file")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "train refiner networks");
  std::vector<std::string> train_seqs;
  std::string train_out, train_widths = "tiny";
  neural::TrainConfig train_cfg;
  double train_alpha = 1.0;
  train_cmd->add_option("sequence", train_seqs, "training sequence file(s) with GT")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd->add_option("-o,--out", train_out, "output model file")->required();
  train_cmd->add_option("--widths", train_widths, "network widths preset")
      ->check(CLI::IsMember({"tiny", "full"}));
  train_cmd->add_option("--epochs", train_cfg.epochs, "training epochs");
  train_cmd->add_option("--batch", train_cfg.batch_size, "batch size");
  train_cmd->add_option("--lr", train_cfg.adam.learning_rate, "initial learning rate");
  train_cmd->add_option("--decay-epochs", train_cfg.decay_epochs, "x0.1 decay epochs");
  train_cmd->add_option("--seed", train_cfg.seed, "training seed");
  bool no_augment = false;
  train_cmd->add_flag("--no-augment", no_augment, "disable augmentation");
  train_cmd->add_option("--alpha", train_alpha, "crop enlargement (m)");
  std::string train_checkpoint;
  bool train_resume = false;
  int train_checkpoint_every = 1;
  auto* ckpt_opt =
      train_cmd->add_option("--checkpoint", train_checkpoint, "checkpoint file to write");
  train_cmd->add_flag("--resume", train_resume, "resume from the checkpoint file")
      ->needs(ckpt_opt);
  train_cmd->add_option("--checkpoint-every", train_checkpoint_every, "epochs per checkpoint")
      ->needs(ckpt_opt)
      ->check(CLI::PositiveNumber);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate labels against a GT sequence");
  std::string eval_seq, eval_labels;
  std::vector<double> eval_taus;
  eval_cmd->add_option("sequence", eval_seq, "GT sequence file")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("labels", eval_labels, "label file")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--tau", eval_taus, "IoU thresholds");

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "run the ablation harness");
  std::string ablate_seq, ablate_config;
  ablate_cmd->add_option("sequence", ablate_seq, "GT sequence file")
      ->required()
      ->check(CLI::ExistingFile);
  ablate_cmd->add_option("--config", ablate_config, "pipeline config file")
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (seed_opt->count() > 0) ov.seed = ov_seed;
  if (workers_opt->count() > 0) ov.workers = ov_workers;
  if (backend_opt->count() > 0) ov.backend = ov_backend;
  if (keyframe_opt->count() > 0) ov.keyframe = ov_keyframe;
  if (alpha_opt->count() > 0) ov.alpha = ov_alpha;
  if (model_opt->count() > 0) ov.model_path = ov_model;
  train_cfg.augment_enabled = !no_augment;

  try {
    if (run->parsed()) return cmd_run(run_seq, run_out, run_config, ov);
    if (synth_cmd->parsed()) {
      return cmd_synth(synth_scene, synth_noise,
                       synth_seed_opt->count() > 0 ? std::optional<uint64_t>(synth_seed)
                                                   : std::nullopt,
                       synth_out);
    }
    if (train_cmd->parsed()) {
      return cmd_train(train_seqs, train_out, train_widths, train_cfg, train_alpha,
                       train_checkpoint, train_resume, train_checkpoint_every);
    }
    if (eval_cmd->parsed()) return cmd_eval(eval_seq, eval_labels, eval_taus);
    if (ablate_cmd->parsed()) return cmd_ablate(ablate_seq, ablate_config, ov);
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return kExitInvariant;
  } catch (const std::logic_error& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return kExitInvariant;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
