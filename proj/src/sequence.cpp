#include "autolabel/sequence.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace autolabel {

using nlohmann::json;

const char* to_string(MotionState s) {
  switch (s) {
    case MotionState::Static: return "static";
    case MotionState::Dynamic: return "dynamic";
    default: return "indeterminate";
  }
}

const char* to_string(ObjectClass c) {
  return c == ObjectClass::Vehicle ? "vehicle" : "pedestrian";
}

ObjectClass class_from_string(const std::string& s) {
  if (s == "vehicle") return ObjectClass::Vehicle;
  if (s == "pedestrian") return ObjectClass::Pedestrian;
  throw ParseError("unknown object class: " + s);
}

MotionState motion_from_string(const std::string& s) {
  if (s == "static") return MotionState::Static;
  if (s == "dynamic") return MotionState::Dynamic;
  if (s == "indeterminate") return MotionState::Indeterminate;
  throw ParseError("unknown motion state: " + s);
}

bool SequenceDataset::has_ground_truth() const {
  for (const auto& f : frames) {
    if (f.ground_truth.has_value()) return true;
  }
  return false;
}

namespace {

json box_to_json(const Box3D& b) {
  return json::array({b.cx, b.cy, b.cz, b.length, b.width, b.height, b.heading, b.score,
                      static_cast<int>(b.cls)});
}

Box3D box_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 9) throw ParseError(where + ": box must be a 9-array");
  Box3D b;
  b.cx = j[0];
  b.cy = j[1];
  b.cz = j[2];
  b.length = j[3];
  b.width = j[4];
  b.height = j[5];
  b.heading = j[6];
  b.score = j[7];
  const int cls = j[8];
  if (cls != 0 && cls != 1) throw ParseError(where + ": bad class id");
  b.cls = static_cast<ObjectClass>(cls);
  return b;
}

json pose_to_json(const SensorPose& p) {
  json a = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) a.push_back(p.rotation(r, c));
  for (int r = 0; r < 3; ++r) a.push_back(p.translation(r));
  return a;
}

SensorPose pose_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 12) throw ParseError(where + ": pose must be a 12-array");
  SensorPose p;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) p.rotation(r, c) = j[3 * r + c];
  for (int r = 0; r < 3; ++r) p.translation(r) = j[9 + r];
  if (!p.orthonormal()) throw ParseError(where + ": rotation not orthonormal");
  return p;
}

json parse_line(const std::string& line, int lineno) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded()) {
    throw ParseError("line " + std::to_string(lineno) + ": malformed JSON record");
  }
  return j;
}

void validate_frame(const Frame& f, size_t expected_index) {
  const std::string where = "frame " + std::to_string(f.index);
  if (f.index != static_cast<int>(expected_index)) {
    throw ParseError(where + ": indices must be contiguous from 0");
  }
  if (f.points.channels() < 3 && f.points.size() > 0) {
    throw ParseError(where + ": points need at least 3 channels");
  }
  if (!f.points.finite()) throw ParseError(where + ": non-finite point coordinates");
  for (const auto& d : f.detections) {
    if (!d.valid()) throw ParseError(where + ": invalid detection box");
  }
  if (f.ground_truth) {
    for (const auto& g : *f.ground_truth) {
      if (!g.box.valid()) throw ParseError(where + ": invalid ground-truth box");
    }
  }
}

}  // namespace

SequenceDataset load_sequence(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open sequence file: " + path);
  std::string line;
  int lineno = 0;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  ++lineno;
  json header = parse_line(line, lineno);
  if (header.value("format", "") != "autolabel-seq" || header.value("version", 0) != 1) {
    throw ParseError(path + ": bad header (expected autolabel-seq v1)");
  }
  SequenceDataset ds;
  ds.sequence_id = header.at("sequence_id");
  ds.frequency = header.at("frequency");
  ds.channels = header.at("channels").get<std::vector<std::string>>();
  if (ds.channels.size() < 3) throw ParseError(path + ": need at least xyz channels");

  double prev_ts = 0.0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = parse_line(line, lineno);
    Frame f;
    f.index = j.at("index");
    f.timestamp = j.at("timestamp");
    f.pose = pose_from_json(j.at("pose"), "frame " + std::to_string(f.index));
    const auto& pts = j.at("points");
    const int64_t n = static_cast<int64_t>(pts.size());
    const int64_t c = static_cast<int64_t>(ds.channels.size());
    f.points.points.resize(n, c);
    for (int64_t i = 0; i < n; ++i) {
      const auto& row = pts[i];
      if (static_cast<int64_t>(row.size()) != c) {
        throw ParseError("frame " + std::to_string(f.index) + ": point channel mismatch");
      }
      for (int64_t k = 0; k < c; ++k) f.points.points(i, k) = row[k];
    }
    for (const auto& d : j.at("detections")) {
      f.detections.push_back(box_from_json(d, "frame " + std::to_string(f.index)));
    }
    if (j.contains("gt")) {
      std::vector<GroundTruthBox> gts;
      for (const auto& g : j.at("gt")) {
        GroundTruthBox gt;
        gt.box = box_from_json(g.at("box"), "frame " + std::to_string(f.index));
        gt.object_id = g.at("object_id");
        gts.push_back(gt);
      }
      f.ground_truth = std::move(gts);
    }
    if (!ds.frames.empty() && f.timestamp <= prev_ts) {
      throw ParseError("frame " + std::to_string(f.index) +
                       ": timestamps must be strictly increasing");
    }
    prev_ts = f.timestamp;
    validate_frame(f, ds.frames.size());
    ds.frames.push_back(std::move(f));
  }
  if (ds.frames.empty()) throw ParseError(path + ": sequence needs at least one frame");
  return ds;
}

void save_sequence(const SequenceDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  json header = {{"format", "autolabel-seq"},
                 {"version", 1},
                 {"sequence_id", ds.sequence_id},
                 {"frequency", ds.frequency},
                 {"channels", ds.channels}};
  out << header.dump() << "\n";
  for (const auto& f : ds.frames) {
    json j;
    j["index"] = f.index;
    j["timestamp"] = f.timestamp;
    j["pose"] = pose_to_json(f.pose);
    json pts = json::array();
    for (int64_t i = 0; i < f.points.size(); ++i) {
      json row = json::array();
      for (int64_t k = 0; k < f.points.channels(); ++k) row.push_back(f.points.points(i, k));
      pts.push_back(std::move(row));
    }
    j["points"] = std::move(pts);
    json dets = json::array();
    for (const auto& d : f.detections) dets.push_back(box_to_json(d));
    j["detections"] = std::move(dets);
    if (f.ground_truth) {
      json gts = json::array();
      for (const auto& g : *f.ground_truth) {
        gts.push_back({{"box", box_to_json(g.box)}, {"object_id", g.object_id}});
      }
      j["gt"] = std::move(gts);
    }
    out << j.dump() << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

AutoLabelSet load_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open label file: " + path);
  std::string line;
  int lineno = 0;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  ++lineno;
  json header = parse_line(line, lineno);
  if (header.value("format", "") != "autolabel-labels" || header.value("version", 0) != 1) {
    throw ParseError(path + ": bad header (expected autolabel-labels v1)");
  }
  AutoLabelSet set;
  set.sequence_id = header.at("sequence_id");
  std::set<std::pair<int, int64_t>> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = parse_line(line, lineno);
    AutoLabel l;
    l.frame = j.at("frame");
    l.object_id = j.at("object_id");
    l.box = box_from_json(j.at("box"), "label line " + std::to_string(lineno));
    l.motion_state = motion_from_string(j.at("motion_state"));
    if (!seen.insert({l.frame, l.object_id}).second) {
      throw ParseError("label line " + std::to_string(lineno) +
                       ": duplicate (frame, object_id)");
    }
    set.labels.push_back(l);
  }
  return set;
}

void save_labels(const AutoLabelSet& labels, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  json header = {{"format", "autolabel-labels"}, {"version", 1},
                 {"sequence_id", labels.sequence_id}};
  out << header.dump() << "\n";
  for (const auto& l : labels.labels) {
    json j = {{"frame", l.frame},
              {"object_id", l.object_id},
              {"box", box_to_json(l.box)},
              {"motion_state", to_string(l.motion_state)}};
    out << j.dump() << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

Box3D box_to_world(const Box3D& box, const SensorPose& pose) {
  Box3D w = box;
  const Eigen::Vector3d c = pose.rotation * box.center() + pose.translation;
  w.cx = c.x();
  w.cy = c.y();
  w.cz = c.z();
  w.heading = normalize_angle(box.heading + pose.yaw());
  return w;
}

std::pair<PointCloud, std::vector<Box3D>> to_world(const Frame& frame) {
  PointCloud pts = transform_points(frame.points, frame.pose);
  std::vector<Box3D> boxes;
  boxes.reserve(frame.detections.size());
  for (const auto& d : frame.detections) boxes.push_back(box_to_world(d, frame.pose));
  return {std::move(pts), std::move(boxes)};
}

}  // namespace autolabel
