#include "autolabel/geometry.hpp"

#include <Eigen/LU>
#include <cmath>
#include <stdexcept>

namespace autolabel {

namespace {
constexpr double kDegenerateExtent = 1e-6;
}

double normalize_angle(double rad) {
  double a = std::fmod(rad + kPi, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  return a - kPi;
}

double cyclic_diff(double a, double b) { return normalize_angle(a - b); }

bool Box3D::valid() const {
  return length > 0.0 && width > 0.0 && height > 0.0 && score >= 0.0 && score <= 1.0 &&
         std::isfinite(cx) && std::isfinite(cy) && std::isfinite(cz) && std::isfinite(heading);
}

bool SensorPose::orthonormal(double tol) const {
  const Eigen::Matrix3d err = rotation * rotation.transpose() - Eigen::Matrix3d::Identity();
  return err.cwiseAbs().maxCoeff() <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

SensorPose SensorPose::inverse() const {
  SensorPose inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(rotation.transpose() * translation);
  return inv;
}

double SensorPose::yaw() const {
  const Eigen::Vector3d x_axis = rotation.col(0);
  return std::atan2(x_axis.y(), x_axis.x());
}

PointCloud transform_points(const PointCloud& pc, const SensorPose& pose) {
  if (!pc.finite()) throw std::invalid_argument("transform_points: non-finite point cloud");
  PointCloud out = pc;
  if (pc.size() > 0) {
    out.points.leftCols<3>() =
        (pc.points.leftCols<3>() * pose.rotation.transpose()).rowwise() +
        pose.translation.transpose();
  }
  return out;
}

Eigen::Vector3d to_box_frame(const Eigen::Vector3d& p, const Box3D& ref) {
  const double c = std::cos(ref.heading), s = std::sin(ref.heading);
  const Eigen::Vector3d d = p - ref.center();
  return {c * d.x() + s * d.y(), -s * d.x() + c * d.y(), d.z()};
}

Eigen::Vector3d from_box_frame(const Eigen::Vector3d& p, const Box3D& ref) {
  const double c = std::cos(ref.heading), s = std::sin(ref.heading);
  return {c * p.x() - s * p.y() + ref.cx, s * p.x() + c * p.y() + ref.cy, p.z() + ref.cz};
}

Box3D box_to_frame(const Box3D& box, const Box3D& ref) {
  Box3D out = box;
  const Eigen::Vector3d c = to_box_frame(box.center(), ref);
  out.cx = c.x();
  out.cy = c.y();
  out.cz = c.z();
  out.heading = normalize_angle(box.heading - ref.heading);
  return out;
}

Box3D box_from_frame(const Box3D& box, const Box3D& ref) {
  Box3D out = box;
  const Eigen::Vector3d c = from_box_frame(box.center(), ref);
  out.cx = c.x();
  out.cy = c.y();
  out.cz = c.z();
  out.heading = normalize_angle(box.heading + ref.heading);
  return out;
}

bool point_in_box(const Eigen::Vector3d& p, const Box3D& box, double margin) {
  const Eigen::Vector3d local = to_box_frame(p, box);
  return std::abs(local.x()) <= 0.5 * box.length + margin &&
         std::abs(local.y()) <= 0.5 * box.width + margin &&
         std::abs(local.z()) <= 0.5 * box.height + margin;
}

PointCloud to_box_frame(const PointCloud& pc, const Box3D& ref) {
  PointCloud out = pc;
  for (int64_t i = 0; i < pc.size(); ++i) {
    out.points.row(i).head<3>() =
        to_box_frame(Eigen::Vector3d(pc.points.row(i).head<3>()), ref).transpose();
  }
  return out;
}

PointCloud from_box_frame(const PointCloud& pc, const Box3D& ref) {
  PointCloud out = pc;
  for (int64_t i = 0; i < pc.size(); ++i) {
    out.points.row(i).head<3>() =
        from_box_frame(Eigen::Vector3d(pc.points.row(i).head<3>()), ref).transpose();
  }
  return out;
}

std::array<Eigen::Vector2d, 4> bev_corners(const Box3D& box) {
  const double c = std::cos(box.heading), s = std::sin(box.heading);
  const double hl = 0.5 * box.length, hw = 0.5 * box.width;
  auto corner = [&](double x, double y) {
    return Eigen::Vector2d(box.cx + c * x - s * y, box.cy + s * x + c * y);
  };
  return {corner(hl, hw), corner(-hl, hw), corner(-hl, -hw), corner(hl, -hw)};
}

double polygon_area(const std::vector<Eigen::Vector2d>& poly) {
  if (poly.size() < 3) return 0.0;
  double twice = 0.0;
  for (size_t i = 0; i < poly.size(); ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % poly.size()];
    twice += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * std::abs(twice);
}

std::vector<Eigen::Vector2d> clip_convex(const std::vector<Eigen::Vector2d>& subject,
                                         const std::vector<Eigen::Vector2d>& clip) {
  std::vector<Eigen::Vector2d> output = subject;
  const size_t n = clip.size();
  for (size_t i = 0; i < n && !output.empty(); ++i) {
    const Eigen::Vector2d a = clip[i];
    const Eigen::Vector2d b = clip[(i + 1) % n];
    const Eigen::Vector2d edge = b - a;
    auto inside = [&](const Eigen::Vector2d& p) {
      return edge.x() * (p.y() - a.y()) - edge.y() * (p.x() - a.x()) >= 0.0;
    };
    std::vector<Eigen::Vector2d> input;
    input.swap(output);
    for (size_t j = 0; j < input.size(); ++j) {
      const Eigen::Vector2d cur = input[j];
      const Eigen::Vector2d prev = input[(j + input.size() - 1) % input.size()];
      const bool cur_in = inside(cur), prev_in = inside(prev);
      if (cur_in != prev_in) {
        const Eigen::Vector2d d = cur - prev;
        const double denom = edge.x() * d.y() - edge.y() * d.x();
        const double t = denom != 0.0
                             ? (edge.x() * (a.y() - prev.y()) - edge.y() * (a.x() - prev.x())) / denom
                             : 0.0;
        output.push_back(prev + t * d);
      }
      if (cur_in) output.push_back(cur);
    }
  }
  return output;
}

namespace {
bool degenerate_bev(const Box3D& b) {
  return b.length < kDegenerateExtent || b.width < kDegenerateExtent;
}
}  // namespace

double bev_intersection_area(const Box3D& a, const Box3D& b) {
  if (degenerate_bev(a) || degenerate_bev(b)) return 0.0;
  const auto ca = bev_corners(a);
  const auto cb = bev_corners(b);
  const std::vector<Eigen::Vector2d> pa(ca.begin(), ca.end());
  const std::vector<Eigen::Vector2d> pb(cb.begin(), cb.end());
  return polygon_area(clip_convex(pa, pb));
}

double bev_iou(const Box3D& a, const Box3D& b) {
  if (degenerate_bev(a) || degenerate_bev(b)) return 0.0;
  const double inter = bev_intersection_area(a, b);
  const double uni = a.length * a.width + b.length * b.width - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou_3d(const Box3D& a, const Box3D& b) {
  if (degenerate_bev(a) || degenerate_bev(b) || a.height < kDegenerateExtent ||
      b.height < kDegenerateExtent) {
    return 0.0;
  }
  const double zlo = std::max(a.cz - 0.5 * a.height, b.cz - 0.5 * b.height);
  const double zhi = std::min(a.cz + 0.5 * a.height, b.cz + 0.5 * b.height);
  const double dz = std::max(0.0, zhi - zlo);
  const double inter = bev_intersection_area(a, b) * dz;
  const double uni = a.volume() + b.volume() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double cyclic_mean(std::span<const double> angles, std::span<const double> weights,
                   bool* ambiguous) {
  if (angles.empty() || angles.size() != weights.size()) {
    throw std::invalid_argument("cyclic_mean: size mismatch or empty input");
  }
  double wsum = 0.0, sx = 0.0, sy = 0.0;
  for (size_t i = 0; i < angles.size(); ++i) {
    if (weights[i] < 0.0) throw std::invalid_argument("cyclic_mean: negative weight");
    wsum += weights[i];
    sx += weights[i] * std::cos(angles[i]);
    sy += weights[i] * std::sin(angles[i]);
  }
  if (wsum <= 0.0) throw std::invalid_argument("cyclic_mean: all weights zero");
  if (ambiguous) *ambiguous = false;
  const double resultant = std::hypot(sx, sy) / wsum;
  if (resultant < 1e-12) {
    if (ambiguous) *ambiguous = true;
    return normalize_angle(angles[0]);
  }
  return normalize_angle(std::atan2(sy, sx));
}

double align_heading(double det, double track) {
  const double diff = cyclic_diff(det, track);
  if (std::abs(diff) > 0.5 * kPi) return normalize_angle(det + kPi);
  return normalize_angle(det);
}

}  // namespace autolabel
