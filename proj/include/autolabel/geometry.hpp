#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace autolabel {

enum class ObjectClass : uint8_t { Vehicle = 0, Pedestrian = 1 };

inline constexpr double kPi = 3.14159265358979323846;

// Wraps an angle into [-pi, pi).
double normalize_angle(double rad);

// Signed circular difference a - b in [-pi, pi).
double cyclic_diff(double a, double b);

// 7-DoF amodal box: center, extents along heading/left/up, yaw heading.
struct Box3D {
  double cx = 0.0, cy = 0.0, cz = 0.0;
  double length = 1.0, width = 1.0, height = 1.0;
  double heading = 0.0;  // radians, ccw from +X, in [-pi, pi)
  double score = 1.0;
  ObjectClass cls = ObjectClass::Vehicle;

  Eigen::Vector3d center() const { return {cx, cy, cz}; }
  double volume() const { return length * width * height; }
  bool valid() const;
};

// Rigid sensor-to-world transform.
struct SensorPose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  bool orthonormal(double tol = 1e-6) const;
  SensorPose inverse() const;
  // Yaw of the transformed +X axis projected to the XY plane.
  double yaw() const;
};

// N x C point matrix; columns 0..2 are xyz, extra columns ride along.
struct PointCloud {
  Eigen::MatrixXd points;  // N x C, C >= 3

  int64_t size() const { return points.rows(); }
  int64_t channels() const { return points.cols(); }
  bool finite() const { return points.allFinite(); }
};

PointCloud transform_points(const PointCloud& pc, const SensorPose& pose);

// Points expressed in the box coordinate of `ref` (+X = heading, origin =
// center). from_box_frame is the exact inverse.
PointCloud to_box_frame(const PointCloud& pc, const Box3D& ref);
PointCloud from_box_frame(const PointCloud& pc, const Box3D& ref);

Eigen::Vector3d to_box_frame(const Eigen::Vector3d& p, const Box3D& ref);
Eigen::Vector3d from_box_frame(const Eigen::Vector3d& p, const Box3D& ref);

// Whole-box change of coordinates into/out of ref's box frame (yaw-only).
Box3D box_to_frame(const Box3D& box, const Box3D& ref);
Box3D box_from_frame(const Box3D& box, const Box3D& ref);

// Closed-bound membership test against the box enlarged by `margin` per face.
bool point_in_box(const Eigen::Vector3d& p, const Box3D& box, double margin = 0.0);

// BEV footprint corners, counterclockwise, 4 x 2.
std::array<Eigen::Vector2d, 4> bev_corners(const Box3D& box);

// Convex polygon area (vertices in order).
double polygon_area(const std::vector<Eigen::Vector2d>& poly);

// Sutherland-Hodgman clip of `subject` against convex `clip`.
std::vector<Eigen::Vector2d> clip_convex(const std::vector<Eigen::Vector2d>& subject,
                                         const std::vector<Eigen::Vector2d>& clip);

double bev_intersection_area(const Box3D& a, const Box3D& b);
double bev_iou(const Box3D& a, const Box3D& b);
double iou_3d(const Box3D& a, const Box3D& b);

// Weighted circular mean via the mean resultant vector. On a zero resultant
// the first angle is returned and *ambiguous set.
double cyclic_mean(std::span<const double> angles, std::span<const double> weights,
                   bool* ambiguous = nullptr);

// Flips det by pi when its circular difference to track is obtuse.
double align_heading(double det, double track);

}  // namespace autolabel
