#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "autolabel/geometry.hpp"
#include "autolabel/synth.hpp"

namespace testutil {

inline autolabel::Box3D make_box(double cx, double cy, double cz, double l, double w,
                                 double h, double heading, double score = 1.0,
                                 autolabel::ObjectClass cls = autolabel::ObjectClass::Vehicle) {
  autolabel::Box3D b;
  b.cx = cx;
  b.cy = cy;
  b.cz = cz;
  b.length = l;
  b.width = w;
  b.height = h;
  b.heading = autolabel::normalize_angle(heading);
  b.score = score;
  b.cls = cls;
  return b;
}

// Monte Carlo BEV IoU oracle. Samples the intersection of the two footprints'
// axis-aligned bounding rectangles in vectorized chunks; the hit fraction times
// the rectangle area estimates the intersection area.
inline double mc_bev_iou(const autolabel::Box3D& a, const autolabel::Box3D& b,
                         int64_t n_samples, uint64_t seed) {
  auto bounds = [](const autolabel::Box3D& box, double& xlo, double& xhi, double& ylo,
                   double& yhi) {
    const auto corners = autolabel::bev_corners(box);
    xlo = ylo = std::numeric_limits<double>::infinity();
    xhi = yhi = -std::numeric_limits<double>::infinity();
    for (const auto& c : corners) {
      xlo = std::min(xlo, c.x());
      xhi = std::max(xhi, c.x());
      ylo = std::min(ylo, c.y());
      yhi = std::max(yhi, c.y());
    }
  };
  double axlo, axhi, aylo, ayhi, bxlo, bxhi, bylo, byhi;
  bounds(a, axlo, axhi, aylo, ayhi);
  bounds(b, bxlo, bxhi, bylo, byhi);
  const double xlo = std::max(axlo, bxlo), xhi = std::min(axhi, bxhi);
  const double ylo = std::max(aylo, bylo), yhi = std::min(ayhi, byhi);
  const double area_a = a.length * a.width, area_b = b.length * b.width;
  if (xhi <= xlo || yhi <= ylo) return 0.0;
  const double region = (xhi - xlo) * (yhi - ylo);

  using BoolArray = Eigen::Array<bool, Eigen::Dynamic, 1>;
  auto inside_mask = [](const Eigen::ArrayXd& x, const Eigen::ArrayXd& y,
                        const autolabel::Box3D& box) -> BoolArray {
    const double c = std::cos(box.heading), s = std::sin(box.heading);
    const Eigen::ArrayXd dx = x - box.cx, dy = y - box.cy;
    const Eigen::ArrayXd lx = c * dx + s * dy;
    const Eigen::ArrayXd ly = -s * dx + c * dy;
    return lx.abs() <= 0.5 * box.length && ly.abs() <= 0.5 * box.width;
  };

  autolabel::synth::CounterRng rng(seed, 0, 0, 0x10u);
  const int64_t chunk = 1 << 20;
  int64_t hits = 0, done = 0;
  Eigen::ArrayXd u(chunk), v(chunk);
  while (done < n_samples) {
    const int64_t n = std::min(chunk, n_samples - done);
    for (int64_t i = 0; i < n; ++i) {
      u[i] = rng.uniform(xlo, xhi);
      v[i] = rng.uniform(ylo, yhi);
    }
    const BoolArray in_a = inside_mask(u.head(n), v.head(n), a);
    const BoolArray in_b = inside_mask(u.head(n), v.head(n), b);
    hits += (in_a && in_b).count();
    done += n;
  }
  const double inter = region * static_cast<double>(hits) / static_cast<double>(n_samples);
  const double uni = area_a + area_b - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

inline autolabel::Box3D random_box(autolabel::synth::CounterRng& rng) {
  return make_box(rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0), rng.uniform(-1.0, 1.0),
                  rng.uniform(0.8, 6.0), rng.uniform(0.8, 4.0), rng.uniform(0.8, 3.0),
                  rng.uniform(-autolabel::kPi, autolabel::kPi));
}

}  // namespace testutil
