#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tggat/errors.hpp"

namespace tggat::geo {

template <typename Scalar>
using Point2 = Eigen::Matrix<Scalar, 2, 1>;

template <typename Scalar>
using Polygon = std::vector<Point2<Scalar>>;

using Vec2 = Eigen::Vector2d;

// x east, y north, z altitude; all meters.
struct Position {
  double x = 0.0;
  double y = 0.0;
  double z = 1.0;

  Vec2 planar() const { return {x, y}; }
};

// Radians, always stored in [0, 2*pi). 0 points east, pi/2 north.
class Heading {
 public:
  Heading() = default;
  explicit Heading(double theta) : theta_(canonicalize(theta)) {}

  double radians() const { return theta_; }

  static double canonicalize(double theta) {
    constexpr double kTwoPi = 2.0 * std::numbers::pi;
    double t = std::fmod(theta, kTwoPi);
    if (t < 0.0) t += kTwoPi;
    if (t >= kTwoPi) t = 0.0;
    return t;
  }

 private:
  double theta_ = 0.0;
};

struct DroneState {
  Position position;
  Heading heading;
};

struct Action {
  double dx = 0.0;
  double dy = 0.0;
  double dz = 0.0;
  bool stop = false;

  double planar_norm() const { return std::hypot(dx, dy); }
  double norm() const { return std::sqrt(dx * dx + dy * dy + dz * dz); }
};

// Ground footprint of the camera: four world-frame corners, counter-clockwise.
struct ViewArea {
  std::array<Vec2, 4> corners;

  Vec2 center() const { return 0.25 * (corners[0] + corners[1] + corners[2] + corners[3]); }
  double area() const;
};

struct Trajectory {
  std::vector<ViewArea> areas;
  std::vector<DroneState> states;

  std::size_t size() const { return areas.size(); }
  const ViewArea& target() const { return areas.back(); }
};

// SR and SPL are ratios in [0, 1]; GP is in meters.
struct MetricReport {
  double sr = 0.0;
  double spl = 0.0;
  double gp = 0.0;
  std::size_t n_episodes = 0;
};

struct EpisodeOutcome {
  Trajectory predicted;
  Trajectory ground_truth;
  // Set when the rollout was cut short (e.g. left the world); counts as failure.
  bool aborted = false;
};

inline constexpr double kSuccessIou = 0.4;

// ---------------------------------------------------------------------------
// Convex polygon primitives, generic over the scalar type.

template <typename Scalar>
Scalar cross2(const Point2<Scalar>& a, const Point2<Scalar>& b) {
  return a.x() * b.y() - a.y() * b.x();
}

template <typename Scalar>
Scalar signed_area(std::span<const Point2<Scalar>> poly) {
  const std::size_t n = poly.size();
  if (n < 3) return Scalar(0);
  Scalar acc(0);
  for (std::size_t i = 0; i < n; ++i) acc += cross2<Scalar>(poly[i], poly[(i + 1) % n]);
  return acc / Scalar(2);
}

// Sutherland-Hodgman clip of `subject` against the convex CCW polygon `clip`.
template <typename Scalar>
Polygon<Scalar> clip_convex(std::span<const Point2<Scalar>> subject,
                            std::span<const Point2<Scalar>> clip) {
  Polygon<Scalar> out(subject.begin(), subject.end());
  const std::size_t m = clip.size();
  for (std::size_t e = 0; e < m && !out.empty(); ++e) {
    const Point2<Scalar>& a = clip[e];
    const Point2<Scalar> edge = clip[(e + 1) % m] - a;
    Polygon<Scalar> in;
    in.swap(out);
    const std::size_t n = in.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Point2<Scalar>& p = in[i];
      const Point2<Scalar>& q = in[(i + 1) % n];
      const Scalar sp = cross2<Scalar>(edge, p - a);
      const Scalar sq = cross2<Scalar>(edge, q - a);
      if (sp >= Scalar(0)) out.push_back(p);
      if ((sp >= Scalar(0)) != (sq >= Scalar(0))) {
        const Scalar t = sp / (sp - sq);
        out.push_back(p + t * (q - p));
      }
    }
  }
  return out;
}

template <typename Scalar>
Scalar intersection_area(std::span<const Point2<Scalar>> a, std::span<const Point2<Scalar>> b) {
  const Polygon<Scalar> inter = clip_convex<Scalar>(a, b);
  const Scalar area = signed_area<Scalar>(inter);
  return area > Scalar(0) ? area : Scalar(0);
}

// ---------------------------------------------------------------------------

ViewArea view_area_from_state(const DroneState& state, double fov);

double rect_iou(const ViewArea& a, const ViewArea& b);

bool is_success(const ViewArea& final_area, const ViewArea& target);

Eigen::MatrixXd pairwise_distance_matrix(std::span<const Position> positions);
Eigen::MatrixXd pairwise_distance_matrix(std::span<const Vec2> locations);

double path_length(const Trajectory& traj);

MetricReport compute_metrics(std::span<const EpisodeOutcome> episodes);

}  // namespace tggat::geo
