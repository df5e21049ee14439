#include "tggat/geo.hpp"

#include <algorithm>
#include <string>

namespace tggat::geo {
namespace {

void require_valid(const ViewArea& area, const char* what) {
  const double a = area.area();
  if (!(a > 0.0) || !std::isfinite(a)) {
    throw DomainError(std::string(what) + ": view area is degenerate or not counter-clockwise");
  }
}

}  // namespace

double ViewArea::area() const { return signed_area<double>(corners); }

ViewArea view_area_from_state(const DroneState& state, double fov) {
  const Position& p = state.position;
  if (!(p.z > 0.0) || !std::isfinite(p.z)) throw DomainError("view_area_from_state: altitude must be positive");
  if (!(fov > 0.0 && fov < std::numbers::pi)) throw DomainError("view_area_from_state: fov must lie in (0, pi)");

  const double half = p.z * std::tan(0.5 * fov);
  const double c = std::cos(state.heading.radians());
  const double s = std::sin(state.heading.radians());
  const Vec2 center(p.x, p.y);
  const std::array<Vec2, 4> local = {Vec2(-half, -half), Vec2(half, -half), Vec2(half, half), Vec2(-half, half)};

  ViewArea out;
  for (std::size_t i = 0; i < 4; ++i) {
    out.corners[i] = center + Vec2(c * local[i].x() - s * local[i].y(), s * local[i].x() + c * local[i].y());
  }
  return out;
}

double rect_iou(const ViewArea& a, const ViewArea& b) {
  require_valid(a, "rect_iou");
  require_valid(b, "rect_iou");
  const double inter = intersection_area<double>(a.corners, b.corners);
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

bool is_success(const ViewArea& final_area, const ViewArea& target) {
  return rect_iou(final_area, target) > kSuccessIou;
}

Eigen::MatrixXd pairwise_distance_matrix(std::span<const Vec2> locations) {
  const auto n = static_cast<Eigen::Index>(locations.size());
  if (n == 0) throw DomainError("pairwise_distance_matrix: empty location list");
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double dx = locations[i].x() - locations[j].x();
      const double dy = locations[i].y() - locations[j].y();
      e(i, j) = e(j, i) = std::sqrt(dx * dx + dy * dy);
    }
  }
  return e;
}

Eigen::MatrixXd pairwise_distance_matrix(std::span<const Position> positions) {
  std::vector<Vec2> planar;
  planar.reserve(positions.size());
  for (const Position& p : positions) planar.push_back(p.planar());
  return pairwise_distance_matrix(std::span<const Vec2>(planar));
}

double path_length(const Trajectory& traj) {
  double total = 0.0;
  for (std::size_t i = 1; i < traj.areas.size(); ++i) {
    total += (traj.areas[i].center() - traj.areas[i - 1].center()).norm();
  }
  return total;
}

MetricReport compute_metrics(std::span<const EpisodeOutcome> episodes) {
  if (episodes.empty()) throw DomainError("compute_metrics: no episodes");
  MetricReport report;
  report.n_episodes = episodes.size();
  double sr = 0.0, spl = 0.0, gp = 0.0;
  for (const EpisodeOutcome& ep : episodes) {
    if (ep.predicted.areas.empty() || ep.ground_truth.areas.empty()) {
      throw DomainError("compute_metrics: empty trajectory");
    }
    const ViewArea& target = ep.ground_truth.target();
    const ViewArea& start = ep.predicted.areas.front();
    const ViewArea& last = ep.predicted.areas.back();
    const bool success = !ep.aborted && is_success(last, target);

    const double shortest = (start.center() - target.center()).norm();
    const double travelled = path_length(ep.predicted);
    double spl_term = 0.0;
    if (success) {
      const double denom = std::max(travelled, shortest);
      spl_term = denom > 0.0 ? shortest / denom : 1.0;
    }
    sr += success ? 1.0 : 0.0;
    spl += spl_term;
    gp += shortest - (last.center() - target.center()).norm();
  }
  const double n = static_cast<double>(episodes.size());
  report.sr = sr / n;
  report.spl = spl / n;
  report.gp = gp / n;
  return report;
}

}  // namespace tggat::geo
