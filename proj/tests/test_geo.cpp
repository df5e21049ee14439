#include <doctest.h>

#include "support.hpp"
#include "tggat/geo.hpp"

using namespace tggat;
using testing::box;
using testing::square;

TEST_CASE("view area of a north-east drone at 50 m with a right-angle fov") {
  const geo::ViewArea a = geo::view_area_from_state({{0.0, 0.0, 50.0}, geo::Heading(0.0)}, std::numbers::pi / 2.0);
  CHECK(a.area() == doctest::Approx(10000.0));
  CHECK(a.center().x() == doctest::Approx(0.0));
  CHECK(a.corners[0].x() == doctest::Approx(-50.0));
  CHECK(a.corners[0].y() == doctest::Approx(-50.0));
  CHECK(a.corners[2].x() == doctest::Approx(50.0));
  CHECK(a.corners[2].y() == doctest::Approx(50.0));
}

TEST_CASE("view area scales with altitude and rotates with heading") {
  const geo::ViewArea low = geo::view_area_from_state({{10.0, 20.0, 25.0}, geo::Heading(0.3)}, std::numbers::pi / 2.0);
  const geo::ViewArea high = geo::view_area_from_state({{10.0, 20.0, 50.0}, geo::Heading(0.3)}, std::numbers::pi / 2.0);
  CHECK(high.area() == doctest::Approx(4.0 * low.area()));
  CHECK(low.center().x() == doctest::Approx(10.0));
  CHECK(low.center().y() == doctest::Approx(20.0));
  const geo::Vec2 edge = low.corners[1] - low.corners[0];
  CHECK(std::atan2(edge.y(), edge.x()) == doctest::Approx(0.3));
}

TEST_CASE("view area rejects non-positive altitude and bad fov") {
  CHECK_THROWS_AS(geo::view_area_from_state({{0.0, 0.0, 0.0}, geo::Heading()}, 1.0), DomainError);
  CHECK_THROWS_AS(geo::view_area_from_state({{0.0, 0.0, 10.0}, geo::Heading()}, 0.0), DomainError);
  CHECK_THROWS_AS(geo::view_area_from_state({{0.0, 0.0, 10.0}, geo::Heading()}, std::numbers::pi), DomainError);
}

TEST_CASE("heading canonicalizes into [0, 2pi)") {
  CHECK(geo::Heading(-std::numbers::pi / 2.0).radians() == doctest::Approx(1.5 * std::numbers::pi));
  CHECK(geo::Heading(2.0 * std::numbers::pi).radians() == 0.0);
  CHECK(geo::Heading(5.0 * std::numbers::pi).radians() == doctest::Approx(std::numbers::pi));
}

TEST_CASE("rect_iou on known configurations") {
  CHECK(geo::rect_iou(box(0, 0, 2, 2), box(0, 0, 2, 2)) == doctest::Approx(1.0));
  CHECK(geo::rect_iou(box(0, 0, 2, 2), box(1, 0, 3, 2)) == doctest::Approx(1.0 / 3.0));
  CHECK(geo::rect_iou(box(0, 0, 1, 1), box(2, 2, 3, 3)) == 0.0);
  CHECK(geo::rect_iou(box(0, 0, 4, 4), box(1, 1, 3, 3)) == doctest::Approx(0.25));
  // A square and itself rotated by 45 degrees about the common center.
  const double iou = geo::rect_iou(square(0, 0, 1, 0), square(0, 0, 1, std::numbers::pi / 4));
  CHECK(iou == doctest::Approx((8.0 * (std::sqrt(2.0) - 1.0)) / (8.0 - 8.0 * (std::sqrt(2.0) - 1.0))));
}

TEST_CASE("rect_iou is symmetric, bounded and rejects clockwise corners") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    const geo::ViewArea a = square(u(rng), u(rng), 0.5 + 0.4 * u(rng), 3.0 * u(rng));
    const geo::ViewArea b = square(u(rng), u(rng), 0.5 + 0.4 * u(rng), 3.0 * u(rng));
    const double ab = geo::rect_iou(a, b);
    CHECK(ab == doctest::Approx(geo::rect_iou(b, a)).epsilon(1e-12));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
  }
  geo::ViewArea cw = box(0, 0, 1, 1);
  std::swap(cw.corners[1], cw.corners[3]);
  CHECK_THROWS_AS(geo::rect_iou(cw, box(0, 0, 1, 1)), DomainError);
}

TEST_CASE("rect_iou agrees with a raster oracle") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 10; ++k) {
    const geo::ViewArea a = square(u(rng), u(rng), 0.8 + 0.3 * u(rng), 3.0 * u(rng));
    const geo::ViewArea b = square(u(rng), u(rng), 0.8 + 0.3 * u(rng), 3.0 * u(rng));
    CHECK(std::abs(geo::rect_iou(a, b) - testing::raster_iou(a, b, 400, 100 + k)) < 5e-3);
  }
}

TEST_CASE("success requires IoU strictly above 0.4") {
  // Intersection 1, union 2.5: IoU is exactly the double nearest 0.4.
  const geo::ViewArea a = box(0, 0, 1, 1);
  const geo::ViewArea b = box(0, 0, 1, 2.5);
  CHECK(geo::rect_iou(a, b) == geo::kSuccessIou);
  CHECK_FALSE(geo::is_success(a, b));
  CHECK(geo::is_success(a, box(0, 0, 1, 2.4)));
  CHECK_FALSE(geo::is_success(a, box(0, 0, 1, 2.6)));
}

TEST_CASE("intersection area is generic over the scalar type") {
  const std::vector<geo::Point2<float>> a = {{0.f, 0.f}, {2.f, 0.f}, {2.f, 2.f}, {0.f, 2.f}};
  const std::vector<geo::Point2<float>> b = {{1.f, 1.f}, {3.f, 1.f}, {3.f, 3.f}, {1.f, 3.f}};
  CHECK(geo::intersection_area<float>(a, b) == doctest::Approx(1.0f));
}

TEST_CASE("pairwise distances ignore altitude and are symmetric") {
  const std::vector<geo::Position> p = {{0, 0, 10}, {3, 4, 80}, {6, 8, 30}};
  const Eigen::MatrixXd e = geo::pairwise_distance_matrix(std::span<const geo::Position>(p));
  CHECK(e(0, 1) == 5.0);
  CHECK(e(1, 2) == 5.0);
  CHECK(e(0, 2) == 10.0);
  CHECK(e.diagonal().isZero(0.0));
  CHECK(e == e.transpose());
  CHECK_THROWS_AS(geo::pairwise_distance_matrix(std::span<const geo::Position>()), DomainError);
}

namespace {

geo::Trajectory path(std::initializer_list<geo::Vec2> centers, double half = 10.0) {
  geo::Trajectory t;
  for (const geo::Vec2& c : centers) {
    t.states.push_back({{c.x(), c.y(), half}, geo::Heading()});
    t.areas.push_back(square(c.x(), c.y(), half, 0.0));
  }
  return t;
}

}  // namespace

TEST_CASE("metrics on hand-built episodes") {
  const geo::Trajectory gt = path({{0, 0}, {100, 0}});
  SUBCASE("straight success") {
    const std::vector<geo::EpisodeOutcome> eps = {{path({{0, 0}, {100, 0}}), gt, false}};
    const geo::MetricReport r = geo::compute_metrics(eps);
    CHECK(r.sr == 1.0);
    CHECK(r.spl == 1.0);
    CHECK(r.gp == doctest::Approx(100.0));
  }
  SUBCASE("detour halves SPL") {
    const std::vector<geo::EpisodeOutcome> eps = {{path({{0, 0}, {50, 50}, {100, 100}, {100, 0}}), gt, false}};
    const geo::MetricReport r = geo::compute_metrics(eps);
    CHECK(r.sr == 1.0);
    CHECK(r.spl == doctest::Approx(100.0 / (2.0 * std::sqrt(5000.0) + 100.0)));
  }
  SUBCASE("failure keeps partial goal progress") {
    const std::vector<geo::EpisodeOutcome> eps = {{path({{0, 0}, {60, 0}}), gt, false}};
    const geo::MetricReport r = geo::compute_metrics(eps);
    CHECK(r.sr == 0.0);
    CHECK(r.spl == 0.0);
    CHECK(r.gp == doctest::Approx(60.0));
  }
  SUBCASE("aborted episodes never succeed") {
    const std::vector<geo::EpisodeOutcome> eps = {{path({{0, 0}, {100, 0}}), gt, true}};
    CHECK(geo::compute_metrics(eps).sr == 0.0);
  }
  CHECK_THROWS_AS(geo::compute_metrics(std::span<const geo::EpisodeOutcome>()), DomainError);
}
