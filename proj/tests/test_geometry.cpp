#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "cmrplan/anatomy.hpp"
#include "cmrplan/error.hpp"
#include "cmrplan/geometry.hpp"
#include "cmrplan/phantom.hpp"

using namespace cmrplan;

namespace {

constexpr double deg = std::numbers::pi / 180.0;

std::vector<Point2> ellipse_points(Point2 c, double a, double b, double theta_deg, int n, double phase = 0.3)
{
    std::vector<Point2> pts;
    const double t = theta_deg * deg;
    for (int i = 0; i < n; ++i) {
        const double s = phase + 2.0 * std::numbers::pi * i / n;
        const double x = a * std::cos(s), y = b * std::sin(s);
        pts.push_back({c.x + x * std::cos(t) - y * std::sin(t), c.y + x * std::sin(t) + y * std::cos(t)});
    }
    return pts;
}

double angle_diff180(double a, double b)
{
    double d = std::fmod(std::abs(a - b), 180.0);
    return std::min(d, 180.0 - d);
}

PlaneAngles sa_init_for(const PhantomVolume& pv)
{
    const AnatomyConfig cfg;
    const auto pool = lv_bloodpool(pv.volume, pv.truth.lv_centroid, cfg.pool_seg);
    const auto z = index_from_world(pv.volume, pv.truth.lv_centroid).z;
    return initial_short_axis(pool, z, pv.volume, cfg.pool_seg);
}

} // namespace

TEST_SUITE("geometry")
{
    TEST_CASE("angle and normal conventions")
    {
        const auto n = angles_to_normal({0.0, 0.0});
        CHECK(n.ux == doctest::Approx(1.0));
        CHECK(n.uy == doctest::Approx(0.0));
        CHECK(n.uz == doctest::Approx(0.0));
        CHECK(normal_to_angles({0, 0, 1}) == PlaneAngles{0.0, 90.0});
        CHECK(normal_to_angles({0, 0, -1}) == PlaneAngles{0.0, 90.0});
        const auto y = normal_to_angles({0, 1, 0});
        CHECK(y.azimuth_deg == doctest::Approx(90.0));
        CHECK(y.elevation_deg == doctest::Approx(0.0));
        CHECK_THROWS_AS(UnitVector3::normalized(0, 0, 0), ParameterError);
        CHECK_THROWS_AS(UnitVector3::normalized(NAN, 0, 0), ParameterError);
    }

    TEST_CASE("round trip on random canonical angles")
    {
        std::mt19937_64 rng(42);
        std::uniform_real_distribution<double> az(0.0, 360.0), el(0.0, 90.0);
        for (int i = 0; i < 10000; ++i) {
            const PlaneAngles a{az(rng), el(rng)};
            const auto b = normal_to_angles(angles_to_normal(a));
            REQUIRE(std::abs(std::remainder(b.azimuth_deg - a.azimuth_deg, 360.0)) < 1e-9);
            REQUIRE(b.elevation_deg == doctest::Approx(a.elevation_deg).epsilon(1e-12));
            REQUIRE(b.azimuth_deg >= 0.0);
            REQUIRE(b.azimuth_deg < 360.0);
        }
    }

    TEST_CASE("canonicalize")
    {
        const auto a = canonicalize({-30.0, 20.0});
        CHECK(a.azimuth_deg == doctest::Approx(330.0));
        CHECK(a.elevation_deg == doctest::Approx(20.0));
        // A downward normal is the same plane as its flip.
        const auto b = canonicalize({10.0, -20.0});
        CHECK(b.azimuth_deg == doctest::Approx(190.0));
        CHECK(b.elevation_deg == doctest::Approx(20.0));
        CHECK(canonicalize({123.0, 90.0}) == PlaneAngles{0.0, 90.0});
    }

    TEST_CASE("angle3d axioms")
    {
        CHECK(angle3d(PlaneAngles{40, 20}, PlaneAngles{40, 20}) == doctest::Approx(0.0));
        CHECK(angle3d(UnitVector3{1, 0, 0}, UnitVector3{0, 1, 0}) == doctest::Approx(90.0));
        CHECK(angle3d(UnitVector3{0.6, 0.8, 0}, UnitVector3{-0.6, -0.8, 0}) == doctest::Approx(0.0));

        std::mt19937_64 rng(9);
        std::uniform_real_distribution<double> az(0.0, 360.0), el(0.0, 90.0);
        for (int i = 0; i < 2000; ++i) {
            const PlaneAngles a{az(rng), el(rng)}, b{az(rng), el(rng)};
            const double ab = angle3d(a, b);
            REQUIRE(ab == angle3d(b, a));
            REQUIRE(ab >= 0.0);
            REQUIRE(ab <= 90.0);
            REQUIRE(angle3d(a, a) == doctest::Approx(0.0));
        }
    }

    TEST_CASE("ellipse fit recovers exact ellipses")
    {
        const auto e = fit_ellipse(ellipse_points({5, 5}, 20, 10, 0, 32));
        CHECK(e.center.x == doctest::Approx(5).epsilon(1e-6));
        CHECK(e.center.y == doctest::Approx(5).epsilon(1e-6));
        CHECK(e.semi_major == doctest::Approx(20).epsilon(1e-6));
        CHECK(e.semi_minor == doctest::Approx(10).epsilon(1e-6));
        CHECK(angle_diff180(e.theta_deg, 0.0) < 1e-6);

        const auto r = fit_ellipse(ellipse_points({-3, 12}, 15, 6, 30, 40));
        CHECK(angle_diff180(r.theta_deg, 30.0) < 1e-4);
        CHECK(r.theta_deg >= 0.0);
        CHECK(r.theta_deg < 180.0);

        const auto c = fit_ellipse(ellipse_points({1, 2}, 7, 7, 0, 24));
        CHECK(c.semi_major == doctest::Approx(7).epsilon(1e-6));
        CHECK(c.semi_minor == doctest::Approx(7).epsilon(1e-6));
    }

    TEST_CASE("ellipse fit is rigid-motion equivariant")
    {
        const auto pts = ellipse_points({4, -2}, 12, 5, 70, 30);
        const auto base = fit_ellipse(pts);
        const double rot = 25.0 * deg;
        std::vector<Point2> moved;
        for (const auto& p : pts)
            moved.push_back({p.x * std::cos(rot) - p.y * std::sin(rot) + 100.0, p.x * std::sin(rot) + p.y * std::cos(rot) - 40.0});
        const auto m = fit_ellipse(moved);
        CHECK(m.center.x == doctest::Approx(base.center.x * std::cos(rot) - base.center.y * std::sin(rot) + 100.0));
        CHECK(m.center.y == doctest::Approx(base.center.x * std::sin(rot) + base.center.y * std::cos(rot) - 40.0));
        CHECK(m.semi_major == doctest::Approx(base.semi_major));
        CHECK(m.semi_minor == doctest::Approx(base.semi_minor));
        CHECK(angle_diff180(m.theta_deg, base.theta_deg + 25.0) < 1e-6);
    }

    TEST_CASE("ellipse fit rejects degenerate input")
    {
        std::vector<Point2> line;
        for (int i = 0; i < 10; ++i) line.push_back({double(i), 2.0 * i});
        CHECK_THROWS_AS(fit_ellipse(line), FitError);
        CHECK_THROWS_AS(fit_ellipse(ellipse_points({0, 0}, 3, 2, 0, 5)), FitError);
    }

    TEST_CASE("mean absolute deviation")
    {
        const std::vector<double> a{1, 3}, z{0, 0};
        CHECK(mean_abs_deviation(a, a) == 0.0);
        CHECK(mean_abs_deviation(a, z) == doctest::Approx(2.0));
        const std::vector<double> p{359}, t{1};
        CHECK(mean_abs_deviation(p, t, true) == doctest::Approx(2.0));
        CHECK(mean_abs_deviation(p, t, false) == doctest::Approx(358.0));
        const std::vector<double> one{1};
        CHECK_THROWS(mean_abs_deviation(a, one));
        CHECK_THROWS(mean_abs_deviation(std::vector<double>{}, std::vector<double>{}));
    }

    TEST_CASE("initial short axis on a phantom")
    {
        const auto pv = generate(PhantomSpec{});
        const auto init = sa_init_for(pv);
        CHECK(angle3d(init, pv.truth.sa) <= 10.0);

        // Intensity scaling leaves the estimate unchanged.
        std::vector<float> scaled(pv.volume.data().begin(), pv.volume.data().end());
        for (auto& x : scaled) x *= 3.0f;
        PhantomVolume pv3 = pv;
        pv3.volume = pv.volume.with_data(scaled);
        const auto init3 = sa_init_for(pv3);
        CHECK(init3.azimuth_deg == doctest::Approx(init.azimuth_deg));
        CHECK(init3.elevation_deg == doctest::Approx(init.elevation_deg));
    }

    TEST_CASE("initial short axis follows an azimuth rotation")
    {
        PhantomSpec a, b;
        a.lv.long_axis = {125.0, 30.0};
        b.lv.long_axis = {145.0, 30.0};
        const auto ia = sa_init_for(generate(a));
        const auto ib = sa_init_for(generate(b));
        CHECK(std::abs(std::remainder(ib.azimuth_deg - ia.azimuth_deg, 360.0) - 20.0) <= 1.0);
    }

    TEST_CASE("in-plane long axis gives zero elevation")
    {
        PhantomSpec s;
        s.lv.long_axis = {135.0, 0.0};
        s.lv.center.z = 104.0; // on a slice centre
        s.noise_floor_frac = 0.0;
        // Segmentation is image-global, so the rest of the volume must be
        // mirror-symmetric about that slice too.
        s.left_lung.center.z = 104.0;
        s.right_lung.center.z = 104.0;
        const auto init = sa_init_for(generate(s));
        CHECK(std::abs(init.elevation_deg) < 1e-6);
    }
}
