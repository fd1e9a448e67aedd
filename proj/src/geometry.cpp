#include "cmrplan/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include <Eigen/Dense>

#include "cmrplan/anatomy.hpp"
#include "cmrplan/error.hpp"

namespace cmrplan {

namespace {

constexpr double kDeg = 180.0 / std::numbers::pi;
constexpr double kRad = std::numbers::pi / 180.0;

struct Pool2 {
    Point2 centroid;
    std::size_t size = 0;
};

Pool2 pool_centroid(std::span<const Index3> pool, const Spacing& s)
{
    double sx = 0.0, sy = 0.0;
    for (const auto& p : pool) {
        sx += static_cast<double>(p.x);
        sy += static_cast<double>(p.y);
    }
    const double n = static_cast<double>(pool.size());
    return {{sx / n * s.x, sy / n * s.y}, pool.size()};
}

} // namespace

UnitVector3 UnitVector3::normalized(double x, double y, double z)
{
    const double n = std::sqrt(x * x + y * y + z * z);
    if (!(n > 0.0) || !std::isfinite(n)) throw ParameterError("cannot normalize a zero or non-finite vector");
    return {x / n, y / n, z / n};
}

UnitVector3 cross(const UnitVector3& a, const UnitVector3& b)
{
    return UnitVector3::normalized(a.uy * b.uz - a.uz * b.uy, a.uz * b.ux - a.ux * b.uz, a.ux * b.uy - a.uy * b.ux);
}

UnitVector3 angles_to_normal(const PlaneAngles& a)
{
    const double az = a.azimuth_deg * kRad;
    const double el = a.elevation_deg * kRad;
    return {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
}

PlaneAngles normal_to_angles(const UnitVector3& n_in)
{
    auto n = UnitVector3::normalized(n_in.ux, n_in.uy, n_in.uz);
    if (n.uz < 0.0) n = {-n.ux, -n.uy, -n.uz};
    const double horiz = std::hypot(n.ux, n.uy);
    const double el = std::atan2(n.uz, horiz) * kDeg;
    if (horiz == 0.0 || el >= 90.0) return {0.0, 90.0};
    double az = std::atan2(n.uy, n.ux) * kDeg;
    if (az < 0.0) az += 360.0;
    if (az >= 360.0) az = 0.0;
    return {az, el};
}

PlaneAngles canonicalize(const PlaneAngles& a) { return normal_to_angles(angles_to_normal(a)); }

double angle3d(const UnitVector3& a, const UnitVector3& b)
{
    const double cx = a.uy * b.uz - a.uz * b.uy;
    const double cy = a.uz * b.ux - a.ux * b.uz;
    const double cz = a.ux * b.uy - a.uy * b.ux;
    return std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), std::abs(a.dot(b))) * kDeg;
}

double angle3d(const PlaneAngles& a, const PlaneAngles& b) { return angle3d(angles_to_normal(a), angles_to_normal(b)); }

Ellipse2D fit_ellipse(std::span<const Point2> points)
{
    const auto n = static_cast<Eigen::Index>(points.size());
    if (n < 6) throw FitError("ellipse fit needs at least 6 points");

    double mx = 0.0, my = 0.0;
    for (const auto& p : points) {
        mx += p.x;
        my += p.y;
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double r2 = 0.0;
    for (const auto& p : points) r2 += (p.x - mx) * (p.x - mx) + (p.y - my) * (p.y - my);
    const double scale = std::sqrt(r2 / (2.0 * static_cast<double>(n)));
    if (!(scale > 0.0)) throw FitError("degenerate point set");

    Eigen::MatrixXd d1(n, 3), d2(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x = (points[i].x - mx) / scale;
        const double y = (points[i].y - my) / scale;
        d1.row(i) << x * x, x * y, y * y;
        d2.row(i) << x, y, 1.0;
    }
    const Eigen::Matrix3d s1 = d1.transpose() * d1;
    const Eigen::Matrix3d s2 = d1.transpose() * d2;
    const Eigen::Matrix3d s3 = d2.transpose() * d2;
    Eigen::FullPivLU<Eigen::Matrix3d> s3_lu(s3);
    s3_lu.setThreshold(1e-10);
    if (!s3_lu.isInvertible()) throw FitError("collinear points");
    const Eigen::Matrix3d t = -s3_lu.solve(s2.transpose());
    const Eigen::Matrix3d m = s1 + s2 * t;
    Eigen::Matrix3d reduced;
    reduced.row(0) = m.row(2) / 2.0;
    reduced.row(1) = -m.row(1);
    reduced.row(2) = m.row(0) / 2.0;

    Eigen::EigenSolver<Eigen::Matrix3d> es(reduced);
    int best = -1;
    double best_lambda = 0.0;
    for (int k = 0; k < 3; ++k) {
        const Eigen::Vector3d v = es.eigenvectors().col(k).real();
        const double cond = 4.0 * v(0) * v(2) - v(1) * v(1);
        const double lambda = es.eigenvalues()(k).real();
        if (cond > 0.0 && (best < 0 || std::abs(lambda) < std::abs(best_lambda))) {
            best = k;
            best_lambda = lambda;
        }
    }
    if (best < 0) throw FitError("no elliptical solution");
    const Eigen::Vector3d a1 = es.eigenvectors().col(best).real();
    const Eigen::Vector3d a2 = t * a1;
    const double A = a1(0), B = a1(1), C = a1(2), D = a2(0), E = a2(1), F = a2(2);

    const double den = B * B - 4.0 * A * C;
    if (!(den < 0.0)) throw FitError("conic is not an ellipse");
    const double x0 = (2.0 * C * D - B * E) / den;
    const double y0 = (2.0 * A * E - B * D) / den;
    const double f0 = A * x0 * x0 + B * x0 * y0 + C * y0 * y0 + D * x0 + E * y0 + F;

    Eigen::Matrix2d q;
    q << A, B / 2.0, B / 2.0, C;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> qs(q);
    const double ax0 = -f0 / qs.eigenvalues()(0);
    const double ax1 = -f0 / qs.eigenvalues()(1);
    if (!(ax0 > 0.0) || !(ax1 > 0.0)) throw FitError("imaginary ellipse");
    const double len0 = std::sqrt(ax0), len1 = std::sqrt(ax1);
    const int major = len0 >= len1 ? 0 : 1;
    const Eigen::Vector2d dir = qs.eigenvectors().col(major);
    double theta = std::atan2(dir(1), dir(0)) * kDeg;
    theta = std::fmod(theta + 360.0, 180.0);
    if (theta >= 180.0) theta = 0.0;

    Ellipse2D e;
    e.center = {mx + scale * x0, my + scale * y0};
    e.semi_major = scale * std::max(len0, len1);
    e.semi_minor = scale * std::min(len0, len1);
    e.theta_deg = theta;
    return e;
}

std::vector<Point2> pool_boundary_points(std::span<const Index3> pool, const Spacing& spacing)
{
    std::set<std::pair<std::int64_t, std::int64_t>> in;
    for (const auto& p : pool) in.emplace(p.x, p.y);
    std::vector<Point2> pts;
    constexpr int dx[4] = {1, -1, 0, 0};
    constexpr int dy[4] = {0, 0, 1, -1};
    for (const auto& [x, y] : in)
        for (int k = 0; k < 4; ++k)
            if (!in.contains({x + dx[k], y + dy[k]}))
                pts.push_back({(static_cast<double>(x) + 0.5 * dx[k]) * spacing.x,
                               (static_cast<double>(y) + 0.5 * dy[k]) * spacing.y});
    return pts;
}

ShortAxisEstimate estimate_short_axis(std::span<const Index3> pool, std::int64_t slice_z, const Volume& v,
                                      const SegParams& p)
{
    if (pool.empty()) throw FitError("empty blood pool");
    const auto& sp = v.spacing();
    const auto boundary = pool_boundary_points(pool, sp);
    if (boundary.size() < 6) throw FitError("blood pool too small for an ellipse fit");

    ShortAxisEstimate est;
    est.ellipse = fit_ellipse(boundary);
    const Pool2 centre = pool_centroid(pool, sp);

    // Centroid drift along z: least-squares slope through the available slices.
    std::vector<std::pair<double, Point2>> samples{{static_cast<double>(slice_z) * sp.z, centre.centroid}};
    const Index3 seed{std::llround(centre.centroid.x / sp.x), std::llround(centre.centroid.y / sp.y), 0};
    for (int dz : {-1, 1}) {
        const auto z = slice_z + dz;
        if (z < 0 || z >= v.dims().nz) continue;
        const auto adj = complete_bright_region(v, axial_component_at(v, {seed.x, seed.y, z}, p));
        if (adj.size() * 4 < centre.size || adj.size() > centre.size * 4) continue;
        samples.emplace_back(static_cast<double>(z) * sp.z, pool_centroid(adj, sp).centroid);
    }
    if (samples.size() < 2) throw FitError("no usable adjacent-slice blood pool");
    est.slices_used = samples.size();
    double mz = 0.0, mx = 0.0, my = 0.0;
    for (const auto& [z, c] : samples) {
        mz += z;
        mx += c.x;
        my += c.y;
    }
    const double k = static_cast<double>(samples.size());
    mz /= k;
    mx /= k;
    my /= k;
    double szz = 0.0, szx = 0.0, szy = 0.0;
    for (const auto& [z, c] : samples) {
        szz += (z - mz) * (z - mz);
        szx += (z - mz) * (c.x - mx);
        szy += (z - mz) * (c.y - my);
    }
    est.drift_mm_per_mm = {szx / szz, szy / szz};

    // For a prolate pool, centroid drift along the major axis per unit z is
    // tan(elevation) * (a^2 - b^2) / b^2 with a, b the cross-section semi-axes.
    const double th = est.ellipse.theta_deg * kRad;
    const double ux = std::cos(th), uy = std::sin(th);
    const double along = est.drift_mm_per_mm.x * ux + est.drift_mm_per_mm.y * uy;
    const double a2 = est.ellipse.semi_major * est.ellipse.semi_major;
    const double b2 = est.ellipse.semi_minor * est.ellipse.semi_minor;
    if (a2 - b2 <= 1e-6 * a2) {
        est.angles = {0.0, 90.0};
    } else {
        const double tilt = along * b2 / (a2 - b2);
        est.angles = normal_to_angles(UnitVector3::normalized(ux, uy, tilt));
    }
    return est;
}

PlaneAngles initial_short_axis(std::span<const Index3> pool, std::int64_t slice_z, const Volume& v,
                               const SegParams& p)
{
    return estimate_short_axis(pool, slice_z, v, p).angles;
}

double mean_abs_deviation(std::span<const double> pred, std::span<const double> truth, bool angular)
{
    if (pred.size() != truth.size()) throw PreconditionError("prediction/truth length mismatch");
    if (pred.empty()) throw PreconditionError("mean absolute deviation of empty lists");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double d = pred[i] - truth[i];
        if (angular) d = std::remainder(d, 360.0);
        sum += std::abs(d);
    }
    return sum / static_cast<double>(pred.size());
}

} // namespace cmrplan
