#pragma once

#include <span>
#include <vector>

#include "cmrplan/segmentation.hpp"
#include "cmrplan/volume.hpp"

namespace cmrplan {

// Plane orientation as the azimuth/elevation of its normal. Azimuth runs from
// +x toward +y in the axial plane; elevation from the axial plane toward +z.
// Canonical form: azimuth in [0, 360), elevation in [0, 90], azimuth 0 when
// elevation is 90.
struct PlaneAngles {
    double azimuth_deg = 0.0;
    double elevation_deg = 0.0;
    friend bool operator==(const PlaneAngles&, const PlaneAngles&) = default;
};

struct UnitVector3 {
    double ux = 1.0, uy = 0.0, uz = 0.0;

    // Throws ParameterError for a zero or non-finite vector.
    static UnitVector3 normalized(double x, double y, double z);
    double dot(const UnitVector3& o) const noexcept { return ux * o.ux + uy * o.uy + uz * o.uz; }
};

UnitVector3 cross(const UnitVector3& a, const UnitVector3& b);

struct Point2 {
    double x = 0.0, y = 0.0;
};

struct Ellipse2D {
    Point2 center;
    double semi_major = 0.0;
    double semi_minor = 0.0;
    double theta_deg = 0.0; // direction of the major axis, [0, 180)
};

// Normal for any (azimuth, elevation); the inputs need not be canonical.
UnitVector3 angles_to_normal(const PlaneAngles& a);
// Flips to uz >= 0 first (planes are unoriented), then decomposes.
PlaneAngles normal_to_angles(const UnitVector3& n);
PlaneAngles canonicalize(const PlaneAngles& a);

// Unoriented angle between plane normals, degrees in [0, 90].
double angle3d(const PlaneAngles& a, const PlaneAngles& b);
double angle3d(const UnitVector3& a, const UnitVector3& b);

// Direct least-squares conic fit constrained to ellipses (4AC - B^2 = 1),
// solved in the numerically stable partitioned form on centred, scaled data.
Ellipse2D fit_ellipse(std::span<const Point2> points);

struct ShortAxisEstimate {
    PlaneAngles angles;
    Ellipse2D ellipse;             // fitted to the central slice pool, mm
    Point2 drift_mm_per_mm;        // in-plane centroid drift per mm of z
    std::size_t slices_used = 0;
};

// Initial short-axis orientation from an LV blood pool on one axial slice.
// The ellipse major axis gives the in-plane long-axis direction; the drift of
// pool centroids across the adjacent slices, scaled by the cross-section
// shape, gives its tilt out of the axial plane.
ShortAxisEstimate estimate_short_axis(std::span<const Index3> pool, std::int64_t slice_z, const Volume& v,
                                      const SegParams& p);
PlaneAngles initial_short_axis(std::span<const Index3> pool, std::int64_t slice_z, const Volume& v,
                               const SegParams& p);

// Mean |pred - truth|; angular differences are wrapped to [-180, 180].
double mean_abs_deviation(std::span<const double> pred, std::span<const double> truth, bool angular = false);

// Boundary crack midpoints of a 2D pixel set (mm), used for ellipse fitting.
std::vector<Point2> pool_boundary_points(std::span<const Index3> pool, const Spacing& spacing);

} // namespace cmrplan
