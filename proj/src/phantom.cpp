#include "cmrplan/phantom.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "cmrplan/error.hpp"
#include "cmrplan/rng.hpp"

namespace cmrplan {

namespace {

bool inside_ellipse(double dx, double dy, double a, double b) { return (dx / a) * (dx / a) + (dy / b) * (dy / b) <= 1.0; }

// Checks the equator of an axis-aligned ellipsoid against the inner torso ellipse.
bool ellipse_within(double cx, double cy, double sx, double sy, double tcx, double tcy, double ta, double tb)
{
    for (int k = 0; k < 72; ++k) {
        const double t = 2.0 * std::numbers::pi * k / 72.0;
        if (!inside_ellipse(cx + sx * std::cos(t) - tcx, cy + sy * std::sin(t) - tcy, ta, tb)) return false;
    }
    return true;
}

} // namespace

io::Json to_json(const PlaneAngles& a) { return {{"azimuth_deg", a.azimuth_deg}, {"elevation_deg", a.elevation_deg}}; }

PlaneAngles plane_angles_from_json(const io::Json& j)
{
    return {io::require(j, "azimuth_deg").get<double>(), io::require(j, "elevation_deg").get<double>()};
}

io::Json to_json(const PhysicalPoint& p) { return io::Json::array({p.x, p.y, p.z}); }

PhysicalPoint point_from_json(const io::Json& j)
{
    if (!j.is_array() || j.size() != 3) throw SchemaError("expected a 3-element point");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

io::Json to_json(const GroundTruth& t)
{
    return {{"lv_centroid_mm", to_json(t.lv_centroid)},
            {"sa", to_json(t.sa)},
            {"ch4", to_json(t.ch4)},
            {"ch2", to_json(t.ch2)},
            {"ch2_axial_planned", t.ch2_axial_planned}};
}

GroundTruth ground_truth_from_json(const io::Json& j)
{
    GroundTruth t;
    t.lv_centroid = point_from_json(io::require(j, "lv_centroid_mm"));
    t.sa = plane_angles_from_json(io::require(j, "sa"));
    t.ch4 = plane_angles_from_json(io::require(j, "ch4"));
    t.ch2 = plane_angles_from_json(io::require(j, "ch2"));
    // Manifests without the flag: an axial 2CH truth marks the case.
    t.ch2_axial_planned = j.contains("ch2_axial_planned") ? j.at("ch2_axial_planned").get<bool>()
                                                          : std::abs(t.ch2.elevation_deg - 90.0) < 0.5;
    return t;
}

io::Json to_json(const BoxRoi& r) { return io::Json::array({r.lo.x, r.lo.y, r.lo.z, r.hi.x, r.hi.y, r.hi.z}); }

BoxRoi box_roi_from_json(const io::Json& j)
{
    if (!j.is_array() || j.size() != 6) throw SchemaError("expected a 6-element ROI");
    return {{j[0].get<std::int64_t>(), j[1].get<std::int64_t>(), j[2].get<std::int64_t>()},
            {j[3].get<std::int64_t>(), j[4].get<std::int64_t>(), j[5].get<std::int64_t>()}};
}

io::Json to_json(const SnrRois& r) { return {{"signal", to_json(r.signal)}, {"background", to_json(r.background)}}; }

SnrRois snr_rois_from_json(const io::Json& j)
{
    return {box_roi_from_json(io::require(j, "signal")), box_roi_from_json(io::require(j, "background"))};
}

void PhantomSpec::validate() const
{
    if (dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0) throw InvariantError("phantom dims must be positive");
    if (!(spacing.x > 0 && spacing.y > 0 && spacing.z > 0)) throw InvariantError("phantom spacing must be positive");
    if (n_coils < 1) throw InvariantError("n_coils must be >= 1");
    if (!(air_intensity < lung_intensity && lung_intensity < muscle_intensity && muscle_intensity < blood_intensity &&
          blood_intensity <= fat_intensity && wall_intensity < blood_intensity))
        throw InvariantError("phantom intensities must satisfy air < lung < muscle < blood <= fat");
    if (!(fat_mm >= 0.0 && fat_mm < std::min(torso_semi_x_mm, torso_semi_y_mm)))
        throw InvariantError("fat thickness must be smaller than the torso");
    if (!(noise_floor_frac >= 0.0)) throw InvariantError("noise floor must be >= 0");
    const double ia = torso_semi_x_mm - fat_mm, ib = torso_semi_y_mm - fat_mm;
    for (const auto* l : {&left_lung, &right_lung})
        if (!ellipse_within(l->center.x, l->center.y, l->semi_x, l->semi_y, torso_center.x, torso_center.y, ia, ib))
            throw InvariantError("lung extends outside the torso");
    const double reach = lv.long_semi_mm + lv.wall_mm;
    if (!ellipse_within(lv.center.x, lv.center.y, reach, reach, torso_center.x, torso_center.y, ia, ib))
        throw InvariantError("LV extends outside the torso");
    if (!(lv.long_semi_mm >= lv.short_semi_mm && lv.short_semi_mm > 0.0 && lv.wall_mm >= 0.0))
        throw InvariantError("LV semi-axes must satisfy long >= short > 0");
    const Index3 c{std::llround(lv.center.x / spacing.x), std::llround(lv.center.y / spacing.y),
                   std::llround(lv.center.z / spacing.z)};
    if (!dims.contains(c)) throw InvariantError("LV centre outside the volume");
}

GroundTruth truth_from_long_axis(const PhysicalPoint& centroid, const PlaneAngles& long_axis, bool ch2_axial_planned)
{
    GroundTruth t;
    t.lv_centroid = centroid;
    t.sa = long_axis;
    const UnitVector3 l = angles_to_normal(long_axis);
    const UnitVector3 n4 = cross(l, {1.0, 0.0, 0.0});
    t.ch4 = normal_to_angles(n4);
    t.ch2 = ch2_axial_planned ? PlaneAngles{0.0, 90.0} : normal_to_angles(cross(l, n4));
    t.ch2_axial_planned = ch2_axial_planned;
    return t;
}

PhantomVolume generate(const PhantomSpec& spec)
{
    spec.validate();
    const auto& d = spec.dims;
    const auto& sp = spec.spacing;
    const UnitVector3 axis = angles_to_normal(spec.lv.long_axis);
    const double ta = spec.torso_semi_x_mm, tb = spec.torso_semi_y_mm;
    const double ia = ta - spec.fat_mm, ib = tb - spec.fat_mm;
    const double sigma = spec.noise_floor_frac * spec.blood_intensity;
    const auto& lv = spec.lv;

    std::vector<float> data(d.count());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Index3 q = d.unravel(i);
        const PhysicalPoint p = world_from_index(sp, q);
        const double dx = p.x - spec.torso_center.x, dy = p.y - spec.torso_center.y;
        double value = spec.air_intensity;
        if (inside_ellipse(dx, dy, ta, tb)) {
            const bool inner = inside_ellipse(dx, dy, ia, ib);
            value = inner ? spec.muscle_intensity : spec.fat_intensity;
            if (inner) {
                for (const auto* l : {&spec.left_lung, &spec.right_lung}) {
                    const double lx = (p.x - l->center.x) / l->semi_x;
                    const double ly = (p.y - l->center.y) / l->semi_y;
                    const double lz = (p.z - l->center.z) / l->semi_z;
                    if (lx * lx + ly * ly + lz * lz <= 1.0) value = spec.lung_intensity;
                }
                const double vx = p.x - lv.center.x, vy = p.y - lv.center.y, vz = p.z - lv.center.z;
                const double along = vx * axis.ux + vy * axis.uy + vz * axis.uz;
                const double perp2 = std::max(vx * vx + vy * vy + vz * vz - along * along, 0.0);
                auto inside_lv = [&](double grow) {
                    const double a = lv.long_semi_mm + grow, b = lv.short_semi_mm + grow;
                    return along * along / (a * a) + perp2 / (b * b) <= 1.0;
                };
                if (inside_lv(lv.wall_mm)) value = inside_lv(0.0) ? spec.blood_intensity : spec.wall_intensity;
            }
        }
        if (sigma > 0.0) {
            CounterStream rng(derive_seed(spec.seed, i));
            const auto [g1, g2] = rng.next_normal_pair();
            value = std::hypot(value + sigma * g1, sigma * g2);
        }
        data[i] = static_cast<float>(value);
    }

    VolumeMeta meta;
    meta.patient_id = spec.patient_id;
    meta.n_coils = spec.n_coils;
    meta.provenance = "phantom seed " + std::to_string(spec.seed);

    SnrRois rois;
    auto lo_idx = [](double mm, double s) { return static_cast<std::int64_t>(std::ceil(mm / s)); };
    auto hi_idx = [](double mm, double s) { return static_cast<std::int64_t>(std::floor(mm / s)) + 1; };
    rois.signal = {{lo_idx(spec.torso_center.x - 0.4 * ta, sp.x), lo_idx(spec.torso_center.y - 0.4 * tb, sp.y), d.nz / 4},
                   {hi_idx(spec.torso_center.x + 0.4 * ta, sp.x), hi_idx(spec.torso_center.y + 0.4 * tb, sp.y),
                    std::max<std::int64_t>(d.nz / 4 + 1, 3 * d.nz / 4)}};
    const std::int64_t corner = std::max<std::int64_t>(4, std::min(d.nx, d.ny) / 8);
    rois.background = {{0, 0, 0}, {corner, corner, d.nz}};
    validate_roi(rois.signal, d);
    validate_roi(rois.background, d);
    for (auto y = rois.background.lo.y; y < rois.background.hi.y; ++y)
        for (auto x = rois.background.lo.x; x < rois.background.hi.x; ++x) {
            const auto p = world_from_index(sp, {x, y, 0});
            if (inside_ellipse(p.x - spec.torso_center.x, p.y - spec.torso_center.y, ta, tb))
                throw InvariantError("background ROI overlaps the torso");
        }

    return {Volume(d, sp, std::move(data), std::move(meta)), truth_from_long_axis(lv.center, lv.long_axis, spec.ch2_axial_planned),
            rois};
}

std::vector<PopulationMember> sample_population(int n, const VariationSpec& var, std::uint64_t seed,
                                                const PhantomSpec& base)
{
    if (n < 1) throw ParameterError("population size must be >= 1");
    std::vector<PopulationMember> out;
    out.reserve(static_cast<std::size_t>(n));
    // Each member draws from its own stream; the rare draw that violates the
    // spec invariants (small torso, thick fat and an enlarged lung together)
    // is redrawn from the next stream of that member.
    constexpr int max_attempts = 1000;
    for (int i = 0, attempt = 0; i < n;) {
        if (attempt == max_attempts) throw ParameterError("variation ranges rarely give a valid phantom");
        Rng rng(derive_seed(seed, 0x706f70ULL, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(attempt)));
        const double scale = 1.0 + uniform(rng, -var.torso_scale_frac, var.torso_scale_frac);
        const double aspect = 1.0 + uniform(rng, -var.torso_aspect_frac, var.torso_aspect_frac);
        const double shift_x = uniform(rng, -var.position_jitter_mm, var.position_jitter_mm);
        const double shift_y = uniform(rng, -var.position_jitter_mm, var.position_jitter_mm);
        const double shift_z = uniform(rng, -var.z_jitter_mm, var.z_jitter_mm);
        const double az = uniform(rng, var.azimuth_lo, var.azimuth_hi);
        const double el = uniform(rng, var.elevation_lo, var.elevation_hi);
        const double asym = 1.0 + uniform(rng, -var.lung_asymmetry_frac, var.lung_asymmetry_frac);
        const double fat = uniform(rng, var.fat_lo_mm, var.fat_hi_mm);
        const double jx = uniform(rng, -var.lv_jitter_mm, var.lv_jitter_mm);
        const double jy = uniform(rng, -var.lv_jitter_mm, var.lv_jitter_mm);
        const double jz = uniform(rng, -var.lv_jitter_mm, var.lv_jitter_mm);
        const bool axial_planned = uniform(rng, 0.0, 1.0) < var.ch2_axial_fraction;

        PhantomSpec s = base;
        char id[32];
        std::snprintf(id, sizeof id, "P%03d", i + 1);
        s.patient_id = id;
        s.seed = derive_seed(seed, static_cast<std::uint64_t>(i) + 1);
        s.torso_center = {base.torso_center.x + shift_x, base.torso_center.y + shift_y, 0.0};
        s.torso_semi_x_mm = base.torso_semi_x_mm * scale;
        s.torso_semi_y_mm = base.torso_semi_y_mm * scale * aspect;
        s.fat_mm = fat;

        auto place = [&](const PhysicalPoint& p, double dz) {
            return PhysicalPoint{s.torso_center.x + scale * (p.x - base.torso_center.x),
                                 s.torso_center.y + scale * (p.y - base.torso_center.y), dz};
        };
        const double lung_z = base.left_lung.center.z + shift_z;
        s.left_lung.center = place(base.left_lung.center, lung_z);
        s.right_lung.center = place(base.right_lung.center, lung_z);
        s.left_lung.semi_x = base.left_lung.semi_x * scale * asym;
        s.left_lung.semi_y = base.left_lung.semi_y * scale * asym;
        s.left_lung.semi_z = base.left_lung.semi_z * scale * asym;
        s.right_lung.semi_x = base.right_lung.semi_x * scale;
        s.right_lung.semi_y = base.right_lung.semi_y * scale;
        s.right_lung.semi_z = base.right_lung.semi_z * scale;

        s.lv.center = place(base.lv.center, lung_z + scale * (base.lv.center.z - base.left_lung.center.z));
        s.lv.center.x += jx;
        s.lv.center.y += jy;
        s.lv.center.z += jz;
        s.lv.long_axis = canonicalize({az, el});
        s.lv.long_semi_mm = base.lv.long_semi_mm * scale;
        s.lv.short_semi_mm = base.lv.short_semi_mm * scale;
        s.lv.wall_mm = base.lv.wall_mm * scale;
        s.ch2_axial_planned = axial_planned;
        try {
            s.validate();
        } catch (const InvariantError&) {
            ++attempt;
            continue;
        }

        out.push_back({s, s.patient_id, truth_from_long_axis(s.lv.center, s.lv.long_axis, axial_planned)});
        ++i;
        attempt = 0;
    }
    return out;
}

} // namespace cmrplan
