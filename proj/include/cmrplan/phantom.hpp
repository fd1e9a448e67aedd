#pragma once

#include <cstdint>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "cmrplan/geometry.hpp"
#include "cmrplan/io.hpp"
#include "cmrplan/noise.hpp"
#include "cmrplan/volume.hpp"

namespace cmrplan {

// Technologist-style plane truths for one localizer.
struct GroundTruth {
    PhysicalPoint lv_centroid;
    PlaneAngles sa;
    PlaneAngles ch4;
    PlaneAngles ch2;
    bool ch2_axial_planned = false;
};

io::Json to_json(const GroundTruth& t);
GroundTruth ground_truth_from_json(const io::Json& j);
io::Json to_json(const PlaneAngles& a);
PlaneAngles plane_angles_from_json(const io::Json& j);
io::Json to_json(const PhysicalPoint& p);
PhysicalPoint point_from_json(const io::Json& j);
io::Json to_json(const BoxRoi& r);
BoxRoi box_roi_from_json(const io::Json& j);
io::Json to_json(const SnrRois& r);
SnrRois snr_rois_from_json(const io::Json& j);

struct LungSpec {
    PhysicalPoint center;
    double semi_x = 35.0, semi_y = 45.0, semi_z = 60.0;
};

struct LvSpec {
    PhysicalPoint center;
    PlaneAngles long_axis{135.0, 30.0}; // canonical
    double long_semi_mm = 40.0;         // blood pool, along the long axis
    double short_semi_mm = 20.0;
    double wall_mm = 9.0;
};

// Synthetic localizer: an elliptic-cylinder torso (with a subcutaneous fat
// ring), two lung ellipsoids and a prolate LV (myocardial wall + blood pool).
struct PhantomSpec {
    std::string patient_id = "phantom";
    Dims dims{128, 128, 32};
    Spacing spacing{3.125, 3.125, 8.0};
    PhysicalPoint torso_center{200.0, 200.0, 0.0}; // z ignored
    double torso_semi_x_mm = 150.0;
    double torso_semi_y_mm = 100.0;
    double fat_mm = 10.0;
    LungSpec left_lung{{280.0, 212.0, 140.0}};
    LungSpec right_lung{{120.0, 212.0, 140.0}};
    LvSpec lv{{220.0, 175.0, 100.0}};

    float air_intensity = 0.0f;
    float lung_intensity = 40.0f;
    float muscle_intensity = 120.0f;
    float wall_intensity = 110.0f;
    float blood_intensity = 220.0f;
    float fat_intensity = 240.0f;
    double noise_floor_frac = 0.01; // Rician floor sigma as a fraction of blood intensity
    int n_coils = 8;
    bool ch2_axial_planned = false;
    std::uint64_t seed = 0;

    void validate() const;
};

struct PhantomVolume {
    Volume volume;
    GroundTruth truth;
    SnrRois rois;
};

// Plane truths implied by an LV long axis: SA normal along the axis; the 4CH
// plane contains the axis and the x direction; the 2CH plane contains the
// axis and is orthogonal to 4CH.
GroundTruth truth_from_long_axis(const PhysicalPoint& centroid, const PlaneAngles& long_axis, bool ch2_axial_planned);

PhantomVolume generate(const PhantomSpec& spec);

struct VariationSpec {
    double torso_scale_frac = 0.20;         // +- uniform
    double torso_aspect_frac = 0.08;        // +- on semi_y independent of scale
    double position_jitter_mm = 15.0;       // +- torso translation in x and y
    double z_jitter_mm = 16.0;              // +- anatomy translation in z
    double azimuth_lo = 115.0, azimuth_hi = 155.0;
    double elevation_lo = 15.0, elevation_hi = 45.0;
    double lung_asymmetry_frac = 0.15;      // +- on left lung semi-axes
    double fat_lo_mm = 6.0, fat_hi_mm = 16.0;
    double lv_jitter_mm = 3.0;              // +- LV centre offset
    double ch2_axial_fraction = 0.0;
};

struct PopulationMember {
    PhantomSpec spec;
    std::string patient_id;
    GroundTruth truth;
};

std::vector<PopulationMember> sample_population(int n, const VariationSpec& variation, std::uint64_t seed,
                                                const PhantomSpec& base = {});

} // namespace cmrplan
