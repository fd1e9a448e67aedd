#pragma once

#include <array>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cmrplan/geometry.hpp"
#include "cmrplan/io.hpp"
#include "cmrplan/segmentation.hpp"
#include "cmrplan/volume.hpp"

namespace cmrplan {

struct AnatomyConfig {
    SegParams lung_seg{600.0, 50, 0.8};
    SegParams pool_seg{150.0, 20, 0.8};
};

struct CentroidFeatures {
    double torso_height_mm = 0.0;
    double torso_width_mm = 0.0;
    PhysicalPoint left_lung_centroid;
    PhysicalPoint right_lung_centroid;

    static constexpr std::size_t size = 8;
    static const std::array<std::string, size>& names();
    std::array<double, size> values() const;
};

struct AngulationFeatures {
    double torso_height_mm = 0.0;
    double torso_width_mm = 0.0;
    double torso_aspect = 0.0;   // width / height
    double torso_area_mm2 = 0.0; // width * height
    double fat_fraction = 0.0;
    double lung_size_ratio = 0.0; // left / right voxel counts
    double sa_init_azimuth_deg = 0.0;
    double sa_init_elevation_deg = 0.0;

    static constexpr std::size_t size = 8;
    static const std::array<std::string, size>& names();
    std::array<double, size> values() const;
};

struct LungCentroids {
    PhysicalPoint left, right;
    std::size_t left_size = 0, right_size = 0;
};

// Everything the feature records need, computed once per volume.
struct AnatomySummary {
    BoxRoi torso;
    double torso_width_mm = 0.0;
    double torso_height_mm = 0.0;
    LungCentroids lungs;
    double fat_fraction = 0.0;
};

// Two-class Otsu: voxels strictly above the returned value form the bright class.
double otsu_threshold(std::span<const float> values);
// Three-class Otsu thresholds (low, high) over 256 bins.
std::pair<double, double> otsu_thresholds3(std::span<const float> values);

// Presmoothing blurs the rim of a bright axial region and those rim voxels
// tend to split off into their own components. Grows the region back through
// 4-neighbours at or above the Otsu threshold of a window around it, at most
// `reach` steps from the original region. Returns raster order.
std::vector<Index3> complete_bright_region(const Volume& v, std::span<const Index3> region, int reach = 3);

BoxRoi torso_bbox(const Volume& v);
// (width along x, height along y), mm.
std::pair<double, double> torso_dims(const BoxRoi& b, const Spacing& spacing);
LungCentroids lung_centroids(const Volume& v, const BoxRoi& torso, const SegParams& p = AnatomyConfig{}.lung_seg);
double fat_fraction(const Volume& v, const BoxRoi& torso);
std::vector<Index3> lv_bloodpool(const Volume& v, const PhysicalPoint& lv_centroid,
                                 const SegParams& p = AnatomyConfig{}.pool_seg);

AnatomySummary extract_anatomy(const Volume& v, const AnatomyConfig& cfg = {});

CentroidFeatures centroid_features(const AnatomySummary& a);
CentroidFeatures centroid_features(const Volume& v, const AnatomyConfig& cfg = {});
AngulationFeatures angulation_features(const AnatomySummary& a, const PlaneAngles& sa_init);
AngulationFeatures angulation_features(const Volume& v, const PlaneAngles& sa_init, const AnatomyConfig& cfg = {});

io::Json to_json(const CentroidFeatures& f);
io::Json to_json(const AngulationFeatures& f);
io::Json to_json(const SegParams& p);
io::Json to_json(const AnatomyConfig& c);
CentroidFeatures centroid_features_from_json(const io::Json& j);
AngulationFeatures angulation_features_from_json(const io::Json& j);
SegParams seg_params_from_json(const io::Json& j);
AnatomyConfig anatomy_config_from_json(const io::Json& j);

} // namespace cmrplan
