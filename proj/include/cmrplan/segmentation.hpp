#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "cmrplan/volume.hpp"

namespace cmrplan {

enum class Connectivity { four_2d, eight_2d, six_3d };

// Read-only view of a scalar grid (a whole volume or a single slice).
struct GridView {
    Dims dims;
    std::span<const float> values;

    static GridView of(const Volume& v) { return {v.dims(), v.data()}; }
    static GridView axial(const Volume& v, std::int64_t z) { return {{v.dims().nx, v.dims().ny, 1}, v.slice(z)}; }
};

struct GraphEdge {
    std::uint32_t u = 0, v = 0;
    double w = 0.0;
};

struct GridGraph {
    std::size_t n_nodes = 0;
    std::vector<GraphEdge> edges;
    Connectivity connectivity = Connectivity::four_2d;
};

struct SegParams {
    double k_threshold = 300.0;
    int min_size = 20;
    double presmooth_sigma = 0.8;

    void validate() const;
};

struct Segmentation {
    // Component ids are consecutive from 0 in order of first node appearance.
    std::vector<std::uint32_t> labels;
    std::map<std::uint32_t, std::size_t> component_sizes;
};

struct ComponentInfo {
    std::uint32_t id = 0;
    std::size_t size = 0;
    Index3 centroid;
};

// Separable Gaussian blur along every axis with extent > 1; edges clamp.
std::vector<float> gaussian_smooth(const GridView& g, double sigma);

// Edge weights are |I(u) - I(v)| after optional presmoothing.
GridGraph build_grid_graph(const GridView& g, Connectivity c, double presmooth_sigma = 0.0);

// Sorts edges by (w, u, v); the segmenter consumes edges in that order.
void sort_edges(std::vector<GraphEdge>& edges);

// Felzenszwalb-Huttenlocher merge pass followed by min_size absorption.
Segmentation segment(const GridGraph& g, const SegParams& p);

// Convenience: build graph with p.presmooth_sigma and segment.
Segmentation segment_grid(const GridView& g, Connectivity c, const SegParams& p);

// The n largest components restricted to nodes accepted by mask; ordered by
// size descending, ties by smaller id; centroids are rounded voxel means.
std::vector<ComponentInfo> largest_components(const Segmentation& s, const Dims& dims, std::size_t n,
                                              const std::function<bool(std::size_t)>& mask = {});

// k_threshold is meant for an 8-bit range. This rescales it so that the 99th
// percentile of `values` plays the part of 255, which makes the partition
// independent of the overall intensity scale.
SegParams relative_to(const SegParams& p, std::span<const float> values);

// Segments axial slice seed.z with four-connectivity and returns the voxels
// of the component containing seed, in raster order. k is taken relative to
// the volume's intensity range.
std::vector<Index3> axial_component_at(const Volume& v, const Index3& seed, const SegParams& p);

// Relabels a component assignment canonically (first-appearance order).
Segmentation canonical_segmentation(std::span<const std::uint32_t> raw_labels);

} // namespace cmrplan
