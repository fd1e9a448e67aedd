#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cmrplan {

// Voxel index triple. Axis convention: x = patient left, y = patient
// posterior, z = patient superior; axial slices are fixed-z planes.
struct Index3 {
    std::int64_t x = 0, y = 0, z = 0;
    friend bool operator==(const Index3&, const Index3&) = default;
};

struct Dims {
    std::int64_t nx = 0, ny = 0, nz = 0;

    std::size_t count() const noexcept { return static_cast<std::size_t>(nx * ny * nz); }
    bool contains(const Index3& i) const noexcept
    {
        return i.x >= 0 && i.y >= 0 && i.z >= 0 && i.x < nx && i.y < ny && i.z < nz;
    }
    std::size_t linear(const Index3& i) const noexcept
    {
        return static_cast<std::size_t>((i.z * ny + i.y) * nx + i.x);
    }
    Index3 unravel(std::size_t n) const noexcept
    {
        const auto k = static_cast<std::int64_t>(n);
        return {k % nx, (k / nx) % ny, k / (nx * ny)};
    }
    friend bool operator==(const Dims&, const Dims&) = default;
};

struct Spacing {
    double x = 1.0, y = 1.0, z = 1.0; // mm per voxel
    friend bool operator==(const Spacing&, const Spacing&) = default;
};

struct PhysicalPoint {
    double x = 0.0, y = 0.0, z = 0.0; // mm
    friend bool operator==(const PhysicalPoint&, const PhysicalPoint&) = default;
};

double distance(const PhysicalPoint& a, const PhysicalPoint& b) noexcept;

struct VolumeMeta {
    std::string patient_id;
    int n_coils = 1;
    std::optional<double> snr_tag;
    std::string provenance;
    friend bool operator==(const VolumeMeta&, const VolumeMeta&) = default;
};

// Inclusive lo, exclusive hi.
struct BoxRoi {
    Index3 lo, hi;

    Dims extent() const noexcept { return {hi.x - lo.x, hi.y - lo.y, hi.z - lo.z}; }
    std::size_t count() const noexcept { return extent().count(); }
    bool contains(const Index3& i) const noexcept
    {
        return i.x >= lo.x && i.y >= lo.y && i.z >= lo.z && i.x < hi.x && i.y < hi.y && i.z < hi.z;
    }
    bool overlaps(const BoxRoi& o) const noexcept;
    friend bool operator==(const BoxRoi&, const BoxRoi&) = default;
};

// Throws BoundsError unless lo < hi component-wise and the box fits in dims.
void validate_roi(const BoxRoi& r, const Dims& d);
BoxRoi full_roi(const Dims& d) noexcept;

// 3D scalar grid, x-fastest then y then z. Immutable after construction.
class Volume {
public:
    Volume(Dims dims, Spacing spacing, std::vector<float> data, VolumeMeta meta = {});

    const Dims& dims() const noexcept { return dims_; }
    const Spacing& spacing() const noexcept { return spacing_; }
    const VolumeMeta& meta() const noexcept { return meta_; }
    std::span<const float> data() const noexcept { return data_; }

    float at(const Index3& i) const;
    float operator()(std::int64_t x, std::int64_t y, std::int64_t z) const noexcept
    {
        return data_[static_cast<std::size_t>((z * dims_.ny + y) * dims_.nx + x)];
    }

    // Values of the axial plane z, x-fastest.
    std::span<const float> slice(std::int64_t z) const;

    Volume with_data(std::vector<float> data) const;
    Volume with_meta(VolumeMeta meta) const;

    friend bool operator==(const Volume&, const Volume&) = default;

private:
    Dims dims_;
    Spacing spacing_;
    std::vector<float> data_;
    VolumeMeta meta_;
};

PhysicalPoint world_from_index(const Volume& v, const Index3& i);
PhysicalPoint world_from_index(const Spacing& s, const Index3& i) noexcept;
// Rounds to the nearest voxel; throws BoundsError outside the grid.
Index3 index_from_world(const Volume& v, const PhysicalPoint& p);

struct RoiStats {
    double mean = 0.0;
    double stddev = 0.0; // population form
};

RoiStats roi_stats(const Volume& v, const BoxRoi& r);

// File pair <stem>.json (header) + <stem>.f32 (raw little-endian float32).
void save_volume(const Volume& v, const std::filesystem::path& header_path);
Volume load_volume(const std::filesystem::path& header_path);
std::filesystem::path payload_path(const std::filesystem::path& header_path);

} // namespace cmrplan
