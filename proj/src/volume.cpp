#include "cmrplan/volume.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cmrplan/error.hpp"
#include "cmrplan/io.hpp"

namespace cmrplan {

namespace {

std::string describe(const Index3& i)
{
    std::ostringstream os;
    os << '(' << i.x << ',' << i.y << ',' << i.z << ')';
    return os.str();
}

void validate(const Dims& dims, const Spacing& spacing, std::span<const float> data, const VolumeMeta& meta)
{
    if (dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0)
        throw InvariantError("volume dims must be positive");
    if (data.size() != dims.count())
        throw InvariantError("volume data length " + std::to_string(data.size()) + " != nx*ny*nz " +
                             std::to_string(dims.count()));
    if (!(spacing.x > 0.0 && spacing.y > 0.0 && spacing.z > 0.0) || !std::isfinite(spacing.x) ||
        !std::isfinite(spacing.y) || !std::isfinite(spacing.z))
        throw InvariantError("volume spacing must be finite and positive");
    if (meta.n_coils < 1) throw InvariantError("n_coils must be >= 1");
    for (float f : data)
        if (!std::isfinite(f)) throw InvariantError("volume contains non-finite values");
}

} // namespace

double distance(const PhysicalPoint& a, const PhysicalPoint& b) noexcept
{
    return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z));
}

bool BoxRoi::overlaps(const BoxRoi& o) const noexcept
{
    return lo.x < o.hi.x && o.lo.x < hi.x && lo.y < o.hi.y && o.lo.y < hi.y && lo.z < o.hi.z && o.lo.z < hi.z;
}

void validate_roi(const BoxRoi& r, const Dims& d)
{
    if (!(r.lo.x < r.hi.x && r.lo.y < r.hi.y && r.lo.z < r.hi.z))
        throw PreconditionError("empty ROI " + describe(r.lo) + ".." + describe(r.hi));
    if (r.lo.x < 0 || r.lo.y < 0 || r.lo.z < 0 || r.hi.x > d.nx || r.hi.y > d.ny || r.hi.z > d.nz)
        throw BoundsError("ROI " + describe(r.lo) + ".." + describe(r.hi) + " exceeds volume dims");
}

BoxRoi full_roi(const Dims& d) noexcept { return {{0, 0, 0}, {d.nx, d.ny, d.nz}}; }

Volume::Volume(Dims dims, Spacing spacing, std::vector<float> data, VolumeMeta meta)
    : dims_(dims), spacing_(spacing), data_(std::move(data)), meta_(std::move(meta))
{
    validate(dims_, spacing_, data_, meta_);
}

float Volume::at(const Index3& i) const
{
    if (!dims_.contains(i)) throw BoundsError("index " + describe(i) + " outside volume");
    return data_[dims_.linear(i)];
}

std::span<const float> Volume::slice(std::int64_t z) const
{
    if (z < 0 || z >= dims_.nz) throw BoundsError("slice " + std::to_string(z) + " outside volume");
    const auto n = static_cast<std::size_t>(dims_.nx * dims_.ny);
    return std::span<const float>(data_).subspan(static_cast<std::size_t>(z) * n, n);
}

Volume Volume::with_data(std::vector<float> data) const { return Volume(dims_, spacing_, std::move(data), meta_); }

Volume Volume::with_meta(VolumeMeta meta) const { return Volume(dims_, spacing_, data_, std::move(meta)); }

PhysicalPoint world_from_index(const Spacing& s, const Index3& i) noexcept
{
    return {static_cast<double>(i.x) * s.x, static_cast<double>(i.y) * s.y, static_cast<double>(i.z) * s.z};
}

PhysicalPoint world_from_index(const Volume& v, const Index3& i)
{
    if (!v.dims().contains(i)) throw BoundsError("index " + describe(i) + " outside volume");
    return world_from_index(v.spacing(), i);
}

Index3 index_from_world(const Volume& v, const PhysicalPoint& p)
{
    const auto& s = v.spacing();
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
        throw BoundsError("non-finite physical point");
    const Index3 i{std::llround(p.x / s.x), std::llround(p.y / s.y), std::llround(p.z / s.z)};
    if (!v.dims().contains(i)) throw BoundsError("point maps to " + describe(i) + " outside volume");
    return i;
}

RoiStats roi_stats(const Volume& v, const BoxRoi& r)
{
    validate_roi(r, v.dims());
    double sum = 0.0;
    for (auto z = r.lo.z; z < r.hi.z; ++z)
        for (auto y = r.lo.y; y < r.hi.y; ++y)
            for (auto x = r.lo.x; x < r.hi.x; ++x) sum += v(x, y, z);
    const double n = static_cast<double>(r.count());
    const double mean = sum / n;
    double ss = 0.0;
    for (auto z = r.lo.z; z < r.hi.z; ++z)
        for (auto y = r.lo.y; y < r.hi.y; ++y)
            for (auto x = r.lo.x; x < r.hi.x; ++x) {
                const double d = v(x, y, z) - mean;
                ss += d * d;
            }
    return {mean, std::sqrt(ss / n)};
}

std::filesystem::path payload_path(const std::filesystem::path& header_path)
{
    auto p = header_path;
    p.replace_extension(".f32");
    return p;
}

void save_volume(const Volume& v, const std::filesystem::path& header_path)
{
    const auto& d = v.dims();
    const auto& s = v.spacing();
    const auto& m = v.meta();
    const auto payload = payload_path(header_path);

    io::Json h;
    h["dims"] = {d.nx, d.ny, d.nz};
    h["spacing_mm"] = {s.x, s.y, s.z};
    h["dtype"] = "f32le";
    h["payload"] = payload.filename().string();
    h["patient_id"] = m.patient_id;
    h["n_coils"] = m.n_coils;
    h["snr_tag"] = m.snr_tag ? io::Json(*m.snr_tag) : io::Json(nullptr);
    h["provenance"] = m.provenance;

    std::string bytes(v.data().size() * 4, '\0');
    std::size_t o = 0;
    for (float f : v.data()) {
        auto u = std::bit_cast<std::uint32_t>(f);
        for (int b = 0; b < 4; ++b) bytes[o++] = static_cast<char>((u >> (8 * b)) & 0xffu);
    }
    io::write_file_atomic(payload, bytes);
    io::write_json_atomic(header_path, h);
}

Volume load_volume(const std::filesystem::path& header_path)
{
    io::Json h;
    try {
        h = io::read_json(header_path);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed volume header " + header_path.string() + ": " + e.what());
    }
    Dims dims;
    Spacing spacing;
    VolumeMeta meta;
    std::filesystem::path payload;
    try {
        const auto& jd = io::require(h, "dims");
        const auto& js = io::require(h, "spacing_mm");
        if (!jd.is_array() || jd.size() != 3 || !js.is_array() || js.size() != 3)
            throw FormatError("dims and spacing_mm must be 3-element arrays");
        dims = {jd[0].get<std::int64_t>(), jd[1].get<std::int64_t>(), jd[2].get<std::int64_t>()};
        spacing = {js[0].get<double>(), js[1].get<double>(), js[2].get<double>()};
        if (io::require(h, "dtype").get<std::string>() != "f32le") throw FormatError("unsupported dtype");
        meta.patient_id = io::require(h, "patient_id").get<std::string>();
        meta.n_coils = io::require(h, "n_coils").get<int>();
        const auto& tag = io::require(h, "snr_tag");
        if (!tag.is_null()) meta.snr_tag = tag.get<double>();
        meta.provenance = h.value("provenance", std::string{});
        payload = header_path.parent_path() /
                  h.value("payload", payload_path(header_path).filename().string());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed volume header " + header_path.string() + ": " + e.what());
    } catch (const SchemaError& e) {
        throw FormatError(e.what());
    }
    if (dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0) throw FormatError("non-positive dims in header");

    const std::string bytes = io::read_file(payload);
    if (bytes.size() % 4 != 0 || bytes.size() / 4 != dims.count())
        throw FormatError("payload holds " + std::to_string(bytes.size() / 4) + " values, header dims need " +
                          std::to_string(dims.count()));
    std::vector<float> data(dims.count());
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::uint32_t u = 0;
        for (int b = 0; b < 4; ++b)
            u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 * i + b])) << (8 * b);
        data[i] = std::bit_cast<float>(u);
    }
    return Volume(dims, spacing, std::move(data), std::move(meta));
}

} // namespace cmrplan
