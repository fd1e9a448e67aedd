#include "cmrplan/anatomy.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>

#include "cmrplan/error.hpp"

namespace cmrplan {

namespace {

constexpr int kBins = 256;

struct Histogram {
    double lo = 0.0, width = 0.0;
    std::array<double, kBins> p{};
    bool constant = true;
};

Histogram histogram(std::span<const float> values)
{
    Histogram h;
    if (values.empty()) return h;
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    h.lo = *mn;
    if (!(*mx > *mn)) return h;
    h.constant = false;
    h.width = (static_cast<double>(*mx) - h.lo) / kBins;
    for (float f : values) {
        auto b = static_cast<int>((static_cast<double>(f) - h.lo) / h.width);
        h.p[static_cast<std::size_t>(std::clamp(b, 0, kBins - 1))] += 1.0;
    }
    for (double& x : h.p) x /= static_cast<double>(values.size());
    return h;
}

// Upper edge of bin t.
double edge(const Histogram& h, int t) { return h.lo + (t + 1) * h.width; }

std::vector<float> crop(const Volume& v, const BoxRoi& b)
{
    std::vector<float> out;
    out.reserve(b.count());
    for (auto z = b.lo.z; z < b.hi.z; ++z)
        for (auto y = b.lo.y; y < b.hi.y; ++y)
            for (auto x = b.lo.x; x < b.hi.x; ++x) out.push_back(v(x, y, z));
    return out;
}

} // namespace

const std::array<std::string, CentroidFeatures::size>& CentroidFeatures::names()
{
    static const std::array<std::string, size> n{"torso_height_mm", "torso_width_mm", "left_lung_x_mm",
                                                 "left_lung_y_mm",  "left_lung_z_mm", "right_lung_x_mm",
                                                 "right_lung_y_mm", "right_lung_z_mm"};
    return n;
}

std::array<double, CentroidFeatures::size> CentroidFeatures::values() const
{
    return {torso_height_mm,       torso_width_mm,        left_lung_centroid.x,  left_lung_centroid.y,
            left_lung_centroid.z,  right_lung_centroid.x, right_lung_centroid.y, right_lung_centroid.z};
}

const std::array<std::string, AngulationFeatures::size>& AngulationFeatures::names()
{
    static const std::array<std::string, size> n{"torso_height_mm", "torso_width_mm",  "torso_aspect",
                                                 "torso_area_mm2",  "fat_fraction",    "lung_size_ratio",
                                                 "sa_init_azimuth_deg", "sa_init_elevation_deg"};
    return n;
}

std::array<double, AngulationFeatures::size> AngulationFeatures::values() const
{
    return {torso_height_mm, torso_width_mm,  torso_aspect,        torso_area_mm2,
            fat_fraction,    lung_size_ratio, sa_init_azimuth_deg, sa_init_elevation_deg};
}

double otsu_threshold(std::span<const float> values)
{
    const auto h = histogram(values);
    if (h.constant) return h.lo;
    double mu_total = 0.0;
    for (int i = 0; i < kBins; ++i) mu_total += i * h.p[i];
    double w0 = 0.0, mu0 = 0.0, best = -1.0;
    int best_t = 0;
    for (int t = 0; t < kBins - 1; ++t) {
        w0 += h.p[t];
        mu0 += t * h.p[t];
        const double w1 = 1.0 - w0;
        if (w0 <= 0.0 || w1 <= 0.0) continue;
        const double between = (mu_total * w0 - mu0) * (mu_total * w0 - mu0) / (w0 * w1);
        if (between > best) {
            best = between;
            best_t = t;
        }
    }
    return edge(h, best_t);
}

std::pair<double, double> otsu_thresholds3(std::span<const float> values)
{
    const auto h = histogram(values);
    if (h.constant) return {h.lo, h.lo};
    std::array<double, kBins + 1> cw{}, cm{};
    for (int i = 0; i < kBins; ++i) {
        cw[i + 1] = cw[i] + h.p[i];
        cm[i + 1] = cm[i] + i * h.p[i];
    }
    auto term = [&](int a, int b) { // bins [a, b)
        const double w = cw[b] - cw[a];
        const double m = cm[b] - cm[a];
        return w > 0.0 ? m * m / w : 0.0;
    };
    double best = -1.0;
    int t1b = 0, t2b = 1;
    for (int t1 = 1; t1 < kBins - 1; ++t1)
        for (int t2 = t1 + 1; t2 < kBins; ++t2) {
            const double s = term(0, t1) + term(t1, t2) + term(t2, kBins);
            if (s > best) {
                best = s;
                t1b = t1;
                t2b = t2;
            }
        }
    return {edge(h, t1b - 1), edge(h, t2b - 1)};
}

BoxRoi torso_bbox(const Volume& v)
{
    const auto& d = v.dims();
    const auto z = d.nz / 2;
    const auto slice = v.slice(z);
    const double thr = otsu_threshold(slice);
    const Dims sd{d.nx, d.ny, 1};

    // Largest four-connected above-threshold component.
    std::vector<int> label(slice.size(), -1);
    std::size_t best_size = 0;
    Index3 best_lo, best_hi;
    int next = 0;
    for (std::size_t start = 0; start < slice.size(); ++start) {
        if (label[start] >= 0 || !(slice[start] > thr)) continue;
        std::deque<std::size_t> queue{start};
        label[start] = next;
        std::size_t size = 0;
        Index3 lo{d.nx, d.ny, 0}, hi{-1, -1, 0};
        while (!queue.empty()) {
            const auto i = queue.front();
            queue.pop_front();
            ++size;
            const Index3 p = sd.unravel(i);
            lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), 0};
            hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), 0};
            const Index3 nb[4] = {{p.x + 1, p.y, 0}, {p.x - 1, p.y, 0}, {p.x, p.y + 1, 0}, {p.x, p.y - 1, 0}};
            for (const auto& q : nb) {
                if (!sd.contains(q)) continue;
                const auto j = sd.linear(q);
                if (label[j] < 0 && slice[j] > thr) {
                    label[j] = next;
                    queue.push_back(j);
                }
            }
        }
        if (size > best_size) {
            best_size = size;
            best_lo = lo;
            best_hi = hi;
        }
        ++next;
    }
    if (best_size == 0) throw AnatomyNotFound("no above-threshold body region on the mid-stack slice");
    return {{best_lo.x, best_lo.y, 0}, {best_hi.x + 1, best_hi.y + 1, d.nz}};
}

std::pair<double, double> torso_dims(const BoxRoi& b, const Spacing& spacing)
{
    const auto e = b.extent();
    return {static_cast<double>(e.nx) * spacing.x, static_cast<double>(e.ny) * spacing.y};
}

std::vector<Index3> complete_bright_region(const Volume& v, std::span<const Index3> region, int reach)
{
    if (region.empty()) return {};
    const auto& d = v.dims();
    const std::int64_t z = region.front().z;
    constexpr std::int64_t pad = 4;
    std::int64_t x0 = d.nx, y0 = d.ny, x1 = -1, y1 = -1;
    for (const auto& q : region) {
        if (q.z != z || !d.contains(q)) throw PreconditionError("region must lie in one axial slice of the volume");
        x0 = std::min(x0, q.x);
        y0 = std::min(y0, q.y);
        x1 = std::max(x1, q.x);
        y1 = std::max(y1, q.y);
    }
    x0 = std::max<std::int64_t>(0, x0 - pad);
    y0 = std::max<std::int64_t>(0, y0 - pad);
    x1 = std::min(d.nx - 1, x1 + pad);
    y1 = std::min(d.ny - 1, y1 + pad);
    std::vector<float> window;
    for (std::int64_t y = y0; y <= y1; ++y)
        for (std::int64_t x = x0; x <= x1; ++x) window.push_back(v.at({x, y, z}));
    const double cut = otsu_threshold(window);

    const auto w = static_cast<std::size_t>(d.nx);
    std::vector<int> dist(static_cast<std::size_t>(d.nx * d.ny), -1);
    std::deque<std::size_t> queue;
    for (const auto& q : region) {
        const auto i = static_cast<std::size_t>(q.y) * w + static_cast<std::size_t>(q.x);
        if (dist[i] < 0) queue.push_back(i);
        dist[i] = 0;
    }
    while (!queue.empty()) {
        const auto i = queue.front();
        queue.pop_front();
        if (dist[i] >= reach) continue;
        const auto x = static_cast<std::int64_t>(i % w), y = static_cast<std::int64_t>(i / w);
        const std::int64_t nx[4] = {x - 1, x + 1, x, x}, ny[4] = {y, y, y - 1, y + 1};
        for (int k = 0; k < 4; ++k) {
            if (nx[k] < x0 || nx[k] > x1 || ny[k] < y0 || ny[k] > y1) continue;
            const auto j = static_cast<std::size_t>(ny[k]) * w + static_cast<std::size_t>(nx[k]);
            if (dist[j] >= 0 || v.at({nx[k], ny[k], z}) < cut) continue;
            dist[j] = dist[i] + 1;
            queue.push_back(j);
        }
    }
    std::vector<Index3> out;
    for (std::size_t i = 0; i < dist.size(); ++i)
        if (dist[i] >= 0) out.push_back({static_cast<std::int64_t>(i % w), static_cast<std::int64_t>(i / w), z});
    return out;
}

LungCentroids lung_centroids(const Volume& v, const BoxRoi& torso, const SegParams& p)
{
    validate_roi(torso, v.dims());
    const auto values = crop(v, torso);
    const Dims cd = torso.extent();
    const auto seg = segment_grid({cd, values}, Connectivity::six_3d, relative_to(p, values));
    const double gate = otsu_thresholds3(values).first;

    // Air outside the body: low voxels reachable from the box's x/y faces.
    std::vector<char> outside(values.size(), 0);
    std::deque<std::size_t> queue;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const Index3 q = cd.unravel(i);
        if ((q.x == 0 || q.y == 0 || q.x == cd.nx - 1 || q.y == cd.ny - 1) && values[i] < gate) {
            outside[i] = 1;
            queue.push_back(i);
        }
    }
    while (!queue.empty()) {
        const Index3 q = cd.unravel(queue.front());
        queue.pop_front();
        const Index3 nb[6] = {{q.x + 1, q.y, q.z}, {q.x - 1, q.y, q.z}, {q.x, q.y + 1, q.z},
                              {q.x, q.y - 1, q.z}, {q.x, q.y, q.z + 1}, {q.x, q.y, q.z - 1}};
        for (const auto& r : nb) {
            if (!cd.contains(r)) continue;
            const auto j = cd.linear(r);
            if (!outside[j] && values[j] < gate) {
                outside[j] = 1;
                queue.push_back(j);
            }
        }
    }

    // Segments can bleed into the surrounding tissue through the smoothed
    // boundary, so each component is scored by its dark interior voxels only.
    struct Acc {
        std::size_t dark = 0;
        double sx = 0.0, sy = 0.0, sz = 0.0;
        bool touches_edge = false;
    };
    std::map<std::uint32_t, Acc> comps;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const Index3 q = cd.unravel(i);
        auto& a = comps[seg.labels[i]];
        if (q.x == 0 || q.y == 0 || q.x == cd.nx - 1 || q.y == cd.ny - 1) a.touches_edge = true;
        if (outside[i] || values[i] >= gate) continue;
        ++a.dark;
        a.sx += static_cast<double>(q.x);
        a.sy += static_cast<double>(q.y);
        a.sz += static_cast<double>(q.z);
    }
    // One lung on each side of the box's mid-line; fragments of a lung that
    // split off during segmentation stay on its own side.
    const double mid = 0.5 * static_cast<double>(cd.nx - 1);
    const Acc* side[2] = {nullptr, nullptr}; // [0] smaller x, [1] larger x
    for (const auto& [id, a] : comps) {
        if (a.touches_edge || a.dark == 0) continue;
        const int s = a.sx / static_cast<double>(a.dark) > mid ? 1 : 0;
        if (side[s] == nullptr || a.dark > side[s]->dark) side[s] = &a;
    }
    if (side[0] == nullptr || side[1] == nullptr) throw AnatomyNotFound("no lung candidate on one side of the torso");
    // A stray dark pocket is no substitute for a missing lung.
    const std::size_t big = std::max(side[0]->dark, side[1]->dark), small = std::min(side[0]->dark, side[1]->dark);
    if (10 * small < big) throw AnatomyNotFound("lung candidate on one side is too small");

    const auto& sp = v.spacing();
    auto centroid = [&](const Acc& a) {
        const double n = static_cast<double>(a.dark);
        return PhysicalPoint{(a.sx / n + static_cast<double>(torso.lo.x)) * sp.x,
                             (a.sy / n + static_cast<double>(torso.lo.y)) * sp.y,
                             (a.sz / n + static_cast<double>(torso.lo.z)) * sp.z};
    };
    // Larger x is patient-left.
    LungCentroids out{centroid(*side[1]), centroid(*side[0]), side[1]->dark, side[0]->dark};
    return out;
}

double fat_fraction(const Volume& v, const BoxRoi& torso)
{
    validate_roi(torso, v.dims());
    const auto e = torso.extent();
    const double rim_x = 0.15 * static_cast<double>(e.nx);
    const double rim_y = 0.15 * static_cast<double>(e.ny);
    auto in_shell = [&](std::int64_t x, std::int64_t y) {
        const auto rx = static_cast<double>(std::min(x - torso.lo.x, torso.hi.x - 1 - x));
        const auto ry = static_cast<double>(std::min(y - torso.lo.y, torso.hi.y - 1 - y));
        return rx < rim_x || ry < rim_y;
    };
    std::vector<float> shell;
    for (auto z = torso.lo.z; z < torso.hi.z; ++z)
        for (auto y = torso.lo.y; y < torso.hi.y; ++y)
            for (auto x = torso.lo.x; x < torso.hi.x; ++x)
                if (in_shell(x, y)) shell.push_back(v(x, y, z));
    if (shell.empty()) return 0.0;
    const double thr = otsu_thresholds3(shell).second;
    const auto bright = std::count_if(shell.begin(), shell.end(), [&](float f) { return f > thr; });
    return static_cast<double>(bright) / static_cast<double>(torso.count());
}

std::vector<Index3> lv_bloodpool(const Volume& v, const PhysicalPoint& lv_centroid, const SegParams& p)
{
    const Index3 seed = index_from_world(v, lv_centroid);
    return complete_bright_region(v, axial_component_at(v, seed, p));
}

AnatomySummary extract_anatomy(const Volume& v, const AnatomyConfig& cfg)
{
    AnatomySummary a;
    a.torso = torso_bbox(v);
    std::tie(a.torso_width_mm, a.torso_height_mm) = torso_dims(a.torso, v.spacing());
    a.lungs = lung_centroids(v, a.torso, cfg.lung_seg);
    a.fat_fraction = fat_fraction(v, a.torso);
    return a;
}

CentroidFeatures centroid_features(const AnatomySummary& a)
{
    return {a.torso_height_mm, a.torso_width_mm, a.lungs.left, a.lungs.right};
}

CentroidFeatures centroid_features(const Volume& v, const AnatomyConfig& cfg)
{
    return centroid_features(extract_anatomy(v, cfg));
}

AngulationFeatures angulation_features(const AnatomySummary& a, const PlaneAngles& sa_init)
{
    AngulationFeatures f;
    f.torso_height_mm = a.torso_height_mm;
    f.torso_width_mm = a.torso_width_mm;
    f.torso_aspect = a.torso_width_mm / a.torso_height_mm;
    f.torso_area_mm2 = a.torso_width_mm * a.torso_height_mm;
    f.fat_fraction = a.fat_fraction;
    f.lung_size_ratio = static_cast<double>(a.lungs.left_size) / static_cast<double>(a.lungs.right_size);
    f.sa_init_azimuth_deg = sa_init.azimuth_deg;
    f.sa_init_elevation_deg = sa_init.elevation_deg;
    return f;
}

AngulationFeatures angulation_features(const Volume& v, const PlaneAngles& sa_init, const AnatomyConfig& cfg)
{
    return angulation_features(extract_anatomy(v, cfg), sa_init);
}

namespace {

template <typename F>
io::Json features_json(const F& f)
{
    io::Json j = io::Json::object();
    const auto vals = f.values();
    for (std::size_t i = 0; i < F::size; ++i) j[F::names()[i]] = vals[i];
    return j;
}

template <typename F>
std::array<double, F::size> features_values(const io::Json& j)
{
    std::array<double, F::size> v{};
    for (std::size_t i = 0; i < F::size; ++i) v[i] = io::require(j, F::names()[i]).template get<double>();
    return v;
}

} // namespace

io::Json to_json(const CentroidFeatures& f) { return features_json(f); }
io::Json to_json(const AngulationFeatures& f) { return features_json(f); }

CentroidFeatures centroid_features_from_json(const io::Json& j)
{
    const auto v = features_values<CentroidFeatures>(j);
    return {v[0], v[1], {v[2], v[3], v[4]}, {v[5], v[6], v[7]}};
}

AngulationFeatures angulation_features_from_json(const io::Json& j)
{
    const auto v = features_values<AngulationFeatures>(j);
    return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
}

io::Json to_json(const SegParams& p)
{
    return {{"k_threshold", p.k_threshold}, {"min_size", p.min_size}, {"presmooth_sigma", p.presmooth_sigma}};
}

io::Json to_json(const AnatomyConfig& c) { return {{"lung_seg", to_json(c.lung_seg)}, {"pool_seg", to_json(c.pool_seg)}}; }

SegParams seg_params_from_json(const io::Json& j)
{
    SegParams p;
    p.k_threshold = j.value("k_threshold", p.k_threshold);
    p.min_size = j.value("min_size", p.min_size);
    p.presmooth_sigma = j.value("presmooth_sigma", p.presmooth_sigma);
    p.validate();
    return p;
}

AnatomyConfig anatomy_config_from_json(const io::Json& j)
{
    AnatomyConfig c;
    if (j.contains("lung_seg")) c.lung_seg = seg_params_from_json(j["lung_seg"]);
    if (j.contains("pool_seg")) c.pool_seg = seg_params_from_json(j["pool_seg"]);
    return c;
}

} // namespace cmrplan
