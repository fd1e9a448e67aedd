#include "cmrplan/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "cmrplan/error.hpp"

namespace cmrplan {

namespace {

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n), size_(n, 1)
    {
        std::iota(parent_.begin(), parent_.end(), 0u);
    }

    std::uint32_t find(std::uint32_t x)
    {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    // Returns the surviving root.
    std::uint32_t join(std::uint32_t a, std::uint32_t b)
    {
        if (size_[a] < size_[b]) std::swap(a, b);
        parent_[b] = a;
        size_[a] += size_[b];
        return a;
    }

    std::size_t size(std::uint32_t root) const { return size_[root]; }

private:
    std::vector<std::uint32_t> parent_;
    std::vector<std::size_t> size_;
};

std::vector<double> gaussian_kernel(double sigma)
{
    const int radius = static_cast<int>(std::ceil(4.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    for (double& x : k) x /= sum;
    return k;
}

} // namespace

void SegParams::validate() const
{
    if (!(k_threshold > 0.0)) throw ParameterError("k_threshold must be positive");
    if (min_size < 1) throw ParameterError("min_size must be >= 1");
    if (!(presmooth_sigma >= 0.0)) throw ParameterError("presmooth_sigma must be >= 0");
}

std::vector<float> gaussian_smooth(const GridView& g, double sigma)
{
    std::vector<float> cur(g.values.begin(), g.values.end());
    if (!(sigma > 0.0)) return cur;
    const auto kernel = gaussian_kernel(sigma);
    const int radius = static_cast<int>(kernel.size() / 2);
    const std::int64_t n[3] = {g.dims.nx, g.dims.ny, g.dims.nz};
    const std::int64_t stride[3] = {1, g.dims.nx, g.dims.nx * g.dims.ny};
    std::vector<float> next(cur.size());
    for (int axis = 0; axis < 3; ++axis) {
        if (n[axis] <= 1) continue;
        for (std::size_t idx = 0; idx < cur.size(); ++idx) {
            const Index3 p = g.dims.unravel(idx);
            const std::int64_t pos = axis == 0 ? p.x : axis == 1 ? p.y : p.z;
            double acc = 0.0;
            for (int t = -radius; t <= radius; ++t) {
                const std::int64_t q = std::clamp<std::int64_t>(pos + t, 0, n[axis] - 1);
                acc += kernel[t + radius] * cur[idx + (q - pos) * stride[axis]];
            }
            next[idx] = static_cast<float>(acc);
        }
        cur.swap(next);
    }
    return cur;
}

GridGraph build_grid_graph(const GridView& g, Connectivity c, double presmooth_sigma)
{
    if (g.dims.count() == 0 || g.values.size() != g.dims.count()) throw PreconditionError("empty image");
    if (c != Connectivity::six_3d && g.dims.nz != 1) throw PreconditionError("2D connectivity requires a single slice");
    const auto img = gaussian_smooth(g, presmooth_sigma);
    GridGraph graph;
    graph.n_nodes = img.size();
    graph.connectivity = c;
    const auto& d = g.dims;
    auto add = [&](std::int64_t x0, std::int64_t y0, std::int64_t z0, std::int64_t x1, std::int64_t y1, std::int64_t z1) {
        if (x1 < 0 || y1 < 0 || z1 < 0 || x1 >= d.nx || y1 >= d.ny || z1 >= d.nz) return;
        const auto a = d.linear({x0, y0, z0});
        const auto b = d.linear({x1, y1, z1});
        graph.edges.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b),
                               std::abs(static_cast<double>(img[a]) - static_cast<double>(img[b]))});
    };
    for (std::int64_t z = 0; z < d.nz; ++z)
        for (std::int64_t y = 0; y < d.ny; ++y)
            for (std::int64_t x = 0; x < d.nx; ++x) {
                add(x, y, z, x + 1, y, z);
                add(x, y, z, x, y + 1, z);
                if (c == Connectivity::eight_2d) {
                    add(x, y, z, x + 1, y + 1, z);
                    add(x, y, z, x - 1, y + 1, z);
                }
                if (c == Connectivity::six_3d) add(x, y, z, x, y, z + 1);
            }
    return graph;
}

void sort_edges(std::vector<GraphEdge>& edges)
{
    std::sort(edges.begin(), edges.end(), [](const GraphEdge& a, const GraphEdge& b) {
        if (a.w != b.w) return a.w < b.w;
        if (a.u != b.u) return a.u < b.u;
        return a.v < b.v;
    });
}

Segmentation canonical_segmentation(std::span<const std::uint32_t> raw_labels)
{
    Segmentation s;
    s.labels.resize(raw_labels.size());
    std::unordered_map<std::uint32_t, std::uint32_t> remap;
    for (std::size_t i = 0; i < raw_labels.size(); ++i) {
        auto [it, inserted] = remap.try_emplace(raw_labels[i], static_cast<std::uint32_t>(remap.size()));
        s.labels[i] = it->second;
        ++s.component_sizes[it->second];
    }
    return s;
}

Segmentation segment(const GridGraph& g, const SegParams& p)
{
    p.validate();
    auto edges = g.edges;
    for (const auto& e : edges) {
        if (e.u == e.v || e.u >= g.n_nodes || e.v >= g.n_nodes) throw PreconditionError("invalid graph edge");
        if (!(e.w >= 0.0) || !std::isfinite(e.w)) throw PreconditionError("edge weights must be finite and >= 0");
    }
    sort_edges(edges);

    DisjointSets sets(g.n_nodes);
    // threshold[root] = Int(C) + k/|C|
    std::vector<double> threshold(g.n_nodes, p.k_threshold);
    for (const auto& e : edges) {
        auto a = sets.find(e.u);
        auto b = sets.find(e.v);
        if (a == b) continue;
        if (e.w <= threshold[a] && e.w <= threshold[b]) {
            const auto r = sets.join(a, b);
            threshold[r] = e.w + p.k_threshold / static_cast<double>(sets.size(r));
        }
    }
    const auto min_size = static_cast<std::size_t>(p.min_size);
    for (const auto& e : edges) {
        auto a = sets.find(e.u);
        auto b = sets.find(e.v);
        if (a != b && (sets.size(a) < min_size || sets.size(b) < min_size)) sets.join(a, b);
    }

    std::vector<std::uint32_t> raw(g.n_nodes);
    for (std::size_t i = 0; i < g.n_nodes; ++i) raw[i] = sets.find(static_cast<std::uint32_t>(i));
    return canonical_segmentation(raw);
}

Segmentation segment_grid(const GridView& g, Connectivity c, const SegParams& p)
{
    p.validate();
    return segment(build_grid_graph(g, c, p.presmooth_sigma), p);
}

std::vector<ComponentInfo> largest_components(const Segmentation& s, const Dims& dims, std::size_t n,
                                              const std::function<bool(std::size_t)>& mask)
{
    if (n < 1) throw ParameterError("n must be >= 1");
    if (s.labels.size() != dims.count()) throw PreconditionError("segmentation does not match dims");
    struct Acc {
        std::size_t size = 0;
        double sx = 0, sy = 0, sz = 0;
    };
    std::map<std::uint32_t, Acc> acc;
    for (std::size_t i = 0; i < s.labels.size(); ++i) {
        if (mask && !mask(i)) continue;
        const Index3 p = dims.unravel(i);
        auto& a = acc[s.labels[i]];
        ++a.size;
        a.sx += static_cast<double>(p.x);
        a.sy += static_cast<double>(p.y);
        a.sz += static_cast<double>(p.z);
    }
    std::vector<ComponentInfo> out;
    out.reserve(acc.size());
    for (const auto& [id, a] : acc) {
        const double m = static_cast<double>(a.size);
        out.push_back({id, a.size, {std::llround(a.sx / m), std::llround(a.sy / m), std::llround(a.sz / m)}});
    }
    std::stable_sort(out.begin(), out.end(), [](const ComponentInfo& x, const ComponentInfo& y) {
        if (x.size != y.size) return x.size > y.size;
        return x.id < y.id;
    });
    if (out.size() > n) out.resize(n);
    return out;
}

SegParams relative_to(const SegParams& p, std::span<const float> values)
{
    if (values.empty()) throw PreconditionError("no intensities to scale against");
    std::vector<float> v(values.begin(), values.end());
    const auto rank = static_cast<std::ptrdiff_t>(0.99 * static_cast<double>(v.size() - 1));
    std::nth_element(v.begin(), v.begin() + rank, v.end());
    const double ref = v[static_cast<std::size_t>(rank)];
    if (!(ref > 0.0)) throw DegenerateInputError("intensity range is empty");
    SegParams out = p;
    out.k_threshold = p.k_threshold * ref / 255.0;
    return out;
}

std::vector<Index3> axial_component_at(const Volume& v, const Index3& seed, const SegParams& p)
{
    if (!v.dims().contains(seed)) throw BoundsError("seed voxel outside volume");
    const auto view = GridView::axial(v, seed.z);
    const auto seg = segment_grid(view, Connectivity::four_2d, relative_to(p, v.data()));
    const auto label = seg.labels[view.dims.linear({seed.x, seed.y, 0})];
    std::vector<Index3> out;
    out.reserve(seg.component_sizes.at(label));
    for (std::size_t i = 0; i < seg.labels.size(); ++i)
        if (seg.labels[i] == label) {
            auto q = view.dims.unravel(i);
            out.push_back({q.x, q.y, seed.z});
        }
    return out;
}

} // namespace cmrplan
