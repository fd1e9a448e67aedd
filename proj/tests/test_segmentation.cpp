#include <doctest.h>

#include <random>

#include "cmrplan/error.hpp"
#include "cmrplan/segmentation.hpp"
#include "oracles.hpp"

using namespace cmrplan;

namespace {

GridView view2d(const std::vector<float>& img, std::int64_t nx, std::int64_t ny)
{
    return {{nx, ny, 1}, img};
}

std::vector<float> random_image(std::mt19937_64& rng, int n, double scale)
{
    // Piecewise-flat blocks plus noise so that segments of all sizes occur.
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<float> levels(16);
    for (auto& l : levels) l = static_cast<float>(u(rng) * scale);
    std::vector<float> img(n * n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) img[y * n + x] = levels[(y / 4) * 4 + x / 4] + static_cast<float>(u(rng) * scale * 0.2);
    return img;
}

} // namespace

TEST_SUITE("segmentation")
{
    TEST_CASE("grid graph edge counts and weights")
    {
        const std::vector<float> four{1, 2, 4, 8};
        const auto g = build_grid_graph(view2d(four, 2, 2), Connectivity::four_2d);
        CHECK(g.edges.size() == 4);
        CHECK(build_grid_graph(view2d(four, 2, 2), Connectivity::eight_2d).edges.size() == 6);
        const std::vector<float> cube(8, 3.0f);
        const auto g3 = build_grid_graph({{2, 2, 2}, cube}, Connectivity::six_3d);
        CHECK(g3.edges.size() == 12);
        for (const auto& e : g3.edges) CHECK(e.w == 0.0);
        for (const auto& e : g.edges) CHECK(e.w == std::abs(double(four[e.u]) - double(four[e.v])));
        CHECK_THROWS_AS(build_grid_graph({{0, 0, 1}, {}}, Connectivity::four_2d), PreconditionError);
    }

    TEST_CASE("constant image is one component for any k")
    {
        const std::vector<float> img(64, 5.0f);
        for (double k : {1e-3, 1.0, 1e6}) {
            const auto s = segment_grid(view2d(img, 8, 8), Connectivity::four_2d, {k, 1, 0.0});
            CHECK(s.component_sizes.size() == 1);
        }
    }

    TEST_CASE("two flat regions separated by a large step")
    {
        std::vector<float> img(64, 10.0f);
        for (int y = 0; y < 8; ++y)
            for (int x = 4; x < 8; ++x) img[y * 8 + x] = 1000.0f;
        const auto s = segment_grid(view2d(img, 8, 8), Connectivity::four_2d, {5.0, 1, 0.0});
        REQUIRE(s.component_sizes.size() == 2);
        CHECK(s.component_sizes.at(0) == 32);
        CHECK(s.labels[0] != s.labels[7]);
    }

    TEST_CASE("huge k merges everything")
    {
        std::mt19937_64 rng(3);
        const auto img = random_image(rng, 16, 500.0);
        const auto s = segment_grid(view2d(img, 16, 16), Connectivity::four_2d, {1e12, 1, 0.0});
        CHECK(s.component_sizes.size() == 1);
    }

    TEST_CASE("partition and min_size hold")
    {
        std::mt19937_64 rng(5);
        for (int trial = 0; trial < 20; ++trial) {
            const auto img = random_image(rng, 16, 300.0);
            const int min_size = 1 + trial % 6;
            const auto s = segment_grid(view2d(img, 16, 16), Connectivity::four_2d, {50.0, min_size, 0.5});
            REQUIRE(s.labels.size() == 256);
            std::size_t total = 0;
            for (const auto& [id, n] : s.component_sizes) {
                total += n;
                CHECK(n >= static_cast<std::size_t>(min_size));
            }
            CHECK(total == 256);
            // Labels are dense and first-appearance ordered.
            std::uint32_t next = 0;
            for (auto l : s.labels) {
                CHECK(l <= next);
                if (l == next) ++next;
            }
        }
    }

    TEST_CASE("matches the naive reference")
    {
        std::mt19937_64 rng(123);
        std::uniform_real_distribution<double> logk(-1.0, 3.0);
        for (int trial = 0; trial < 40; ++trial) {
            const auto img = random_image(rng, 16, 200.0);
            const double k = std::pow(10.0, logk(rng));
            const int min_size = 1 + trial % 4;
            const auto s = segment_grid(view2d(img, 16, 16), Connectivity::four_2d, {k, min_size, 0.0});
            CHECK(s.labels == oracle::naive_fh(img, 16, 16, k, min_size));
        }
    }

    TEST_CASE("component count does not grow with k")
    {
        std::mt19937_64 rng(77);
        for (int trial = 0; trial < 20; ++trial) {
            const auto img = random_image(rng, 16, 200.0);
            std::size_t prev = 1u << 30;
            for (double k : {0.5, 2.0, 10.0, 50.0, 250.0, 1e4}) {
                const auto n = segment_grid(view2d(img, 16, 16), Connectivity::four_2d, {k, 1, 0.0}).component_sizes.size();
                CHECK(n <= prev);
                prev = n;
            }
        }
    }

    TEST_CASE("deterministic")
    {
        std::mt19937_64 rng(8);
        const auto img = random_image(rng, 16, 100.0);
        const SegParams p{20.0, 3, 0.8};
        CHECK(segment_grid(view2d(img, 16, 16), Connectivity::eight_2d, p).labels ==
              segment_grid(view2d(img, 16, 16), Connectivity::eight_2d, p).labels);
    }

    TEST_CASE("parameter validation")
    {
        const std::vector<float> img(4, 0.0f);
        CHECK_THROWS_AS(segment_grid(view2d(img, 2, 2), Connectivity::four_2d, {0.0, 1, 0.0}), ParameterError);
        CHECK_THROWS_AS(segment_grid(view2d(img, 2, 2), Connectivity::four_2d, {1.0, 0, 0.0}), ParameterError);
        CHECK_THROWS_AS(segment_grid(view2d(img, 2, 2), Connectivity::four_2d, {1.0, 1, -1.0}), ParameterError);
        GridGraph bad{2, {{0, 0, 1.0}}, Connectivity::four_2d};
        CHECK_THROWS_AS(segment(bad, {}), PreconditionError);
    }

    TEST_CASE("largest components")
    {
        const Dims d{4, 4, 1};
        Segmentation one = canonical_segmentation(std::vector<std::uint32_t>(16, 9));
        CHECK(largest_components(one, d, 2).size() == 1);

        std::vector<std::uint32_t> raw(16, 1);
        for (int i = 0; i < 6; ++i) raw[10 + i] = 2;
        const auto two = largest_components(canonical_segmentation(raw), d, 2);
        REQUIRE(two.size() == 2);
        CHECK(two[0].size == 10);
        CHECK(two[1].size == 6);

        std::vector<std::uint32_t> pair(16, 0);
        pair[0] = 5;
        pair[2] = 5;
        const auto s = canonical_segmentation(pair);
        const auto comps = largest_components(s, d, 2, [&](std::size_t i) { return pair[i] == 5; });
        REQUIRE(comps.size() == 1);
        CHECK(comps[0].centroid == Index3{1, 0, 0});
        CHECK_THROWS_AS(largest_components(s, d, 0), ParameterError);
    }
}
