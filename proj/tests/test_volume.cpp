#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cmrplan/error.hpp"
#include "cmrplan/io.hpp"
#include "cmrplan/volume.hpp"

using namespace cmrplan;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name)
{
    auto d = fs::temp_directory_path() / ("cmrplan_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

Volume ramp(Dims d, Spacing s = {})
{
    std::vector<float> data(d.count());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(std::sin(0.37 * i) * 100.0 + i * 0.01);
    return Volume(d, s, std::move(data), {"p1", 4, 21.5, "test"});
}

} // namespace

TEST_SUITE("volume")
{
    TEST_CASE("world_from_index scales by spacing")
    {
        const Volume v(Dims{4, 4, 4}, {1, 1, 1}, std::vector<float>(64, 0.0f));
        CHECK(world_from_index(v, {0, 0, 0}) == PhysicalPoint{0, 0, 0});
        CHECK(world_from_index(Spacing{2, 2, 5}, {1, 1, 1}) == PhysicalPoint{2, 2, 5});
        const auto p = world_from_index(Spacing{1.5, 1.5, 8}, {10, 20, 3});
        CHECK(p.x == doctest::Approx(15));
        CHECK(p.y == doctest::Approx(30));
        CHECK(p.z == doctest::Approx(24));
        CHECK_THROWS_AS(world_from_index(v, {4, 0, 0}), BoundsError);
    }

    TEST_CASE("index_from_world inverts world_from_index on lattice points")
    {
        const auto v = ramp({5, 6, 7}, {1.5, 0.7, 8});
        for (std::int64_t z = 0; z < 7; ++z)
            for (std::int64_t y = 0; y < 6; ++y)
                for (std::int64_t x = 0; x < 5; ++x) CHECK(index_from_world(v, world_from_index(v, {x, y, z})) == Index3{x, y, z});
        CHECK_THROWS_AS(index_from_world(v, {-10, 0, 0}), BoundsError);
    }

    TEST_CASE("roi_stats")
    {
        const Volume c(Dims{3, 3, 1}, {}, std::vector<float>(9, 7.0f));
        const auto s = roi_stats(c, full_roi(c.dims()));
        CHECK(s.mean == 7.0);
        CHECK(s.stddev == 0.0);

        const Volume two(Dims{2, 1, 1}, {}, {1.0f, 3.0f});
        const auto t = roi_stats(two, full_roi(two.dims()));
        CHECK(t.mean == doctest::Approx(2.0));
        CHECK(t.stddev == doctest::Approx(1.0));

        CHECK_THROWS_AS(roi_stats(two, BoxRoi{{1, 0, 0}, {1, 1, 1}}), PreconditionError);
        CHECK_THROWS_AS(roi_stats(two, BoxRoi{{0, 0, 0}, {3, 1, 1}}), BoundsError);
    }

    TEST_CASE("roi_stats pools consistently over disjoint boxes")
    {
        const auto v = ramp({8, 8, 4});
        const BoxRoi a{{0, 0, 0}, {8, 8, 2}}, b{{0, 0, 2}, {8, 8, 4}};
        const auto sa = roi_stats(v, a), sb = roi_stats(v, b), sall = roi_stats(v, full_roi(v.dims()));
        const double na = double(a.count()), nb = double(b.count());
        const double mean = (na * sa.mean + nb * sb.mean) / (na + nb);
        const double m2 = (na * (sa.stddev * sa.stddev + sa.mean * sa.mean) + nb * (sb.stddev * sb.stddev + sb.mean * sb.mean)) /
                          (na + nb);
        CHECK(sall.mean == doctest::Approx(mean).epsilon(1e-9));
        CHECK(sall.stddev == doctest::Approx(std::sqrt(m2 - mean * mean)).epsilon(1e-6));
    }

    TEST_CASE("save and load round-trip bit-exactly")
    {
        const auto dir = temp_dir("roundtrip");
        const auto v = ramp({5, 4, 3}, {1.25, 0.5, 6});
        save_volume(v, dir / "v.json");
        const auto w = load_volume(dir / "v.json");
        CHECK(w == v);
        CHECK(w.meta().snr_tag.has_value());

        const Volume plain(Dims{2, 2, 1}, {}, {1, 2, 3, 4}, {"x", 1, std::nullopt, ""});
        save_volume(plain, dir / "p.json");
        CHECK(load_volume(dir / "p.json") == plain);
    }

    TEST_CASE("load rejects malformed files")
    {
        const auto dir = temp_dir("malformed");
        const Volume v(Dims{2, 2, 2}, {}, std::vector<float>(8, 1.0f), {"p", 1, std::nullopt, ""});
        save_volume(v, dir / "v.json");
        {
            std::ofstream f(payload_path(dir / "v.json"), std::ios::binary | std::ios::trunc);
            const float seven[7] = {};
            f.write(reinterpret_cast<const char*>(seven), sizeof seven);
        }
        CHECK_THROWS_AS(load_volume(dir / "v.json"), FormatError);

        save_volume(v, dir / "c.json");
        auto header = io::read_json(dir / "c.json");
        header["n_coils"] = 0;
        io::write_json_atomic(dir / "c.json", header);
        CHECK_THROWS_AS(load_volume(dir / "c.json"), InvariantError);

        io::write_file_atomic(dir / "bad.json", "{not json");
        CHECK_THROWS_AS(load_volume(dir / "bad.json"), Error);
    }

    TEST_CASE("volume invariants")
    {
        CHECK_THROWS_AS(Volume(Dims{2, 2, 2}, {}, std::vector<float>(7)), InvariantError);
        CHECK_THROWS_AS(Volume(Dims{1, 1, 1}, {0, 1, 1}, std::vector<float>(1)), InvariantError);
        CHECK_THROWS_AS(Volume(Dims{1, 1, 1}, {}, {NAN}), InvariantError);
        CHECK_THROWS_AS(Volume(Dims{1, 1, 1}, {}, {1.0f}, {"p", 0, std::nullopt, ""}), InvariantError);
    }
}
