#include <doctest.h>

#include <filesystem>
#include <set>

#include "cmrplan/cli.hpp"
#include "cmrplan/error.hpp"
#include "cmrplan/io.hpp"
#include "cmrplan/log.hpp"
#include "cmrplan/pipeline.hpp"

using namespace cmrplan;
namespace fs = std::filesystem;

namespace {

std::vector<Case> synthetic_cases(int patients, int variants)
{
    std::vector<Case> cases;
    for (int p = 0; p < patients; ++p)
        for (int v = 0; v < variants; ++v) {
            Case c;
            c.patient_id = "P" + std::to_string(100 + p);
            if (v > 0) c.snr_tag = 35.0 - 5.0 * v;
            c.truth = truth_from_long_axis({100.0 + p, 120.0, 90.0}, {130.0, 20.0 + p}, false);
            cases.push_back(c);
        }
    return cases;
}

Prediction perfect(const Case& c)
{
    Prediction p;
    p.ok = true;
    p.lv_centroid = c.truth.lv_centroid;
    p.sa = c.truth.sa;
    p.ch4 = c.truth.ch4;
    p.ch2 = c.truth.ch2;
    return p;
}

int run_cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "cmrplan");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return cli::run(static_cast<int>(argv.size()), argv.data());
}

GaConfig tiny_ga()
{
    GaConfig g;
    g.population_size = 4;
    g.generations = 1;
    g.k_folds = 2;
    g.seed = 3;
    return g;
}

struct Prepared {
    std::vector<PreparedCase> cases;
};

const std::vector<PreparedCase>& axial_population()
{
    static const std::vector<PreparedCase> out = [] {
        VariationSpec v;
        v.ch2_axial_fraction = 1.0;
        std::vector<PreparedCase> cs;
        for (const auto& m : sample_population(4, v, 5)) {
            auto pv = generate(m.spec);
            Case c{m.patient_id, std::nullopt, m.patient_id + ".json", pv.truth};
            cs.push_back(prepare_case(c, std::make_shared<const Volume>(pv.volume)));
        }
        return cs;
    }();
    return out;
}

} // namespace

TEST_SUITE("pipeline")
{
    TEST_CASE("grouped folds keep patients together and partition cases")
    {
        const auto cases = synthetic_cases(12, 6);
        const auto folds = grouped_kfold(std::span<const Case>(cases), 6, 7);
        REQUIRE(folds.size() == 6);
        std::multiset<std::size_t> tested;
        for (const auto& f : folds) {
            CHECK(f.test.size() == 12);
            CHECK(f.train.size() + f.test.size() == cases.size());
            CHECK(std::is_sorted(f.test.begin(), f.test.end()));
            std::set<std::string> tr, te;
            for (auto i : f.train) tr.insert(cases[i].patient_id);
            for (auto i : f.test) {
                te.insert(cases[i].patient_id);
                tested.insert(i);
            }
            CHECK(te.size() == 2);
            for (const auto& id : te) CHECK(tr.count(id) == 0);
        }
        CHECK(tested.size() == cases.size());
        for (std::size_t i = 0; i < cases.size(); ++i) CHECK(tested.count(i) == 1);

        const auto few = synthetic_cases(3, 2);
        CHECK_THROWS_AS(grouped_kfold(std::span<const Case>(few), 6, 1), PreconditionError);
        CHECK_THROWS_AS(grouped_kfold(std::span<const Case>(few), 1, 1), ParameterError);
    }

    TEST_CASE("evaluate of truth is the zero report")
    {
        const auto cases = synthetic_cases(3, 3);
        std::vector<Prediction> preds;
        for (const auto& c : cases) preds.push_back(perfect(c));
        const auto r = evaluate(cases, preds);
        REQUIRE(r.rows.size() == 4);
        CHECK(r.rows[0].name == "LV Centroid");
        CHECK(r.rows[1].name == "Short Axis");
        CHECK(r.rows[2].name == "4 Chamber");
        CHECK(r.rows[3].name == "2 Chamber");
        for (const auto& row : r.rows) {
            CHECK(row.mean == doctest::Approx(0.0));
            if (row.frac_under_15) CHECK(*row.frac_under_15 == 1.0);
        }
        CHECK(r.per_snr.front().first == "original");
        CHECK(r.per_snr.size() == 3);
        CHECK(r.failures.empty());
    }

    TEST_CASE("evaluate distances and failures")
    {
        auto cases = synthetic_cases(1, 1);
        auto p = perfect(cases[0]);
        p.lv_centroid.x += 3.0;
        p.lv_centroid.y += 4.0;
        auto r = evaluate(cases, std::vector<Prediction>{p});
        CHECK(r.rows[0].mean == doctest::Approx(5.0));

        cases = synthetic_cases(2, 1);
        Prediction fail;
        fail.error = "no lungs";
        r = evaluate(cases, std::vector<Prediction>{perfect(cases[0]), fail});
        REQUIRE(r.failures.size() == 1);
        CHECK(r.rows[1].n == 1);
        CHECK(*r.rows[1].frac_under_15 == doctest::Approx(0.5));
        CHECK_THROWS(evaluate(cases, std::vector<Prediction>{fail}));
    }

    TEST_CASE("reference tables")
    {
        const auto cv = cv_reference();
        CHECK(cv.original == std::array<double, 4>{9.64, 8.94, 11.53, 7.33});
        CHECK(cv.noised == std::array<double, 4>{9.26, 8.18, 10.56, 7.11});
        const auto ho = holdout_reference();
        CHECK(ho.original == std::array<double, 4>{15.38, 12.86, 11.95, 9.15});
        CHECK(ho.noised == std::array<double, 4>{13.75, 12.05, 11.40, 11.83});
    }

    TEST_CASE("targets and manifest")
    {
        for (auto t : all_targets) CHECK(parse_target(target_name(t)) == t);
        CHECK_THROWS(parse_target("lv_cw"));
        CHECK(snr_label(std::nullopt) == "original");
        CHECK(snr_label(15.2) == "15");

        const auto dir = fs::temp_directory_path() / "cmrplan_test_manifest";
        fs::create_directories(dir);
        const auto cases = synthetic_cases(2, 2);
        save_manifest(dir / "m.json", cases);
        const auto back = load_manifest(dir / "m.json");
        REQUIRE(back.size() == cases.size());
        for (std::size_t i = 0; i < cases.size(); ++i) CHECK(to_json(back[i]) == to_json(cases[i]));
    }

    TEST_CASE("axially planned 2CH is predicted at 90 degrees")
    {
        log::set_level(log::Level::warn);
        const auto& cases = axial_population();
        for (const auto& c : cases) REQUIRE(c.trainable());
        const auto stack = train_stack(cases, tiny_ga());
        CHECK(stack.model(Target::ch2_el).constant);
        for (const auto& c : cases) {
            const auto p = predict_case(stack, *c.volume);
            REQUIRE(p.ok);
            CHECK(p.ch2.elevation_deg == 90.0);
        }
    }

    TEST_CASE("stack bookkeeping, determinism and serialization")
    {
        log::set_level(log::Level::warn);
        std::vector<PreparedCase> cases;
        for (const auto& m : sample_population(4, {}, 8)) {
            auto pv = generate(m.spec);
            cases.push_back(prepare_case({m.patient_id, std::nullopt, "", pv.truth}, std::make_shared<const Volume>(pv.volume)));
        }
        const auto stack = train_stack(cases, tiny_ga());
        for (const auto& tm : stack.models) {
            if (tm.constant) continue;
            CHECK(tm.objectives == pick_final(tm.front).objectives);
        }
        const auto again = train_stack(cases, tiny_ga());
        CHECK(to_json(again) == to_json(stack));

        const auto p1 = predict_case(stack, *cases[0].volume);
        const auto p2 = predict_case(stack, Volume(*cases[0].volume));
        CHECK(to_json(p1) == to_json(p2));
        const auto reloaded = stack_from_json(to_json(stack));
        CHECK(to_json(predict_case(reloaded, *cases[1].volume)) == to_json(predict_case(stack, *cases[1].volume)));

        const Volume zero(cases[0].volume->dims(), cases[0].volume->spacing(),
                          std::vector<float>(cases[0].volume->dims().count(), 0.0f));
        const auto bad = predict_case(stack, zero);
        CHECK_FALSE(bad.ok);
        CHECK_FALSE(bad.error.empty());
    }
}

TEST_SUITE("cli")
{
    TEST_CASE("exit codes")
    {
        log::set_level(log::Level::warn);
        CHECK(run_cli({"--no-such-flag"}) == 2);
        CHECK(run_cli({"phantom", "--bogus"}) == 2);
        CHECK(run_cli({}) == 2);
        const auto dir = fs::temp_directory_path() / "cmrplan_test_cli";
        fs::remove_all(dir);
        CHECK(run_cli({"features", "--in", (dir / "missing.json").string(), "--out", (dir / "f.json").string()}) == 1);
    }

    TEST_CASE("phantom and features commands")
    {
        log::set_level(log::Level::warn);
        const auto dir = fs::temp_directory_path() / "cmrplan_test_cli_ph";
        fs::remove_all(dir);
        REQUIRE(run_cli({"--seed", "4", "phantom", "--n", "1", "--out-dir", dir.string(), "--manifest",
                         (dir / "m.json").string()}) == 0);
        CHECK(fs::exists(dir / "phantom_config.json"));
        CHECK(fs::exists(dir / "rois.json"));
        const auto cases = load_manifest(dir / "m.json");
        REQUIRE(cases.size() == 1);
        const auto vol = resolve_volume_path(dir / "m.json", cases[0]);
        CHECK(fs::exists(vol));
        CHECK(fs::exists(payload_path(vol)));
        const auto before = io::read_file(payload_path(vol));
        REQUIRE(run_cli({"features", "--in", vol.string(), "--out", (dir / "f.json").string()}) == 0);
        const auto f = io::read_json(dir / "f.json");
        CHECK(f.contains("centroid_features"));
        CHECK(io::read_file(payload_path(vol)) == before);
    }
}
