#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "cmrplan/error.hpp"
#include "cmrplan/io.hpp"
#include "cmrplan/svr.hpp"
#include "oracles.hpp"

using namespace cmrplan;

namespace {

struct Problem {
    Eigen::MatrixXd K;
    std::vector<double> y;
    double c, eps;
};

Problem random_problem(std::mt19937_64& rng)
{
    std::uniform_int_distribution<int> ni(1, 6), di(1, 3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const int n = ni(rng), d = di(rng);
    const double gamma = std::exp2(3.0 * u(rng));
    Problem p;
    p.c = std::exp2(3.0 * u(rng) + 0.5);
    p.eps = 0.25 * (u(rng) + 1.0);
    std::vector<std::vector<double>> x(n, std::vector<double>(d));
    for (auto& row : x)
        for (auto& v : row) v = u(rng);
    p.K.resize(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) p.K(i, j) = rbf_kernel(x[i], x[j], gamma);
    for (int i = 0; i < n; ++i) p.y.push_back(2.0 * u(rng));
    return p;
}

std::vector<TrainingSample> wave(int n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::vector<TrainingSample> s;
    for (int i = 0; i < n; ++i) {
        const double a = u(rng), b = u(rng);
        s.push_back({{a, b, u(rng)}, 10.0 * std::sin(a) + 3.0 * b + 50.0});
    }
    return s;
}

FeatureMask mask_of(const std::string& s) { return FeatureMask::from_string(s); }

} // namespace

TEST_SUITE("svr")
{
    TEST_CASE("rbf kernel")
    {
        const std::vector<double> a{0.3, -1.0}, b{0.0}, c{1.0};
        CHECK(rbf_kernel(a, a, 5.0) == 1.0);
        CHECK(rbf_kernel(b, c, 1.0) == doctest::Approx(0.367879).epsilon(1e-6));
        CHECK(rbf_kernel(b, c, 1e-12) == doctest::Approx(1.0));
        CHECK_THROWS(rbf_kernel(a, b, 1.0));
    }

    TEST_CASE("feature mask strings")
    {
        const auto m = mask_of("1011");
        CHECK(m.size() == 4);
        CHECK(m.count() == 3);
        CHECK(m.indices() == std::vector<std::size_t>{0, 2, 3});
        CHECK(m.to_string() == "1011");
        CHECK_THROWS_AS(FeatureMask::from_string("10x1"), SchemaError);
    }

    TEST_CASE("dual solver agrees with the enumeration oracle")
    {
        std::mt19937_64 rng(2024);
        for (int trial = 0; trial < 100; ++trial) {
            const auto p = random_problem(rng);
            const auto sol = solve_svr_dual(p.K, p.y, p.c, p.eps, 1e-3);
            const double best = oracle::svr_dual_optimum(p.K, p.y, p.c, p.eps);
            CHECK(std::abs(sol.objective - best) <= 1e-4);
            CHECK(sol.objective == doctest::Approx(oracle::svr_objective(p.K, p.y, sol.coeffs, p.eps)));
            CHECK(oracle::svr_kkt_residual(p.K, p.y, sol.coeffs, sol.bias, p.c, p.eps) < 1e-3);
            CHECK(std::abs(sol.coeffs.sum()) < 1e-6);
            CHECK(sol.coeffs.cwiseAbs().maxCoeff() <= p.c + 1e-12);
        }
    }

    TEST_CASE("large C on clustered, conflicting samples still reaches a KKT point")
    {
        // Near-duplicate inputs with different targets, as repeated scans of one
        // patient produce; SMO alone crawls here.
        std::mt19937_64 rng(77);
        std::normal_distribution<double> jitter(0.0, 0.05), spread(0.0, 1.0);
        for (double log2c : {5.0, 10.0, 15.0})
            for (double gamma : {0.25, 1.0, 8.0}) {
                std::vector<double> x, y;
                for (int cluster = 0; cluster < 8; ++cluster) {
                    const double centre = spread(rng), level = 2.0 * spread(rng);
                    for (int k = 0; k < 6; ++k) {
                        x.push_back(centre + jitter(rng));
                        y.push_back(level + 0.5 * spread(rng));
                    }
                }
                const auto n = static_cast<Eigen::Index>(x.size());
                Eigen::MatrixXd K(n, n);
                for (Eigen::Index i = 0; i < n; ++i)
                    for (Eigen::Index j = 0; j < n; ++j)
                        K(i, j) = std::exp(-gamma * (x[i] - x[j]) * (x[i] - x[j]));
                const double c = std::exp2(log2c);
                const auto sol = solve_svr_dual(K, y, c, 0.1, 1e-3);
                CHECK(oracle::svr_kkt_residual(K, y, sol.coeffs, sol.bias, c, 0.1) < 1e-3);
                CHECK(std::abs(sol.coeffs.sum()) < 1e-6 * std::max(1.0, c));
                CHECK(sol.coeffs.cwiseAbs().maxCoeff() <= c);
            }
    }

    TEST_CASE("constant targets give a flat model")
    {
        std::vector<TrainingSample> s;
        for (int i = 0; i < 8; ++i) s.push_back({{double(i), std::sin(i)}, 4.25});
        const auto m = train(s, {}, mask_of("11"));
        for (double c : m.dual_coeffs) CHECK(c == 0.0);
        const std::vector<double> x{3.3, 0.1};
        CHECK(predict(m, x) == doctest::Approx(4.25));
    }

    TEST_CASE("single sample is fit within the tube")
    {
        const std::vector<TrainingSample> s{{{1.0, 2.0}, 7.0}};
        const auto m = train(s, {}, mask_of("01"));
        const double eps = m.params.epsilon * m.target_scaler.stddev;
        CHECK(std::abs(predict(m, s[0].features) - 7.0) <= eps + 1e-12);
    }

    TEST_CASE("trained model invariants and interior-point fit")
    {
        const auto data = wave(40, 5);
        const SvrParams p{8.0, 0.5, 0.1, 1e-3};
        const auto m = train(data, p, mask_of("110"));
        double sum = 0.0;
        for (double c : m.dual_coeffs) {
            sum += c;
            CHECK(std::abs(c) <= p.c_penalty);
        }
        CHECK(std::abs(sum) < 1e-6);
        CHECK(m.support_vectors.size() == m.dual_coeffs.size());

        // Free support vectors sit on the tube edge (in standardized units).
        for (std::size_t i = 0; i < m.support_vectors.size(); ++i) {
            if (std::abs(m.dual_coeffs[i]) >= p.c_penalty - 1e-9) continue;
            double f = m.bias;
            for (std::size_t j = 0; j < m.support_vectors.size(); ++j)
                f += m.dual_coeffs[j] * rbf_kernel(m.support_vectors[i], m.support_vectors[j], p.gamma);
            bool found = false;
            for (const auto& s : data) {
                const double z0 = (s.features[0] - m.scaler.mean[0]) / m.scaler.stddev[0];
                const double z1 = (s.features[1] - m.scaler.mean[1]) / m.scaler.stddev[1];
                if (std::abs(z0 - m.support_vectors[i][0]) > 1e-12 || std::abs(z1 - m.support_vectors[i][1]) > 1e-12) continue;
                const double yz = (s.target - m.target_scaler.mean) / m.target_scaler.stddev;
                CHECK(std::abs(std::abs(yz - f) - p.epsilon) <= 1e-3);
                found = true;
            }
            CHECK(found);
        }
    }

    TEST_CASE("prediction matches a hand expansion")
    {
        SvrModel m;
        m.params = {2.0, 0.5, 0.1, 1e-3};
        m.feature_mask = mask_of("101");
        m.scaler = {{1.0, -1.0}, {2.0, 0.5}};
        m.support_vectors = {{0.0, 1.0}, {1.0, -1.0}};
        m.dual_coeffs = {0.75, -0.75};
        m.bias = 0.2;
        m.target_scaler = {10.0, 4.0};
        const std::vector<double> x{3.0, 99.0, -1.25}; // standardized: (1, -0.5)
        const double k1 = std::exp(-0.5 * (1.0 + 2.25)), k2 = std::exp(-0.5 * (0.0 + 0.25));
        CHECK(predict(m, x) == doctest::Approx(10.0 + 4.0 * (0.75 * k1 - 0.75 * k2 + 0.2)));

        SvrModel flip = m;
        std::swap(flip.support_vectors[0], flip.support_vectors[1]);
        std::swap(flip.dual_coeffs[0], flip.dual_coeffs[1]);
        CHECK(predict(flip, x) == doctest::Approx(predict(m, x)));

        SvrModel zero = m;
        zero.support_vectors.clear();
        zero.dual_coeffs.clear();
        CHECK(predict(zero, x) == doctest::Approx(10.0 + 4.0 * 0.2));
        CHECK_THROWS(predict(m, std::vector<double>{1.0}));
    }

    TEST_CASE("degenerate training data")
    {
        std::vector<TrainingSample> s;
        for (int i = 0; i < 5; ++i) s.push_back({{1.0, double(i)}, double(i)});
        CHECK_THROWS_AS(train(s, {}, mask_of("10")), TrainingError);
        CHECK_NOTHROW(train(s, {}, mask_of("01")));
        CHECK_THROWS(train(s, {}, mask_of("00")));
        CHECK_THROWS(train(std::span<const TrainingSample>{}, {}, mask_of("01")));
        CHECK_THROWS_AS(train(s, {-1.0, 1.0, 0.1, 1e-3}, mask_of("01")), ParameterError);
    }

    TEST_CASE("json round trip and load validation")
    {
        const auto data = wave(25, 9);
        const std::vector<std::string> names{"a", "b", "c"};
        const auto m = train(data, {4.0, 0.3, 0.1, 1e-3}, mask_of("110"), names);
        const auto dir = std::filesystem::temp_directory_path() / "cmrplan_test_svr";
        std::filesystem::create_directories(dir);
        save_model(m, (dir / "m.json").string());
        const auto r = load_model((dir / "m.json").string());
        for (const auto& s : data) CHECK(predict(r, s.features) == predict(m, s.features));
        CHECK(r.feature_names == std::vector<std::string>{"a", "b"});
        CHECK_THROWS_AS(train(data, {}, mask_of("110"), std::vector<std::string>{"a", "b"}), PreconditionError);

        auto j = to_json(m);
        auto no_scaler = j;
        no_scaler.erase("scaler");
        CHECK_THROWS_AS(svr_model_from_json(no_scaler), SchemaError);

        REQUIRE(!m.dual_coeffs.empty());
        auto over = j;
        over["dual_coeffs"][0] = 10.0 * m.params.c_penalty;
        CHECK_THROWS_AS(svr_model_from_json(over), InvariantError);
    }
}
