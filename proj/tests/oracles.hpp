#pragma once

// Slow, obviously-correct references the library is checked against. None of
// this reuses library internals beyond the public data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include <Eigen/Dense>

#include "cmrplan/model_search.hpp"
#include "cmrplan/segmentation.hpp"

namespace oracle {

// Felzenszwalb-Huttenlocher on a 4-connected 2D image with a flat label
// array. Int(C) and |C| are recomputed by scanning on every merge test.
inline std::vector<std::uint32_t> naive_fh(const std::vector<float>& img, int nx, int ny, double k, int min_size)
{
    struct E {
        std::uint32_t u, v;
        double w;
    };
    std::vector<E> edges;
    auto id = [&](int x, int y) { return static_cast<std::uint32_t>(y * nx + x); };
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) {
            if (x + 1 < nx)
                edges.push_back({id(x, y), id(x + 1, y), std::abs(double(img[id(x, y)]) - double(img[id(x + 1, y)]))});
            if (y + 1 < ny)
                edges.push_back({id(x, y), id(x, y + 1), std::abs(double(img[id(x, y)]) - double(img[id(x, y + 1)]))});
        }
    std::sort(edges.begin(), edges.end(), [](const E& a, const E& b) {
        if (a.w != b.w) return a.w < b.w;
        if (a.u != b.u) return a.u < b.u;
        return a.v < b.v;
    });

    const std::size_t n = img.size();
    std::vector<std::uint32_t> label(n);
    std::iota(label.begin(), label.end(), 0u);
    std::vector<E> mst;
    auto size_of = [&](std::uint32_t l) { return static_cast<double>(std::count(label.begin(), label.end(), l)); };
    auto internal = [&](std::uint32_t l) {
        double m = 0.0;
        for (const auto& e : mst)
            if (label[e.u] == l) m = std::max(m, e.w);
        return m;
    };
    auto relabel = [&](std::uint32_t from, std::uint32_t to) {
        for (auto& l : label)
            if (l == from) l = to;
    };

    for (const auto& e : edges) {
        const auto a = label[e.u], b = label[e.v];
        if (a == b) continue;
        const double ta = internal(a) + k / size_of(a);
        const double tb = internal(b) + k / size_of(b);
        if (e.w <= std::min(ta, tb)) {
            relabel(b, a);
            mst.push_back(e);
        }
    }
    for (const auto& e : edges) {
        const auto a = label[e.u], b = label[e.v];
        if (a != b && (size_of(a) < min_size || size_of(b) < min_size)) relabel(b, a);
    }

    std::map<std::uint32_t, std::uint32_t> canon;
    std::vector<std::uint32_t> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto [it, fresh] = canon.try_emplace(label[i], static_cast<std::uint32_t>(canon.size()));
        out[i] = it->second;
    }
    return out;
}

inline double svr_objective(const Eigen::MatrixXd& K, const std::vector<double>& y, const Eigen::VectorXd& beta,
                            double eps)
{
    double lin = 0.0;
    for (Eigen::Index i = 0; i < beta.size(); ++i) lin += y[i] * beta[i] - eps * std::abs(beta[i]);
    return -0.5 * beta.dot(K * beta) + lin;
}

// Maximum of the epsilon-SVR dual in beta = alpha - alpha*, found by
// enumerating which regime each coefficient sits in (-C, negative interior,
// 0, positive interior, +C) and solving the stationarity system of the free
// ones. The program is concave, so the best feasible candidate is optimal.
inline double svr_dual_optimum(const Eigen::MatrixXd& K, const std::vector<double>& y, double c, double eps)
{
    const int n = static_cast<int>(y.size());
    int combos = 1;
    for (int i = 0; i < n; ++i) combos *= 5;
    double best = -std::numeric_limits<double>::infinity();
    std::vector<int> regime(n);
    for (int code = 0; code < combos; ++code) {
        int r = code;
        for (int i = 0; i < n; ++i) {
            regime[i] = r % 5 - 2;
            r /= 5;
        }
        Eigen::VectorXd beta = Eigen::VectorXd::Zero(n);
        std::vector<int> free;
        for (int i = 0; i < n; ++i) {
            if (regime[i] == -2) beta[i] = -c;
            else if (regime[i] == 2) beta[i] = c;
            else if (regime[i] != 0) free.push_back(i);
        }
        const int m = static_cast<int>(free.size());
        if (m == 0) {
            if (std::abs(beta.sum()) > 1e-12) continue;
        } else {
            // K_FF b_F + b 1 = y_F - eps s_F - K_F,fixed b_fixed ; 1' b_F = -sum fixed
            Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m + 1, m + 1);
            Eigen::VectorXd rhs(m + 1);
            const Eigen::VectorXd kfixed = K * beta;
            for (int a = 0; a < m; ++a) {
                for (int b = 0; b < m; ++b) A(a, b) = K(free[a], free[b]);
                A(a, m) = 1.0;
                A(m, a) = 1.0;
                rhs[a] = y[free[a]] - eps * regime[free[a]] - kfixed[free[a]];
            }
            rhs[m] = -beta.sum();
            Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
            if (!lu.isInvertible()) continue;
            const Eigen::VectorXd sol = lu.solve(rhs);
            bool ok = true;
            for (int a = 0; a < m; ++a) {
                const double v = sol[a];
                if (regime[free[a]] == 1 ? (v < 0.0 || v > c) : (v > 0.0 || v < -c)) ok = false;
                beta[free[a]] = v;
            }
            if (!ok) continue;
        }
        best = std::max(best, svr_objective(K, y, beta, eps));
    }
    return best;
}

// Largest violation of the epsilon-SVR optimality conditions for the given
// coefficients and bias.
inline double svr_kkt_residual(const Eigen::MatrixXd& K, const std::vector<double>& y, const Eigen::VectorXd& beta,
                               double bias, double c, double eps)
{
    const double at_bound = 1e-12 * std::max(1.0, c);
    double worst = 0.0;
    const Eigen::VectorXd f = K * beta;
    for (Eigen::Index i = 0; i < beta.size(); ++i) {
        const double r = y[i] - f[i] - bias; // residual of the fitted function
        const double b = beta[i];
        double viol = 0.0;
        if (std::abs(b) <= at_bound) viol = std::max(0.0, std::abs(r) - eps);
        else if (b >= c - at_bound) viol = std::max(0.0, eps - r);
        else if (b <= -c + at_bound) viol = std::max(0.0, r + eps);
        else if (b > 0.0) viol = std::abs(r - eps);
        else viol = std::abs(r + eps);
        worst = std::max(worst, viol);
    }
    return worst;
}

// Fronts by repeatedly peeling off the points nothing else dominates.
inline std::vector<std::set<std::size_t>> peel_fronts(const std::vector<cmrplan::Objectives>& pts)
{
    auto dom = [](const cmrplan::Objectives& a, const cmrplan::Objectives& b) {
        const bool le = a.cv_mad <= b.cv_mad && a.n_features <= b.n_features;
        const bool lt = a.cv_mad < b.cv_mad || a.n_features < b.n_features;
        return le && lt;
    };
    std::set<std::size_t> left;
    for (std::size_t i = 0; i < pts.size(); ++i) left.insert(i);
    std::vector<std::set<std::size_t>> fronts;
    while (!left.empty()) {
        std::set<std::size_t> f;
        for (auto i : left) {
            bool dominated = false;
            for (auto j : left)
                if (j != i && dom(pts[j], pts[i])) dominated = true;
            if (!dominated) f.insert(i);
        }
        for (auto i : f) left.erase(i);
        fronts.push_back(std::move(f));
    }
    return fronts;
}

// Small grouped regression problem with four candidate features: two carry
// signal, two are noise.
inline cmrplan::SearchDataset toy_dataset(std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    cmrplan::SearchDataset ds;
    ds.feature_names = {"a", "b", "n1", "n2"};
    for (int p = 0; p < 8; ++p)
        for (int r = 0; r < 3; ++r) {
            const double a = u(rng), b = u(rng);
            ds.features.push_back({a, b, u(rng), u(rng)});
            ds.targets.push_back(3.0 * a + std::sin(2.0 * b) + 0.1 * u(rng));
            ds.groups.push_back("p" + std::to_string(p));
        }
    return ds;
}

inline cmrplan::GaConfig toy_config(std::uint64_t seed)
{
    cmrplan::GaConfig cfg;
    cfg.population_size = 12;
    cfg.generations = 15;
    cfg.k_folds = 4;
    cfg.seed = seed;
    cfg.log2_c_grid = {-2.0, 2.0, 6.0};
    cfg.log2_gamma_grid = {-6.0, -2.0, 1.0};
    return cfg;
}

} // namespace oracle
