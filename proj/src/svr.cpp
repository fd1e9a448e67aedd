#include "cmrplan/svr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "cmrplan/error.hpp"

namespace cmrplan {

std::size_t FeatureMask::count() const noexcept
{
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), true));
}

std::vector<std::size_t> FeatureMask::indices() const
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < bits_.size(); ++i)
        if (bits_[i]) out.push_back(i);
    return out;
}

std::string FeatureMask::to_string() const
{
    std::string s;
    s.reserve(bits_.size());
    for (bool b : bits_) s.push_back(b ? '1' : '0');
    return s;
}

FeatureMask FeatureMask::from_string(const std::string& s)
{
    std::vector<bool> bits;
    bits.reserve(s.size());
    for (char c : s) {
        if (c != '0' && c != '1') throw SchemaError("feature mask must be a string of 0/1");
        bits.push_back(c == '1');
    }
    return FeatureMask(std::move(bits));
}

void SvrParams::validate() const
{
    if (!(c_penalty > 0.0) || !std::isfinite(c_penalty)) throw ParameterError("C must be positive and finite");
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ParameterError("gamma must be positive and finite");
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ParameterError("epsilon must be non-negative and finite");
    if (!(tolerance > 0.0) || !std::isfinite(tolerance)) throw ParameterError("tolerance must be positive and finite");
}

double rbf_kernel(std::span<const double> x, std::span<const double> y, double gamma)
{
    if (x.size() != y.size()) throw PreconditionError("kernel arguments differ in dimension");
    double d2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        d2 += d * d;
    }
    return std::exp(-gamma * d2);
}

double svr_dual_objective(const Eigen::MatrixXd& kernel, std::span<const double> y, const Eigen::VectorXd& coeffs,
                          double epsilon)
{
    const auto n = static_cast<Eigen::Index>(y.size());
    double quad = coeffs.dot(kernel * coeffs);
    double lin = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) lin += y[static_cast<std::size_t>(i)] * coeffs[i] - epsilon * std::abs(coeffs[i]);
    return -0.5 * quad + lin;
}

namespace {

// Variables a[0..2l): a[t] = alpha_t for t < l, alpha*_{t-l} otherwise, with
// sign s[t] = +1 / -1. Minimizes 0.5 a'Qa + p'a subject to s'a = 0,
// 0 <= a <= C, where Q_tu = s_t s_u K, so G = Qa + p.
struct DualState {
    const Eigen::MatrixXd& kernel;
    std::span<const double> y;
    double c, epsilon;
    std::size_t l;
    std::vector<double> a, g;

    DualState(const Eigen::MatrixXd& k, std::span<const double> yy, double cc, double eps)
        : kernel(k), y(yy), c(cc), epsilon(eps), l(yy.size()), a(2 * l, 0.0), g(2 * l)
    {
        for (std::size_t t = 0; t < l; ++t) {
            g[t] = epsilon - y[t];
            g[t + l] = epsilon + y[t];
        }
    }

    void set_beta(const std::vector<double>& beta)
    {
        const double* kd = kernel.data();
        for (std::size_t t = 0; t < l; ++t) {
            a[t] = std::max(beta[t], 0.0);
            a[t + l] = std::max(-beta[t], 0.0);
        }
        for (std::size_t t = 0; t < l; ++t) {
            double kb = 0.0;
            const double* kt = kd + t * l;
            for (std::size_t u = 0; u < l; ++u) kb += kt[u] * beta[u];
            g[t] = kb + epsilon - y[t];
            g[t + l] = -kb + epsilon + y[t];
        }
    }

    double gap() const
    {
        double up = -std::numeric_limits<double>::infinity(), low = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < l; ++t) {
            if (a[t] < c) up = std::max(up, -g[t]);
            if (a[t + l] > 0.0) up = std::max(up, g[t + l]);
            if (a[t] > 0.0) low = std::min(low, -g[t]);
            if (a[t + l] < c) low = std::min(low, g[t + l]);
        }
        return up - low;
    }
};

// SMO with second-order working-set selection. Returns true once the maximal
// violation drops below tol.
bool smo(DualState& st, double tol, std::size_t budget, std::size_t& iter)
{
    const std::size_t l = st.l, n = 2 * l;
    const double c = st.c;
    auto& a = st.a;
    auto& g = st.g;
    auto sgn = [l](std::size_t t) { return t < l ? 1.0 : -1.0; };
    auto idx = [l](std::size_t t) { return t < l ? t : t - l; };
    const double* kd = st.kernel.data(); // column-major and symmetric: column u is row u
    auto kcol = [&](std::size_t t) { return kd + idx(t) * l; };
    auto q = [&](std::size_t t, std::size_t u) { return sgn(t) * sgn(u) * kd[idx(t) * l + idx(u)]; };
    constexpr double tau = 1e-12;

    for (std::size_t spent = 0; spent < budget; ++spent, ++iter) {
        // Maximal violating index i over I_up, in the order -s_t g_t.
        double gmax = -std::numeric_limits<double>::infinity();
        std::size_t i = n;
        for (std::size_t t = 0; t < l; ++t)
            if (a[t] < c && -g[t] > gmax) {
                gmax = -g[t];
                i = t;
            }
        for (std::size_t t = l; t < n; ++t)
            if (a[t] > 0.0 && g[t] > gmax) {
                gmax = g[t];
                i = t;
            }
        double gmin = std::numeric_limits<double>::infinity();
        double best = std::numeric_limits<double>::infinity();
        std::size_t j = n;
        if (i != n) {
            const double* ki = kcol(i);
            const double kii = ki[idx(i)];
            auto consider = [&](std::size_t t, double v, std::size_t r) {
                gmin = std::min(gmin, v);
                const double b = gmax - v;
                if (b <= 0.0) return;
                double curv = kii + kd[r * l + r] - 2.0 * ki[r];
                if (curv <= 0.0) curv = tau;
                const double obj = -(b * b) / curv;
                if (obj < best) {
                    best = obj;
                    j = t;
                }
            };
            for (std::size_t t = 0; t < l; ++t)
                if (a[t] > 0.0) consider(t, -g[t], t);
            for (std::size_t t = l; t < n; ++t)
                if (a[t] < c) consider(t, g[t], t - l);
        }
        if (i == n || j == n || gmax - gmin < tol) return true;

        const double qii = q(i, i), qjj = q(j, j), qij = q(i, j);
        const double old_ai = a[i], old_aj = a[j];
        if (sgn(i) != sgn(j)) {
            double quad = qii + qjj + 2.0 * qij;
            if (quad <= 0.0) quad = tau;
            const double delta = (-g[i] - g[j]) / quad;
            const double diff = a[i] - a[j];
            a[i] += delta;
            a[j] += delta;
            if (diff > 0.0) {
                if (a[j] < 0.0) {
                    a[j] = 0.0;
                    a[i] = diff;
                }
            } else if (a[i] < 0.0) {
                a[i] = 0.0;
                a[j] = -diff;
            }
            if (diff > 0.0) {
                if (a[i] > c) {
                    a[i] = c;
                    a[j] = c - diff;
                }
            } else if (a[j] > c) {
                a[j] = c;
                a[i] = c + diff;
            }
        } else {
            double quad = qii + qjj - 2.0 * qij;
            if (quad <= 0.0) quad = tau;
            const double delta = (g[i] - g[j]) / quad;
            const double sum = a[i] + a[j];
            a[i] -= delta;
            a[j] += delta;
            if (sum > c) {
                if (a[i] > c) {
                    a[i] = c;
                    a[j] = sum - c;
                }
            } else if (a[j] < 0.0) {
                a[j] = 0.0;
                a[i] = sum;
            }
            if (sum > c) {
                if (a[j] > c) {
                    a[j] = c;
                    a[i] = sum - c;
                }
            } else if (a[i] < 0.0) {
                a[i] = 0.0;
                a[j] = sum;
            }
        }
        // g_t += Q_ti di + Q_tj dj with Q_tu = s_t s_u K; the two halves differ only in s_t.
        const double wi = sgn(i) * (a[i] - old_ai), wj = sgn(j) * (a[j] - old_aj);
        const double* ki = kcol(i);
        const double* kj = kcol(j);
        for (std::size_t t = 0; t < l; ++t) {
            const double w = wi * ki[t] + wj * kj[t];
            g[t] += w;
            g[t + l] -= w;
        }
    }
    return false;
}

// Primal-dual interior point (Mehrotra predictor-corrector) on the box QP. In
// beta = alpha - alpha* form each Newton step needs one l x l Cholesky of
// K + H, H the harmonic mean of the two barrier diagonals. Outputs the interior
// iterate together with which bound each variable approaches.
struct InteriorResult {
    std::vector<double> beta;
    std::vector<int> side; // -1 at -C, +1 at +C, 0 at zero, 2 free positive, -2 free negative
};

std::optional<InteriorResult> interior_point(const DualState& st)
{
    const std::size_t l = st.l, n = 2 * l;
    const double c = st.c;
    const auto L = static_cast<Eigen::Index>(l);
    const Eigen::MatrixXd& k = st.kernel;
    Eigen::VectorXd x = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 0.5 * c);
    Eigen::VectorXd z = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n)), v = z;
    Eigen::VectorXd p(static_cast<Eigen::Index>(n));
    double ynorm = 1.0;
    for (std::size_t t = 0; t < l; ++t) {
        p[static_cast<Eigen::Index>(t)] = st.epsilon - st.y[t];
        p[static_cast<Eigen::Index>(t + l)] = st.epsilon + st.y[t];
        ynorm = std::max(ynorm, std::abs(st.y[t]) + st.epsilon);
    }
    double b = 0.0;
    const auto N = static_cast<Eigen::Index>(n);

    auto residual = [&](Eigen::VectorXd& rd) {
        const Eigen::VectorXd beta = x.head(L) - x.tail(L);
        const Eigen::VectorXd kb = k * beta;
        rd.resize(N);
        rd.head(L) = -(kb + p.head(L) - Eigen::VectorXd::Constant(L, b) - z.head(L) + v.head(L));
        rd.tail(L) = -(-kb + p.tail(L) + Eigen::VectorXd::Constant(L, b) - z.tail(L) + v.tail(L));
    };
    auto max_step = [](const Eigen::VectorXd& s, const Eigen::VectorXd& ds) {
        double step = 1.0;
        for (Eigen::Index t = 0; t < s.size(); ++t)
            if (ds[t] < 0.0) step = std::min(step, -s[t] / ds[t]);
        return step;
    };

    Eigen::VectorXd rd;
    for (int it = 0; it < 100; ++it) {
        const Eigen::VectorXd w = Eigen::VectorXd::Constant(N, c) - x;
        const double mu = (x.dot(z) + w.dot(v)) / static_cast<double>(2 * n);
        residual(rd);
        if (rd.lpNorm<Eigen::Infinity>() < 1e-9 * (1.0 + c) * ynorm && mu < 1e-12 * (1.0 + c) * ynorm) break;

        const Eigen::VectorXd d = z.cwiseQuotient(x) + v.cwiseQuotient(w);
        const Eigen::VectorXd d1 = d.head(L), d2 = d.tail(L);
        Eigen::MatrixXd m = k;
        m.diagonal() += d1.cwiseProduct(d2).cwiseQuotient(d1 + d2);
        const Eigen::LLT<Eigen::MatrixXd> chol(m);
        if (chol.info() != Eigen::Success) return std::nullopt;
        const Eigen::VectorXd minv1 = chol.solve(Eigen::VectorXd::Ones(L));
        const double one_minv1 = minv1.sum();

        // Solves the Newton system for complementarity targets rxz = x.*dz + z.*dx
        // and rwv = w.*dv - v.*dx.
        auto newton = [&](const Eigen::VectorXd& rxz, const Eigen::VectorXd& rwv, Eigen::VectorXd& dx,
                          Eigen::VectorXd& dz, Eigen::VectorXd& dv, double& db) {
            const Eigen::VectorXd r = rd + rxz.cwiseQuotient(x) - rwv.cwiseQuotient(w);
            const Eigen::VectorXd r1 = r.head(L), r2 = r.tail(L);
            const Eigen::VectorXd rhs = (d2.cwiseProduct(r1) - d1.cwiseProduct(r2)).cwiseQuotient(d1 + d2);
            const Eigen::VectorXd minv_rhs = chol.solve(rhs);
            db = -minv_rhs.sum() / one_minv1; // keeps 1'dbeta = 0
            const Eigen::VectorXd dbeta = minv_rhs + db * minv1;
            dx.resize(N);
            dx.head(L) = (d2.cwiseProduct(dbeta) + r1 + r2).cwiseQuotient(d1 + d2);
            dx.tail(L) = dx.head(L) - dbeta;
            dz = (rxz - z.cwiseProduct(dx)).cwiseQuotient(x);
            dv = (rwv + v.cwiseProduct(dx)).cwiseQuotient(w);
        };

        Eigen::VectorXd dx, dz, dv;
        double db = 0.0;
        newton(-x.cwiseProduct(z), -w.cwiseProduct(v), dx, dz, dv, db);
        double step = std::min({max_step(x, dx), max_step(w, -dx), max_step(z, dz), max_step(v, dv)});
        const double mu_aff = ((x + step * dx).dot(z + step * dz) + (w - step * dx).dot(v + step * dv)) /
                              static_cast<double>(2 * n);
        const double sigma = std::pow(mu_aff / mu, 3.0);
        const Eigen::VectorXd rxz =
            Eigen::VectorXd::Constant(N, sigma * mu) - x.cwiseProduct(z) - dx.cwiseProduct(dz);
        const Eigen::VectorXd rwv =
            Eigen::VectorXd::Constant(N, sigma * mu) - w.cwiseProduct(v) + dx.cwiseProduct(dv);
        newton(rxz, rwv, dx, dz, dv, db);
        step = std::min({max_step(x, dx), max_step(w, -dx), max_step(z, dz), max_step(v, dv)});
        step = std::min(1.0, 0.995 * step);
        const Eigen::VectorXd nx = x + step * dx, nz = z + step * dz, nv = v + step * dv;
        if (!nx.allFinite() || !nz.allFinite() || !nv.allFinite() || !std::isfinite(db)) break;
        x = nx;
        z = nz;
        v = nv;
        b += step * db;
    }

    InteriorResult out;
    out.beta.resize(l);
    out.side.resize(l);
    for (std::size_t t = 0; t < l; ++t) {
        const auto ta = static_cast<Eigen::Index>(t), tb = static_cast<Eigen::Index>(t + l);
        out.beta[t] = x[ta] - x[tb];
        const bool a_up = v[ta] > c - x[ta], b_up = v[tb] > c - x[tb];
        const bool a_low = z[ta] > x[ta], b_low = z[tb] > x[tb];
        if (a_up) out.side[t] = 1;
        else if (b_up) out.side[t] = -1;
        else if (a_low && b_low) out.side[t] = 0;
        else out.side[t] = out.beta[t] >= 0.0 ? 2 : -2;
    }
    return out;
}

// Exact optimum on the face fixed by `side`, or nothing if it leaves the face.
std::optional<std::vector<double>> solve_face(const DualState& st, const std::vector<int>& side)
{
    const std::size_t l = st.l;
    std::vector<double> beta(l, 0.0);
    std::vector<std::size_t> fs;
    double fixed_sum = 0.0;
    for (std::size_t t = 0; t < l; ++t) {
        if (side[t] == 1 || side[t] == -1) beta[t] = side[t] * st.c;
        else if (side[t] != 0) fs.push_back(t);
        fixed_sum += beta[t];
    }
    if (fs.empty()) return std::abs(fixed_sum) <= 1e-9 * (1.0 + st.c) ? std::optional(beta) : std::nullopt;
    const auto m = static_cast<Eigen::Index>(fs.size());
    Eigen::MatrixXd sys = Eigen::MatrixXd::Zero(m + 1, m + 1);
    Eigen::VectorXd rhs(m + 1);
    const double* kd = st.kernel.data();
    for (Eigen::Index r = 0; r < m; ++r) {
        const std::size_t i = fs[static_cast<std::size_t>(r)];
        const double* ki = kd + i * l;
        double val = st.y[i] - st.epsilon * (side[i] > 0 ? 1.0 : -1.0);
        for (std::size_t u = 0; u < l; ++u) val -= ki[u] * beta[u];
        for (Eigen::Index s = 0; s < m; ++s) sys(r, s) = ki[fs[static_cast<std::size_t>(s)]];
        sys(r, m) = 1.0;
        sys(m, r) = 1.0;
        rhs[r] = val;
    }
    rhs[m] = -fixed_sum;
    const Eigen::VectorXd sol = sys.completeOrthogonalDecomposition().solve(rhs);
    if (!sol.allFinite()) return std::nullopt;
    for (Eigen::Index r = 0; r < m; ++r) {
        const std::size_t i = fs[static_cast<std::size_t>(r)];
        const double v = sol[r] * (side[i] > 0 ? 1.0 : -1.0);
        if (v < 0.0 || v > st.c) return std::nullopt;
        beta[i] = sol[r];
    }
    return beta;
}

} // namespace

DualSolution solve_svr_dual(const Eigen::MatrixXd& kernel, std::span<const double> y, double c, double epsilon,
                            double tol, std::size_t max_iter)
{
    const std::size_t l = y.size();
    if (l == 0) throw PreconditionError("SVR needs at least one sample");
    if (kernel.rows() != static_cast<Eigen::Index>(l) || kernel.cols() != static_cast<Eigen::Index>(l))
        throw PreconditionError("kernel matrix does not match sample count");
    const std::size_t n = 2 * l;

    DualState st(kernel, y, c, epsilon);
    std::size_t iter = 0;
    // Plain SMO settles most problems within a few sweeps. Large C on a nearly
    // singular kernel makes it crawl, so past that budget an interior-point solve
    // identifies the active set and the face is solved exactly; SMO then resumes
    // from that point in case the crossover guessed wrong.
    bool done = smo(st, tol, std::min(max_iter, 5 * n), iter);
    if (!done) {
        if (const auto ip = interior_point(st)) {
            if (const auto beta = solve_face(st, ip->side)) {
                DualState trial = st;
                trial.set_beta(*beta);
                if (trial.gap() < tol) {
                    st.a = std::move(trial.a);
                    st.g = std::move(trial.g);
                    done = true;
                }
            }
            if (!done) {
                st.set_beta(ip->beta);
            }
        }
        if (!done) done = smo(st, tol, max_iter - iter, iter);
    }
    if (!done) throw ConvergenceError("SVR solver hit the iteration limit");

    const auto& a = st.a;
    const auto& g = st.g;
    auto sgn = [l](std::size_t t) { return t < l ? 1.0 : -1.0; };
    // Bias: average over free variables, else the midpoint of the feasible range.
    double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
    std::size_t n_free = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double yg = sgn(t) * g[t];
        const bool at_upper = a[t] >= c, at_lower = a[t] <= 0.0;
        if (at_upper) {
            if (sgn(t) < 0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else if (at_lower) {
            if (sgn(t) > 0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else {
            ++n_free;
            sum_free += yg;
        }
    }
    const double rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : 0.5 * (ub + lb);

    DualSolution out;
    out.coeffs.resize(static_cast<Eigen::Index>(l));
    for (std::size_t t = 0; t < l; ++t) out.coeffs[static_cast<Eigen::Index>(t)] = a[t] - a[t + l];
    out.bias = -rho;
    out.iterations = iter;
    out.objective = svr_dual_objective(kernel, y, out.coeffs, epsilon);
    return out;
}

namespace {

std::vector<double> select(std::span<const double> features, const std::vector<std::size_t>& idx)
{
    std::vector<double> out(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) out[k] = features[idx[k]];
    return out;
}

void standardize(std::vector<double>& x, const Scaler& s)
{
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = (x[k] - s.mean[k]) / s.stddev[k];
}

} // namespace

SvrModel train(std::span<const TrainingSample> data, const SvrParams& p, const FeatureMask& mask,
               std::span<const std::string> feature_names)
{
    p.validate();
    if (data.empty()) throw PreconditionError("training needs at least one sample");
    if (!mask.any()) throw PreconditionError("feature mask selects no features");
    for (const auto& s : data)
        if (s.features.size() != mask.size()) throw PreconditionError("sample feature count does not match mask");
    if (!feature_names.empty() && feature_names.size() != mask.size())
        throw PreconditionError("feature names do not match mask");

    const auto idx = mask.indices();
    const std::size_t l = data.size(), d = idx.size();
    const double nl = static_cast<double>(l);

    SvrModel m;
    m.params = p;
    m.feature_mask = mask;
    for (auto k : idx)
        if (!feature_names.empty()) m.feature_names.push_back(feature_names[k]);

    std::vector<std::vector<double>> x(l);
    for (std::size_t i = 0; i < l; ++i) x[i] = select(data[i].features, idx);
    m.scaler.mean.assign(d, 0.0);
    m.scaler.stddev.assign(d, 1.0);
    for (std::size_t k = 0; k < d; ++k) {
        double mean = 0.0;
        for (const auto& r : x) mean += r[k];
        mean /= nl;
        double var = 0.0;
        for (const auto& r : x) var += (r[k] - mean) * (r[k] - mean);
        var /= nl;
        m.scaler.mean[k] = mean;
        // A single sample carries no spread; unit scale keeps it well defined.
        if (l > 1) {
            if (!(var > 0.0)) throw TrainingError("selected feature is constant over the training set");
            m.scaler.stddev[k] = std::sqrt(var);
        }
    }
    for (auto& r : x) standardize(r, m.scaler);

    double ymean = 0.0;
    for (const auto& s : data) ymean += s.target;
    ymean /= nl;
    double yvar = 0.0;
    for (const auto& s : data) yvar += (s.target - ymean) * (s.target - ymean);
    yvar /= nl;
    m.target_scaler = {ymean, yvar > 0.0 ? std::sqrt(yvar) : 1.0};
    std::vector<double> y(l);
    for (std::size_t i = 0; i < l; ++i) y[i] = (data[i].target - ymean) / m.target_scaler.stddev;

    Eigen::MatrixXd k(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(l));
    for (std::size_t i = 0; i < l; ++i) {
        k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = 1.0;
        for (std::size_t j = i + 1; j < l; ++j) {
            const double v = rbf_kernel(x[i], x[j], p.gamma);
            k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
            k(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
        }
    }
    const auto sol = solve_svr_dual(k, y, p.c_penalty, p.epsilon, p.tolerance);
    for (std::size_t i = 0; i < l; ++i) {
        const double beta = sol.coeffs[static_cast<Eigen::Index>(i)];
        if (beta == 0.0) continue;
        m.support_vectors.push_back(x[i]);
        m.dual_coeffs.push_back(beta);
    }
    m.bias = sol.bias;
    return m;
}

double predict(const SvrModel& m, std::span<const double> features)
{
    if (features.size() != m.feature_mask.size()) throw PreconditionError("feature vector does not cover the model mask");
    auto x = select(features, m.feature_mask.indices());
    standardize(x, m.scaler);
    double f = m.bias;
    for (std::size_t i = 0; i < m.support_vectors.size(); ++i)
        f += m.dual_coeffs[i] * rbf_kernel(m.support_vectors[i], x, m.params.gamma);
    return f * m.target_scaler.stddev + m.target_scaler.mean;
}

io::Json to_json(const SvrModel& m)
{
    io::Json j;
    j["params"] = {{"c_penalty", m.params.c_penalty}, {"gamma", m.params.gamma}, {"epsilon", m.params.epsilon}, {"tolerance", m.params.tolerance}};
    j["feature_mask"] = m.feature_mask.to_string();
    j["feature_names"] = m.feature_names;
    j["scaler"] = {{"mean", m.scaler.mean}, {"stddev", m.scaler.stddev}};
    j["support_vectors"] = m.support_vectors;
    j["dual_coeffs"] = m.dual_coeffs;
    j["bias"] = m.bias;
    j["target_scaler"] = {{"mean", m.target_scaler.mean}, {"stddev", m.target_scaler.stddev}};
    return j;
}

SvrModel svr_model_from_json(const io::Json& j)
{
    SvrModel m;
    try {
        const auto& p = io::require(j, "params");
        m.params = {io::require(p, "c_penalty").get<double>(), io::require(p, "gamma").get<double>(),
                    io::require(p, "epsilon").get<double>(), p.value("tolerance", 1e-3)};
        m.feature_mask = FeatureMask::from_string(io::require(j, "feature_mask").get<std::string>());
        m.feature_names = io::require(j, "feature_names").get<std::vector<std::string>>();
        const auto& s = io::require(j, "scaler");
        m.scaler = {io::require(s, "mean").get<std::vector<double>>(), io::require(s, "stddev").get<std::vector<double>>()};
        m.support_vectors = io::require(j, "support_vectors").get<std::vector<std::vector<double>>>();
        m.dual_coeffs = io::require(j, "dual_coeffs").get<std::vector<double>>();
        m.bias = io::require(j, "bias").get<double>();
        const auto& t = io::require(j, "target_scaler");
        m.target_scaler = {io::require(t, "mean").get<double>(), io::require(t, "stddev").get<double>()};
    } catch (const io::Json::exception& e) {
        throw SchemaError(std::string("malformed model: ") + e.what());
    }

    try {
        m.params.validate();
    } catch (const ParameterError& e) {
        throw InvariantError(e.what());
    }
    const std::size_t d = m.feature_mask.count();
    if (d == 0) throw InvariantError("model mask selects no features");
    if (m.scaler.mean.size() != d || m.scaler.stddev.size() != d) throw InvariantError("scaler does not match mask");
    for (double s : m.scaler.stddev)
        if (!(s > 0.0)) throw InvariantError("scaler stddev must be positive");
    if (!m.feature_names.empty() && m.feature_names.size() != d) throw InvariantError("feature names do not match mask");
    if (m.support_vectors.size() != m.dual_coeffs.size()) throw InvariantError("support vectors and coefficients differ in count");
    for (const auto& sv : m.support_vectors)
        if (sv.size() != d) throw InvariantError("support vector dimension does not match mask");
    double sum = 0.0;
    for (double c : m.dual_coeffs) {
        if (std::abs(c) > m.params.c_penalty) throw InvariantError("dual coefficient exceeds C");
        sum += c;
    }
    if (std::abs(sum) > 1e-6) throw InvariantError("dual coefficients do not sum to zero");
    if (!(m.target_scaler.stddev > 0.0)) throw InvariantError("target scale must be positive");
    return m;
}

void save_model(const SvrModel& m, const std::string& path) { io::write_json_atomic(path, to_json(m)); }

SvrModel load_model(const std::string& path) { return svr_model_from_json(io::read_json(path)); }

} // namespace cmrplan
