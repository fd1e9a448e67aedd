#include "cmrplan/model_search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "cmrplan/error.hpp"
#include "cmrplan/geometry.hpp"
#include "cmrplan/log.hpp"
#include "cmrplan/parallel.hpp"
#include "cmrplan/rng.hpp"

namespace cmrplan {

SvrParams Genome::params(double epsilon) const { return {std::exp2(log2_c), std::exp2(log2_gamma), epsilon}; }

void GaConfig::validate() const
{
    if (population_size < 4 || population_size % 2 != 0) throw ParameterError("population_size must be even and >= 4");
    if (generations < 1) throw ParameterError("generations must be >= 1");
    if (k_folds < 2) throw ParameterError("k_folds must be >= 2");
    if (!(crossover_prob >= 0.0 && crossover_prob <= 1.0)) throw ParameterError("crossover_prob must be in [0, 1]");
    if (mutation_prob && !(*mutation_prob >= 0.0 && *mutation_prob <= 1.0))
        throw ParameterError("mutation_prob must be in [0, 1]");
    if (!(log2_c_min <= log2_c_max) || !(log2_gamma_min <= log2_gamma_max))
        throw ParameterError("search bounds are inverted");
    for (double v : log2_c_grid)
        if (v < log2_c_min || v > log2_c_max) throw ParameterError("C grid value outside bounds");
    for (double v : log2_gamma_grid)
        if (v < log2_gamma_min || v > log2_gamma_max) throw ParameterError("gamma grid value outside bounds");
    if (!(epsilon >= 0.0)) throw ParameterError("epsilon must be non-negative");
    if (threads < 1) throw ParameterError("threads must be >= 1");
}

void SearchDataset::validate() const
{
    if (features.size() != targets.size() || features.size() != groups.size())
        throw PreconditionError("dataset columns differ in length");
    if (feature_names.empty()) throw PreconditionError("dataset has no features");
    for (const auto& f : features)
        if (f.size() != feature_names.size()) throw PreconditionError("feature row has the wrong width");
}

bool dominates(const Objectives& a, const Objectives& b)
{
    const bool no_worse = a.cv_mad <= b.cv_mad && a.n_features <= b.n_features;
    const bool better = a.cv_mad < b.cv_mad || a.n_features < b.n_features;
    return no_worse && better;
}

std::vector<std::vector<std::size_t>> non_dominated_sort(std::span<const Objectives> points)
{
    const std::size_t n = points.size();
    std::vector<std::vector<std::size_t>> dominated(n);
    std::vector<std::size_t> count(n, 0);
    std::vector<std::vector<std::size_t>> fronts(1);
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t q = 0; q < n; ++q) {
            if (dominates(points[p], points[q])) dominated[p].push_back(q);
            else if (dominates(points[q], points[p])) ++count[p];
        }
        if (count[p] == 0) fronts[0].push_back(p);
    }
    while (!fronts.back().empty()) {
        std::vector<std::size_t> next;
        for (auto p : fronts.back())
            for (auto q : dominated[p])
                if (--count[q] == 0) next.push_back(q);
        std::sort(next.begin(), next.end());
        fronts.push_back(std::move(next));
    }
    fronts.pop_back();
    return fronts;
}

std::vector<double> crowding_distance(std::span<const Objectives> front)
{
    const std::size_t n = front.size();
    std::vector<double> d(n, 0.0);
    if (n <= 2) {
        std::fill(d.begin(), d.end(), std::numeric_limits<double>::infinity());
        return d;
    }
    auto objective = [&](std::size_t i, int m) {
        return m == 0 ? front[i].cv_mad : static_cast<double>(front[i].n_features);
    };
    for (int m = 0; m < 2; ++m) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return objective(a, m) < objective(b, m); });
        const double lo = objective(order.front(), m), hi = objective(order.back(), m);
        d[order.front()] = d[order.back()] = std::numeric_limits<double>::infinity();
        if (!(hi > lo)) continue;
        for (std::size_t k = 1; k + 1 < n; ++k)
            d[order[k]] += (objective(order[k + 1], m) - objective(order[k - 1], m)) / (hi - lo);
    }
    return d;
}

namespace {

double snap(double v, const std::vector<double>& grid)
{
    if (grid.empty()) return v;
    double best = grid.front();
    for (double g : grid)
        if (std::abs(g - v) < std::abs(best - v)) best = g;
    return best;
}

double mutation_prob(const GaConfig& cfg, std::size_t n_features)
{
    return cfg.mutation_prob.value_or(1.0 / static_cast<double>(n_features + 2));
}

Genome random_genome(std::size_t n_features, const GaConfig& cfg, Rng& rng)
{
    Genome g;
    g.mask = FeatureMask(n_features);
    for (std::size_t i = 0; i < n_features; ++i) g.mask.set(i, uniform(rng, 0.0, 1.0) < 0.5);
    g.log2_c = uniform(rng, cfg.log2_c_min, cfg.log2_c_max);
    g.log2_gamma = uniform(rng, cfg.log2_gamma_min, cfg.log2_gamma_max);
    return repair(std::move(g), cfg, rng());
}

double mad(std::span<const double> pred, std::span<const double> truth, bool angular)
{
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        s += angular ? std::abs(std::remainder(pred[i] - truth[i], 360.0)) : std::abs(pred[i] - truth[i]);
    return s / static_cast<double>(pred.size());
}

struct Ranked {
    std::vector<std::size_t> rank;
    std::vector<double> crowding;
};

Ranked rank_population(std::span<const Objectives> obj)
{
    Ranked r{std::vector<std::size_t>(obj.size()), std::vector<double>(obj.size())};
    const auto fronts = non_dominated_sort(obj);
    for (std::size_t f = 0; f < fronts.size(); ++f) {
        std::vector<Objectives> members;
        for (auto i : fronts[f]) members.push_back(obj[i]);
        const auto cd = crowding_distance(members);
        for (std::size_t k = 0; k < fronts[f].size(); ++k) {
            r.rank[fronts[f][k]] = f;
            r.crowding[fronts[f][k]] = cd[k];
        }
    }
    return r;
}

bool crowded_less(const Ranked& r, std::size_t a, std::size_t b)
{
    if (r.rank[a] != r.rank[b]) return r.rank[a] < r.rank[b];
    return r.crowding[a] > r.crowding[b];
}

class Evaluator {
public:
    Evaluator(const SearchDataset& ds, const GaConfig& cfg)
        : ds_(ds), cfg_(cfg), folds_(grouped_kfold(ds.groups, cfg.k_folds, cfg.seed))
    {
    }

    // Evaluates the genomes not yet cached, in parallel; results are keyed by
    // genome so the outcome does not depend on scheduling.
    std::vector<Objectives> operator()(const std::vector<Genome>& genomes)
    {
        std::vector<Genome> fresh;
        for (const auto& g : genomes)
            if (!cache_.contains(g) && std::find(fresh.begin(), fresh.end(), g) == fresh.end()) fresh.push_back(g);
        std::vector<Objectives> results(fresh.size());
        parallel_for(fresh.size(), cfg_.threads,
                     [&](std::size_t i) { results[i] = evaluate_genome(fresh[i], ds_, cfg_, folds_); });
        for (std::size_t i = 0; i < fresh.size(); ++i) cache_.emplace(fresh[i], results[i]);
        std::vector<Objectives> out;
        out.reserve(genomes.size());
        for (const auto& g : genomes) out.push_back(cache_.at(g));
        return out;
    }

    std::size_t evaluations() const { return cache_.size(); }

private:
    const SearchDataset& ds_;
    const GaConfig& cfg_;
    std::vector<FoldSplit> folds_;
    std::map<Genome, Objectives> cache_;
};

} // namespace

Genome repair(Genome g, const GaConfig& cfg, std::uint64_t seed)
{
    if (g.mask.size() == 0) throw PreconditionError("genome has no feature slots");
    if (!g.mask.any()) g.mask.set(static_cast<std::size_t>(mix64(seed) % g.mask.size()));
    g.log2_c = snap(std::clamp(g.log2_c, cfg.log2_c_min, cfg.log2_c_max), cfg.log2_c_grid);
    g.log2_gamma = snap(std::clamp(g.log2_gamma, cfg.log2_gamma_min, cfg.log2_gamma_max), cfg.log2_gamma_grid);
    return g;
}

Objectives evaluate_genome(const Genome& g, const SearchDataset& ds, const GaConfig& cfg,
                           std::span<const FoldSplit> folds)
{
    const Genome rg = repair(g, cfg, derive_seed(cfg.seed, 0x72657061ULL));
    const Objectives failed{failed_cv_mad, rg.mask.count()};
    std::vector<double> pred, truth;
    try {
        const auto params = rg.params(cfg.epsilon);
        for (const auto& f : folds) {
            std::vector<TrainingSample> train_set;
            train_set.reserve(f.train.size());
            for (auto i : f.train) train_set.push_back({ds.features[i], ds.targets[i]});
            const auto model = train(train_set, params, rg.mask);
            for (auto i : f.test) {
                pred.push_back(predict(model, ds.features[i]));
                truth.push_back(ds.targets[i]);
            }
        }
    } catch (const Error& e) {
        log::debug("genome ", rg.mask.to_string(), " failed: ", e.what());
        return failed;
    }
    if (pred.empty()) return failed;
    const double m = mad(pred, truth, ds.angular);
    return {std::isfinite(m) ? m : failed_cv_mad, rg.mask.count()};
}

Objectives evaluate_genome(const Genome& g, const SearchDataset& ds, const GaConfig& cfg)
{
    ds.validate();
    const auto folds = grouped_kfold(ds.groups, cfg.k_folds, cfg.seed);
    return evaluate_genome(g, ds, cfg, folds);
}

SearchResult run_nsga2(const SearchDataset& ds, const GaConfig& cfg)
{
    cfg.validate();
    ds.validate();
    const std::size_t nf = ds.n_features();
    const std::size_t n = cfg.population_size;
    const double pm = mutation_prob(cfg, nf);
    Evaluator evaluate(ds, cfg);

    std::vector<Genome> pop;
    {
        Rng rng(derive_seed(cfg.seed, 0x696e6974ULL));
        for (std::size_t i = 0; i < n; ++i) pop.push_back(random_genome(nf, cfg, rng));
    }
    std::vector<Objectives> obj = evaluate(pop);

    SearchResult result;
    auto record_best = [&] {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& o : obj) best = std::min(best, o.cv_mad);
        result.best_mad_history.push_back(best);
    };
    record_best();

    const double c_range = cfg.log2_c_max - cfg.log2_c_min;
    const double g_range = cfg.log2_gamma_max - cfg.log2_gamma_min;
    for (std::size_t gen = 1; gen <= cfg.generations; ++gen) {
        Rng rng(derive_seed(cfg.seed, 0x67656eULL, gen));
        const Ranked ranked = rank_population(obj);
        auto tournament = [&]() -> const Genome& {
            const auto a = static_cast<std::size_t>(rng() % n), b = static_cast<std::size_t>(rng() % n);
            return pop[crowded_less(ranked, b, a) ? b : a];
        };

        std::vector<Genome> children;
        while (children.size() < n) {
            Genome x = tournament(), y = tournament();
            if (uniform(rng, 0.0, 1.0) < cfg.crossover_prob) {
                for (std::size_t i = 0; i < nf; ++i)
                    if (uniform(rng, 0.0, 1.0) < 0.5) {
                        const bool t = x.mask[i];
                        x.mask.set(i, y.mask[i]);
                        y.mask.set(i, t);
                    }
                // BLX-0.5 on each real gene.
                auto blend = [&](double& u, double& v) {
                    const double lo = std::min(u, v), hi = std::max(u, v), ext = 0.5 * (hi - lo);
                    u = uniform(rng, lo - ext, hi + ext);
                    v = uniform(rng, lo - ext, hi + ext);
                };
                blend(x.log2_c, y.log2_c);
                blend(x.log2_gamma, y.log2_gamma);
            }
            for (Genome* c : {&x, &y}) {
                for (std::size_t i = 0; i < nf; ++i)
                    if (uniform(rng, 0.0, 1.0) < pm) c->mask.set(i, !c->mask[i]);
                if (uniform(rng, 0.0, 1.0) < pm)
                    c->log2_c += std::normal_distribution<double>(0.0, 0.1 * c_range)(rng);
                if (uniform(rng, 0.0, 1.0) < pm)
                    c->log2_gamma += std::normal_distribution<double>(0.0, 0.1 * g_range)(rng);
                children.push_back(repair(std::move(*c), cfg, rng()));
            }
        }
        children.resize(n);
        const auto child_obj = evaluate(children);

        std::vector<Genome> merged = pop;
        merged.insert(merged.end(), children.begin(), children.end());
        std::vector<Objectives> merged_obj = obj;
        merged_obj.insert(merged_obj.end(), child_obj.begin(), child_obj.end());
        const Ranked mr = rank_population(merged_obj);
        std::vector<std::size_t> order(merged.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return crowded_less(mr, a, b); });

        std::vector<Genome> next_pop;
        std::vector<Objectives> next_obj;
        for (std::size_t k = 0; k < n; ++k) {
            next_pop.push_back(merged[order[k]]);
            next_obj.push_back(merged_obj[order[k]]);
        }
        pop = std::move(next_pop);
        obj = std::move(next_obj);
        record_best();
        log::debug("generation ", gen, " best mad ", result.best_mad_history.back());
    }

    const auto fronts = non_dominated_sort(obj);
    std::map<Genome, Objectives> unique;
    for (auto i : fronts.front()) unique.emplace(pop[i], obj[i]);
    for (const auto& [g, o] : unique) result.front.push_back({g, o});
    std::stable_sort(result.front.begin(), result.front.end(), [](const auto& a, const auto& b) {
        if (a.objectives.cv_mad != b.objectives.cv_mad) return a.objectives.cv_mad < b.objectives.cv_mad;
        return a.objectives.n_features < b.objectives.n_features;
    });
    result.evaluations = evaluate.evaluations();
    return result;
}

const EvaluatedGenome& pick_final(const ParetoFront& front)
{
    if (front.empty()) throw PreconditionError("empty Pareto front");
    const EvaluatedGenome* best = &front.front();
    for (const auto& e : front) {
        const auto& a = e.objectives;
        const auto& b = best->objectives;
        if (a.cv_mad != b.cv_mad) {
            if (a.cv_mad < b.cv_mad) best = &e;
        } else if (a.n_features != b.n_features) {
            if (a.n_features < b.n_features) best = &e;
        } else if (e.genome < best->genome) {
            best = &e;
        }
    }
    return *best;
}

io::Json to_json(const Genome& g)
{
    return {{"feature_mask", g.mask.to_string()}, {"log2_c", g.log2_c}, {"log2_gamma", g.log2_gamma}};
}

io::Json to_json(const ParetoFront& front)
{
    io::Json arr = io::Json::array();
    for (const auto& e : front) {
        io::Json j = to_json(e.genome);
        j["cv_mad"] = e.objectives.cv_mad;
        j["n_features"] = e.objectives.n_features;
        arr.push_back(std::move(j));
    }
    return arr;
}

io::Json to_json(const GaConfig& c)
{
    io::Json j{{"population_size", c.population_size},
               {"generations", c.generations},
               {"k_folds", c.k_folds},
               {"crossover_prob", c.crossover_prob},
               {"seed", c.seed},
               {"log2_c_bounds", {c.log2_c_min, c.log2_c_max}},
               {"log2_gamma_bounds", {c.log2_gamma_min, c.log2_gamma_max}},
               {"log2_c_grid", c.log2_c_grid},
               {"log2_gamma_grid", c.log2_gamma_grid},
               {"epsilon", c.epsilon}};
    j["mutation_prob"] = c.mutation_prob ? io::Json(*c.mutation_prob) : io::Json(nullptr);
    return j;
}

Genome genome_from_json(const io::Json& j)
{
    try {
        return {FeatureMask::from_string(io::require(j, "feature_mask").get<std::string>()),
                io::require(j, "log2_c").get<double>(), io::require(j, "log2_gamma").get<double>()};
    } catch (const io::Json::exception& e) {
        throw SchemaError(std::string("malformed genome: ") + e.what());
    }
}

GaConfig ga_config_from_json(const io::Json& j, GaConfig c)
{
    try {
        if (j.contains("population_size")) c.population_size = j["population_size"].get<std::size_t>();
        if (j.contains("generations")) c.generations = j["generations"].get<std::size_t>();
        if (j.contains("k_folds")) c.k_folds = j["k_folds"].get<std::size_t>();
        if (j.contains("crossover_prob")) c.crossover_prob = j["crossover_prob"].get<double>();
        if (j.contains("mutation_prob") && !j["mutation_prob"].is_null()) c.mutation_prob = j["mutation_prob"].get<double>();
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("log2_c_bounds")) {
            c.log2_c_min = j["log2_c_bounds"].at(0).get<double>();
            c.log2_c_max = j["log2_c_bounds"].at(1).get<double>();
        }
        if (j.contains("log2_gamma_bounds")) {
            c.log2_gamma_min = j["log2_gamma_bounds"].at(0).get<double>();
            c.log2_gamma_max = j["log2_gamma_bounds"].at(1).get<double>();
        }
        if (j.contains("log2_c_grid")) c.log2_c_grid = j["log2_c_grid"].get<std::vector<double>>();
        if (j.contains("log2_gamma_grid")) c.log2_gamma_grid = j["log2_gamma_grid"].get<std::vector<double>>();
        if (j.contains("epsilon")) c.epsilon = j["epsilon"].get<double>();
        if (j.contains("threads")) c.threads = j["threads"].get<int>();
    } catch (const io::Json::exception& e) {
        throw SchemaError(std::string("malformed GA config: ") + e.what());
    }
    c.validate();
    return c;
}

} // namespace cmrplan
