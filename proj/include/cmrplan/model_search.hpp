#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmrplan/folds.hpp"
#include "cmrplan/io.hpp"
#include "cmrplan/svr.hpp"

namespace cmrplan {

struct Genome {
    FeatureMask mask;
    double log2_c = 0.0;
    double log2_gamma = 0.0;

    SvrParams params(double epsilon) const;
    friend bool operator==(const Genome&, const Genome&) = default;
    friend auto operator<=>(const Genome&, const Genome&) = default;
};

struct Objectives {
    double cv_mad = 0.0;
    std::size_t n_features = 0;
    friend bool operator==(const Objectives&, const Objectives&) = default;
};

// Reported for genomes whose training failed in some fold.
inline constexpr double failed_cv_mad = 1e12;

struct GaConfig {
    std::size_t population_size = 40;
    std::size_t generations = 50;
    std::size_t k_folds = 6;
    double crossover_prob = 0.9;
    std::optional<double> mutation_prob; // unset: 1 / genome length
    std::uint64_t seed = 0;
    double log2_c_min = -5.0, log2_c_max = 15.0;
    double log2_gamma_min = -15.0, log2_gamma_max = 3.0;
    // Non-empty grids restrict the reals to the listed log2 values.
    std::vector<double> log2_c_grid;
    std::vector<double> log2_gamma_grid;
    double epsilon = 0.1;
    int threads = 1;

    void validate() const;
};

struct SearchDataset {
    std::vector<std::vector<double>> features;
    std::vector<double> targets;
    std::vector<std::string> groups; // patient ids
    std::vector<std::string> feature_names;
    bool angular = false; // MAD wraps differences to [-180, 180]

    std::size_t n_features() const { return feature_names.size(); }
    void validate() const;
};

struct EvaluatedGenome {
    Genome genome;
    Objectives objectives;
};

using ParetoFront = std::vector<EvaluatedGenome>;

struct SearchResult {
    ParetoFront front;
    std::vector<double> best_mad_history; // best cv_mad in the population: initial, then after each generation
    std::size_t evaluations = 0;          // distinct genomes evaluated
};

bool dominates(const Objectives& a, const Objectives& b);
std::vector<std::vector<std::size_t>> non_dominated_sort(std::span<const Objectives> points);
std::vector<double> crowding_distance(std::span<const Objectives> front);

// Empty masks get one bit chosen from `seed`; reals are clamped (and snapped to grids).
Genome repair(Genome g, const GaConfig& cfg, std::uint64_t seed);

Objectives evaluate_genome(const Genome& g, const SearchDataset& ds, const GaConfig& cfg);
Objectives evaluate_genome(const Genome& g, const SearchDataset& ds, const GaConfig& cfg,
                           std::span<const FoldSplit> folds);

SearchResult run_nsga2(const SearchDataset& ds, const GaConfig& cfg);
const EvaluatedGenome& pick_final(const ParetoFront& front);

io::Json to_json(const Genome& g);
io::Json to_json(const ParetoFront& front);
io::Json to_json(const GaConfig& c);
Genome genome_from_json(const io::Json& j);
GaConfig ga_config_from_json(const io::Json& j, GaConfig base = {});

} // namespace cmrplan
