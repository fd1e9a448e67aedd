#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cmrplan/anatomy.hpp"
#include "cmrplan/folds.hpp"
#include "cmrplan/io.hpp"
#include "cmrplan/model_search.hpp"
#include "cmrplan/phantom.hpp"
#include "cmrplan/svr.hpp"

namespace cmrplan {

// One localizer: an original or a noised variant of a patient's scan.
struct Case {
    std::string patient_id;
    std::optional<double> snr_tag; // none for the original
    std::string volume_path;       // as written in the manifest
    GroundTruth truth;
};

// Manifest: JSON array of {patient_id, volume, snr_tag, truth}. Volume paths
// are resolved against the manifest's directory when relative.
std::vector<Case> load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, std::span<const Case> cases);
std::filesystem::path resolve_volume_path(const std::filesystem::path& manifest, const Case& c);

// Truth elevation within this of 90 degrees marks an axially planned 2CH.
inline constexpr double axial_planned_tol_deg = 0.5;

enum class Target { lv_cx, lv_cy, lv_cz, sa_az, sa_el, ch4_az, ch4_el, ch2_az, ch2_el };
inline constexpr std::array<Target, 9> all_targets{Target::lv_cx,  Target::lv_cy,  Target::lv_cz,
                                                   Target::sa_az,  Target::sa_el,  Target::ch4_az,
                                                   Target::ch4_el, Target::ch2_az, Target::ch2_el};
std::string_view target_name(Target t);
Target parse_target(std::string_view name);
bool is_centroid_target(Target t);
bool is_azimuth_target(Target t);
double target_value(const GroundTruth& truth, Target t);

// A case with its volume and the features derived from it. Extraction
// failures are kept (with the message) rather than dropped.
struct PreparedCase {
    Case meta;
    std::shared_ptr<const Volume> volume;
    std::optional<AnatomySummary> anatomy;
    std::optional<PlaneAngles> sa_init_truth; // SA init seeded by the true LV centroid
    std::string failure;

    bool trainable() const { return anatomy.has_value() && sa_init_truth.has_value(); }
};

PreparedCase prepare_case(Case c, std::shared_ptr<const Volume> volume, const AnatomyConfig& cfg = {});
std::vector<PreparedCase> prepare_cases(std::vector<Case> cases, std::vector<std::shared_ptr<const Volume>> volumes,
                                        const AnatomyConfig& cfg, int threads);

std::vector<FoldSplit> grouped_kfold(std::span<const Case> cases, std::size_t k, std::uint64_t seed);
std::vector<FoldSplit> grouped_kfold(std::span<const PreparedCase> cases, std::size_t k, std::uint64_t seed);

struct TargetModel {
    Target target = Target::lv_cx;
    SvrModel model;
    Objectives objectives;
    ParetoFront front;
    std::vector<double> best_mad_history;
    bool constant = false; // no eligible training cases; predicts a fixed value
};

struct TrainedStack {
    std::array<TargetModel, 9> models;
    AnatomyConfig anatomy;
    GaConfig ga;
    PlaneAngles fallback_sa_init; // mean training SA init, used when the pool fit fails

    const TargetModel& model(Target t) const { return models[static_cast<std::size_t>(t)]; }
};

// Search dataset for one target over the trainable cases in `indices`.
// Azimuth targets are unwrapped around their circular mean; 2CH targets skip
// axially planned cases.
SearchDataset build_search_dataset(std::span<const PreparedCase> cases, std::span<const std::size_t> indices,
                                   Target t);

TrainedStack train_stack(std::span<const PreparedCase> cases, std::span<const std::size_t> indices,
                         const GaConfig& cfg, const AnatomyConfig& anatomy = {});
TrainedStack train_stack(std::span<const PreparedCase> cases, const GaConfig& cfg, const AnatomyConfig& anatomy = {});

struct Prediction {
    bool ok = false;
    std::string error;
    PhysicalPoint lv_centroid;
    PlaneAngles sa, ch4, ch2;
    PlaneAngles sa_init;
    bool sa_init_fallback = false;
};

// Moves an LV seed to the brightest nearby axial voxel so that a slightly
// off centroid still lands inside the blood pool.
PhysicalPoint snap_to_bloodpool(const Volume& v, const PhysicalPoint& p, double radius_mm = 12.0);

Prediction predict_case(const TrainedStack& stack, const Volume& v);
Prediction predict_case(const TrainedStack& stack, const Volume& v, const AnatomySummary& anatomy);

struct MetricRow {
    std::string name;
    std::size_t n = 0;
    double mean = 0.0;                 // mm for the centroid, degrees for planes
    std::optional<double> frac_under_15; // planes only
    std::optional<double> azimuth_mad;
    std::optional<double> elevation_mad;
};

struct FailureRecord {
    std::string patient_id;
    std::optional<double> snr_tag;
    std::string error;
};

struct Report {
    std::size_t n_cases = 0;
    std::vector<MetricRow> rows; // LV Centroid, Short Axis, 4 Chamber, 2 Chamber
    std::vector<std::pair<std::string, std::vector<MetricRow>>> per_snr; // "original", "30", ...
    std::vector<FailureRecord> failures;
};

Report evaluate(std::span<const Case> cases, std::span<const Prediction> predictions);
std::string snr_label(const std::optional<double>& snr_tag);

struct ReferenceValues {
    std::string source;
    std::array<double, 4> original;
    std::array<double, 4> noised;
};
ReferenceValues cv_reference();
ReferenceValues holdout_reference();

struct StackSummary {
    std::string training; // "original" or "noised"
    std::size_t fold = 0;
    std::vector<TargetModel> models;
};

struct PairedReport {
    std::string experiment; // "cv" or "holdout"
    Report original;        // trained on originals only
    Report noised;          // trained on originals + ladder
    ReferenceValues reference;
    std::vector<FoldSplit> folds;
    std::vector<StackSummary> stacks;
};

struct ExperimentConfig {
    GaConfig ga;
    AnatomyConfig anatomy;
    std::size_t outer_folds = 6;
    std::uint64_t seed = 0;
};

PairedReport cv_experiment(std::span<const PreparedCase> cases, const ExperimentConfig& cfg);
PairedReport holdout_experiment(std::span<const PreparedCase> train, std::span<const PreparedCase> test,
                                const ExperimentConfig& cfg);

io::Json to_json(const Case& c);
Case case_from_json(const io::Json& j);
io::Json to_json(const Prediction& p);
Prediction prediction_from_json(const io::Json& j);
io::Json to_json(const TrainedStack& s);
TrainedStack stack_from_json(const io::Json& j);
io::Json to_json(const Report& r);
io::Json to_json(const PairedReport& r);
io::Json to_json(const ExperimentConfig& c);
std::string format_report(const Report& r, const std::string& title);
std::string format_paired_report(const PairedReport& r);

} // namespace cmrplan
