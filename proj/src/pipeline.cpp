#include "cmrplan/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <limits>
#include <set>
#include <sstream>

#include "cmrplan/error.hpp"
#include "cmrplan/geometry.hpp"
#include "cmrplan/log.hpp"
#include "cmrplan/parallel.hpp"
#include "cmrplan/rng.hpp"

namespace cmrplan {

namespace {

constexpr double deg = std::numbers::pi / 180.0;

const std::array<std::string_view, 9> target_names{"lv_cx",  "lv_cy",  "lv_cz",  "sa_az", "sa_el",
                                                   "ch4_az", "ch4_el", "ch2_az", "ch2_el"};

bool is_ch2_target(Target t) { return t == Target::ch2_az || t == Target::ch2_el; }

std::vector<double> features_for(const PreparedCase& c, Target t)
{
    if (is_centroid_target(t)) {
        const auto v = centroid_features(*c.anatomy).values();
        return {v.begin(), v.end()};
    }
    const auto v = angulation_features(*c.anatomy, *c.sa_init_truth).values();
    return {v.begin(), v.end()};
}

std::vector<std::string> feature_names_for(Target t)
{
    if (is_centroid_target(t)) {
        const auto& n = CentroidFeatures::names();
        return {n.begin(), n.end()};
    }
    const auto& n = AngulationFeatures::names();
    return {n.begin(), n.end()};
}

// Model that ignores its inputs and returns `value`.
SvrModel constant_model(double value, std::size_t n_features, const std::vector<std::string>& names)
{
    SvrModel m;
    m.params = {1.0, 1.0, 0.1};
    m.feature_mask = FeatureMask(n_features);
    m.feature_mask.set(0);
    m.feature_names = {names.front()};
    m.scaler = {{0.0}, {1.0}};
    m.bias = 0.0;
    m.target_scaler = {value, 1.0};
    return m;
}

PlaneAngles mean_orientation(const std::vector<PlaneAngles>& angles)
{
    double x = 0.0, y = 0.0, z = 0.0;
    const UnitVector3 ref = angles_to_normal(angles.front());
    for (const auto& a : angles) {
        UnitVector3 n = angles_to_normal(a);
        const double s = n.dot(ref) < 0.0 ? -1.0 : 1.0;
        x += s * n.ux;
        y += s * n.uy;
        z += s * n.uz;
    }
    return normal_to_angles(UnitVector3::normalized(x, y, z));
}

} // namespace

std::string_view target_name(Target t) { return target_names[static_cast<std::size_t>(t)]; }

Target parse_target(std::string_view name)
{
    for (std::size_t i = 0; i < target_names.size(); ++i)
        if (target_names[i] == name) return all_targets[i];
    throw ParameterError("unknown target: " + std::string(name));
}

bool is_centroid_target(Target t) { return t == Target::lv_cx || t == Target::lv_cy || t == Target::lv_cz; }

bool is_azimuth_target(Target t) { return t == Target::sa_az || t == Target::ch4_az || t == Target::ch2_az; }

double target_value(const GroundTruth& truth, Target t)
{
    switch (t) {
    case Target::lv_cx: return truth.lv_centroid.x;
    case Target::lv_cy: return truth.lv_centroid.y;
    case Target::lv_cz: return truth.lv_centroid.z;
    case Target::sa_az: return truth.sa.azimuth_deg;
    case Target::sa_el: return truth.sa.elevation_deg;
    case Target::ch4_az: return truth.ch4.azimuth_deg;
    case Target::ch4_el: return truth.ch4.elevation_deg;
    case Target::ch2_az: return truth.ch2.azimuth_deg;
    case Target::ch2_el: return truth.ch2.elevation_deg;
    }
    throw ParameterError("unknown target");
}

std::vector<Case> load_manifest(const std::filesystem::path& path)
{
    const auto j = io::read_json(path);
    if (!j.is_array()) throw SchemaError("manifest must be a JSON array");
    std::vector<Case> out;
    for (const auto& e : j) out.push_back(case_from_json(e));
    return out;
}

void save_manifest(const std::filesystem::path& path, std::span<const Case> cases)
{
    io::Json j = io::Json::array();
    for (const auto& c : cases) j.push_back(to_json(c));
    io::write_json_atomic(path, j);
}

std::filesystem::path resolve_volume_path(const std::filesystem::path& manifest, const Case& c)
{
    std::filesystem::path p(c.volume_path);
    return p.is_absolute() ? p : manifest.parent_path() / p;
}

PreparedCase prepare_case(Case c, std::shared_ptr<const Volume> volume, const AnatomyConfig& cfg)
{
    PreparedCase out{std::move(c), std::move(volume), std::nullopt, std::nullopt, {}};
    try {
        out.anatomy = extract_anatomy(*out.volume, cfg);
        const auto& centroid = out.meta.truth.lv_centroid;
        const auto pool = lv_bloodpool(*out.volume, centroid, cfg.pool_seg);
        out.sa_init_truth =
            initial_short_axis(pool, index_from_world(*out.volume, centroid).z, *out.volume, cfg.pool_seg);
    } catch (const Error& e) {
        out.failure = e.what();
        log::warn("case ", out.meta.patient_id, " (", snr_label(out.meta.snr_tag), "): ", e.what());
    }
    return out;
}

std::vector<PreparedCase> prepare_cases(std::vector<Case> cases, std::vector<std::shared_ptr<const Volume>> volumes,
                                        const AnatomyConfig& cfg, int threads)
{
    if (cases.size() != volumes.size()) throw PreconditionError("cases and volumes differ in count");
    std::vector<PreparedCase> out(cases.size());
    parallel_for(cases.size(), threads,
                 [&](std::size_t i) { out[i] = prepare_case(std::move(cases[i]), std::move(volumes[i]), cfg); });
    return out;
}

std::vector<FoldSplit> grouped_kfold(std::span<const Case> cases, std::size_t k, std::uint64_t seed)
{
    std::vector<std::string> groups;
    for (const auto& c : cases) groups.push_back(c.patient_id);
    return grouped_kfold(std::span<const std::string>(groups), k, seed);
}

std::vector<FoldSplit> grouped_kfold(std::span<const PreparedCase> cases, std::size_t k, std::uint64_t seed)
{
    std::vector<std::string> groups;
    for (const auto& c : cases) groups.push_back(c.meta.patient_id);
    return grouped_kfold(std::span<const std::string>(groups), k, seed);
}

SearchDataset build_search_dataset(std::span<const PreparedCase> cases, std::span<const std::size_t> indices, Target t)
{
    SearchDataset ds;
    ds.feature_names = feature_names_for(t);
    ds.angular = is_azimuth_target(t);
    for (auto i : indices) {
        const auto& c = cases[i];
        if (!c.trainable()) continue;
        if (is_ch2_target(t) && c.meta.truth.ch2_axial_planned) continue;
        ds.features.push_back(features_for(c, t));
        ds.targets.push_back(target_value(c.meta.truth, t));
        ds.groups.push_back(c.meta.patient_id);
    }
    if (ds.angular && !ds.targets.empty()) {
        // Keep azimuths on one continuous branch so the regression target has
        // no 0/360 seam.
        double s = 0.0, co = 0.0;
        for (double a : ds.targets) {
            s += std::sin(a * deg);
            co += std::cos(a * deg);
        }
        const double centre = (std::hypot(s, co) > 1e-9) ? std::atan2(s, co) / deg : 0.0;
        for (double& a : ds.targets) a = centre + std::remainder(a - centre, 360.0);
    }
    return ds;
}

TrainedStack train_stack(std::span<const PreparedCase> cases, std::span<const std::size_t> indices,
                         const GaConfig& cfg, const AnatomyConfig& anatomy)
{
    cfg.validate();
    TrainedStack stack;
    stack.anatomy = anatomy;
    stack.ga = cfg;

    std::vector<PlaneAngles> inits;
    for (auto i : indices)
        if (cases[i].trainable()) inits.push_back(*cases[i].sa_init_truth);
    if (inits.empty()) throw TrainingError("no trainable cases");
    stack.fallback_sa_init = mean_orientation(inits);

    for (std::size_t ti = 0; ti < all_targets.size(); ++ti) {
        const Target t = all_targets[ti];
        auto& tm = stack.models[ti];
        tm.target = t;
        const auto ds = build_search_dataset(cases, indices, t);
        if (ds.targets.empty()) {
            if (!is_ch2_target(t)) throw TrainingError("no training data for " + std::string(target_name(t)));
            // Every 2CH was planned axially: the plane is fixed.
            tm.constant = true;
            tm.model = constant_model(t == Target::ch2_el ? 90.0 : 0.0, ds.n_features(), ds.feature_names);
            tm.objectives = {0.0, 1};
            continue;
        }
        GaConfig tc = cfg;
        tc.seed = derive_seed(cfg.seed, ti);
        const std::set<std::string> patients(ds.groups.begin(), ds.groups.end());
        if (patients.size() < 2) throw TrainingError("fewer than two training patients");
        tc.k_folds = std::min(tc.k_folds, patients.size());
        auto result = run_nsga2(ds, tc);
        const auto& best = pick_final(result.front);
        std::vector<TrainingSample> samples;
        for (std::size_t i = 0; i < ds.targets.size(); ++i) samples.push_back({ds.features[i], ds.targets[i]});
        tm.model = train(samples, best.genome.params(tc.epsilon), best.genome.mask, ds.feature_names);
        tm.objectives = best.objectives;
        tm.front = std::move(result.front);
        tm.best_mad_history = std::move(result.best_mad_history);
        log::info("  ", target_name(t), ": cv_mad ", tm.objectives.cv_mad, " with ", tm.objectives.n_features,
                  " features, ", result.evaluations, " evaluations");
    }
    return stack;
}

TrainedStack train_stack(std::span<const PreparedCase> cases, const GaConfig& cfg, const AnatomyConfig& anatomy)
{
    std::vector<std::size_t> all(cases.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return train_stack(cases, all, cfg, anatomy);
}

PhysicalPoint snap_to_bloodpool(const Volume& v, const PhysicalPoint& p, double radius_mm)
{
    const auto& d = v.dims();
    const auto& sp = v.spacing();
    auto clamp_index = [](double w, double s, std::int64_t n) {
        return std::clamp<std::int64_t>(std::llround(w / s), 0, n - 1);
    };
    const Index3 c{clamp_index(p.x, sp.x, d.nx), clamp_index(p.y, sp.y, d.ny), clamp_index(p.z, sp.z, d.nz)};
    const auto rx = static_cast<std::int64_t>(std::ceil(radius_mm / sp.x));
    const auto ry = static_cast<std::int64_t>(std::ceil(radius_mm / sp.y));
    auto local_mean = [&](std::int64_t x, std::int64_t y) {
        double s = 0.0;
        int n = 0;
        for (std::int64_t dy = -1; dy <= 1; ++dy)
            for (std::int64_t dx = -1; dx <= 1; ++dx) {
                const Index3 q{x + dx, y + dy, c.z};
                if (!d.contains(q)) continue;
                s += v(q.x, q.y, q.z);
                ++n;
            }
        return s / n;
    };
    Index3 best = c;
    double best_score = local_mean(c.x, c.y);
    for (std::int64_t y = c.y - ry; y <= c.y + ry; ++y)
        for (std::int64_t x = c.x - rx; x <= c.x + rx; ++x) {
            if (!d.contains({x, y, c.z})) continue;
            const double ex = static_cast<double>(x - c.x) * sp.x, ey = static_cast<double>(y - c.y) * sp.y;
            if (ex * ex + ey * ey > radius_mm * radius_mm) continue;
            const double s = local_mean(x, y);
            if (s > best_score) {
                best_score = s;
                best = {x, y, c.z};
            }
        }
    return world_from_index(v, best);
}

Prediction predict_case(const TrainedStack& stack, const Volume& v, const AnatomySummary& anatomy)
{
    Prediction out;
    try {
        const auto cf = centroid_features(anatomy).values();
        out.lv_centroid = {predict(stack.model(Target::lv_cx).model, cf), predict(stack.model(Target::lv_cy).model, cf),
                           predict(stack.model(Target::lv_cz).model, cf)};
        try {
            const auto seed = snap_to_bloodpool(v, out.lv_centroid);
            const auto pool = lv_bloodpool(v, seed, stack.anatomy.pool_seg);
            out.sa_init = initial_short_axis(pool, index_from_world(v, seed).z, v, stack.anatomy.pool_seg);
        } catch (const Error& e) {
            log::debug("SA init failed (", e.what(), "); using the training mean");
            out.sa_init = stack.fallback_sa_init;
            out.sa_init_fallback = true;
        }
        const auto af = angulation_features(anatomy, out.sa_init).values();
        auto plane = [&](Target az, Target el) {
            return canonicalize({predict(stack.model(az).model, af), predict(stack.model(el).model, af)});
        };
        out.sa = plane(Target::sa_az, Target::sa_el);
        out.ch4 = plane(Target::ch4_az, Target::ch4_el);
        out.ch2 = plane(Target::ch2_az, Target::ch2_el);
        out.ok = true;
    } catch (const Error& e) {
        out = Prediction{};
        out.error = e.what();
    }
    return out;
}

Prediction predict_case(const TrainedStack& stack, const Volume& v)
{
    try {
        return predict_case(stack, v, extract_anatomy(v, stack.anatomy));
    } catch (const Error& e) {
        Prediction out;
        out.error = e.what();
        return out;
    }
}

std::string snr_label(const std::optional<double>& snr_tag)
{
    if (!snr_tag) return "original";
    std::ostringstream os;
    os << std::round(*snr_tag);
    return os.str();
}

Report evaluate(std::span<const Case> cases, std::span<const Prediction> predictions)
{
    if (cases.size() != predictions.size()) throw PreconditionError("cases and predictions differ in count");

    struct Acc {
        std::size_t total = 0, ok = 0;
        double centroid = 0.0;
        std::array<double, 3> angle{}, az{}, el{};
        std::array<std::size_t, 3> under15{};
    };
    auto rows_of = [](const Acc& a) {
        std::vector<MetricRow> rows;
        const double n = a.ok > 0 ? static_cast<double>(a.ok) : 1.0;
        rows.push_back({"LV Centroid", a.ok, a.ok ? a.centroid / n : 0.0, std::nullopt, std::nullopt, std::nullopt});
        const char* names[3] = {"Short Axis", "4 Chamber", "2 Chamber"};
        for (int p = 0; p < 3; ++p) {
            const double frac = a.total ? static_cast<double>(a.under15[p]) / static_cast<double>(a.total) : 0.0;
            rows.push_back({names[p], a.ok, a.ok ? a.angle[p] / n : 0.0, frac, a.ok ? a.az[p] / n : 0.0,
                            a.ok ? a.el[p] / n : 0.0});
        }
        return rows;
    };

    Acc all;
    std::map<double, Acc, std::greater<>> by_snr; // original keyed as +inf
    Report r;
    r.n_cases = cases.size();
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const auto& c = cases[i];
        const auto& p = predictions[i];
        Acc& g = by_snr[c.snr_tag ? std::round(*c.snr_tag) : std::numeric_limits<double>::infinity()];
        ++all.total;
        ++g.total;
        if (!p.ok) {
            r.failures.push_back({c.patient_id, c.snr_tag, p.error});
            continue;
        }
        const PlaneAngles truth[3] = {c.truth.sa, c.truth.ch4, c.truth.ch2};
        const PlaneAngles pred[3] = {p.sa, p.ch4, p.ch2};
        for (Acc* a : {&all, &g}) {
            ++a->ok;
            a->centroid += distance(p.lv_centroid, c.truth.lv_centroid);
            for (int k = 0; k < 3; ++k) {
                const double ang = angle3d(pred[k], truth[k]);
                a->angle[k] += ang;
                if (ang < 15.0) ++a->under15[k];
                a->az[k] += std::abs(std::remainder(pred[k].azimuth_deg - truth[k].azimuth_deg, 360.0));
                a->el[k] += std::abs(pred[k].elevation_deg - truth[k].elevation_deg);
            }
        }
    }
    r.rows = rows_of(all);
    for (const auto& [key, acc] : by_snr)
        r.per_snr.emplace_back(std::isinf(key) ? std::string("original") : snr_label(key), rows_of(acc));
    return r;
}

ReferenceValues cv_reference()
{
    return {"clinical 6-fold cross-validation", {9.64, 8.94, 11.53, 7.33}, {9.26, 8.18, 10.56, 7.11}};
}

ReferenceValues holdout_reference()
{
    return {"clinical held-out test cases", {15.38, 12.86, 11.95, 9.15}, {13.75, 12.05, 11.40, 11.83}};
}

namespace {

struct Variant {
    const char* name;
    bool originals_only;
};
constexpr Variant variants[2] = {{"original", true}, {"noised", false}};

std::vector<Prediction> predict_all(const TrainedStack& stack, std::span<const PreparedCase> cases,
                                    std::span<const std::size_t> indices, int threads)
{
    std::vector<Prediction> out(indices.size());
    parallel_for(indices.size(), threads, [&](std::size_t k) {
        const auto& c = cases[indices[k]];
        if (!c.anatomy) {
            out[k].error = c.failure;
            return;
        }
        out[k] = predict_case(stack, *c.volume, *c.anatomy);
    });
    return out;
}

std::vector<std::size_t> training_indices(std::span<const PreparedCase> cases, std::span<const std::size_t> pool,
                                          bool originals_only)
{
    std::vector<std::size_t> out;
    for (auto i : pool)
        if (!originals_only || !cases[i].meta.snr_tag) out.push_back(i);
    return out;
}

} // namespace

PairedReport cv_experiment(std::span<const PreparedCase> cases, const ExperimentConfig& cfg)
{
    PairedReport out;
    out.experiment = "cv";
    out.reference = cv_reference();
    out.folds = grouped_kfold(cases, cfg.outer_folds, cfg.seed);

    std::vector<Case> metas;
    for (const auto& c : cases) metas.push_back(c.meta);
    std::array<std::vector<Prediction>, 2> preds{std::vector<Prediction>(cases.size()),
                                                 std::vector<Prediction>(cases.size())};
    for (std::size_t f = 0; f < out.folds.size(); ++f) {
        const auto& split = out.folds[f];
        for (std::size_t v = 0; v < 2; ++v) {
            log::info("fold ", f + 1, "/", out.folds.size(), ", ", variants[v].name, " training");
            GaConfig ga = cfg.ga;
            ga.seed = derive_seed(cfg.seed, f, v);
            const auto idx = training_indices(cases, split.train, variants[v].originals_only);
            auto stack = train_stack(cases, idx, ga, cfg.anatomy);
            const auto fold_preds = predict_all(stack, cases, split.test, cfg.ga.threads);
            for (std::size_t k = 0; k < split.test.size(); ++k) preds[v][split.test[k]] = fold_preds[k];
            out.stacks.push_back({variants[v].name, f, {stack.models.begin(), stack.models.end()}});
        }
    }
    out.original = evaluate(metas, preds[0]);
    out.noised = evaluate(metas, preds[1]);
    return out;
}

PairedReport holdout_experiment(std::span<const PreparedCase> train, std::span<const PreparedCase> test,
                                const ExperimentConfig& cfg)
{
    PairedReport out;
    out.experiment = "holdout";
    out.reference = holdout_reference();

    std::vector<std::size_t> all_train(train.size()), all_test(test.size());
    for (std::size_t i = 0; i < train.size(); ++i) all_train[i] = i;
    for (std::size_t i = 0; i < test.size(); ++i) all_test[i] = i;
    std::vector<Case> metas;
    for (const auto& c : test) metas.push_back(c.meta);

    for (std::size_t v = 0; v < 2; ++v) {
        log::info("holdout, ", variants[v].name, " training");
        GaConfig ga = cfg.ga;
        ga.seed = derive_seed(cfg.seed, 0x686f6c64ULL, v);
        const auto idx = training_indices(train, all_train, variants[v].originals_only);
        auto stack = train_stack(train, idx, ga, cfg.anatomy);
        const auto preds = predict_all(stack, test, all_test, cfg.ga.threads);
        (v == 0 ? out.original : out.noised) = evaluate(metas, preds);
        out.stacks.push_back({variants[v].name, 0, {stack.models.begin(), stack.models.end()}});
    }
    return out;
}

} // namespace cmrplan
