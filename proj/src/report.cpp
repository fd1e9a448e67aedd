#include <cmath>
#include <cstdio>
#include <sstream>

#include "cmrplan/error.hpp"
#include "cmrplan/pipeline.hpp"

namespace cmrplan {

namespace {

io::Json optional_number(const std::optional<double>& v) { return v ? io::Json(*v) : io::Json(nullptr); }

std::optional<double> number_or_null(const io::Json& j)
{
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

io::Json rows_json(const std::vector<MetricRow>& rows)
{
    io::Json arr = io::Json::array();
    for (const auto& r : rows) {
        io::Json j{{"name", r.name}, {"n", r.n}, {"mean", r.mean}};
        j["unit"] = r.frac_under_15 ? "deg" : "mm";
        if (r.frac_under_15) j["frac_under_15"] = *r.frac_under_15;
        if (r.azimuth_mad) j["azimuth_mad"] = *r.azimuth_mad;
        if (r.elevation_mad) j["elevation_mad"] = *r.elevation_mad;
        arr.push_back(std::move(j));
    }
    return arr;
}

io::Json target_model_json(const TargetModel& m, bool with_model)
{
    io::Json j{{"target", target_name(m.target)},
               {"constant", m.constant},
               {"cv_mad", m.objectives.cv_mad},
               {"n_features", m.objectives.n_features},
               {"feature_mask", m.model.feature_mask.to_string()},
               {"log2_c", std::log2(m.model.params.c_penalty)},
               {"log2_gamma", std::log2(m.model.params.gamma)}};
    if (with_model) {
        j["model"] = to_json(m.model);
        j["front"] = to_json(m.front);
        j["best_mad_history"] = m.best_mad_history;
    }
    return j;
}

// Mean 3D plane angle over the SNR 15 and 10 test cases.
std::optional<double> low_snr_mean_angle(const Report& r)
{
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& [label, rows] : r.per_snr) {
        if (label != "15" && label != "10") continue;
        for (const auto& row : rows) {
            if (!row.frac_under_15) continue;
            sum += row.mean * static_cast<double>(row.n);
            n += row.n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

std::string fixed(double v, int prec = 2)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

std::string pad(const std::string& s, std::size_t w, bool left = false)
{
    if (s.size() >= w) return s;
    return left ? s + std::string(w - s.size(), ' ') : std::string(w - s.size(), ' ') + s;
}

} // namespace

io::Json to_json(const Case& c)
{
    return {{"patient_id", c.patient_id},
            {"volume", c.volume_path},
            {"snr_tag", optional_number(c.snr_tag)},
            {"truth", to_json(c.truth)}};
}

Case case_from_json(const io::Json& j)
{
    try {
        Case c;
        c.patient_id = io::require(j, "patient_id").get<std::string>();
        c.volume_path = io::require(j, "volume").get<std::string>();
        c.snr_tag = j.contains("snr_tag") ? number_or_null(j["snr_tag"]) : std::nullopt;
        c.truth = ground_truth_from_json(io::require(j, "truth"));
        return c;
    } catch (const io::Json::exception& e) {
        throw SchemaError(std::string("malformed case: ") + e.what());
    }
}

io::Json to_json(const Prediction& p)
{
    io::Json j{{"ok", p.ok}};
    if (!p.ok) {
        j["error"] = p.error;
        return j;
    }
    j["lv_centroid_mm"] = to_json(p.lv_centroid);
    j["sa"] = to_json(p.sa);
    j["ch4"] = to_json(p.ch4);
    j["ch2"] = to_json(p.ch2);
    j["sa_init"] = to_json(p.sa_init);
    j["sa_init_fallback"] = p.sa_init_fallback;
    return j;
}

Prediction prediction_from_json(const io::Json& j)
{
    try {
        Prediction p;
        p.ok = io::require(j, "ok").get<bool>();
        if (!p.ok) {
            p.error = j.value("error", std::string());
            return p;
        }
        p.lv_centroid = point_from_json(io::require(j, "lv_centroid_mm"));
        p.sa = plane_angles_from_json(io::require(j, "sa"));
        p.ch4 = plane_angles_from_json(io::require(j, "ch4"));
        p.ch2 = plane_angles_from_json(io::require(j, "ch2"));
        if (j.contains("sa_init")) p.sa_init = plane_angles_from_json(j["sa_init"]);
        p.sa_init_fallback = j.value("sa_init_fallback", false);
        return p;
    } catch (const io::Json::exception& e) {
        throw SchemaError(std::string("malformed prediction: ") + e.what());
    }
}

io::Json to_json(const TrainedStack& s)
{
    io::Json models = io::Json::object();
    for (const auto& m : s.models) models[std::string(target_name(m.target))] = target_model_json(m, true);
    return {{"models", models},
            {"anatomy", to_json(s.anatomy)},
            {"ga", to_json(s.ga)},
            {"fallback_sa_init", to_json(s.fallback_sa_init)}};
}

TrainedStack stack_from_json(const io::Json& j)
{
    TrainedStack s;
    try {
        const auto& models = io::require(j, "models");
        for (std::size_t i = 0; i < all_targets.size(); ++i) {
            const Target t = all_targets[i];
            const auto& mj = io::require(models, target_name(t));
            auto& tm = s.models[i];
            tm.target = t;
            tm.constant = io::require(mj, "constant").get<bool>();
            tm.objectives = {io::require(mj, "cv_mad").get<double>(), io::require(mj, "n_features").get<std::size_t>()};
            tm.model = svr_model_from_json(io::require(mj, "model"));
            if (mj.contains("best_mad_history")) tm.best_mad_history = mj["best_mad_history"].get<std::vector<double>>();
            if (mj.contains("front"))
                for (const auto& e : mj["front"])
                    tm.front.push_back({genome_from_json(e), {io::require(e, "cv_mad").get<double>(),
                                                              io::require(e, "n_features").get<std::size_t>()}});
        }
        s.anatomy = anatomy_config_from_json(io::require(j, "anatomy"));
        s.ga = ga_config_from_json(io::require(j, "ga"));
        s.fallback_sa_init = plane_angles_from_json(io::require(j, "fallback_sa_init"));
    } catch (const io::Json::exception& e) {
        throw SchemaError(std::string("malformed stack: ") + e.what());
    }
    return s;
}

io::Json to_json(const Report& r)
{
    io::Json j{{"n_cases", r.n_cases}, {"n_failures", r.failures.size()}, {"rows", rows_json(r.rows)}};
    io::Json per = io::Json::array();
    for (const auto& [label, rows] : r.per_snr) per.push_back({{"snr", label}, {"rows", rows_json(rows)}});
    j["per_snr"] = per;
    io::Json fails = io::Json::array();
    for (const auto& f : r.failures)
        fails.push_back({{"patient_id", f.patient_id}, {"snr_tag", optional_number(f.snr_tag)}, {"error", f.error}});
    j["failures"] = fails;
    return j;
}

io::Json to_json(const PairedReport& r)
{
    static const char* row_names[4] = {"LV Centroid", "Short Axis", "4 Chamber", "2 Chamber"};
    io::Json ref = io::Json::array();
    for (int i = 0; i < 4; ++i)
        ref.push_back({{"name", row_names[i]}, {"original", r.reference.original[i]}, {"noised", r.reference.noised[i]}});

    io::Json folds = io::Json::array();
    for (const auto& f : r.folds) folds.push_back({{"train", f.train}, {"test", f.test}});

    io::Json stacks = io::Json::array();
    for (const auto& s : r.stacks) {
        io::Json targets = io::Json::array();
        for (const auto& m : s.models) targets.push_back(target_model_json(m, false));
        stacks.push_back({{"training", s.training}, {"fold", s.fold}, {"targets", targets}});
    }

    const auto lo_orig = low_snr_mean_angle(r.original), lo_noised = low_snr_mean_angle(r.noised);
    io::Json trend{{"original_trained_mean_deg", optional_number(lo_orig)},
                   {"noised_trained_mean_deg", optional_number(lo_noised)}};
    trend["noised_within_2deg"] = (lo_orig && lo_noised) ? io::Json(*lo_noised <= *lo_orig + 2.0) : io::Json(nullptr);

    return {{"experiment", r.experiment},
            {"original_trained", to_json(r.original)},
            {"noised_trained", to_json(r.noised)},
            {"reference", {{"source", r.reference.source}, {"rows", ref}}},
            {"low_snr_trend", trend},
            {"folds", folds},
            {"stacks", stacks}};
}

io::Json to_json(const ExperimentConfig& c)
{
    return {{"ga", to_json(c.ga)}, {"anatomy", to_json(c.anatomy)}, {"outer_folds", c.outer_folds}, {"seed", c.seed}};
}

std::string format_report(const Report& r, const std::string& title)
{
    std::ostringstream os;
    os << title << "\n";
    auto table = [&](const std::vector<MetricRow>& rows) {
        os << pad("Target", 14, true) << pad("Mean", 10) << pad("<15 deg", 10) << pad("Az MAD", 10)
           << pad("El MAD", 10) << pad("n", 6) << "\n";
        for (const auto& row : rows) {
            const std::string unit = row.frac_under_15 ? " deg" : " mm";
            os << pad(row.name, 14, true) << pad(fixed(row.mean) + unit, 10)
               << pad(row.frac_under_15 ? fixed(*row.frac_under_15, 3) : "-", 10)
               << pad(row.azimuth_mad ? fixed(*row.azimuth_mad) : "-", 10)
               << pad(row.elevation_mad ? fixed(*row.elevation_mad) : "-", 10) << pad(std::to_string(row.n), 6)
               << "\n";
        }
    };
    table(r.rows);
    for (const auto& [label, rows] : r.per_snr) {
        os << "\n  SNR " << label << "\n";
        table(rows);
    }
    os << "\ncases: " << r.n_cases << ", failures: " << r.failures.size() << "\n";
    for (const auto& f : r.failures)
        os << "  " << f.patient_id << " (" << snr_label(f.snr_tag) << "): " << f.error << "\n";
    return os.str();
}

std::string format_paired_report(const PairedReport& r)
{
    std::ostringstream os;
    os << (r.experiment == "cv" ? "Grouped cross-validation" : "Held-out cases") << ": original-trained vs noised-trained\n\n";
    os << pad("Target", 14, true) << pad("Original", 12) << pad("Noised", 12) << pad("Ref orig", 12)
       << pad("Ref noised", 12) << "\n";
    for (std::size_t i = 0; i < 4 && i < r.original.rows.size(); ++i) {
        const auto& a = r.original.rows[i];
        const std::string unit = a.frac_under_15 ? " deg" : " mm";
        os << pad(a.name, 14, true) << pad(fixed(a.mean) + unit, 12) << pad(fixed(r.noised.rows[i].mean) + unit, 12)
           << pad(fixed(r.reference.original[i]) + unit, 12) << pad(fixed(r.reference.noised[i]) + unit, 12) << "\n";
    }
    os << "(reference: " << r.reference.source << ")\n\n";
    os << format_report(r.original, "Original-trained stack") << "\n";
    os << format_report(r.noised, "Noised-trained stack");
    return os.str();
}

} // namespace cmrplan
