#include "cmrplan/cli.hpp"

#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "cmrplan/anatomy.hpp"
#include "cmrplan/error.hpp"
#include "cmrplan/io.hpp"
#include "cmrplan/log.hpp"
#include "cmrplan/noise.hpp"
#include "cmrplan/parallel.hpp"
#include "cmrplan/phantom.hpp"
#include "cmrplan/pipeline.hpp"
#include "cmrplan/rng.hpp"
#include "cmrplan/segmentation.hpp"

namespace cmrplan::cli {

namespace fs = std::filesystem;

namespace {

struct Global {
    std::uint64_t seed = 0;
    int threads = std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
    std::string log_level = "info";

    io::Json json() const { return {{"seed", seed}, {"threads", threads}, {"log_level", log_level}}; }
};

void ensure_dir(const fs::path& d)
{
    if (!d.empty()) fs::create_directories(d);
}

fs::path dir_of(const fs::path& file) { return file.has_parent_path() ? file.parent_path() : fs::path("."); }

void echo_config(const fs::path& dir, const std::string& command, io::Json cfg, const Global& g)
{
    ensure_dir(dir);
    cfg["command"] = command;
    cfg["global"] = g.json();
    io::write_json_atomic(dir / (command + "_config.json"), cfg);
}

BoxRoi roi_from_list(const std::vector<std::int64_t>& v)
{
    if (v.size() != 6) throw ParameterError("ROI needs six integers x0,y0,z0,x1,y1,z1");
    return {{v[0], v[1], v[2]}, {v[3], v[4], v[5]}};
}

std::string snr_file_label(double target)
{
    std::ostringstream os;
    os << target;
    return os.str();
}

// Phantom population plus noise ladders, in manifest order.
struct Population {
    std::vector<Case> cases;
    std::vector<std::shared_ptr<const Volume>> volumes;
    std::map<std::string, SnrRois> rois;
};

Population build_population(int n, std::uint64_t seed, const std::string& id_prefix, bool with_ladder, int threads)
{
    auto members = sample_population(n, VariationSpec{}, seed);
    for (auto& m : members) {
        m.patient_id = id_prefix + m.patient_id.substr(1);
        m.spec.patient_id = m.patient_id;
    }
    std::vector<std::vector<std::pair<Case, std::shared_ptr<const Volume>>>> per(members.size());
    std::vector<SnrRois> rois(members.size());
    parallel_for(members.size(), threads, [&](std::size_t i) {
        const auto& m = members[i];
        auto pv = generate(m.spec);
        rois[i] = pv.rois;
        const std::string base = m.patient_id;
        per[i].push_back({Case{m.patient_id, std::nullopt, base + ".json", pv.truth},
                          std::make_shared<const Volume>(pv.volume)});
        if (!with_ladder) return;
        SnrSpec spec;
        spec.seed = derive_seed(seed, hash_string(m.patient_id));
        for (auto& v : snr_ladder(pv.volume, pv.rois, spec)) {
            const double tag = *v.meta().snr_tag;
            const auto target = spec.targets[per[i].size() - 1];
            per[i].push_back({Case{m.patient_id, tag, base + "_snr" + snr_file_label(target) + ".json", pv.truth},
                              std::make_shared<const Volume>(std::move(v))});
        }
    });
    Population pop;
    for (std::size_t i = 0; i < members.size(); ++i) {
        pop.rois[members[i].patient_id] = rois[i];
        for (auto& [c, v] : per[i]) {
            pop.cases.push_back(std::move(c));
            pop.volumes.push_back(std::move(v));
        }
    }
    return pop;
}

void save_population(const Population& pop, const fs::path& dir, const fs::path& manifest)
{
    ensure_dir(dir);
    std::vector<Case> cases = pop.cases;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const fs::path file = dir / cases[i].volume_path;
        save_volume(*pop.volumes[i], file);
        cases[i].volume_path = fs::relative(fs::absolute(file), fs::absolute(dir_of(manifest))).generic_string();
    }
    ensure_dir(dir_of(manifest));
    save_manifest(manifest, cases);
    io::Json r = io::Json::object();
    for (const auto& [id, roi] : pop.rois) r[id] = to_json(roi);
    io::write_json_atomic(dir / "rois.json", r);
}

std::vector<PreparedCase> load_prepared(const fs::path& manifest, const AnatomyConfig& anatomy, int threads)
{
    auto cases = load_manifest(manifest);
    std::vector<std::shared_ptr<const Volume>> vols(cases.size());
    parallel_for(cases.size(), threads, [&](std::size_t i) {
        vols[i] = std::make_shared<const Volume>(load_volume(resolve_volume_path(manifest, cases[i])));
    });
    return prepare_cases(std::move(cases), std::move(vols), anatomy, threads);
}

ExperimentConfig experiment_config(const std::string& cfg_path, const Global& g)
{
    ExperimentConfig cfg;
    cfg.seed = g.seed;
    cfg.ga.seed = g.seed;
    if (!cfg_path.empty()) {
        const auto j = io::read_json(cfg_path);
        cfg.ga = ga_config_from_json(j, cfg.ga);
        if (j.contains("outer_folds")) cfg.outer_folds = j["outer_folds"].get<std::size_t>();
        if (j.contains("anatomy")) cfg.anatomy = anatomy_config_from_json(j["anatomy"]);
    }
    cfg.ga.threads = g.threads;
    cfg.ga.validate();
    return cfg;
}

void write_experiment(const PairedReport& r, const fs::path& dir)
{
    ensure_dir(dir / "fronts");
    const std::string stem = r.experiment + "_report";
    io::write_json_atomic(dir / (stem + ".json"), to_json(r));
    io::write_file_atomic(dir / (stem + ".txt"), format_paired_report(r));
    for (const auto& s : r.stacks)
        for (const auto& m : s.models) {
            const std::string name = r.experiment + "_" + s.training + "_fold" + std::to_string(s.fold + 1) + "_" +
                                     std::string(target_name(m.target)) + ".json";
            io::write_json_atomic(dir / "fronts" / name,
                                  {{"target", target_name(m.target)},
                                   {"front", to_json(m.front)},
                                   {"best_mad_history", m.best_mad_history}});
        }
}

} // namespace

int run(int argc, char** argv)
{
    CLI::App app{"Cardiac MRI plane prescription from localizers"};
    app.require_subcommand(1);
    app.fallthrough();
    Global g;
    app.add_option("--seed", g.seed, "Random seed");
    app.add_option("--threads", g.threads, "Upper bound on worker threads")->check(CLI::PositiveNumber);
    app.add_option("--log-level", g.log_level, "debug|info|warn|error|off")
        ->check(CLI::IsMember({"debug", "info", "warn", "error", "off"}));

    // phantom
    int ph_n = 12;
    std::string ph_out = "data", ph_manifest;
    bool ph_ladder = false;
    auto* phantom = app.add_subcommand("phantom", "Generate a phantom population");
    phantom->add_option("--n", ph_n, "Number of phantoms")->check(CLI::PositiveNumber);
    phantom->add_option("--out-dir", ph_out, "Volume output directory");
    phantom->add_option("--manifest", ph_manifest, "Manifest path (default <out-dir>/manifest.json)");
    phantom->add_flag("--ladder", ph_ladder, "Also write the SNR ladder of every phantom");

    // noise
    std::string nz_in, nz_out = ".", nz_rois;
    std::vector<double> nz_targets{30, 25, 20, 15, 10};
    std::vector<std::int64_t> nz_signal, nz_background;
    auto* noise = app.add_subcommand("noise", "Degrade a volume to target SNRs");
    noise->add_option("--in", nz_in, "Volume header")->required();
    noise->add_option("--targets", nz_targets, "Target SNRs")->delimiter(',');
    noise->add_option("--signal-roi", nz_signal, "x0,y0,z0,x1,y1,z1")->delimiter(',');
    noise->add_option("--background-roi", nz_background, "x0,y0,z0,x1,y1,z1")->delimiter(',');
    noise->add_option("--rois", nz_rois, "ROI file written by `phantom`, used when ROIs are not given");
    noise->add_option("--out-dir", nz_out, "Output directory");

    // segment
    std::string sg_in, sg_out = "labels.json";
    std::optional<std::int64_t> sg_slice;
    SegParams sg_params;
    auto* segment_cmd = app.add_subcommand("segment", "Graph segmentation of a slice or the whole volume");
    segment_cmd->add_option("--in", sg_in, "Volume header")->required();
    segment_cmd->add_option("--slice", sg_slice, "Axial slice (default: whole volume, 3D)");
    segment_cmd->add_option("--k", sg_params.k_threshold, "Scale parameter k");
    segment_cmd->add_option("--min-size", sg_params.min_size, "Minimum component size");
    segment_cmd->add_option("--sigma", sg_params.presmooth_sigma, "Gaussian pre-smoothing sigma (voxels)");
    segment_cmd->add_option("--out", sg_out, "Output JSON");

    // features
    std::string ft_in, ft_out = "case_features.json";
    std::vector<double> ft_lv;
    auto* features = app.add_subcommand("features", "Anatomy features of a volume");
    features->add_option("--in", ft_in, "Volume header")->required();
    features->add_option("--out", ft_out, "Output JSON");
    features->add_option("--lv", ft_lv, "LV centroid x,y,z (mm) seeding the SA init")->delimiter(',')->expected(3);

    // search
    std::string se_dataset, se_target, se_out = "model.json", se_front = "front.json", se_cfg;
    std::optional<std::size_t> se_pop, se_gens;
    auto* search = app.add_subcommand("search", "NSGA-II feature/hyperparameter search for one target");
    search->add_option("--dataset", se_dataset, "Manifest")->required();
    search->add_option("--target", se_target, "lv_cx|lv_cy|lv_cz|sa_az|sa_el|ch4_az|ch4_el|ch2_az|ch2_el")->required();
    search->add_option("--pop", se_pop, "Population size");
    search->add_option("--gens", se_gens, "Generations");
    search->add_option("--cfg", se_cfg, "GA config JSON");
    search->add_option("--out", se_out, "Model JSON");
    search->add_option("--front", se_front, "Pareto front JSON");

    // train
    std::string tr_manifest, tr_cfg, tr_out = "stack.json";
    auto* train_cmd = app.add_subcommand("train", "Train the nine-model stack");
    train_cmd->add_option("--manifest", tr_manifest, "Manifest")->required();
    train_cmd->add_option("--cfg", tr_cfg, "GA config JSON");
    train_cmd->add_option("--out", tr_out, "Stack JSON");

    // cv
    std::string cv_manifest, cv_cfg, cv_out = "report";
    auto* cv = app.add_subcommand("cv", "Grouped cross-validation, original vs noised training");
    cv->add_option("--manifest", cv_manifest, "Manifest")->required();
    cv->add_option("--cfg", cv_cfg, "GA config JSON");
    cv->add_option("--out", cv_out, "Report directory");

    // predict
    std::string pr_stack, pr_in, pr_out = "prediction.json";
    auto* predict_cmd = app.add_subcommand("predict", "Predict LV centroid and planes for one volume");
    predict_cmd->add_option("--stack", pr_stack, "Stack JSON")->required();
    predict_cmd->add_option("--in", pr_in, "Volume header")->required();
    predict_cmd->add_option("--out", pr_out, "Prediction JSON");

    // evaluate
    std::string ev_pred, ev_manifest, ev_out = ".";
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Score predictions against manifest truth");
    evaluate_cmd->add_option("--pred", ev_pred, "Prediction JSON (object or array)")->required();
    evaluate_cmd->add_option("--manifest", ev_manifest, "Manifest")->required();
    evaluate_cmd->add_option("--out", ev_out, "Output directory");

    // repro
    std::string rp_out = "repro_out";
    bool rp_fast = false, rp_save = false;
    int rp_phantoms = 12, rp_holdout = 0;
    auto* repro = app.add_subcommand("repro", "Phantoms, noise ladder, features, cross-validation and report");
    repro->add_option("--out-dir", rp_out, "Output directory");
    repro->add_flag("--fast", rp_fast, "Halve population and generations");
    repro->add_option("--phantoms", rp_phantoms, "Phantoms in the cross-validation population")->check(CLI::PositiveNumber);
    repro->add_option("--holdout", rp_holdout, "Additional held-out phantoms (0 disables)")->check(CLI::NonNegativeNumber);
    repro->add_flag("--save-volumes", rp_save, "Write the generated volumes and manifest");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        log::set_level(log::parse_level(g.log_level));

        if (*phantom) {
            const fs::path out(ph_out);
            const fs::path manifest = ph_manifest.empty() ? out / "manifest.json" : fs::path(ph_manifest);
            echo_config(out, "phantom", {{"n", ph_n}, {"out_dir", ph_out}, {"manifest", manifest.string()}, {"ladder", ph_ladder}}, g);
            const auto pop = build_population(ph_n, g.seed, "P", ph_ladder, g.threads);
            save_population(pop, out, manifest);
            log::info("wrote ", pop.cases.size(), " volumes");
        } else if (*noise) {
            const fs::path out(nz_out);
            const auto v = load_volume(nz_in);
            SnrRois rois;
            if (!nz_signal.empty() || !nz_background.empty()) {
                rois = {roi_from_list(nz_signal), roi_from_list(nz_background)};
            } else if (!nz_rois.empty()) {
                rois = snr_rois_from_json(io::require(io::read_json(nz_rois), v.meta().patient_id));
            } else {
                throw ParameterError("give --signal-roi and --background-roi, or --rois");
            }
            SnrSpec spec;
            spec.targets = nz_targets;
            spec.seed = g.seed;
            echo_config(out, "noise",
                        {{"in", nz_in}, {"targets", nz_targets}, {"rois", to_json(rois)}, {"out_dir", nz_out}}, g);
            const auto ladder = snr_ladder(v, rois, spec);
            for (std::size_t i = 0; i < ladder.size(); ++i) {
                const auto name = v.meta().patient_id + "_snr" + snr_file_label(nz_targets[i]) + ".json";
                save_volume(ladder[i], out / name);
                log::info(name, ": measured SNR ", measure_snr(ladder[i], rois));
            }
        } else if (*segment_cmd) {
            sg_params.validate();
            const auto v = load_volume(sg_in);
            echo_config(dir_of(sg_out), "segment",
                        {{"in", sg_in}, {"slice", sg_slice ? io::Json(*sg_slice) : io::Json(nullptr)},
                         {"params", to_json(sg_params)}, {"out", sg_out}}, g);
            GridView view = sg_slice ? GridView::axial(v, *sg_slice) : GridView::of(v);
            const auto conn = sg_slice ? Connectivity::four_2d : Connectivity::six_3d;
            const auto seg = segment_grid(view, conn, sg_params);
            const auto comps = largest_components(seg, view.dims, seg.component_sizes.size());
            io::Json table = io::Json::array();
            for (const auto& c : comps)
                table.push_back({{"id", c.id}, {"size", c.size}, {"centroid", {c.centroid.x, c.centroid.y, c.centroid.z}}});
            io::write_json_atomic(sg_out, {{"dims", {view.dims.nx, view.dims.ny, view.dims.nz}},
                                           {"slice", sg_slice ? io::Json(*sg_slice) : io::Json(nullptr)},
                                           {"labels", seg.labels},
                                           {"components", table}});
        } else if (*features) {
            const auto v = load_volume(ft_in);
            echo_config(dir_of(ft_out), "features", {{"in", ft_in}, {"out", ft_out}, {"lv", ft_lv}}, g);
            const AnatomyConfig cfg;
            const auto a = extract_anatomy(v, cfg);
            io::Json j{{"patient_id", v.meta().patient_id},
                       {"snr_tag", v.meta().snr_tag ? io::Json(*v.meta().snr_tag) : io::Json(nullptr)},
                       {"centroid_features", to_json(centroid_features(a))}};
            if (ft_lv.size() == 3) {
                const PhysicalPoint lv{ft_lv[0], ft_lv[1], ft_lv[2]};
                const auto pool = lv_bloodpool(v, lv, cfg.pool_seg);
                const auto init = initial_short_axis(pool, index_from_world(v, lv).z, v, cfg.pool_seg);
                j["angulation_features"] = to_json(angulation_features(a, init));
            } else {
                j["angulation_features"] = nullptr;
            }
            io::write_json_atomic(ft_out, j);
        } else if (*search) {
            const Target t = parse_target(se_target);
            auto cfg = experiment_config(se_cfg, g);
            if (se_pop) cfg.ga.population_size = *se_pop;
            if (se_gens) cfg.ga.generations = *se_gens;
            cfg.ga.validate();
            echo_config(dir_of(se_out), "search",
                        {{"dataset", se_dataset}, {"target", se_target}, {"ga", to_json(cfg.ga)}, {"out", se_out},
                         {"front", se_front}}, g);
            const auto cases = load_prepared(se_dataset, cfg.anatomy, g.threads);
            std::vector<std::size_t> all(cases.size());
            for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
            const auto ds = build_search_dataset(cases, all, t);
            if (ds.targets.empty()) throw PreconditionError("no usable cases for this target");
            const auto result = run_nsga2(ds, cfg.ga);
            const auto& best = pick_final(result.front);
            std::vector<TrainingSample> samples;
            for (std::size_t i = 0; i < ds.targets.size(); ++i) samples.push_back({ds.features[i], ds.targets[i]});
            save_model(train(samples, best.genome.params(cfg.ga.epsilon), best.genome.mask, ds.feature_names), se_out);
            ensure_dir(dir_of(se_front));
            io::write_json_atomic(se_front, {{"target", se_target},
                                             {"front", to_json(result.front)},
                                             {"best_mad_history", result.best_mad_history}});
            log::info("best cv_mad ", best.objectives.cv_mad, " with ", best.objectives.n_features, " features");
        } else if (*train_cmd) {
            const auto cfg = experiment_config(tr_cfg, g);
            echo_config(dir_of(tr_out), "train", {{"manifest", tr_manifest}, {"experiment", to_json(cfg)}, {"out", tr_out}}, g);
            const auto cases = load_prepared(tr_manifest, cfg.anatomy, g.threads);
            io::write_json_atomic(tr_out, to_json(train_stack(cases, cfg.ga, cfg.anatomy)));
        } else if (*cv) {
            const auto cfg = experiment_config(cv_cfg, g);
            echo_config(cv_out, "cv", {{"manifest", cv_manifest}, {"experiment", to_json(cfg)}}, g);
            const auto cases = load_prepared(cv_manifest, cfg.anatomy, g.threads);
            const auto report = cv_experiment(cases, cfg);
            write_experiment(report, cv_out);
            std::cerr << format_paired_report(report);
        } else if (*predict_cmd) {
            echo_config(dir_of(pr_out), "predict", {{"stack", pr_stack}, {"in", pr_in}, {"out", pr_out}}, g);
            const auto stack = stack_from_json(io::read_json(pr_stack));
            const auto v = load_volume(pr_in);
            const auto p = predict_case(stack, v);
            io::Json j = to_json(p);
            j["patient_id"] = v.meta().patient_id;
            j["snr_tag"] = v.meta().snr_tag ? io::Json(*v.meta().snr_tag) : io::Json(nullptr);
            io::write_json_atomic(pr_out, j);
            if (!p.ok) log::warn("prediction failed: ", p.error);
        } else if (*evaluate_cmd) {
            const fs::path out(ev_out);
            echo_config(out, "evaluate", {{"pred", ev_pred}, {"manifest", ev_manifest}}, g);
            const auto cases = load_manifest(ev_manifest);
            auto pj = io::read_json(ev_pred);
            if (!pj.is_array()) pj = io::Json::array({pj});
            auto key = [](const std::string& id, const std::optional<double>& snr) { return id + "|" + snr_label(snr); };
            std::map<std::string, Prediction> by_key;
            for (const auto& e : pj) {
                const auto id = io::require(e, "patient_id").get<std::string>();
                const auto& s = io::require(e, "snr_tag");
                by_key[key(id, s.is_null() ? std::nullopt : std::optional<double>(s.get<double>()))] =
                    prediction_from_json(e);
            }
            std::vector<Case> matched;
            std::vector<Prediction> preds;
            for (const auto& c : cases) {
                const auto it = by_key.find(key(c.patient_id, c.snr_tag));
                if (it == by_key.end()) continue;
                matched.push_back(c);
                preds.push_back(it->second);
            }
            if (matched.size() != by_key.size()) throw PreconditionError("some predictions match no manifest case");
            const auto r = evaluate(matched, preds);
            io::write_json_atomic(out / "evaluation.json", to_json(r));
            io::write_file_atomic(out / "evaluation.txt", format_report(r, "Evaluation"));
        } else if (*repro) {
            const auto t0 = std::chrono::steady_clock::now();
            const fs::path out(rp_out);
            ExperimentConfig cfg;
            cfg.seed = g.seed;
            cfg.ga.seed = g.seed;
            cfg.ga.threads = g.threads;
            if (rp_fast) {
                cfg.ga.population_size /= 2;
                cfg.ga.generations /= 2;
            }
            echo_config(out, "repro",
                        {{"phantoms", rp_phantoms}, {"holdout", rp_holdout}, {"fast", rp_fast},
                         {"experiment", to_json(cfg)}, {"save_volumes", rp_save}}, g);

            log::info("generating ", rp_phantoms, " phantoms with noise ladders");
            auto pop = build_population(rp_phantoms, g.seed, "P", true, g.threads);
            if (rp_save) save_population(pop, out / "data", out / "data" / "manifest.json");
            log::info("extracting features for ", pop.cases.size(), " cases");
            const auto cases = prepare_cases(pop.cases, pop.volumes, cfg.anatomy, g.threads);
            const auto report = cv_experiment(cases, cfg);
            write_experiment(report, out / "report");
            std::cerr << format_paired_report(report);

            if (rp_holdout > 0) {
                auto held = build_population(rp_holdout, derive_seed(g.seed, 0x686f6c64ULL), "H", true, g.threads);
                if (rp_save) save_population(held, out / "holdout_data", out / "holdout_data" / "manifest.json");
                const auto test = prepare_cases(held.cases, held.volumes, cfg.anatomy, g.threads);
                const auto hr = holdout_experiment(cases, test, cfg);
                write_experiment(hr, out / "report");
                std::cerr << "\n" << format_paired_report(hr);
            }
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            io::write_json_atomic(out / "run_info.json", {{"runtime_s", secs}, {"threads", g.threads}});
            log::info("repro finished in ", secs, " s");
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace cmrplan::cli
