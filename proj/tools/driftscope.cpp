// driftscope: detect, extract, and attribute distributional discrepancies
// between two unlabeled datasets.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>

#include "drift/baseline.hpp"
#include "drift/benchgen.hpp"
#include "drift/pipeline.hpp"
#include "drift/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace drift;

namespace {

std::string out_dir(const std::string& flag_value) {
    if (const char* env = std::getenv("DRIFTSCOPE_OUT")) return env;
    return flag_value;
}

void add_equalize_flags(CLI::App* app, EqualizeParams& eq) {
    app->add_option("--k-max", eq.K_M, "Maximal neighborhood rank K_M");
    app->add_option("--q-tail", eq.q_tail, "Null tail quantile");
    app->add_option("--alpha", eq.alpha, "KS significance level");
    app->add_option("--prune-batch", eq.prune_batch, "Candidates pruned per inner step");
    app->add_option("--max-outer-iters", eq.max_outer_iters, "Outer iteration cap");
    app->add_option("--n-mc", eq.n_mc_null, "Monte-Carlo null draws per direction");
}

void add_train_flags(CLI::App* app, TrainConfig& t) {
    app->add_option("--K", t.K, "Neighbors in the enrichment objective");
    app->add_option("--beta", t.beta, "Rank tie-break strength");
    app->add_option("--epochs", t.epochs, "Training epochs");
    app->add_option("--batch", t.batch_size, "Mini-batch size");
    app->add_option("--pos-frac", t.pos_frac, "Query fraction per batch");
    app->add_option("--tau-start", t.tau_start, "Initial softmax temperature");
    app->add_option("--tau-end", t.tau_end, "Final softmax temperature");
    app->add_option("--lr", t.lr, "Adam learning rate");
    app->add_option("--l1", t.l1, "L1 penalty on raw weights");
    app->add_option("--folds", t.n_splits, "Cross-validation folds");
}

struct Inputs {
    FeatureMatrix X;
    FeatureMatrix Y;
    std::vector<int> injected;
    json truth;
    bool has_truth = false;
};

Inputs load_inputs(const std::string& x_path, const std::string& y_path,
                   const std::string& truth_path, char delim) {
    Inputs in;
    in.X = load_csv(x_path, delim);
    in.Y = load_csv(y_path, delim);
    if (!truth_path.empty()) {
        in.truth = read_json(truth_path);
        in.has_truth = true;
        if (in.truth.contains("injected_ids"))
            in.injected = in.truth["injected_ids"].get<std::vector<int>>();
    }
    return in;
}

json config_echo(const EqualizeParams& eq, const TrainConfig& t, const PipelineParams& pp) {
    return {{"k_max", eq.K_M},
            {"q_tail", eq.q_tail},
            {"alpha", eq.alpha},
            {"prune_batch", eq.prune_batch},
            {"max_outer_iters", eq.max_outer_iters},
            {"n_mc", eq.n_mc_null},
            {"K", t.K},
            {"beta", t.beta},
            {"epochs", t.epochs},
            {"batch", t.batch_size},
            {"pos_frac", t.pos_frac},
            {"tau_start", t.tau_start},
            {"tau_end", t.tau_end},
            {"lr", t.lr},
            {"l1", t.l1},
            {"folds", t.n_splits},
            {"graph_k", pp.graph_k},
            {"max_refine_iters", pp.max_refine_iters},
            {"min_mode_size", pp.min_mode_size}};
}

int run_pipeline_cmd(const std::function<Inputs(std::uint64_t)>& make_inputs,
                     const PipelineParams& pp, const std::vector<std::uint64_t>& seeds,
                     const std::string& outdir, bool allow_flagged) {
    fs::create_directories(outdir);
    json runs = json::array();
    json timing = json::object();
    std::map<int, int> inclusion;
    bool any_flagged = false;
    Inputs first;
    bool have_first = false;

    for (std::uint64_t seed : seeds) {
        Inputs in = make_inputs(seed);
        if (!have_first) {
            first = in;
            have_first = true;
        }
        SeedRunResult r = run_pipeline_seed(in.X, in.Y, pp, seed,
                                            in.injected.empty() ? nullptr : &in.injected);
        any_flagged = any_flagged || r.eq.max_iters_exceeded;
        json run = {{"seed", seed},
                    {"equalization", to_json(r.eq)},
                    {"shift_set", r.shift_set},
                    {"pruned_to_total", r.pruned_to_total}};
        if (r.pruned_to_injected) run["pruned_to_injected"] = *r.pruned_to_injected;
        json attrs = json::array();
        for (const auto& a : r.attributions) attrs.push_back(to_json(a, in.X.feature_names));
        run["attributions"] = attrs;
        runs.push_back(std::move(run));
        timing["seed_" + std::to_string(seed)] = r.walltime_sec;
        for (int f : r.shift_set) inclusion[f]++;

        write_trace_csv(outdir + "/trace_seed" + std::to_string(seed) + ".csv", r.eq);
        for (size_t ai = 0; ai < r.attributions.size(); ++ai)
            write_curve_csv(outdir + "/cv_curve_seed" + std::to_string(seed) + "_mode" +
                                std::to_string(ai) + ".csv",
                            r.attributions[ai].curve);
    }

    json freq = json::array();
    for (Eigen::Index f = 0; f < first.X.n_cols(); ++f) {
        const auto it = inclusion.find(static_cast<int>(f));
        const double v = it == inclusion.end()
                             ? 0.0
                             : static_cast<double>(it->second) / static_cast<double>(seeds.size());
        freq.push_back({{"feature", f},
                        {"name", first.X.feature_names[static_cast<size_t>(f)]},
                        {"inclusion_frequency", v}});
    }

    json report = {{"schema_version", kReportSchemaVersion},
                   {"config", config_echo(pp.eq, pp.train, pp)},
                   {"n_X", first.X.n_rows()},
                   {"n_Y", first.Y.n_rows()},
                   {"seeds", seeds},
                   {"runs", runs},
                   {"inclusion_frequency", freq}};
    if (first.has_truth) report["truth"] = first.truth;
    report["timing"] = timing;
    write_json(outdir + "/report.json", report);

    std::ofstream inc_csv(outdir + "/inclusion_frequency.csv");
    inc_csv << "feature,name,inclusion_frequency\n";
    for (const auto& row : freq)
        inc_csv << row["feature"] << ',' << row["name"].get<std::string>() << ','
                << row["inclusion_frequency"] << '\n';

    std::cout << "report written to " << outdir << "/report.json\n";
    return (any_flagged && !allow_flagged) ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"driftscope: two-sample discrepancy detection and attribution"};
    app.require_subcommand(1);
    app.set_config("--config");

    // ---- bench-gen ----
    auto* bench = app.add_subcommand("bench-gen", "Generate the 20D benchmark");
    bench->require_subcommand(1);
    double sigma = 0.3;
    int n = 50000, n_inject = 300;
    std::uint64_t gen_seed = 0;
    std::string gen_out = "bench_out";
    auto* bg = bench->add_subcommand("global", "Component-displacement shift");
    bg->add_option("--sigma", sigma, "Displacement amplitude")->check(CLI::NonNegativeNumber);
    auto* bl = bench->add_subcommand("local", "Injected localized cluster");
    bl->add_option("--inject", n_inject, "Injected sample count")->check(CLI::PositiveNumber);
    for (auto* sub : {bg, bl}) {
        sub->add_option("--n", n, "Background samples per cohort");
        sub->add_option("--seed", gen_seed, "Generation seed");
        sub->add_option("--out", gen_out, "Output directory");
    }

    // ---- shared analysis inputs ----
    PipelineParams pp;
    std::string x_path, y_path, truth_path, outdir_flag = "driftscope_out";
    char delim = ',';
    std::vector<std::uint64_t> seeds{0};
    std::uint64_t seed_single = 0;
    double p_ext = 1e-5;
    bool allow_flagged = false;

    auto add_io = [&](CLI::App* sub, bool required_xy) {
        auto* ox = sub->add_option("--x", x_path, "Cohort X CSV");
        auto* oy = sub->add_option("--y", y_path, "Cohort Y CSV");
        if (required_xy) {
            ox->required();
            oy->required();
        }
        sub->add_option("--truth", truth_path, "Truth JSON from bench-gen");
        sub->add_option("--delimiter", delim, "CSV delimiter");
        sub->add_option("--out", outdir_flag, "Output directory (env DRIFTSCOPE_OUT overrides)");
    };

    auto* score_cmd = app.add_subcommand("score", "Score both cohorts, export CSV");
    add_io(score_cmd, true);
    score_cmd->add_option("--k-max", pp.eq.K_M, "Maximal neighborhood rank K_M");
    score_cmd->add_option("--p-ext", p_ext, "Per-point null exceedance level");
    score_cmd->add_option("--n-mc", pp.eq.n_mc_null, "Monte-Carlo null draws");
    score_cmd->add_option("--seed", seed_single, "Calibration seed");

    auto* eq_cmd = app.add_subcommand("equalize", "Run tail-based bidirectional equalization");
    add_io(eq_cmd, true);
    add_equalize_flags(eq_cmd, pp.eq);
    eq_cmd->add_option("--seed", seed_single, "Run seed");

    auto* attr_cmd = app.add_subcommand("attribute", "Attribute a pruned set to features");
    add_io(attr_cmd, true);
    add_train_flags(attr_cmd, pp.train);
    attr_cmd->add_option("--graph-k", pp.graph_k, "Mutual-kNN k for mode partitioning");
    attr_cmd->add_option("--seed", seed_single, "Run seed");
    std::string eq_json_path;
    attr_cmd->add_option("--equalization", eq_json_path, "Equalization result JSON")->required();

    auto* pipe_cmd = app.add_subcommand("pipeline", "Full detect-extract-attribute pipeline");
    add_io(pipe_cmd, false);
    add_equalize_flags(pipe_cmd, pp.eq);
    add_train_flags(pipe_cmd, pp.train);
    pipe_cmd->add_option("--graph-k", pp.graph_k, "Mutual-kNN k for mode partitioning");
    pipe_cmd->add_option("--min-mode-size", pp.min_mode_size, "Smallest mode attributed");
    pipe_cmd->add_option("--max-refine-iters", pp.max_refine_iters, "Refinement cap");
    pipe_cmd->add_option("--seeds", seeds, "Seed sweep")->delimiter(',');
    pipe_cmd->add_flag("--allow-flagged", allow_flagged,
                       "Exit 0 even when max_outer_iters was hit");
    double bench_sigma = -1.0;
    int bench_inject = -1, bench_n = 10000;
    pipe_cmd->add_option("--bench-global", bench_sigma, "Generate a global-shift benchmark pair");
    pipe_cmd->add_option("--bench-local", bench_inject, "Generate a localized-shift pair");
    pipe_cmd->add_option("--bench-n", bench_n, "Benchmark cohort size");

    auto* base_cmd = app.add_subcommand("baseline", "MLP two-sample baseline and recall@k");
    add_io(base_cmd, true);
    MlpConfig mlp;
    int recall_k = 400;
    base_cmd->add_option("--k", recall_k, "Recall cutoff");
    base_cmd->add_option("--mlp-lr", mlp.lr, "MLP learning rate");
    base_cmd->add_option("--mlp-epochs", mlp.max_iters, "MLP training epochs");
    base_cmd->add_option("--seed", seed_single, "MLP seed");

    auto* agg_cmd = app.add_subcommand("aggregate", "Aggregate run reports");
    std::vector<std::string> report_paths;
    bool force = false;
    std::string agg_out = "aggregate_out";
    agg_cmd->add_option("reports", report_paths, "Report JSON paths")->required();
    agg_cmd->add_flag("--force", force, "Aggregate despite config mismatches");
    agg_cmd->add_option("--out", agg_out, "Output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (bg->parsed() || bl->parsed()) {
            fs::create_directories(gen_out);
            json truth;
            if (bg->parsed()) {
                bench::GlobalShiftSpec spec;
                auto [X, Y] = bench::make_global_pair(sigma, n, gen_seed, &spec);
                write_csv(gen_out + "/X.csv", X);
                write_csv(gen_out + "/Y.csv", Y);
                truth = {{"shift_type", "global"},
                         {"sigma", spec.sigma},
                         {"coords", spec.coords},
                         {"shifted_component", spec.shifted_component},
                         {"seed", gen_seed}};
            } else {
                auto pair = bench::make_local_pair(n_inject, n, gen_seed);
                write_csv(gen_out + "/X.csv", pair.X);
                write_csv(gen_out + "/Y.csv", pair.Y);
                truth = {{"shift_type", "local"},
                         {"n_inject", pair.truth.n_inject},
                         {"coords", pair.truth.active_dims},
                         {"injected_ids", pair.injected_ids},
                         {"seed", gen_seed}};
            }
            write_json(gen_out + "/truth.json", truth);
            std::cout << "benchmark written to " << gen_out << "\n";
            return 0;
        }

        if (score_cmd->parsed()) {
            const std::string outdir = out_dir(outdir_flag);
            fs::create_directories(outdir);
            Inputs in = load_inputs(x_path, y_path, truth_path, delim);
            StandardizationStats stats;
            auto [Xs, Ys] = standardize(in.X, in.Y, stats);
            PooledIndex idx(Xs, Ys);
            std::ofstream csv(outdir + "/scores.csv");
            csv << "id,origin,upsilon,argmax_k,direction\n";
            json thresholds = json::object();
            for (Origin o : {Origin::Y, Origin::X}) {
                auto scores = score_cohort(idx, o, pp.eq.K_M);
                const double p_hat = static_cast<double>(idx.active_count(o)) /
                                     static_cast<double>(idx.active_count());
                NullModel null = calibrate_null(std::min(pp.eq.K_M, idx.active_count() - 1),
                                                p_hat, pp.eq.n_mc_null, seed_single);
                thresholds[o == Origin::Y ? "Y" : "X"] = flag_threshold(null, p_ext);
                for (const auto& [id, s] : scores)
                    csv << id << ',' << (idx.origin(id) == Origin::Y ? 'Y' : 'X') << ','
                        << s.value << ',' << s.argmax_k << ','
                        << (s.direction == Origin::Y ? "Y-overdensity" : "X-overdensity")
                        << '\n';
            }
            write_json(outdir + "/score_thresholds.json",
                       {{"p_ext", p_ext}, {"thresholds", thresholds}});
            std::cout << "scores written to " << outdir << "\n";
            return 0;
        }

        if (eq_cmd->parsed()) {
            const std::string outdir = out_dir(outdir_flag);
            fs::create_directories(outdir);
            Inputs in = load_inputs(x_path, y_path, truth_path, delim);
            StandardizationStats stats;
            auto [Xs, Ys] = standardize(in.X, in.Y, stats);
            EqualizationResult r = equalize(Xs, Ys, pp.eq, seed_single);
            write_json(outdir + "/equalization.json", to_json(r));
            write_trace_csv(outdir + "/trace.csv", r);
            std::cout << "equalization written to " << outdir << "\n";
            return r.max_iters_exceeded && !allow_flagged ? 1 : 0;
        }

        if (attr_cmd->parsed()) {
            const std::string outdir = out_dir(outdir_flag);
            fs::create_directories(outdir);
            Inputs in = load_inputs(x_path, y_path, truth_path, delim);
            StandardizationStats stats;
            auto [Xs, Ys] = standardize(in.X, in.Y, stats);
            json ej = read_json(eq_json_path);
            EqualizationResult eq;
            eq.pruned_X = ej.at("pruned_X").get<std::vector<int>>();
            eq.pruned_Y = ej.at("pruned_Y").get<std::vector<int>>();
            eq.eq_mask_X = rle_to_mask(ej.at("eq_mask_X_rle"));
            eq.eq_mask_Y = rle_to_mask(ej.at("eq_mask_Y_rle"));
            TrainConfig tcfg = pp.train;
            tcfg.seed = seed_single;
            auto attrs = refine_loop(Xs, Ys, eq, tcfg, pp.graph_k, pp.max_refine_iters,
                                     pp.min_mode_size);
            json out = json::array();
            for (const auto& a : attrs) out.push_back(to_json(a, in.X.feature_names));
            write_json(outdir + "/attribution.json", out);
            std::cout << "attribution written to " << outdir << "\n";
            return 0;
        }

        if (pipe_cmd->parsed()) {
            std::function<Inputs(std::uint64_t)> make_inputs;
            if (bench_sigma >= 0.0) {
                make_inputs = [&](std::uint64_t seed) {
                    Inputs in;
                    auto [X, Y] = bench::make_global_pair(bench_sigma, bench_n, seed);
                    in.X = std::move(X);
                    in.Y = std::move(Y);
                    in.has_truth = true;
                    in.truth = {{"kind", "global"}, {"sigma", bench_sigma},
                                {"n", bench_n}, {"seed", seed}};
                    return in;
                };
            } else if (bench_inject > 0) {
                make_inputs = [&](std::uint64_t seed) {
                    Inputs in;
                    auto pair = bench::make_local_pair(bench_inject, bench_n, seed);
                    in.X = std::move(pair.X);
                    in.Y = std::move(pair.Y);
                    in.injected = pair.injected_ids;
                    in.has_truth = true;
                    in.truth = {{"kind", "local"}, {"n_inject", bench_inject},
                                {"n", bench_n}, {"seed", seed}};
                    return in;
                };
            } else if (!x_path.empty() && !y_path.empty()) {
                Inputs loaded = load_inputs(x_path, y_path, truth_path, delim);
                make_inputs = [loaded](std::uint64_t) { return loaded; };
            } else {
                std::cerr << "pipeline: provide --x/--y or --bench-global/--bench-local\n";
                return 2;
            }
            return run_pipeline_cmd(make_inputs, pp, seeds, out_dir(outdir_flag), allow_flagged);
        }

        if (base_cmd->parsed()) {
            const std::string outdir = out_dir(outdir_flag);
            fs::create_directories(outdir);
            Inputs in = load_inputs(x_path, y_path, truth_path, delim);
            if (in.injected.empty()) {
                std::cerr << "baseline: recall@k needs a truth JSON with injected_ids\n";
                return 2;
            }
            StandardizationStats stats;
            auto [Xs, Ys] = standardize(in.X, in.Y, stats);
            mlp.seed = seed_single;
            MlpClassifier model;
            model.train(Xs, Ys, mlp);
            auto ranking = rank_by_ratio(model, Ys);
            const double recall = injected_recall_at(ranking, in.injected, recall_k);
            std::ofstream csv(outdir + "/ranking.csv");
            csv << "id,score,rank\n";
            for (size_t i = 0; i < ranking.size(); ++i)
                csv << ranking[i].id << ',' << ranking[i].score << ',' << i + 1 << '\n';
            write_json(outdir + "/baseline.json",
                       {{"k", recall_k}, {"injected_recall", recall}});
            std::cout << "InjectedRecall@" << recall_k << " = " << recall << "\n";
            return 0;
        }

        if (agg_cmd->parsed()) {
            fs::create_directories(agg_out);
            std::vector<json> reports;
            for (const auto& p : report_paths) reports.push_back(read_json(p));
            for (size_t i = 1; i < reports.size(); ++i) {
                if (reports[i]["schema_version"] != reports[0]["schema_version"] ||
                    (!force && reports[i]["config"] != reports[0]["config"])) {
                    std::cerr << "SchemaMismatch: " << report_paths[i]
                              << " differs from " << report_paths[0]
                              << " (use --force to override)\n";
                    return 2;
                }
            }
            std::map<int, int> counts;
            int total_seeds = 0;
            std::map<std::string, std::vector<double>> ratios;  // param value -> per-seed ratio
            for (const auto& rep : reports) {
                std::string param = "na";
                if (rep.contains("truth")) {
                    const auto& t = rep["truth"];
                    if (t.contains("sigma")) param = "sigma=" + t["sigma"].dump();
                    else if (t.contains("n_inject")) param = "inject=" + t["n_inject"].dump();
                }
                for (const auto& run : rep["runs"]) {
                    ++total_seeds;
                    for (int f : run["shift_set"].get<std::vector<int>>()) counts[f]++;
                    const char* key = run.contains("pruned_to_injected") ? "pruned_to_injected"
                                                                         : "pruned_to_total";
                    ratios[param].push_back(run[key].get<double>());
                }
            }
            std::ofstream freq_csv(agg_out + "/inclusion_frequency.csv");
            freq_csv << "feature,inclusion_frequency\n";
            for (const auto& [f, c] : counts)
                freq_csv << f << ','
                         << static_cast<double>(c) / static_cast<double>(total_seeds) << '\n';
            std::ofstream ratio_csv(agg_out + "/ratio_bands.csv");
            ratio_csv << "param,mean,p25,p75,n_seeds\n";
            for (auto& [param, vals] : ratios) {
                std::sort(vals.begin(), vals.end());
                const double mean =
                    std::accumulate(vals.begin(), vals.end(), 0.0) / vals.size();
                auto pct = [&](double q) {
                    size_t i = static_cast<size_t>(q * (vals.size() - 1));
                    return vals[i];
                };
                ratio_csv << param << ',' << mean << ',' << pct(0.25) << ',' << pct(0.75) << ','
                          << vals.size() << '\n';
            }
            std::cout << "aggregates written to " << agg_out << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
