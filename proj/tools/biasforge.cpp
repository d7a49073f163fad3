// biasforge command line: one subcommand per pipeline step plus `run` for a full plan.

#include "biasforge/bias_report.hpp"
#include "biasforge/bootstrap.hpp"
#include "biasforge/error.hpp"
#include "biasforge/experiment.hpp"
#include "biasforge/fileio.hpp"
#include "biasforge/manifest.hpp"
#include "biasforge/plots.hpp"
#include "biasforge/render.hpp"
#include "biasforge/trainer.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fs = std::filesystem;
using namespace biasforge;

namespace {

void log_error(std::string_view kind, const std::string& message) {
    std::cerr << nlohmann::json{{"level", "error"}, {"event", "error"}, {"kind", kind}, {"message", message}}.dump()
              << '\n';
}

void say(const std::string& line) { std::cout << line << '\n'; }

template <typename T>
void apply(const std::optional<T>& flag, T& target) {
    if (flag) target = *flag;
}

SplitRatio parse_ratio(const std::string& s) {
    const auto colon = s.find(':');
    try {
        if (colon == std::string::npos) throw std::invalid_argument(s);
        return {std::stoi(s.substr(0, colon)), std::stoi(s.substr(colon + 1))};
    } catch (const std::logic_error&) {
        throw Error(ErrorKind::invalid_argument, "ratio must look like 4:1, got '" + s + "'");
    }
}

InputSize parse_size(const std::string& s) {
    const auto x = s.find('x');
    try {
        if (x == std::string::npos) throw std::invalid_argument(s);
        return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
    } catch (const std::logic_error&) {
        throw Error(ErrorKind::invalid_argument, "size must look like 32x32, got '" + s + "'");
    }
}

// ---- option groups shared between subcommands ----------------------------------

struct TrainFlags {
    std::string config_file;
    std::optional<int> epochs, batch_size, hidden_units;
    std::optional<double> lr, leaky_slope;
    std::optional<std::string> optimizer, backbone, input_size, pretrained;
    std::optional<std::int64_t> seed;
    bool nondeterministic = false;

    void attach(CLI::App* app) {
        app->add_option("--train-config", config_file, "TrainConfig JSON file")->check(CLI::ExistingFile);
        app->add_option("--epochs", epochs);
        app->add_option("--lr", lr, "learning rate");
        app->add_option("--optimizer", optimizer)->check(CLI::IsMember({"rmsprop", "sgd"}));
        app->add_option("--leaky-slope", leaky_slope);
        app->add_option("--backbone", backbone)->check(CLI::IsMember({"desk_small_conv", "paper_vgg16_transfer"}));
        app->add_option("--batch-size", batch_size);
        app->add_option("--seed", seed);
        app->add_option("--input-size", input_size, "WxH");
        app->add_option("--hidden-units", hidden_units);
        app->add_option("--pretrained", pretrained, "pretrained feature extractor file");
        app->add_flag("--nondeterministic", nondeterministic, "seed from the OS instead of --seed");
    }

    TrainConfig resolve() const {
        TrainConfig c;
        if (!config_file.empty()) c = train_config_from_json(read_text_file(config_file));
        apply(epochs, c.epochs);
        apply(lr, c.learning_rate);
        if (optimizer) c.optimizer = optimizer_from_string(*optimizer);
        apply(leaky_slope, c.leaky_slope);
        if (backbone) c.backbone = backbone_from_string(*backbone);
        apply(batch_size, c.batch_size);
        apply(seed, c.seed);
        if (input_size) c.input_size = parse_size(*input_size);
        apply(hidden_units, c.hidden_units);
        apply(pretrained, c.pretrained_path);
        if (nondeterministic) c.deterministic = false;
        validate(c);
        return c;
    }
};

struct BootstrapFlags {
    std::optional<int> replicates, per_class_n;
    std::optional<double> level;
    std::optional<std::int64_t> seed;
    std::optional<std::string> method;

    void attach(CLI::App* app) {
        app->add_option("--replicates", replicates);
        app->add_option("--per-class-n", per_class_n);
        app->add_option("--confidence-level", level);
        app->add_option("--bootstrap-seed", seed);
        app->add_option("--ci-method", method)->check(CLI::IsMember({"normal_mean", "percentile"}));
    }

    BootstrapConfig resolve() const {
        BootstrapConfig c;
        apply(replicates, c.replicates);
        apply(per_class_n, c.per_class_n);
        apply(level, c.confidence_level);
        apply(seed, c.seed);
        if (method) c.ci_method = ci_method_from_string(*method);
        validate(c);
        return c;
    }
};

struct SpecFlags {
    std::string spec_file;
    std::optional<std::string> spec_id, class_label;
    std::optional<int> count, width, height;
    std::optional<double> fov;
    std::optional<std::int64_t> seed, texture_seed;

    void attach(CLI::App* app) {
        app->add_option("--spec", spec_file, "RenderSpec JSON file")->check(CLI::ExistingFile);
        app->add_option("--spec-id", spec_id);
        app->add_option("--class", class_label);
        app->add_option("--count", count);
        app->add_option("--width", width);
        app->add_option("--height", height);
        app->add_option("--fov", fov);
        app->add_option("--master-seed", seed);
        app->add_option("--texture-seed", texture_seed);
    }

    RenderSpec resolve() const {
        RenderSpec s;
        if (!spec_file.empty()) s = render_spec_from_json(read_text_file(spec_file));
        apply(spec_id, s.spec_id);
        apply(class_label, s.class_label);
        apply(count, s.count);
        apply(width, s.image_width);
        apply(height, s.image_height);
        apply(fov, s.field_of_view);
        apply(seed, s.master_seed);
        apply(texture_seed, s.texture_seed);
        return s;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"biasforge: per-class bias detection and procedural augmentation for image classifiers"};
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML/INI file; [subcommand] sections hold flag values, flags on the command line win");
    app.set_version_flag("--version", "biasforge 0.1.0");

    // ingest
    auto* ingest_cmd = app.add_subcommand("ingest", "Scan <root>/<class>/<image> into a manifest");
    fs::path ingest_root, ingest_out;
    std::string ingest_prov = "real";
    std::optional<std::string> ingest_spec_id;
    std::optional<fs::path> ingest_csv, ingest_rejects;
    ingest_cmd->add_option("root", ingest_root)->required()->check(CLI::ExistingDirectory);
    ingest_cmd->add_option("-o,--out", ingest_out, "manifest JSON")->required();
    ingest_cmd->add_option("--provenance", ingest_prov)->check(CLI::IsMember({"real", "procedural"}));
    ingest_cmd->add_option("--render-spec-id", ingest_spec_id);
    ingest_cmd->add_option("--csv", ingest_csv);
    ingest_cmd->add_option("--rejects", ingest_rejects, "write rejected files as JSON");

    // split
    auto* split_cmd = app.add_subcommand("split", "Stratified train/validation split");
    fs::path split_in, split_out = ".";
    std::string split_ratio = "4:1";
    std::int64_t split_seed_v = 0;
    split_cmd->add_option("manifest", split_in)->required()->check(CLI::ExistingFile);
    split_cmd->add_option("--ratio", split_ratio, "train:val");
    split_cmd->add_option("--seed", split_seed_v);
    split_cmd->add_option("-o,--out-dir", split_out);

    // render
    auto* render_cmd = app.add_subcommand("render", "Render a procedural batch");
    SpecFlags render_spec;
    fs::path render_out = "renders";
    render_spec.attach(render_cmd);
    render_cmd->add_option("-o,--out-dir", render_out);

    // import-renders
    auto* import_cmd = app.add_subcommand("import-renders", "Wrap images exported by an external engine");
    SpecFlags import_spec;
    fs::path import_dir, import_out;
    import_spec.attach(import_cmd);
    import_cmd->add_option("dir", import_dir)->required()->check(CLI::ExistingDirectory);
    import_cmd->add_option("-o,--out", import_out, "manifest JSON")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "Train a classifier");
    TrainFlags train_flags;
    fs::path train_m, val_m, train_out = ".";
    std::string model_id = "model";
    std::optional<fs::path> warm;
    train_flags.attach(train_cmd);
    train_cmd->add_option("--train", train_m, "training manifest")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--val", val_m, "validation manifest")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--model-id", model_id);
    train_cmd->add_option("--warm-start", warm, "model descriptor to start from")->check(CLI::ExistingFile);
    train_cmd->add_option("-o,--out-dir", train_out);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Predict an eval manifest and bootstrap per-class accuracy");
    BootstrapFlags eval_flags;
    fs::path eval_model, eval_m, eval_out = ".";
    eval_flags.attach(eval_cmd);
    eval_cmd->add_option("--model", eval_model, "model descriptor")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--eval", eval_m, "eval manifest")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("-o,--out-dir", eval_out);

    // compare
    auto* compare_cmd = app.add_subcommand("compare", "Compare per-class stats across models");
    std::vector<std::string> compare_inputs;
    fs::path compare_out = ".";
    double compare_eps = 0.01;
    compare_cmd->add_option("stats", compare_inputs, "model_id=stats.json, baseline first")->required();
    compare_cmd->add_option("--epsilon", compare_eps, "regression threshold");
    compare_cmd->add_option("-o,--out-dir", compare_out);

    // recommend
    auto* rec_cmd = app.add_subcommand("recommend", "Pick biased classes and draft render specs");
    fs::path rec_stats, rec_out;
    std::string rec_strategy = "worst_k";
    int rec_k = 1, rec_count = 200;
    double rec_threshold = 0.7;
    SpecFlags rec_template;
    rec_cmd->add_option("stats", rec_stats, "stats JSON")->required()->check(CLI::ExistingFile);
    rec_cmd->add_option("--strategy", rec_strategy)->check(CLI::IsMember({"worst_k", "below_threshold"}));
    rec_cmd->add_option("--k", rec_k);
    rec_cmd->add_option("--threshold", rec_threshold);
    rec_cmd->add_option("--per-class-count", rec_count);
    rec_template.attach(rec_cmd);
    rec_cmd->add_option("-o,--out", rec_out, "recommendation JSON (stdout when omitted)");

    // run
    auto* run_cmd = app.add_subcommand("run", "Run a full experiment plan");
    fs::path plan_file;
    std::optional<fs::path> run_output, run_cache;
    std::optional<std::int64_t> run_seed;
    std::optional<std::size_t> run_stop;
    bool run_quiet = false, run_warm = false;
    run_cmd->add_option("plan", plan_file, "YAML plan")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--output-dir", run_output);
    run_cmd->add_option("--master-seed", run_seed);
    run_cmd->add_option("--checkpoint-dir", run_cache, "overrides BIASFORGE_CACHE");
    run_cmd->add_option("--stop-after", run_stop, "run only the first N stages");
    run_cmd->add_flag("--warm-start", run_warm, "fine-tune each stage from the previous model");
    run_cmd->add_flag("-q,--quiet", run_quiet, "log progress events only");

    // report
    auto* report_cmd = app.add_subcommand("report", "Render a saved comparison report");
    fs::path report_in;
    std::string report_format = "table";
    std::optional<fs::path> report_chart;
    report_cmd->add_option("report", report_in, "report JSON")->required()->check(CLI::ExistingFile);
    report_cmd->add_option("--format", report_format)->check(CLI::IsMember({"table", "csv", "json"}));
    report_cmd->add_option("--chart", report_chart, "write comparison_chart.png into this directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*ingest_cmd) {
            IngestOptions opts;
            opts.render_spec_id = ingest_spec_id;
            const auto res = ingest(ingest_root, provenance_from_string(ingest_prov), opts);
            save_manifest(res.manifest, ingest_out);
            if (ingest_csv) save_manifest_csv(res.manifest, *ingest_csv);
            if (ingest_rejects) write_text_file(*ingest_rejects, rejects_to_json(res.rejects));
            for (const auto& r : res.rejects) log_error("Rejected", r.path.string() + ": " + r.reason);
            say(fmt::format("{} records, {} classes, {} rejected -> {}", res.manifest.size(),
                            res.manifest.class_set.size(), res.rejects.size(), ingest_out.string()));
        } else if (*split_cmd) {
            const auto m = load_manifest(split_in);
            const auto s = stratified_split(m, parse_ratio(split_ratio), static_cast<std::uint64_t>(split_seed_v));
            ensure_directory(split_out);
            save_manifest(s.train, split_out / "train_manifest.json");
            save_manifest(s.val, split_out / "val_manifest.json");
            say(fmt::format("train {} / val {} -> {}", s.train.size(), s.val.size(), split_out.string()));
        } else if (*render_cmd) {
            const RenderSpec spec = render_spec.resolve();
            const auto b = render_batch(spec, render_out);
            const fs::path mf = render_out / spec.spec_id / "manifest.json";
            if (!b.manifest.records.empty()) save_manifest(b.manifest, mf);
            say(fmt::format("rendered {} images -> {}", b.manifest.size(), (render_out / spec.spec_id).string()));
        } else if (*import_cmd) {
            const auto b = import_external_batch(import_spec.resolve(), import_dir);
            for (const auto& w : b.warnings) log_error("Warning", w);
            save_manifest(b.manifest, import_out);
            say(fmt::format("imported {} images -> {}", b.manifest.size(), import_out.string()));
        } else if (*train_cmd) {
            const TrainConfig cfg = train_flags.resolve();
            TrainOptions opts;
            opts.model_id = model_id;
            opts.out_dir = train_out;
            if (warm) opts.warm_start = load_model(*warm);
            const EventLog log;
            opts.on_epoch = [&](const EpochReport& r) {
                log.detail("epoch", {{"epoch", std::to_string(r.epoch)},
                                     {"train_acc", fmt::format("{}", r.train_accuracy)},
                                     {"val_acc", fmt::format("{}", r.val_accuracy)},
                                     {"train_loss", fmt::format("{}", r.train_loss)},
                                     {"val_loss", fmt::format("{}", r.val_loss)}});
            };
            const auto res = train(load_manifest(train_m), load_manifest(val_m), cfg, opts);
            write_text_file(train_out / ("history_" + model_id + ".csv"), history_to_csv(res.history));
            emit_history_plots(res.history, train_out, model_id);
            say(fmt::format("model {} -> {}", model_id, (train_out / ("model_" + model_id + ".json")).string()));
        } else if (*eval_cmd) {
            const auto model = load_model(eval_model);
            const auto truth = load_manifest(eval_m);
            const auto preds = predict(model, truth);
            const auto stats = bootstrap_per_class(preds, truth, eval_flags.resolve());
            ensure_directory(eval_out);
            write_text_file(eval_out / "predictions.csv", predictions_to_csv(preds));
            write_text_file(eval_out / "stats.csv", stats_to_csv(stats));
            write_text_file(eval_out / "stats.json", stats_to_json(stats));
            for (const auto& s : stats) {
                if (s.warning) log_error("Warning", s.class_label + ": " + *s.warning);
            }
            std::cout << stats_to_csv(stats);
        } else if (*compare_cmd) {
            std::vector<ModelStats> sets;
            for (const auto& item : compare_inputs) {
                const auto eq = item.find('=');
                if (eq == std::string::npos || eq == 0) {
                    throw Error(ErrorKind::invalid_argument, "expected model_id=stats.json, got '" + item + "'");
                }
                sets.push_back({item.substr(0, eq), stats_from_json(read_text_file(item.substr(eq + 1)))});
            }
            const auto report = compare_models(sets, compare_eps);
            ensure_directory(compare_out);
            write_text_file(compare_out / "report.json", report_to_json(report));
            write_text_file(compare_out / "report.csv", report_to_csv(report));
            emit_comparison_chart(report, compare_out);
            std::cout << format_report_table(report);
        } else if (*rec_cmd) {
            BiasPolicy policy;
            policy.strategy = rec_strategy == "worst_k" ? BiasStrategy::worst_k : BiasStrategy::below_threshold;
            policy.k = rec_k;
            policy.threshold = rec_threshold;
            const auto biased = identify_bias(stats_from_json(read_text_file(rec_stats)), policy);
            if (biased.empty()) {
                say("no class met the bias policy");
            } else {
                const auto rec = recommend_augmentation(biased, rec_count, rec_template.resolve());
                const std::string text = recommendation_to_json(rec);
                if (rec_out.empty()) {
                    std::cout << text;
                } else {
                    write_text_file(rec_out, text);
                    say(fmt::format("{} -> {}", fmt::join(biased, ","), rec_out.string()));
                }
            }
        } else if (*run_cmd) {
            PlanOverrides ov;
            ov.master_seed = run_seed;
            ov.output_dir = run_output;
            if (run_warm) ov.warm_start = true;
            const ExperimentPlan plan = load_plan(plan_file, ov);
            RunOptions opts;
            opts.quiet = run_quiet;
            opts.checkpoint_dir = run_cache;
            opts.stop_after = run_stop;
            const auto summary = run_experiment(plan, opts);
            if (summary.report) std::cout << format_report_table(*summary.report);
        } else if (*report_cmd) {
            const auto report = report_from_json(read_text_file(report_in));
            if (report_format == "json") {
                std::cout << report_to_json(report);
            } else if (report_format == "csv") {
                std::cout << report_to_csv(report);
            } else {
                std::cout << format_report_table(report);
            }
            if (report_chart) say("chart -> " + emit_comparison_chart(report, *report_chart).string());
        }
    } catch (const Error& e) {
        log_error(to_string(e.kind()), e.what());
        return exit_code_for(e.kind());
    } catch (const fs::filesystem_error& e) {
        log_error(to_string(ErrorKind::io), e.what());
        return exit_code_for(ErrorKind::io);
    } catch (const std::exception& e) {
        log_error(to_string(ErrorKind::internal), e.what());
        return exit_code_for(ErrorKind::internal);
    }
    return 0;
}
