#include "biasforge/experiment.hpp"

#include "biasforge/error.hpp"
#include "biasforge/fileio.hpp"
#include "biasforge/hashing.hpp"
#include "biasforge/plots.hpp"
#include "biasforge/seeding.hpp"
#include "detail/json_codec.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cstdlib>
#include <iostream>
#include <set>

namespace biasforge {

namespace fs = std::filesystem;
using detail::json;

namespace {

// ---- YAML -> JSON ---------------------------------------------------------

json scalar_to_json(const YAML::Node& node) {
    const std::string& s = node.Scalar();
    if (node.Tag() == "!") return s;  // quoted
    if (s == "~" || s == "null" || s == "Null" || s == "NULL" || s.empty()) return nullptr;
    if (s == "true" || s == "True" || s == "TRUE") return true;
    if (s == "false" || s == "False" || s == "FALSE") return false;
    std::int64_t i = 0;
    const char* end = s.data() + s.size();
    if (auto [p, ec] = std::from_chars(s.data(), end, i); ec == std::errc{} && p == end) return i;
    double d = 0.0;
    if (auto [p, ec] = std::from_chars(s.data(), end, d); ec == std::errc{} && p == end) return d;
    return s;
}

json yaml_to_json(const YAML::Node& node) {
    switch (node.Type()) {
        case YAML::NodeType::Null:
        case YAML::NodeType::Undefined:
            return nullptr;
        case YAML::NodeType::Scalar:
            return scalar_to_json(node);
        case YAML::NodeType::Sequence: {
            json arr = json::array();
            for (const auto& item : node) arr.push_back(yaml_to_json(item));
            return arr;
        }
        case YAML::NodeType::Map: {
            json obj = json::object();
            for (const auto& kv : node) obj[kv.first.as<std::string>()] = yaml_to_json(kv.second);
            return obj;
        }
    }
    return nullptr;
}

fs::path resolve(const std::string& p, const fs::path& base) {
    fs::path path(p);
    if (path.is_relative() && !base.empty()) path = base / path;
    return path.lexically_normal();
}

BiasStrategy strategy_from_string(const std::string& s) {
    if (s == "worst_k") return BiasStrategy::worst_k;
    if (s == "below_threshold") return BiasStrategy::below_threshold;
    throw Error(ErrorKind::config, "unknown bias strategy '" + s + "'");
}

std::string to_string(BiasStrategy s) { return s == BiasStrategy::worst_k ? "worst_k" : "below_threshold"; }

json spec_list_json(const std::vector<RenderSpec>& specs) {
    json arr = json::array();
    for (const auto& s : specs) arr.push_back(detail::render_spec_json(s));
    return arr;
}

json stage_json(const StageSpec& st) {
    json j{{"stage_id", st.stage_id}, {"augmentation", spec_list_json(st.augmentation)}};
    if (st.recommend) {
        const auto& r = *st.recommend;
        j["recommend"] = {{"strategy", to_string(r.policy.strategy)},
                          {"k", r.policy.k},
                          {"threshold", r.policy.threshold},
                          {"per_class_count", r.per_class_count},
                          {"template", detail::render_spec_json(r.render_template)}};
    }
    return j;
}

json plan_globals_json(const ExperimentPlan& p) {
    return {{"name", p.name},
            {"real_data_root", p.real_data_root.generic_string()},
            {"eval_data_root", p.eval_data_root.generic_string()},
            {"output_dir", p.output_dir.generic_string()},
            {"master_seed", p.master_seed},
            {"split_ratio", {p.split_ratio.train, p.split_ratio.val}},
            {"warm_start", p.warm_start},
            {"train", detail::train_config_json(p.train_config)},
            {"bootstrap", detail::bootstrap_config_json(p.bootstrap_config)}};
}

std::string stage_fingerprint(const ExperimentPlan& plan, std::size_t index) {
    json j = plan_globals_json(plan);
    json stages = json::array();
    for (std::size_t i = 0; i <= index; ++i) stages.push_back(stage_json(plan.stages[i]));
    j["stages"] = stages;
    return sha256_hex(j.dump());
}

std::string run_timestamp() {
    if (std::getenv("SOURCE_DATE_EPOCH") != nullptr) return current_timestamp();
    return format_timestamp(0);
}

}  // namespace

// ---- plan parsing -----------------------------------------------------------

ExperimentPlan plan_from_yaml(const std::string& text, const fs::path& base_dir, const PlanOverrides& overrides) {
    json j;
    try {
        j = yaml_to_json(YAML::Load(text));
    } catch (const YAML::Exception& e) {
        throw Error(ErrorKind::config, std::string("plan is not valid YAML: ") + e.what());
    }
    if (!j.is_object()) throw Error(ErrorKind::config, "plan must be a mapping");

    ExperimentPlan p;
    try {
        p.name = j.value("name", p.name);
        for (const char* key : {"real_data_root", "eval_data_root", "output_dir"}) {
            if (!j.contains(key) || !j[key].is_string()) {
                throw Error(ErrorKind::config, fmt::format("plan is missing '{}'", key));
            }
        }
        p.real_data_root = resolve(j["real_data_root"].get<std::string>(), base_dir);
        p.eval_data_root = resolve(j["eval_data_root"].get<std::string>(), base_dir);
        p.output_dir = resolve(j["output_dir"].get<std::string>(), base_dir);
        p.master_seed = overrides.master_seed.value_or(j.value("master_seed", p.master_seed));
        if (overrides.output_dir) p.output_dir = resolve(overrides.output_dir->string(), fs::current_path());
        if (j.contains("split_ratio")) {
            const auto& r = j["split_ratio"];
            if (r.is_array()) {
                p.split_ratio = {r.at(0).get<int>(), r.at(1).get<int>()};
            } else {
                p.split_ratio = {r.value("train", 4), r.value("val", 1)};
            }
        }
        p.warm_start = overrides.warm_start.value_or(j.value("warm_start", p.warm_start));
        p.regression_epsilon = j.value("regression_epsilon", p.regression_epsilon);
        if (j.contains("train") && !j["train"].is_null()) {
            json t = j["train"];
            if (t.contains("pretrained_path") && t["pretrained_path"].is_string() &&
                !t["pretrained_path"].get<std::string>().empty()) {
                t["pretrained_path"] = resolve(t["pretrained_path"].get<std::string>(), base_dir).string();
            }
            if (t.contains("seed")) throw Error(ErrorKind::config, "train.seed is derived from master_seed");
            p.train_config = detail::train_config_from(t);
        }
        if (j.contains("bootstrap") && !j["bootstrap"].is_null()) {
            if (j["bootstrap"].contains("seed")) throw Error(ErrorKind::config, "bootstrap.seed is derived from master_seed");
            p.bootstrap_config = detail::bootstrap_config_from(j["bootstrap"]);
        }
        if (!j.contains("stages") || !j["stages"].is_array()) {
            throw Error(ErrorKind::config, "plan needs a 'stages' list");
        }
        const auto& stages = j["stages"];
        for (std::size_t si = 0; si < stages.size(); ++si) {
            const auto& sj = stages[si];
            StageSpec st;
            st.stage_id = sj.is_string() ? sj.get<std::string>() : sj.at("stage_id").get<std::string>();
            if (sj.is_object() && sj.contains("augmentation") && !sj["augmentation"].is_null()) {
                const auto& aug = sj["augmentation"];
                for (std::size_t ai = 0; ai < aug.size(); ++ai) {
                    RenderSpec spec = detail::render_spec_from(aug[ai]);
                    if (!aug[ai].contains("master_seed")) spec.master_seed = stage_render_seed(p.master_seed, si, ai, 0);
                    if (!aug[ai].contains("texture_seed")) spec.texture_seed = stage_render_seed(p.master_seed, si, ai, 1);
                    if (spec.spec_id.empty()) spec.spec_id = fmt::format("{}_{}", st.stage_id, ai);
                    st.augmentation.push_back(std::move(spec));
                }
            }
            if (sj.is_object() && sj.contains("recommend") && !sj["recommend"].is_null()) {
                const auto& rj = sj["recommend"];
                RecommendBlock rb;
                rb.policy.strategy = strategy_from_string(rj.value("strategy", std::string("worst_k")));
                rb.policy.k = rj.value("k", rb.policy.k);
                rb.policy.threshold = rj.value("threshold", rb.policy.threshold);
                rb.per_class_count = rj.value("per_class_count", rb.per_class_count);
                json tj = rj.value("template", json::object());
                rb.render_template = detail::render_spec_from(tj);
                rb.template_master_seed_set = tj.contains("master_seed");
                rb.template_texture_seed_set = tj.contains("texture_seed");
                if (!rb.template_master_seed_set) rb.render_template.master_seed = stage_render_seed(p.master_seed, si, 0, 0);
                if (!rb.template_texture_seed_set) rb.render_template.texture_seed = stage_render_seed(p.master_seed, si, 0, 1);
                if (rb.render_template.spec_id.empty()) rb.render_template.spec_id = st.stage_id;
                st.recommend = rb;
            }
            p.stages.push_back(std::move(st));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::config, std::string("malformed plan: ") + e.what());
    }
    p.train_config.seed = stage_train_seed(p.master_seed, 0);
    p.bootstrap_config.seed = stage_bootstrap_seed(p.master_seed, 0);
    validate(p);
    return p;
}

ExperimentPlan load_plan(const fs::path& file, const PlanOverrides& overrides) {
    return plan_from_yaml(read_text_file(file), fs::absolute(file).parent_path(), overrides);
}

void validate(const ExperimentPlan& plan) {
    if (plan.name.empty()) throw Error(ErrorKind::config, "plan name must not be empty");
    if (plan.stages.empty()) throw Error(ErrorKind::config, "plan has no stages");
    std::set<std::string> ids;
    std::set<std::string> spec_ids;
    for (std::size_t i = 0; i < plan.stages.size(); ++i) {
        const auto& st = plan.stages[i];
        if (st.stage_id.empty() || st.stage_id.find_first_of("/\\") != std::string::npos || st.stage_id == "." ||
            st.stage_id == "..") {
            throw Error(ErrorKind::config, fmt::format("invalid stage_id '{}'", st.stage_id));
        }
        if (!ids.insert(st.stage_id).second) throw Error(ErrorKind::config, "duplicate stage_id '" + st.stage_id + "'");
        if (i == 0 && (!st.augmentation.empty() || st.recommend)) {
            throw Error(ErrorKind::config, "stage 0 is the real-data baseline and takes no augmentation");
        }
        if (st.recommend && !st.augmentation.empty()) {
            throw Error(ErrorKind::config, "stage '" + st.stage_id + "' sets both augmentation and recommend");
        }
        for (const auto& s : st.augmentation) {
            validate(s);
            if (!spec_ids.insert(s.spec_id).second) throw Error(ErrorKind::config, "duplicate spec_id '" + s.spec_id + "'");
        }
        if (st.recommend) {
            if (st.recommend->per_class_count < 1) throw Error(ErrorKind::config, "recommend.per_class_count must be >= 1");
            if (st.recommend->policy.k < 1) throw Error(ErrorKind::config, "recommend.k must be >= 1");
        }
    }
    if (plan.split_ratio.train <= 0 || plan.split_ratio.val <= 0) {
        throw Error(ErrorKind::config, "split_ratio parts must be positive");
    }
    validate(plan.train_config);
    validate(plan.bootstrap_config);
}

std::string plan_to_json(const ExperimentPlan& plan) {
    json j = plan_globals_json(plan);
    j["regression_epsilon"] = plan.regression_epsilon;
    json stages = json::array();
    for (const auto& st : plan.stages) stages.push_back(stage_json(st));
    j["stages"] = stages;
    return j.dump(2) + "\n";
}

// ---- seeds ------------------------------------------------------------------

namespace {
std::int64_t to_i64(std::uint64_t v) { return static_cast<std::int64_t>(v >> 1); }
std::uint64_t u(std::int64_t v) { return static_cast<std::uint64_t>(v); }
}  // namespace

std::int64_t split_seed(std::int64_t master_seed) { return to_i64(derive_seed(u(master_seed), {1})); }

std::int64_t stage_train_seed(std::int64_t master_seed, std::size_t stage_index) {
    return to_i64(derive_seed(u(master_seed), {2, stage_index}));
}

std::int64_t stage_bootstrap_seed(std::int64_t master_seed, std::size_t stage_index) {
    return to_i64(derive_seed(u(master_seed), {3, stage_index}));
}

std::int64_t stage_render_seed(std::int64_t master_seed, std::size_t stage_index, std::size_t spec_index, int which) {
    return to_i64(derive_seed(u(master_seed), {4, stage_index, spec_index, static_cast<std::uint64_t>(which)}));
}

// ---- logging ----------------------------------------------------------------

EventLog::EventLog(bool quiet, Sink sink) : quiet_(quiet), sink_(std::move(sink)) {
    if (!sink_) sink_ = [](const std::string& line) { std::cerr << line << '\n'; };
}

void EventLog::emit(const std::string& level, const std::string& event,
                    const std::map<std::string, std::string>& fields) const {
    json j{{"level", level}, {"event", event}};
    for (const auto& [k, v] : fields) j[k] = v;
    sink_(j.dump());
}

void EventLog::progress(const std::string& event, const std::map<std::string, std::string>& fields) const {
    emit("info", event, fields);
}

void EventLog::detail(const std::string& event, const std::map<std::string, std::string>& fields) const {
    if (!quiet_) emit("debug", event, fields);
}

void EventLog::warning(const std::string& message) const { emit("warning", "warning", {{"message", message}}); }

// ---- run ----------------------------------------------------------------------

fs::path checkpoint_directory(const ExperimentPlan& plan, const RunOptions& options) {
    if (options.checkpoint_dir) return *options.checkpoint_dir;
    if (const char* env = std::getenv("BIASFORGE_CACHE"); env != nullptr && *env != '\0') return fs::path(env) / plan.name;
    return plan.output_dir / ".checkpoints";
}

std::string training_mode_note(bool warm_start) {
    return warm_start ? "training: each stage warm-starts from the previous stage's weights (warm_start: true)"
                      : "training: each stage is trained from scratch (warm_start: false; set warm_start to fine-tune)";
}

namespace {

struct StageState {
    std::vector<RenderSpec> specs;         // resolved augmentation of this stage
    std::optional<DatasetManifest> renders;
    std::vector<ClassAccuracyStats> stats;
    fs::path model_descriptor;
};

struct StageFiles {
    fs::path dir;
    fs::path checkpoint;
    [[nodiscard]] fs::path stats_json() const { return dir / "stats.json"; }
    [[nodiscard]] fs::path augmentation() const { return dir / "augmentation_manifest.json"; }
};

std::optional<StageState> load_checkpoint(const StageFiles& f, const std::string& fingerprint) {
    std::error_code ec;
    if (!fs::exists(f.checkpoint, ec)) return std::nullopt;
    try {
        const json j = json::parse(read_text_file(f.checkpoint));
        if (j.value("fingerprint", std::string{}) != fingerprint) return std::nullopt;
        StageState s;
        for (const auto& sj : j.at("specs")) s.specs.push_back(detail::render_spec_from(sj));
        s.model_descriptor = f.dir / j.at("model").get<std::string>();
        if (!fs::exists(s.model_descriptor) || !fs::exists(f.stats_json())) return std::nullopt;
        if (sha256_file(f.stats_json()) != j.at("stats_sha256").get<std::string>()) return std::nullopt;
        s.stats = stats_from_json(read_text_file(f.stats_json()));
        if (!s.specs.empty()) {
            if (!fs::exists(f.augmentation())) return std::nullopt;
            s.renders = load_manifest(f.augmentation());
            validate(*s.renders, true);
        }
        return s;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

void save_checkpoint(const StageFiles& f, const std::string& fingerprint, const StageState& s) {
    json j{{"fingerprint", fingerprint},
           {"specs", spec_list_json(s.specs)},
           {"model", s.model_descriptor.filename().string()},
           {"stats_sha256", sha256_file(f.stats_json())}};
    ensure_directory(f.checkpoint.parent_path());
    write_text_file(f.checkpoint, j.dump(2) + "\n");
}

std::string fmt_num(double v) { return fmt::format("{}", v); }

}  // namespace

RunSummary run_experiment(const ExperimentPlan& plan, const RunOptions& options) {
    validate(plan);
    const EventLog log(options.quiet, options.log_sink);
    std::error_code ec;
    if (!fs::is_directory(plan.real_data_root, ec)) {
        throw Error(ErrorKind::io, "real_data_root does not exist: " + plan.real_data_root.string());
    }
    if (!fs::is_directory(plan.eval_data_root, ec)) {
        throw Error(ErrorKind::io, "eval_data_root does not exist: " + plan.eval_data_root.string());
    }
    ensure_directory(plan.output_dir);
    const fs::path out = fs::absolute(plan.output_dir).lexically_normal();
    const fs::path ckpt_dir = checkpoint_directory(plan, options);
    const std::string created_at = run_timestamp();
    write_text_file(out / "plan.json", plan_to_json(plan));

    log.progress("run_start", {{"plan", plan.name}, {"stages", std::to_string(plan.stages.size())}});

    IngestOptions io;
    io.created_at = created_at;
    const IngestResult real = ingest(plan.real_data_root, Provenance::real, io);
    for (const auto& r : real.rejects) log.warning("rejected " + r.path.string() + ": " + r.reason);
    const IngestResult eval = ingest(plan.eval_data_root, Provenance::real, io);
    for (const auto& r : eval.rejects) log.warning("rejected " + r.path.string() + ": " + r.reason);
    log.detail("ingest", {{"real_records", std::to_string(real.manifest.size())},
                          {"eval_records", std::to_string(eval.manifest.size())}});

    RunSummary summary;
    std::vector<DatasetManifest> cumulative;  // renders of stages 1..k
    std::optional<fs::path> previous_model;

    const std::size_t limit = std::min(plan.stages.size(), options.stop_after.value_or(plan.stages.size()));
    for (std::size_t si = 0; si < limit; ++si) {
        const StageSpec& stage = plan.stages[si];
        const StageFiles files{out / stage.stage_id, ckpt_dir / (stage.stage_id + ".json")};
        const std::string fingerprint = stage_fingerprint(plan, si);

        if (auto loaded = load_checkpoint(files, fingerprint)) {
            if (loaded->renders) cumulative.push_back(*loaded->renders);
            previous_model = loaded->model_descriptor;
            summary.stage_stats.push_back({stage.stage_id, loaded->stats});
            summary.loaded_stages.push_back(stage.stage_id);
            log.progress("stage_loaded", {{"stage", stage.stage_id}});
            continue;
        }

        if (options.before_stage) options.before_stage(stage.stage_id);
        log.progress("stage_start", {{"stage", stage.stage_id}, {"index", std::to_string(si)}});
        ensure_directory(files.dir);
        StageState state;

        // Augmentation for this stage.
        state.specs = stage.augmentation;
        if (stage.recommend) {
            const auto& prev = summary.stage_stats.back().stats;
            const auto biased = identify_bias(prev, stage.recommend->policy);
            if (biased.empty()) {
                log.warning("stage " + stage.stage_id + ": no class met the bias policy; stage adds no renders");
            } else {
                const auto rec = recommend_augmentation(biased, stage.recommend->per_class_count,
                                                        stage.recommend->render_template);
                write_text_file(files.dir / "recommendation.json", recommendation_to_json(rec));
                state.specs = rec.draft_specs;
                log.detail("recommend", {{"stage", stage.stage_id}, {"classes", fmt::format("{}", fmt::join(biased, ","))}});
            }
        }
        if (!state.specs.empty()) {
            const fs::path render_root = files.dir / "renders";
            std::optional<DatasetManifest> batch_union;
            for (const auto& spec : state.specs) {
                RenderBatch b = render_batch(spec, render_root, {created_at});
                for (const auto& w : b.warnings) log.warning(w);
                log.detail("render", {{"stage", stage.stage_id}, {"spec", spec.spec_id}, {"count", std::to_string(spec.count)}});
                if (b.manifest.records.empty()) continue;
                if (!batch_union) {
                    batch_union = b.manifest;
                } else {
                    batch_union->records.insert(batch_union->records.end(), b.manifest.records.begin(),
                                                b.manifest.records.end());
                    auto labels = batch_union->class_set;
                    labels.insert(labels.end(), b.manifest.class_set.begin(), b.manifest.class_set.end());
                    batch_union->class_set = canonical_class_set(std::move(labels));
                }
            }
            if (batch_union) {
                batch_union->manifest_id = "renders-" + stage.stage_id;
                batch_union->created_at = created_at;
                save_manifest(*batch_union, files.augmentation(), out);
                state.renders = batch_union;
                cumulative.push_back(*batch_union);
            } else {
                state.specs.clear();
            }
        }

        // Data: real baseline plus every render added so far.
        DatasetManifest dataset = real.manifest;
        for (const auto& add : cumulative) dataset = merge(dataset, add);
        save_manifest(dataset, files.dir / "dataset_manifest.json", out);
        save_manifest_csv(dataset, files.dir / "dataset_manifest.csv", out);
        const SplitResult split = stratified_split(dataset, plan.split_ratio, static_cast<std::uint64_t>(split_seed(plan.master_seed)));
        save_manifest(split.train, files.dir / "train_manifest.json", out);
        save_manifest(split.val, files.dir / "val_manifest.json", out);
        save_manifest(eval.manifest, files.dir / "eval_manifest.json", out);
        log.detail("split", {{"stage", stage.stage_id},
                             {"train", std::to_string(split.train.size())},
                             {"val", std::to_string(split.val.size())},
                             {"procedural", std::to_string(dataset.count_provenance(Provenance::procedural))}});

        // Train.
        TrainConfig tc = plan.train_config;
        tc.seed = stage_train_seed(plan.master_seed, si);
        TrainOptions to;
        to.model_id = stage.stage_id;
        to.out_dir = files.dir;
        if (plan.warm_start && previous_model) to.warm_start = load_model(*previous_model);
        to.on_epoch = [&](const EpochReport& r) {
            log.detail("epoch", {{"stage", stage.stage_id},
                                 {"epoch", std::to_string(r.epoch)},
                                 {"train_acc", fmt_num(r.train_accuracy)},
                                 {"val_acc", fmt_num(r.val_accuracy)},
                                 {"train_loss", fmt_num(r.train_loss)},
                                 {"val_loss", fmt_num(r.val_loss)}});
        };
        const TrainResult trained = train(split.train, split.val, tc, to);
        if (trained.model.nondeterministic) log.warning("stage " + stage.stage_id + " trained nondeterministically");
        write_text_file(files.dir / "history.csv", history_to_csv(trained.history));
        emit_history_plots(trained.history, files.dir, stage.stage_id);
        state.model_descriptor = files.dir / ("model_" + stage.stage_id + ".json");

        // Evaluate.
        const PredictionTable preds = predict(trained.model, eval.manifest);
        write_text_file(files.dir / "predictions.csv", predictions_to_csv(preds));
        BootstrapConfig bc = plan.bootstrap_config;
        bc.seed = stage_bootstrap_seed(plan.master_seed, si);
        state.stats = bootstrap_per_class(preds, eval.manifest, bc);
        for (const auto& s : state.stats) {
            if (s.warning) log.warning("stage " + stage.stage_id + ", class " + s.class_label + ": " + *s.warning);
        }
        write_text_file(files.dir / "stats.csv", stats_to_csv(state.stats));
        write_text_file(files.stats_json(), stats_to_json(state.stats));

        save_checkpoint(files, fingerprint, state);
        previous_model = state.model_descriptor;
        summary.stage_stats.push_back({stage.stage_id, state.stats});
        summary.computed_stages.push_back(stage.stage_id);
        log.progress("stage_done", {{"stage", stage.stage_id}, {"eval_accuracy", fmt_num(preds.accuracy())}});
    }

    if (limit < plan.stages.size()) {
        log.progress("run_stopped", {{"completed", std::to_string(limit)}});
        return summary;
    }

    ComparisonReport report = compare_models(summary.stage_stats, plan.regression_epsilon);
    report.notes.push_back(training_mode_note(plan.warm_start));
    summary.report_files = {out / "report.json", out / "report.csv", out / "report.txt"};
    write_text_file(summary.report_files[0], report_to_json(report));
    write_text_file(summary.report_files[1], report_to_csv(report));
    write_text_file(summary.report_files[2], format_report_table(report));
    summary.report_files.push_back(emit_comparison_chart(report, out));
    summary.report = std::move(report);
    log.progress("run_done", {{"plan", plan.name}, {"report", summary.report_files[0].string()}});
    return summary;
}

}  // namespace biasforge
