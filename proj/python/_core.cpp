// Python bindings. Structured values cross the boundary as JSON text; the
// package __init__ turns them into dicts.

#include "biasforge/bias_report.hpp"
#include "biasforge/bootstrap.hpp"
#include "biasforge/error.hpp"
#include "biasforge/experiment.hpp"
#include "biasforge/fileio.hpp"
#include "biasforge/manifest.hpp"
#include "biasforge/plots.hpp"
#include "biasforge/render.hpp"
#include "biasforge/trainer.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
namespace bf = biasforge;
namespace fs = std::filesystem;

namespace {

std::vector<bf::ModelStats> stats_sets(const std::vector<std::pair<std::string, std::string>>& items) {
    std::vector<bf::ModelStats> out;
    for (const auto& [id, text] : items) out.push_back({id, bf::stats_from_json(text)});
    return out;
}

bf::BiasPolicy policy(const std::string& strategy, int k, double threshold) {
    if (strategy != "worst_k" && strategy != "below_threshold") {
        throw bf::Error(bf::ErrorKind::invalid_argument, "unknown strategy '" + strategy + "'");
    }
    return {strategy == "worst_k" ? bf::BiasStrategy::worst_k : bf::BiasStrategy::below_threshold, k, threshold};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "biasforge native core";

    // Messages read "<Kind>: <detail>".
    py::register_exception<bf::Error>(m, "BiasforgeError");

    m.def("leaky_relu", &bf::leaky_relu, py::arg("x"), py::arg("slope"));
    m.def("two_sided_z", &bf::two_sided_z, py::arg("level"));
    m.def(
        "confidence_interval",
        [](const std::vector<double>& values, double level) {
            const auto ci = bf::confidence_interval(values, level);
            return std::make_pair(ci.lo, ci.hi);
        },
        py::arg("values"), py::arg("level") = 0.95);
    m.def(
        "percentile_interval",
        [](const std::vector<double>& values, double level) {
            const auto ci = bf::percentile_interval(values, level);
            return std::make_pair(ci.lo, ci.hi);
        },
        py::arg("values"), py::arg("level") = 0.95);

    m.def(
        "ingest",
        [](const fs::path& root, const std::string& provenance, std::optional<std::string> render_spec_id) {
            bf::IngestOptions opts;
            opts.render_spec_id = std::move(render_spec_id);
            const auto res = bf::ingest(root, bf::provenance_from_string(provenance), opts);
            return std::make_pair(bf::manifest_to_json(res.manifest), bf::rejects_to_json(res.rejects));
        },
        py::arg("root"), py::arg("provenance") = "real", py::arg("render_spec_id") = py::none());
    m.def(
        "stratified_split",
        [](const std::string& manifest_json, int train, int val, std::uint64_t seed) {
            const auto s = bf::stratified_split(bf::manifest_from_json(manifest_json), {train, val}, seed);
            return std::make_pair(bf::manifest_to_json(s.train), bf::manifest_to_json(s.val));
        },
        py::arg("manifest_json"), py::arg("train") = 4, py::arg("val") = 1, py::arg("seed") = 0);

    m.def(
        "render_batch",
        [](const std::string& spec_json, const fs::path& out_root) {
            const auto b = bf::render_batch(bf::render_spec_from_json(spec_json), out_root);
            return std::make_pair(bf::manifest_to_json(b.manifest), bf::params_to_json(b.per_image_params));
        },
        py::arg("spec_json"), py::arg("out_root"));

    m.def(
        "bootstrap_per_class",
        [](const std::string& predictions_csv, const std::string& truth_json, int replicates, int per_class_n,
           double confidence_level, std::int64_t seed) {
            bf::BootstrapConfig cfg;
            cfg.replicates = replicates;
            cfg.per_class_n = per_class_n;
            cfg.confidence_level = confidence_level;
            cfg.seed = seed;
            return bf::stats_to_json(bf::bootstrap_per_class(bf::predictions_from_csv(predictions_csv),
                                                             bf::manifest_from_json(truth_json), cfg));
        },
        py::arg("predictions_csv"), py::arg("truth_json"), py::arg("replicates") = 500, py::arg("per_class_n") = 200,
        py::arg("confidence_level") = 0.95, py::arg("seed") = 0);

    m.def(
        "compare_models",
        [](const std::vector<std::pair<std::string, std::string>>& items, double epsilon) {
            return bf::report_to_json(bf::compare_models(stats_sets(items), epsilon));
        },
        py::arg("stats"), py::arg("regression_epsilon") = 0.01);
    m.def(
        "identify_bias",
        [](const std::string& stats_json, const std::string& strategy, int k, double threshold) {
            return bf::identify_bias(bf::stats_from_json(stats_json), policy(strategy, k, threshold));
        },
        py::arg("stats_json"), py::arg("strategy") = "worst_k", py::arg("k") = 1, py::arg("threshold") = 0.7);
    m.def(
        "recommend_augmentation",
        [](const std::vector<std::string>& biased, const std::string& template_json, int count) {
            return bf::recommendation_to_json(
                bf::recommend_augmentation(biased, count, bf::render_spec_from_json(template_json)));
        },
        py::arg("biased"), py::arg("template_json"), py::arg("per_class_count") = 200);
    m.def(
        "emit_comparison_chart",
        [](const std::string& report_json, const fs::path& out_dir) {
            return bf::emit_comparison_chart(bf::report_from_json(report_json), out_dir);
        },
        py::arg("report_json"), py::arg("out_dir"));

    m.def(
        "run_experiment",
        [](const fs::path& plan_file, std::optional<std::int64_t> master_seed, bool quiet) {
            bf::PlanOverrides ov;
            ov.master_seed = master_seed;
            const auto plan = bf::load_plan(plan_file, ov);
            bf::RunOptions opts;
            opts.quiet = quiet;
            py::gil_scoped_release release;
            const auto summary = bf::run_experiment(plan, opts);
            return summary.report ? bf::report_to_json(*summary.report) : std::string("null");
        },
        py::arg("plan_file"), py::arg("master_seed") = py::none(), py::arg("quiet") = true);
}
