#include "biasforge/error.hpp"
#include "biasforge/experiment.hpp"
#include "biasforge/fileio.hpp"
#include "biasforge/seeding.hpp"
#include "test_support.hpp"

#include <doctest.h>
#include <fmt/format.h>
#include <json.hpp>

#include <cstdlib>

using namespace biasforge;
namespace fs = std::filesystem;

namespace {

const std::uint8_t kColours[3][3] = {{210, 50, 50}, {50, 190, 60}, {60, 70, 210}};

void colour_tree(const fs::path& root, int per_class, std::uint32_t seed) {
    const char* names[] = {"bear", "dog", "sheep"};
    for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < per_class; ++i) {
            write_png(testing::jittered(8, 8, kColours[c], seed + static_cast<std::uint32_t>(c * 100 + i)),
                      root / names[c] / fmt::format("{:03d}.png", i));
        }
    }
}

std::string plan_text(const fs::path& data, const fs::path& out, const std::string& stages) {
    return fmt::format(R"(name: tiny
real_data_root: {}
eval_data_root: {}
output_dir: {}
master_seed: 3
train:
  epochs: 2
  learning_rate: 0.001
  batch_size: 8
  input_size: [8, 8]
  hidden_units: 8
bootstrap:
  replicates: 5
  per_class_n: 4
stages:
{}
)",
                       (data / "real").string(), (data / "eval").string(), out.string(), stages);
}

const char* kRecommendStages = R"(  - base
  - stage_id: aug
    recommend:
      strategy: worst_k
      k: 1
      per_class_count: 6
      template:
        image_width: 16
        image_height: 12
)";

ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected biasforge::Error");
    return ErrorKind::internal;
}

struct Fixture {
    testing::TempDir tmp;
    Fixture() {
        colour_tree(tmp / "data" / "real", 10, 1);
        colour_tree(tmp / "data" / "eval", 4, 500);
    }
    RunOptions quiet() const {
        RunOptions o;
        o.quiet = true;
        o.log_sink = [](const std::string&) {};
        return o;
    }
};

}  // namespace

TEST_SUITE("experiment") {
    TEST_CASE("plan parsing") {
        const auto p = plan_from_yaml(plan_text("/d", "out", kRecommendStages), "/base");
        CHECK(p.name == "tiny");
        CHECK(p.real_data_root == fs::path("/d/real"));
        CHECK(p.output_dir == fs::path("/base/out"));
        CHECK(p.master_seed == 3);
        CHECK(p.train_config.epochs == 2);
        CHECK(p.train_config.input_size == InputSize{8, 8});
        CHECK(p.train_config.seed == stage_train_seed(3, 0));
        CHECK(p.bootstrap_config.replicates == 5);
        REQUIRE(p.stages.size() == 2);
        CHECK(p.stages[0].stage_id == "base");
        REQUIRE(p.stages[1].recommend);
        CHECK(p.stages[1].recommend->per_class_count == 6);
        CHECK(p.stages[1].recommend->render_template.image_width == 16);
        CHECK(p.stages[1].recommend->render_template.spec_id == "aug");
        CHECK(p.stages[1].recommend->render_template.master_seed == stage_render_seed(3, 1, 0, 0));

        PlanOverrides o;
        o.master_seed = 9;
        o.warm_start = true;
        const auto q = plan_from_yaml(plan_text("/d", "out", kRecommendStages), "/base", o);
        CHECK(q.master_seed == 9);
        CHECK(q.warm_start);
        CHECK(q.stages[1].recommend->render_template.master_seed == stage_render_seed(9, 1, 0, 0));
    }

    TEST_CASE("explicit augmentation specs") {
        const auto p = plan_from_yaml(plan_text("/d", "/o", R"(  - base
  - stage_id: s1
    augmentation:
      - {class_label: bear, count: 3, image_width: 16, image_height: 12}
      - {spec_id: fixed, class_label: dog, count: 2, master_seed: 77}
)"));
        const auto& aug = p.stages[1].augmentation;
        REQUIRE(aug.size() == 2);
        CHECK(aug[0].spec_id == "s1_0");
        CHECK(aug[0].master_seed == stage_render_seed(3, 1, 0, 0));
        CHECK(aug[0].texture_seed == stage_render_seed(3, 1, 0, 1));
        CHECK(aug[1].spec_id == "fixed");
        CHECK(aug[1].master_seed == 77);
    }

    TEST_CASE("plan validation") {
        auto bad = [](const std::string& stages) {
            return kind_of([&] { plan_from_yaml(plan_text("/d", "/o", stages)); });
        };
        CHECK(bad("  - a\n  - a\n") == ErrorKind::config);
        CHECK(bad("  - ../up\n") == ErrorKind::config);
        CHECK(bad("  - stage_id: a\n    augmentation: [{class_label: bear, count: 1}]\n") == ErrorKind::config);
        CHECK(bad("  - a\n  - stage_id: b\n    recommend: {k: 0}\n") == ErrorKind::config);
        CHECK(bad("  - a\n  - stage_id: b\n    recommend: {strategy: median}\n") == ErrorKind::config);
        CHECK(kind_of([] { plan_from_yaml("name: x\n"); }) == ErrorKind::config);
        CHECK(kind_of([] { plan_from_yaml("[1, 2"); }) == ErrorKind::config);
        CHECK(kind_of([] {
                  plan_from_yaml("real_data_root: a\neval_data_root: b\noutput_dir: c\ntrain: {seed: 4}\nstages: [a]\n");
              }) == ErrorKind::config);
        CHECK(kind_of([] {
                  plan_from_yaml(
                      "real_data_root: a\neval_data_root: b\noutput_dir: c\nbootstrap: {seed: 4}\nstages: [a]\n");
              }) == ErrorKind::config);
        CHECK_NOTHROW(plan_from_yaml("real_data_root: a\neval_data_root: b\noutput_dir: c\nstages: [a]\n"));
    }

    TEST_CASE("seed derivations are distinct and stable") {
        CHECK(split_seed(3) == static_cast<std::int64_t>(derive_seed(3, {1}) >> 1));
        CHECK(stage_train_seed(3, 1) == static_cast<std::int64_t>(derive_seed(3, {2, 1}) >> 1));
        CHECK(stage_bootstrap_seed(3, 1) == static_cast<std::int64_t>(derive_seed(3, {3, 1}) >> 1));
        CHECK(stage_train_seed(3, 0) != stage_train_seed(3, 1));
        CHECK(stage_train_seed(3, 0) != stage_bootstrap_seed(3, 0));
        CHECK(stage_render_seed(3, 1, 0, 0) != stage_render_seed(3, 1, 0, 1));
        CHECK(split_seed(3) >= 0);
    }

    TEST_CASE("checkpoint directory resolution") {
        ExperimentPlan p;
        p.name = "exp";
        p.output_dir = "/out";
        RunOptions o;
        ::unsetenv("BIASFORGE_CACHE");
        CHECK(checkpoint_directory(p, o) == fs::path("/out/.checkpoints"));
        ::setenv("BIASFORGE_CACHE", "/cache", 1);
        CHECK(checkpoint_directory(p, o) == fs::path("/cache/exp"));
        o.checkpoint_dir = fs::path("/explicit");
        CHECK(checkpoint_directory(p, o) == fs::path("/explicit"));
        ::unsetenv("BIASFORGE_CACHE");
    }

    TEST_CASE("event log levels") {
        std::vector<std::string> lines;
        EventLog loud(false, [&](const std::string& l) { lines.push_back(l); });
        loud.progress("stage_start", {{"stage", "a"}});
        loud.detail("epoch", {{"epoch", "1"}});
        loud.warning("careful");
        CHECK(lines.size() == 3);
        const auto j = nlohmann::json::parse(lines[0]);
        CHECK(j["level"] == "info");
        CHECK(j["event"] == "stage_start");
        CHECK(j["stage"] == "a");
        CHECK(nlohmann::json::parse(lines[2])["message"] == "careful");
        lines.clear();
        EventLog quiet(true, [&](const std::string& l) { lines.push_back(l); });
        quiet.detail("epoch");
        quiet.progress("done");
        CHECK(lines.size() == 1);
    }

    TEST_CASE("recommend run, interruption and resume") {
        Fixture fx;
        const auto plan = plan_from_yaml(plan_text(fx.tmp / "data", fx.tmp / "out", kRecommendStages));

        auto interrupted = fx.quiet();
        interrupted.before_stage = [](const std::string& id) {
            if (id == "aug") throw std::runtime_error("interrupted");
        };
        CHECK_THROWS_AS(run_experiment(plan, interrupted), std::runtime_error);
        CHECK(fs::exists(fx.tmp / "out" / "base" / "stats.csv"));
        CHECK_FALSE(fs::exists(fx.tmp / "out" / "report.json"));

        const auto resumed = run_experiment(plan, fx.quiet());
        CHECK(resumed.loaded_stages == std::vector<std::string>{"base"});
        CHECK(resumed.computed_stages == std::vector<std::string>{"aug"});
        REQUIRE(resumed.report);
        CHECK(resumed.report->models == std::vector<std::string>{"base", "aug"});
        CHECK(std::find(resumed.report->notes.begin(), resumed.report->notes.end(), training_mode_note(false)) !=
              resumed.report->notes.end());

        const auto rec = nlohmann::json::parse(read_text_file(fx.tmp / "out" / "aug" / "recommendation.json"));
        CHECK(rec["target_classes"].size() == 1);
        const auto aug = load_manifest(fx.tmp / "out" / "aug" / "augmentation_manifest.json");
        CHECK(aug.size() == 6);
        CHECK(load_manifest(fx.tmp / "out" / "aug" / "dataset_manifest.json").size() == 36);
        for (const char* f : {"report.json", "report.csv", "report.txt", "comparison_chart.png"}) {
            CHECK(fs::exists(fx.tmp / "out" / f));
        }
        for (const char* f : {"history.csv", "predictions.csv", "stats.json", "train_manifest.json", "val_manifest.json",
                              "eval_manifest.json", "base_accuracy.png", "base_loss.png", "model_base.json"}) {
            CHECK(fs::exists(fx.tmp / "out" / "base" / f));
        }

        auto clean = plan;
        clean.output_dir = fx.tmp / "clean";
        const auto fresh = run_experiment(clean, fx.quiet());
        CHECK(fresh.loaded_stages.empty());
        for (const char* f : {"report.json", "report.csv", "base/stats.csv", "aug/stats.csv",
                              "aug/augmentation_manifest.json", "aug/dataset_manifest.csv"}) {
            CHECK(testing::read_bytes(fx.tmp / "out" / f) == testing::read_bytes(fx.tmp / "clean" / f));
        }

        const auto again = run_experiment(plan, fx.quiet());
        CHECK(again.loaded_stages == std::vector<std::string>{"base", "aug"});
        CHECK(again.computed_stages.empty());
    }

    TEST_CASE("changed plan invalidates later checkpoints only") {
        Fixture fx;
        const std::string stages = R"(  - base
  - stage_id: s1
    augmentation: [{class_label: bear, count: 2, image_width: 16, image_height: 12}]
  - stage_id: s2
    augmentation: [{class_label: sheep, count: 3, image_width: 16, image_height: 12}]
)";
        auto plan = plan_from_yaml(plan_text(fx.tmp / "data", fx.tmp / "out", stages));
        auto opts = fx.quiet();
        opts.stop_after = 2;
        const auto partial = run_experiment(plan, opts);
        CHECK(partial.computed_stages.size() == 2);
        CHECK_FALSE(partial.report);

        plan.stages[2].augmentation[0].count = 4;
        const auto full = run_experiment(plan, fx.quiet());
        CHECK(full.loaded_stages == std::vector<std::string>{"base", "s1"});
        CHECK(full.computed_stages == std::vector<std::string>{"s2"});
        // Renders accumulate across stages.
        CHECK(load_manifest(fx.tmp / "out" / "s1" / "dataset_manifest.json").size() == 32);
        CHECK(load_manifest(fx.tmp / "out" / "s2" / "dataset_manifest.json").size() == 36);
    }

    TEST_CASE("missing data roots") {
        ExperimentPlan p = plan_from_yaml("real_data_root: /nope/a\neval_data_root: /nope/b\noutput_dir: /tmp/x\nstages: [a]\n");
        RunOptions o;
        o.log_sink = [](const std::string&) {};
        CHECK(kind_of([&] { run_experiment(p, o); }) == ErrorKind::io);
    }
}
