#pragma once

// Multi-stage experiment plans: baseline training on real data, then stages
// that cumulatively add procedural renders, followed by a cross-stage report.

#include "biasforge/bias_report.hpp"
#include "biasforge/bootstrap.hpp"
#include "biasforge/manifest.hpp"
#include "biasforge/render.hpp"
#include "biasforge/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace biasforge {

/// Augmentation chosen at run time from the previous stage's bootstrap stats.
struct RecommendBlock {
    BiasPolicy policy;
    int per_class_count = 200;
    RenderSpec render_template;
    bool template_master_seed_set = false;
    bool template_texture_seed_set = false;
};

struct StageSpec {
    std::string stage_id;
    std::vector<RenderSpec> augmentation;
    std::optional<RecommendBlock> recommend;
};

struct ExperimentPlan {
    std::string name = "experiment";
    std::filesystem::path real_data_root;
    std::filesystem::path eval_data_root;
    std::filesystem::path output_dir;
    std::int64_t master_seed = 0;
    SplitRatio split_ratio{};
    bool warm_start = false;
    double regression_epsilon = 0.01;
    TrainConfig train_config{};
    BootstrapConfig bootstrap_config{};
    std::vector<StageSpec> stages;
};

/// Command-line values that replace plan values.
struct PlanOverrides {
    std::optional<std::int64_t> master_seed;
    std::optional<std::filesystem::path> output_dir;
    std::optional<bool> warm_start;
};

/// Parses a YAML plan. Relative paths resolve against `base_dir`.
/// Render seeds left out of the plan are derived from master_seed.
ExperimentPlan plan_from_yaml(const std::string& text, const std::filesystem::path& base_dir = {},
                              const PlanOverrides& overrides = {});
ExperimentPlan load_plan(const std::filesystem::path& file, const PlanOverrides& overrides = {});
void validate(const ExperimentPlan& plan);

/// Canonical JSON form; stage fingerprints hash prefixes of it.
std::string plan_to_json(const ExperimentPlan& plan);

// Seed derivations. Every seed is a function of master_seed and stage position.
std::int64_t split_seed(std::int64_t master_seed);
std::int64_t stage_train_seed(std::int64_t master_seed, std::size_t stage_index);
std::int64_t stage_bootstrap_seed(std::int64_t master_seed, std::size_t stage_index);
std::int64_t stage_render_seed(std::int64_t master_seed, std::size_t stage_index, std::size_t spec_index, int which);

/// Line-oriented JSON event log. Quiet mode keeps only progress events.
class EventLog {
public:
    using Sink = std::function<void(const std::string&)>;

    explicit EventLog(bool quiet = false, Sink sink = {});
    void progress(const std::string& event, const std::map<std::string, std::string>& fields = {}) const;
    void detail(const std::string& event, const std::map<std::string, std::string>& fields = {}) const;
    void warning(const std::string& message) const;

private:
    void emit(const std::string& level, const std::string& event, const std::map<std::string, std::string>& fields) const;
    bool quiet_;
    Sink sink_;
};

struct RunOptions {
    bool quiet = false;
    std::optional<std::filesystem::path> checkpoint_dir;  // default: $BIASFORGE_CACHE, else output_dir/.checkpoints
    std::optional<std::size_t> stop_after;                // number of stages to run before returning
    std::function<void(const std::string& stage_id)> before_stage;
    EventLog::Sink log_sink;                              // default: stderr
};

struct RunSummary {
    std::vector<std::string> loaded_stages;
    std::vector<std::string> computed_stages;
    std::vector<ModelStats> stage_stats;
    std::optional<ComparisonReport> report;  // empty when stopped early
    std::vector<std::filesystem::path> report_files;
};

RunSummary run_experiment(const ExperimentPlan& plan, const RunOptions& options = {});

std::filesystem::path checkpoint_directory(const ExperimentPlan& plan, const RunOptions& options);

/// Note recorded in every report describing the per-stage retraining mode.
std::string training_mode_note(bool warm_start);

}  // namespace biasforge
