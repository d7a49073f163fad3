#pragma once

// Cross-model per-class comparison, bias identification and the resulting
// procedural render plan.

#include "biasforge/bootstrap.hpp"
#include "biasforge/render.hpp"

#include <map>
#include <string>
#include <vector>

namespace biasforge {

struct ModelStats {
    std::string model_id;
    std::vector<ClassAccuracyStats> stats;
};

struct ComparisonReport {
    std::vector<std::string> models;  // models[0] is the baseline
    std::vector<std::string> class_set;
    std::map<std::string, std::vector<double>> per_class;  // class -> mean accuracy per model
    std::map<std::string, std::vector<double>> deltas;     // class -> mean minus baseline mean
    std::map<std::string, std::string> worst_class_per_model;
    std::map<std::string, std::vector<std::string>> regressed_per_model;  // non-baseline models only
    std::vector<std::string> regressed_classes;  // union over models, lexicographic
    double regression_epsilon = 0.01;
    std::vector<std::string> notes;

    friend bool operator==(const ComparisonReport&, const ComparisonReport&) = default;
};

/// A class regresses in model j when its mean falls more than
/// `regression_epsilon` below the baseline mean.
ComparisonReport compare_models(const std::vector<ModelStats>& stats_sets, double regression_epsilon = 0.01);

enum class BiasStrategy { worst_k, below_threshold };

struct BiasPolicy {
    BiasStrategy strategy = BiasStrategy::worst_k;
    int k = 1;
    double threshold = 0.7;
};

/// Biased classes ordered by ascending mean, ties broken lexicographically.
std::vector<std::string> identify_bias(const std::vector<ClassAccuracyStats>& stats, const BiasPolicy& policy);

struct AugmentationRecommendation {
    std::vector<std::string> target_classes;  // worst first
    int per_class_count = 200;
    std::vector<RenderSpec> draft_specs;
};

/// One spec per class cloned from `render_template`, with class-keyed seeds.
AugmentationRecommendation recommend_augmentation(const std::vector<std::string>& biased, int per_class_count,
                                                  const RenderSpec& render_template);

std::string report_to_json(const ComparisonReport& report);
ComparisonReport report_from_json(const std::string& text);
/// Table-style matrix: one row per class, one column per model.
std::string report_to_csv(const ComparisonReport& report);
/// Plain-text rendering for terminals.
std::string format_report_table(const ComparisonReport& report);

std::string recommendation_to_json(const AugmentationRecommendation& rec);
AugmentationRecommendation recommendation_from_json(const std::string& text);

}  // namespace biasforge
