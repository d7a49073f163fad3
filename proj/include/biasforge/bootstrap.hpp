#pragma once

// Per-class bootstrap accuracy estimation with confidence intervals.

#include "biasforge/manifest.hpp"
#include "biasforge/trainer.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace biasforge {

enum class CiMethod {
    normal_mean,  // mean +/- z * s / sqrt(B): normal-approximation interval for the bootstrap mean
    percentile,   // empirical (1-level)/2 and (1+level)/2 quantiles of the replicates
};

std::string to_string(CiMethod m);
CiMethod ci_method_from_string(const std::string& s);

struct BootstrapConfig {
    int replicates = 500;
    int per_class_n = 200;
    double confidence_level = 0.95;
    std::int64_t seed = 0;
    CiMethod ci_method = CiMethod::normal_mean;

    friend bool operator==(const BootstrapConfig&, const BootstrapConfig&) = default;
};

void validate(const BootstrapConfig& cfg);

struct ClassAccuracyStats {
    std::string class_label;
    std::vector<double> replicate_accuracies;
    double min = 0.0;
    double mean = 0.0;
    double max = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    std::optional<std::string> warning;

    friend bool operator==(const ClassAccuracyStats&, const ClassAccuracyStats&) = default;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

/// Two-sided standard normal quantile z with P(|Z| <= z) = level.
double two_sided_z(double level);

/// mean +/- z * s / sqrt(n), s the n-1 sample standard deviation.
Interval confidence_interval(const std::vector<double>& values, double level);

/// Linear-interpolated empirical quantiles at (1-level)/2 and (1+level)/2.
Interval percentile_interval(std::vector<double> values, double level);

double sample_standard_deviation(const std::vector<double>& values);

/// Observer called once per (replicate, class) with the drawn record indices.
using DrawHook = std::function<void(int replicate, const std::string& class_label, const std::vector<std::size_t>& draws)>;

/// For every replicate b, one RNG seeded from (cfg.seed, b) draws per_class_n
/// records per class (class_set order) uniformly with replacement.
std::vector<ClassAccuracyStats> bootstrap_per_class(const PredictionTable& predictions, const DatasetManifest& truth,
                                                    const BootstrapConfig& cfg, const DrawHook& hook = {});

/// Exact fraction correct per class over all records.
std::map<std::string, double> per_class_accuracy(const PredictionTable& predictions, const DatasetManifest& truth);

/// Builds stats (min/mean/max/CI) from replicate accuracies.
ClassAccuracyStats summarize(const std::string& class_label, std::vector<double> replicate_accuracies, double level,
                             CiMethod method = CiMethod::normal_mean);

std::string stats_to_csv(const std::vector<ClassAccuracyStats>& stats);
std::string stats_to_json(const std::vector<ClassAccuracyStats>& stats);
std::vector<ClassAccuracyStats> stats_from_json(const std::string& text);

}  // namespace biasforge
