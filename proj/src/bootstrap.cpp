#include "biasforge/bootstrap.hpp"

#include "biasforge/error.hpp"
#include "biasforge/fileio.hpp"
#include "biasforge/seeding.hpp"
#include "detail/json_codec.hpp"

#include <boost/math/distributions/normal.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace biasforge {

using detail::json;

namespace {

/// Arithmetic mean with one residual-correction pass.
double mean_of(const std::vector<double>& values) {
    double sum = 0.0;
    for (double v : values) sum += v;
    const double n = static_cast<double>(values.size());
    const double rough = sum / n;
    double residual = 0.0;
    for (double v : values) residual += v - rough;
    return rough + residual / n;
}

}  // namespace

std::string to_string(CiMethod m) { return m == CiMethod::normal_mean ? "normal_mean" : "percentile"; }

CiMethod ci_method_from_string(const std::string& s) {
    if (s == "normal_mean" || s == "normal") return CiMethod::normal_mean;
    if (s == "percentile") return CiMethod::percentile;
    throw Error(ErrorKind::config, "unknown confidence interval method '" + s + "'");
}

void validate(const BootstrapConfig& cfg) {
    if (cfg.replicates < 2) throw Error(ErrorKind::config, "bootstrap needs at least 2 replicates");
    if (cfg.per_class_n < 1) throw Error(ErrorKind::config, "per_class_n must be >= 1");
    if (!(cfg.confidence_level > 0.0 && cfg.confidence_level < 1.0)) {
        throw Error(ErrorKind::config, "confidence_level must lie in (0, 1)");
    }
}

double two_sided_z(double level) {
    if (!(level > 0.0 && level < 1.0)) {
        throw Error(ErrorKind::invalid_argument, fmt::format("confidence level {} outside (0, 1)", level));
    }
    return boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 + level / 2.0);
}

double sample_standard_deviation(const std::vector<double>& values) {
    if (values.size() < 2) {
        throw Error(ErrorKind::insufficient_samples, "standard deviation needs at least 2 values");
    }
    const double mean = mean_of(values);
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

Interval confidence_interval(const std::vector<double>& values, double level) {
    if (values.size() < 2) {
        throw Error(ErrorKind::insufficient_samples,
                    fmt::format("confidence interval needs at least 2 values, got {}", values.size()));
    }
    const double z = two_sided_z(level);
    const double mean = mean_of(values);
    const double half = z * sample_standard_deviation(values) / std::sqrt(static_cast<double>(values.size()));
    return {mean - half, mean + half};
}

Interval percentile_interval(std::vector<double> values, double level) {
    if (values.size() < 2) {
        throw Error(ErrorKind::insufficient_samples, "percentile interval needs at least 2 values");
    }
    (void)two_sided_z(level);
    std::sort(values.begin(), values.end());
    auto quantile = [&](double p) {
        const double h = (static_cast<double>(values.size()) - 1.0) * p;
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const std::size_t hi = std::min(lo + 1, values.size() - 1);
        return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
    };
    return {quantile((1.0 - level) / 2.0), quantile((1.0 + level) / 2.0)};
}

ClassAccuracyStats summarize(const std::string& class_label, std::vector<double> replicate_accuracies, double level,
                             CiMethod method) {
    if (replicate_accuracies.size() < 2) {
        throw Error(ErrorKind::insufficient_samples, "class '" + class_label + "' has fewer than 2 replicates");
    }
    ClassAccuracyStats s;
    s.class_label = class_label;
    s.mean = mean_of(replicate_accuracies);
    const auto [mn, mx] = std::minmax_element(replicate_accuracies.begin(), replicate_accuracies.end());
    s.min = *mn;
    s.max = *mx;
    const Interval ci = method == CiMethod::normal_mean ? confidence_interval(replicate_accuracies, level)
                                                        : percentile_interval(replicate_accuracies, level);
    s.ci_lo = ci.lo;
    s.ci_hi = ci.hi;
    s.replicate_accuracies = std::move(replicate_accuracies);
    return s;
}

namespace {

/// Per class (truth.class_set order), correctness of each truth record.
std::vector<std::vector<bool>> correctness_by_class(const PredictionTable& predictions, const DatasetManifest& truth) {
    std::unordered_map<std::string, const Prediction*> by_path;
    for (const auto& p : predictions.rows) by_path[p.path.string()] = &p;

    std::unordered_map<std::string, std::size_t> class_index;
    for (std::size_t i = 0; i < truth.class_set.size(); ++i) class_index[truth.class_set[i]] = i;

    std::vector<std::vector<bool>> out(truth.class_set.size());
    for (const auto& r : truth.records) {
        const auto it = by_path.find(r.path.string());
        if (it == by_path.end() || !it->second->ok()) {
            throw Error(ErrorKind::incomplete_predictions, "no usable prediction for " + r.path.string());
        }
        out[class_index.at(r.class_label)].push_back(it->second->predicted_label == r.class_label);
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i].empty()) {
            throw Error(ErrorKind::empty_class, "class '" + truth.class_set[i] + "' has no evaluation records");
        }
    }
    return out;
}

}  // namespace

std::vector<ClassAccuracyStats> bootstrap_per_class(const PredictionTable& predictions, const DatasetManifest& truth,
                                                    const BootstrapConfig& cfg, const DrawHook& hook) {
    validate(cfg);
    const auto correct = correctness_by_class(predictions, truth);
    const std::size_t classes = correct.size();
    const auto n = static_cast<std::size_t>(cfg.per_class_n);

    std::vector<std::vector<double>> acc(classes, std::vector<double>(static_cast<std::size_t>(cfg.replicates)));
    std::vector<std::size_t> draws(n);
    for (int b = 0; b < cfg.replicates; ++b) {
        Rng rng(derive_seed(static_cast<std::uint64_t>(cfg.seed), {static_cast<std::uint64_t>(b)}));
        for (std::size_t c = 0; c < classes; ++c) {
            std::size_t hits = 0;
            for (std::size_t k = 0; k < n; ++k) {
                draws[k] = static_cast<std::size_t>(rng.bounded(correct[c].size()));
                hits += correct[c][draws[k]] ? 1 : 0;
            }
            acc[c][static_cast<std::size_t>(b)] = static_cast<double>(hits) / static_cast<double>(n);
            if (hook) hook(b, truth.class_set[c], draws);
        }
    }

    std::vector<ClassAccuracyStats> out;
    out.reserve(classes);
    for (std::size_t c = 0; c < classes; ++c) {
        auto s = summarize(truth.class_set[c], std::move(acc[c]), cfg.confidence_level, cfg.ci_method);
        if (correct[c].size() < n) {
            s.warning = fmt::format("class has {} evaluation records, fewer than per_class_n={}; draws overlap heavily",
                                    correct[c].size(), n);
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::map<std::string, double> per_class_accuracy(const PredictionTable& predictions, const DatasetManifest& truth) {
    const auto correct = correctness_by_class(predictions, truth);
    std::map<std::string, double> out;
    for (std::size_t c = 0; c < correct.size(); ++c) {
        const auto hits = std::count(correct[c].begin(), correct[c].end(), true);
        out[truth.class_set[c]] = static_cast<double>(hits) / static_cast<double>(correct[c].size());
    }
    return out;
}

// ---- serialization --------------------------------------------------------

namespace detail {

json bootstrap_config_json(const BootstrapConfig& c) {
    return {{"replicates", c.replicates},
            {"per_class_n", c.per_class_n},
            {"confidence_level", c.confidence_level},
            {"seed", c.seed},
            {"ci_method", to_string(c.ci_method)}};
}

BootstrapConfig bootstrap_config_from(const json& j, const BootstrapConfig& defaults) {
    BootstrapConfig c = defaults;
    try {
        c.replicates = j.value("replicates", c.replicates);
        c.per_class_n = j.value("per_class_n", c.per_class_n);
        c.confidence_level = j.value("confidence_level", c.confidence_level);
        c.seed = j.value("seed", c.seed);
        if (j.contains("ci_method")) c.ci_method = ci_method_from_string(j["ci_method"].get<std::string>());
    } catch (const json::exception& e) {
        throw Error(ErrorKind::config, std::string("malformed bootstrap config: ") + e.what());
    }
    return c;
}

json stats_json(const std::vector<ClassAccuracyStats>& stats) {
    json arr = json::array();
    for (const auto& s : stats) {
        json row{{"class", s.class_label}, {"min", s.min},     {"mean", s.mean},
                 {"max", s.max},           {"ci_lo", s.ci_lo}, {"ci_hi", s.ci_hi},
                 {"replicate_accuracies", s.replicate_accuracies}};
        if (s.warning) row["warning"] = *s.warning;
        arr.push_back(std::move(row));
    }
    return arr;
}

std::vector<ClassAccuracyStats> stats_from(const json& j) {
    std::vector<ClassAccuracyStats> out;
    try {
        for (const auto& row : j) {
            ClassAccuracyStats s;
            s.class_label = row.at("class").get<std::string>();
            s.min = row.at("min").get<double>();
            s.mean = row.at("mean").get<double>();
            s.max = row.at("max").get<double>();
            s.ci_lo = row.at("ci_lo").get<double>();
            s.ci_hi = row.at("ci_hi").get<double>();
            s.replicate_accuracies = row.value("replicate_accuracies", std::vector<double>{});
            if (row.contains("warning")) s.warning = row["warning"].get<std::string>();
            out.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::invalid_argument, std::string("malformed stats JSON: ") + e.what());
    }
    return out;
}

}  // namespace detail

std::string stats_to_csv(const std::vector<ClassAccuracyStats>& stats) {
    std::string out = "class,min,mean,max,ci_lo,ci_hi\n";
    for (const auto& s : stats) {
        out += fmt::format("{},{},{},{},{},{}\n", csv_field(s.class_label), s.min, s.mean, s.max, s.ci_lo, s.ci_hi);
    }
    return out;
}

std::string stats_to_json(const std::vector<ClassAccuracyStats>& stats) { return detail::stats_json(stats).dump(2) + "\n"; }

std::vector<ClassAccuracyStats> stats_from_json(const std::string& text) {
    try {
        return detail::stats_from(json::parse(text));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::invalid_argument, std::string("stats file is not valid JSON: ") + e.what());
    }
}

}  // namespace biasforge
