#include "biasforge/bias_report.hpp"

#include "biasforge/error.hpp"
#include "biasforge/fileio.hpp"
#include "biasforge/seeding.hpp"
#include "detail/json_codec.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <set>

namespace biasforge {

using detail::json;

namespace {

std::vector<std::string> sorted_labels(const std::vector<ClassAccuracyStats>& stats) {
    std::vector<std::string> out;
    for (const auto& s : stats) out.push_back(s.class_label);
    std::sort(out.begin(), out.end());
    return out;
}

/// Indices of `stats` ordered by (mean, label).
std::vector<std::size_t> rank_by_mean(const std::vector<ClassAccuracyStats>& stats) {
    std::vector<std::size_t> idx(stats.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (stats[a].mean != stats[b].mean) return stats[a].mean < stats[b].mean;
        return stats[a].class_label < stats[b].class_label;
    });
    return idx;
}

}  // namespace

ComparisonReport compare_models(const std::vector<ModelStats>& stats_sets, double regression_epsilon) {
    if (stats_sets.empty()) {
        throw Error(ErrorKind::invalid_argument, "compare_models needs at least one model");
    }
    if (!(regression_epsilon >= 0.0)) {
        throw Error(ErrorKind::invalid_argument, "regression epsilon must be non-negative");
    }
    const std::vector<std::string> classes = sorted_labels(stats_sets.front().stats);
    if (std::adjacent_find(classes.begin(), classes.end()) != classes.end()) {
        throw Error(ErrorKind::invalid_argument, "duplicate class in stats of " + stats_sets.front().model_id);
    }
    std::set<std::string> ids;
    for (const auto& m : stats_sets) {
        if (!ids.insert(m.model_id).second) {
            throw Error(ErrorKind::invalid_argument, "duplicate model id '" + m.model_id + "'");
        }
        if (sorted_labels(m.stats) != classes) {
            throw Error(ErrorKind::class_set_mismatch,
                        "model '" + m.model_id + "' covers a different class set than '" + stats_sets.front().model_id + "'");
        }
    }

    ComparisonReport r;
    r.class_set = classes;
    r.regression_epsilon = regression_epsilon;
    for (const auto& m : stats_sets) {
        r.models.push_back(m.model_id);
        for (const auto& s : m.stats) r.per_class[s.class_label].push_back(s.mean);
        const auto ranked = rank_by_mean(m.stats);
        r.worst_class_per_model[m.model_id] = m.stats[ranked.front()].class_label;
    }
    std::set<std::string> regressed;
    for (const auto& c : classes) {
        const auto& means = r.per_class[c];
        auto& d = r.deltas[c];
        for (double v : means) d.push_back(v - means.front());
    }
    for (std::size_t j = 1; j < r.models.size(); ++j) {
        auto& list = r.regressed_per_model[r.models[j]];
        for (const auto& c : classes) {
            if (r.deltas[c][j] < -regression_epsilon) {
                list.push_back(c);
                regressed.insert(c);
            }
        }
    }
    r.regressed_classes.assign(regressed.begin(), regressed.end());
    return r;
}

std::vector<std::string> identify_bias(const std::vector<ClassAccuracyStats>& stats, const BiasPolicy& policy) {
    if (stats.empty()) {
        throw Error(ErrorKind::invalid_argument, "identify_bias needs at least one class");
    }
    const auto ranked = rank_by_mean(stats);
    std::vector<std::string> out;
    if (policy.strategy == BiasStrategy::worst_k) {
        if (policy.k < 1) throw Error(ErrorKind::invalid_argument, "k must be >= 1");
        if (static_cast<std::size_t>(policy.k) > stats.size()) {
            throw Error(ErrorKind::k_too_large, fmt::format("k={} exceeds the {} available classes", policy.k, stats.size()));
        }
        for (int i = 0; i < policy.k; ++i) out.push_back(stats[ranked[static_cast<std::size_t>(i)]].class_label);
    } else {
        for (std::size_t i : ranked) {
            if (stats[i].mean < policy.threshold) out.push_back(stats[i].class_label);
        }
    }
    return out;
}

AugmentationRecommendation recommend_augmentation(const std::vector<std::string>& biased, int per_class_count,
                                                  const RenderSpec& render_template) {
    if (biased.empty()) throw Error(ErrorKind::invalid_argument, "no biased classes to augment");
    if (per_class_count < 1) throw Error(ErrorKind::invalid_argument, "per_class_count must be >= 1");
    AugmentationRecommendation rec;
    rec.target_classes = biased;
    rec.per_class_count = per_class_count;
    const std::string prefix = render_template.spec_id.empty() ? std::string("aug") : render_template.spec_id;
    for (const auto& label : biased) {
        RenderSpec s = render_template;
        s.class_label = label;
        s.count = per_class_count;
        s.spec_id = prefix + "_" + label;
        const std::uint64_t key = stable_hash(label);
        s.master_seed = static_cast<std::int64_t>(
            derive_seed(static_cast<std::uint64_t>(render_template.master_seed), {key, 1}) >> 1);
        s.texture_seed = static_cast<std::int64_t>(
            derive_seed(static_cast<std::uint64_t>(render_template.texture_seed), {key, 2}) >> 1);
        rec.draft_specs.push_back(std::move(s));
    }
    return rec;
}

// ---- serialization --------------------------------------------------------

std::string report_to_json(const ComparisonReport& r) {
    json j{{"models", r.models},
           {"class_set", r.class_set},
           {"per_class", r.per_class},
           {"deltas", r.deltas},
           {"worst_class_per_model", r.worst_class_per_model},
           {"regressed_per_model", r.regressed_per_model},
           {"regressed_classes", r.regressed_classes},
           {"regression_epsilon", r.regression_epsilon},
           {"notes", r.notes}};
    return j.dump(2) + "\n";
}

ComparisonReport report_from_json(const std::string& text) {
    ComparisonReport r;
    try {
        const json j = json::parse(text);
        r.models = j.at("models").get<std::vector<std::string>>();
        r.class_set = j.at("class_set").get<std::vector<std::string>>();
        r.per_class = j.at("per_class").get<std::map<std::string, std::vector<double>>>();
        r.deltas = j.at("deltas").get<std::map<std::string, std::vector<double>>>();
        r.worst_class_per_model = j.at("worst_class_per_model").get<std::map<std::string, std::string>>();
        r.regressed_per_model = j.value("regressed_per_model", std::map<std::string, std::vector<std::string>>{});
        r.regressed_classes = j.value("regressed_classes", std::vector<std::string>{});
        r.regression_epsilon = j.value("regression_epsilon", 0.01);
        r.notes = j.value("notes", std::vector<std::string>{});
    } catch (const json::exception& e) {
        throw Error(ErrorKind::invalid_argument, std::string("malformed comparison report: ") + e.what());
    }
    for (const auto& c : r.class_set) {
        if (!r.per_class.contains(c) || r.per_class.at(c).size() != r.models.size()) {
            throw Error(ErrorKind::invalid_argument, "report row for '" + c + "' does not match the model list");
        }
    }
    return r;
}

std::string report_to_csv(const ComparisonReport& r) {
    std::string out = "class";
    for (const auto& m : r.models) out += "," + csv_field(m);
    out += "\n";
    for (const auto& c : r.class_set) {
        out += csv_field(c);
        for (double v : r.per_class.at(c)) out += fmt::format(",{}", v);
        out += "\n";
    }
    return out;
}

std::string format_report_table(const ComparisonReport& r) {
    std::size_t label_width = 5;
    for (const auto& c : r.class_set) label_width = std::max(label_width, c.size());
    std::size_t col = 10;
    for (const auto& m : r.models) col = std::max(col, m.size() + 2);

    std::string out = fmt::format("{:<{}}", "class", label_width);
    for (const auto& m : r.models) out += fmt::format("{:>{}}", m, col);
    out += "\n";
    for (const auto& c : r.class_set) {
        out += fmt::format("{:<{}}", c, label_width);
        const auto& means = r.per_class.at(c);
        const auto& d = r.deltas.at(c);
        for (std::size_t j = 0; j < means.size(); ++j) {
            out += j == 0 ? fmt::format("{:>{}.5f}", means[j], col)
                          : fmt::format("{:>{}}", fmt::format("{:.5f} ({:+.3f})", means[j], d[j]), col + 10);
        }
        out += "\n";
    }
    for (const auto& m : r.models) {
        out += fmt::format("worst class for {}: {}\n", m, r.worst_class_per_model.at(m));
    }
    if (!r.regressed_classes.empty()) {
        out += fmt::format("regressed (> {} below baseline): {}\n", r.regression_epsilon, fmt::join(r.regressed_classes, ", "));
    }
    for (const auto& n : r.notes) out += "note: " + n + "\n";
    return out;
}

std::string recommendation_to_json(const AugmentationRecommendation& rec) {
    json specs = json::array();
    for (const auto& s : rec.draft_specs) specs.push_back(detail::render_spec_json(s));
    json j{{"target_classes", rec.target_classes}, {"per_class_count", rec.per_class_count}, {"draft_specs", specs}};
    return j.dump(2) + "\n";
}

AugmentationRecommendation recommendation_from_json(const std::string& text) {
    AugmentationRecommendation rec;
    try {
        const json j = json::parse(text);
        rec.target_classes = j.at("target_classes").get<std::vector<std::string>>();
        rec.per_class_count = j.at("per_class_count").get<int>();
        for (const auto& s : j.at("draft_specs")) rec.draft_specs.push_back(detail::render_spec_from(s));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::invalid_argument, std::string("malformed recommendation: ") + e.what());
    }
    return rec;
}

}  // namespace biasforge
