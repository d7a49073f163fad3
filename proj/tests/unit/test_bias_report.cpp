#include "biasforge/bias_report.hpp"
#include "biasforge/error.hpp"
#include "biasforge/fileio.hpp"
#include "test_support.hpp"

#include <doctest.h>
#include <json.hpp>

#include <random>
#include <set>

using namespace biasforge;

namespace {

nlohmann::json tables() {
    return nlohmann::json::parse(
        read_text_file(std::filesystem::path(BIASFORGE_FIXTURES) / "reference_tables.json"));
}

std::vector<ClassAccuracyStats> stats_from_means(const std::map<std::string, double>& means) {
    std::vector<ClassAccuracyStats> out;
    for (const auto& [label, m] : means) {
        ClassAccuracyStats s;
        s.class_label = label;
        s.min = s.max = s.ci_lo = s.ci_hi = s.mean = m;
        out.push_back(s);
    }
    return out;
}

/// Stats sets for the first `models` columns of the Table 4 means.
std::vector<ModelStats> table4(std::size_t models = 3) {
    const auto t = tables();
    std::vector<ModelStats> out;
    for (std::size_t j = 0; j < models; ++j) {
        std::map<std::string, double> means;
        for (const auto& [label, row] : t["mean_table"].items()) means[label] = row[j].get<double>();
        out.push_back({t["models"][j].get<std::string>(), stats_from_means(means)});
    }
    return out;
}

ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected biasforge::Error");
    return ErrorKind::internal;
}

}  // namespace

TEST_SUITE("bias_report") {
    TEST_CASE("baseline vs first augmented model") {
        const auto r = compare_models(table4(2));
        CHECK(r.models == std::vector<std::string>{"f_R", "f_(S+R)1"});
        CHECK(r.per_class.at("bear")[0] == 0.5348);
        CHECK(r.per_class.at("bear")[1] == 0.6484);
        CHECK(r.deltas.at("bear")[1] == doctest::Approx(0.1136).epsilon(1e-9));
        CHECK(r.worst_class_per_model.at("f_R") == "bear");
    }

    TEST_CASE("single model report") {
        const auto r = compare_models(table4(1));
        for (const auto& [c, d] : r.deltas) CHECK(d == std::vector<double>{0.0});
        CHECK(r.per_class.at("sheep") == std::vector<double>{0.68271});
        CHECK(r.regressed_classes.empty());
    }

    TEST_CASE("full fixture flags regressions") {
        const auto r = compare_models(table4());
        CHECK(r.per_class.at("horse") == std::vector<double>{0.70566, 0.66408, 0.65252});
        CHECK(r.regressed_classes == std::vector<std::string>{"dog", "horse"});
        CHECK(r.regressed_per_model.at("f_(S+R)1") == std::vector<std::string>{"dog", "horse"});
        CHECK(r.regressed_per_model.at("f_(S+R)2") == std::vector<std::string>{"horse"});
        for (const auto& c : r.class_set) {
            CHECK(r.deltas.at(c)[0] == 0.0);
            CHECK(r.per_class.at(c).size() == 3);
            for (std::size_t j = 0; j < 3; ++j) {
                CHECK(std::abs(r.per_class.at(c)[j] - r.per_class.at(c)[0] - r.deltas.at(c)[j]) <= 1e-12);
            }
        }
        CHECK(r.worst_class_per_model.at("f_(S+R)2") == "bear");
        CHECK(report_from_json(report_to_json(r)) == r);
        const auto csv = report_to_csv(r);
        CHECK(csv.rfind("class,f_R,f_(S+R)1,f_(S+R)2\n", 0) == 0);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
        CHECK(format_report_table(r).find("horse") != std::string::npos);
    }

    TEST_CASE("compare errors") {
        auto sets = table4(2);
        sets[1].stats.pop_back();
        CHECK(kind_of([&] { compare_models(sets); }) == ErrorKind::class_set_mismatch);
        CHECK(kind_of([] { compare_models({}); }) == ErrorKind::invalid_argument);
        auto dup = table4(2);
        dup[1].model_id = dup[0].model_id;
        CHECK(kind_of([&] { compare_models(dup); }) == ErrorKind::invalid_argument);
    }

    TEST_CASE("identify bias on the baseline stats") {
        const auto base = table4(1)[0].stats;
        CHECK(identify_bias(base, {BiasStrategy::worst_k, 1, 0}) == std::vector<std::string>{"bear"});
        CHECK(identify_bias(base, {BiasStrategy::below_threshold, 0, 0.70}) ==
              std::vector<std::string>{"bear", "sheep"});
        CHECK(identify_bias(base, {BiasStrategy::worst_k, 5, 0}).size() == 5);
        CHECK(kind_of([&] { identify_bias(base, {BiasStrategy::worst_k, 6, 0}); }) == ErrorKind::k_too_large);
        CHECK(kind_of([] { identify_bias({}, {}); }) == ErrorKind::invalid_argument);
    }

    TEST_CASE("ties resolve lexicographically") {
        const auto flat = stats_from_means({{"zebra", 0.5}, {"ant", 0.5}, {"moth", 0.5}});
        CHECK(identify_bias(flat, {BiasStrategy::worst_k, 2, 0}) == std::vector<std::string>{"ant", "moth"});
        const auto r = compare_models({{"m", flat}});
        CHECK(r.worst_class_per_model.at("m") == "ant");
    }

    TEST_CASE("identify bias depends only on order") {
        std::mt19937_64 gen(11);
        std::uniform_real_distribution<double> u(0, 1), shift(-5, 5);
        for (int t = 0; t < 100; ++t) {
            std::map<std::string, double> means;
            for (const char* c : {"a", "b", "c", "d", "e"}) means[c] = std::round(u(gen) * 20) / 20;
            const double k = std::round(shift(gen) * 4) / 4;
            auto shifted = means;
            for (auto& [c, m] : shifted) m += k;
            const BiasPolicy p{BiasStrategy::worst_k, 3, 0};
            CHECK(identify_bias(stats_from_means(means), p) == identify_bias(stats_from_means(shifted), p));
        }
    }

    TEST_CASE("augmentation recommendations") {
        RenderSpec tmpl;
        tmpl.spec_id = "aug";
        tmpl.master_seed = 5;
        const auto one = recommend_augmentation({"bear"}, 200, tmpl);
        REQUIRE(one.draft_specs.size() == 1);
        CHECK(one.draft_specs[0].count == 200);
        CHECK(one.draft_specs[0].class_label == "bear");
        CHECK(one.draft_specs[0].image_width == tmpl.image_width);

        const auto two = recommend_augmentation({"bear", "sheep"}, 200, tmpl);
        REQUIRE(two.draft_specs.size() == 2);
        CHECK(two.target_classes == std::vector<std::string>{"bear", "sheep"});
        CHECK(two.draft_specs[0].master_seed != two.draft_specs[1].master_seed);
        CHECK(two.draft_specs[0].spec_id != two.draft_specs[1].spec_id);
        CHECK(two.draft_specs[0].master_seed == one.draft_specs[0].master_seed);

        const auto minimal = recommend_augmentation({"x"}, 1, tmpl);
        CHECK(minimal.draft_specs.at(0).count == 1);

        CHECK(kind_of([&] { recommend_augmentation({}, 200, tmpl); }) == ErrorKind::invalid_argument);
        CHECK(kind_of([&] { recommend_augmentation({"bear"}, 0, tmpl); }) == ErrorKind::invalid_argument);

        const auto back = recommendation_from_json(recommendation_to_json(two));
        CHECK(back.target_classes == two.target_classes);
        CHECK(back.per_class_count == 200);
        CHECK(back.draft_specs == two.draft_specs);
    }
}
