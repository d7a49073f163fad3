// Acceptance harness: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
// Usage: biasforge_acceptance [criterion numbers...]   (default: all)

#include "biasforge/bias_report.hpp"
#include "biasforge/bootstrap.hpp"
#include "biasforge/error.hpp"
#include "biasforge/experiment.hpp"
#include "biasforge/fileio.hpp"
#include "biasforge/hashing.hpp"
#include "biasforge/manifest.hpp"
#include "biasforge/plots.hpp"
#include "biasforge/render.hpp"
#include "biasforge/toy_data.hpp"
#include "biasforge/trainer.hpp"
#include "bootstrap_oracle.hpp"
#include "test_support.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>

using namespace biasforge;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Tolerances and limits.
constexpr double kCiTol = 1e-4;
constexpr double kCenterTol = 5e-5;
constexpr double kReluTol = 1e-12;
constexpr double kMinImprovement = 0.05;
constexpr int kRequiredSeedWins = 2;
constexpr double kC1Limit = 1.0, kC2Limit = 1.0, kC3Limit = 10.0, kC4Limit = 600.0, kC6Limit = 5.0, kC7Limit = 1.0,
                 kC8Limit = 30.0, kC9Limit = 10.0;

struct Outcome {
    bool pass = true;
    std::string detail;
    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            if (!detail.empty()) detail += "; ";
            detail += what;
        }
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json fixture(const std::string& name) {
    return json::parse(read_text_file(fs::path(BIASFORGE_FIXTURES) / name));
}

/// 500 values with sample mean m and sample sd s exactly: 250 at m+d, 250 at m-d.
std::vector<double> two_point(double m, double s) {
    const double d = s * std::sqrt(499.0 / 500.0);
    std::vector<double> v;
    for (int i = 0; i < 250; ++i) {
        v.push_back(m + d);
        v.push_back(m - d);
    }
    return v;
}

// ---- 1 ------------------------------------------------------------------------

Outcome criterion1() {
    Outcome o;
    struct Row {
        const char* name;
        double m, s, lo, hi;
    };
    const Row rows[] = {
        {"bear", 0.5348, 0.035543, 0.5316845879502172, 0.5379154120497824},
        {"sheep", 0.75633, 0.029782, 0.75633 - 0.0026104, 0.75633 + 0.0026104},
    };
    for (const auto& r : rows) {
        const auto ci = confidence_interval(two_point(r.m, r.s), 0.95);
        o.require(std::abs(ci.lo - r.lo) <= kCiTol && std::abs(ci.hi - r.hi) <= kCiTol,
                  fmt::format("{}: got ({:.6f}, {:.6f}) want ({:.6f}, {:.6f})", r.name, ci.lo, ci.hi, r.lo, r.hi));
        o.detail += fmt::format("{}{} ({:.5f}, {:.5f})", o.detail.empty() ? "" : ", ", r.name, ci.lo, ci.hi);
    }
    return o;
}

// ---- 2 ------------------------------------------------------------------------

Outcome criterion2() {
    Outcome o;
    const json t = fixture("reference_tables.json");
    int rows = 0;
    double worst = 0.0;
    for (std::size_t j = 0; j < t["models"].size(); ++j) {
        const std::string model = t["models"][j];
        for (const auto& c : t["classes"]) {
            const auto& row = t["per_model_tables"][model][c.get<std::string>()];
            const double center = (row["ci_lo"].get<double>() + row["ci_hi"].get<double>()) / 2;
            const double mean4 = t["mean_table"][c.get<std::string>()][j].get<double>();
            worst = std::max(worst, std::abs(center - mean4));
            o.require(std::abs(center - mean4) <= kCenterTol,
                      fmt::format("{}/{} center {} vs {}", model, c.get<std::string>(), center, mean4));
            o.require(row["min"].get<double>() <= center && center <= row["max"].get<double>(),
                      fmt::format("{}/{} center outside [min, max]", model, c.get<std::string>()));
            ++rows;
        }
    }
    o.require(rows == 15, fmt::format("{} rows instead of 15", rows));
    o.detail = fmt::format("{} rows, max |center - mean| = {:.2e}", rows, worst) + (o.pass ? "" : "; " + o.detail);
    return o;
}

// ---- 3 ------------------------------------------------------------------------

Outcome criterion3() {
    Outcome o;
    std::mt19937_64 gen(31337);
    int compared = 0;
    for (int trial = 0; trial < 10; ++trial) {
        const int B = 2 + static_cast<int>(gen() % 19);
        const int n = 1 + static_cast<int>(gen() % 12);
        std::vector<int> counts(3);
        int total = 31;
        while (total > 30) {
            for (auto& c : counts) c = 1 + static_cast<int>(gen() % 10);
            total = counts[0] + counts[1] + counts[2];
        }
        const auto m = testing::synthetic_manifest({"a", "b", "c"}, counts);
        std::vector<std::string> predicted, labels;
        std::vector<bool> hit;
        for (const auto& r : m.records) {
            predicted.push_back(m.class_set[gen() % 3]);
            labels.push_back(r.class_label);
            hit.push_back(predicted.back() == r.class_label);
        }
        BootstrapConfig cfg;
        cfg.replicates = B;
        cfg.per_class_n = n;
        cfg.seed = static_cast<std::int64_t>(gen() >> 1);
        const auto got = bootstrap_per_class(testing::table_for(m, predicted), m, cfg);
        const auto want = oracle::bootstrap(labels, hit, m.class_set, B, n, static_cast<std::uint64_t>(cfg.seed),
                                            two_sided_z(0.95));
        for (std::size_t c = 0; c < 3; ++c) {
            o.require(got[c].replicate_accuracies == want[c].replicates,
                      fmt::format("seed {} class {} replicates differ", cfg.seed, want[c].label));
            o.require(got[c].min == want[c].min && got[c].max == want[c].max,
                      fmt::format("seed {} class {} min/max differ", cfg.seed, want[c].label));
        }
        ++compared;
    }
    if (o.pass) o.detail = fmt::format("{} seeds matched list-for-list", compared);
    return o;
}

// ---- 4 and 5 --------------------------------------------------------------------

const std::int64_t kMasterSeeds[] = {1, 2, 3};

struct ToyWorld {
    testing::TempDir tmp{"bf_accept"};
    fs::path data() const { return tmp / "toy"; }
};

ToyWorld& world() {
    static ToyWorld w;
    static bool built = false;
    if (!built) {
        ToyDatasetSpec spec;
        spec.degraded_class = "bear";
        spec.seed = 0;
        write_toy_dataset(spec, w.data() / "real");
        write_toy_eval_set(spec, 200, w.data() / "eval");
        built = true;
    }
    return w;
}

std::string toy_plan(const fs::path& data, const fs::path& out, std::int64_t master_seed) {
    return fmt::format(R"(name: toy_bias
real_data_root: {}
eval_data_root: {}
output_dir: {}
master_seed: {}
train:
  backbone: desk_small_conv
  epochs: 8
  learning_rate: 0.001
  batch_size: 32
  input_size: [32, 32]
  hidden_units: 64
bootstrap:
  replicates: 500
  per_class_n: 200
stages:
  - baseline
  - stage_id: augmented
    recommend:
      strategy: worst_k
      k: 1
      per_class_count: 200
      template:
        image_width: 64
        image_height: 48
)",
                       (data / "real").string(), (data / "eval").string(), out.string(), master_seed);
}

RunSummary run_toy(const fs::path& out, std::int64_t seed) {
    const auto plan = plan_from_yaml(toy_plan(world().data(), out, seed));
    RunOptions opts;
    opts.quiet = true;
    opts.checkpoint_dir = out / ".ckpt";
    opts.log_sink = [](const std::string&) {};
    return run_experiment(plan, opts);
}

double class_mean(const ModelStats& m, const std::string& label) {
    for (const auto& s : m.stats) {
        if (s.class_label == label) return s.mean;
    }
    return std::nan("");
}

Outcome criterion4() {
    Outcome o;
    int wins = 0;
    std::string per_seed;
    for (const auto seed : kMasterSeeds) {
        const auto s = run_toy(world().tmp / fmt::format("run_{}", seed), seed);
        const auto biased = identify_bias(s.stage_stats.at(0).stats, {BiasStrategy::worst_k, 1, 0});
        o.require(biased == std::vector<std::string>{"bear"},
                  fmt::format("seed {}: worst class is {}", seed, biased.empty() ? "-" : biased[0]));
        const double before = class_mean(s.stage_stats.at(0), "bear");
        const double after = class_mean(s.stage_stats.at(1), "bear");
        const double delta = after - before;
        if (delta >= kMinImprovement) ++wins;
        per_seed += fmt::format("{}seed {}: bear {:.4f} -> {:.4f} (delta {:+.4f})", per_seed.empty() ? "" : ", ", seed,
                                before, after, delta);
    }
    o.require(wins >= kRequiredSeedWins, fmt::format("only {} of 3 seeds improved by >= {}", wins, kMinImprovement));
    o.detail = per_seed + (o.pass ? "" : "; " + o.detail);
    return o;
}

std::vector<fs::path> comparable_files(const fs::path& out) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(out)) {
        if (!e.is_regular_file()) continue;
        const auto rel = e.path().lexically_relative(out);
        const auto name = rel.filename().string();
        const bool manifest = name.find("manifest") != std::string::npos;
        const bool stats = name == "stats.csv" || name == "stats.json";
        const bool report = rel.parent_path().empty() && name.rfind("report.", 0) == 0;
        if (manifest || stats || report) files.push_back(rel);
    }
    std::sort(files.begin(), files.end());
    return files;
}

Outcome criterion5() {
    Outcome o;
    const auto seed = kMasterSeeds[0];
    const fs::path a = world().tmp / fmt::format("run_{}", seed);
    if (!fs::exists(a / "report.json")) run_toy(a, seed);
    const fs::path b = world().tmp / "rerun";
    run_toy(b, seed);
    const auto files = comparable_files(a);
    o.require(files == comparable_files(b), "runs produced different file sets");
    int identical = 0;
    for (const auto& f : files) {
        if (testing::read_bytes(a / f) == testing::read_bytes(b / f)) {
            ++identical;
        } else {
            o.require(false, f.string() + " differs");
        }
    }
    o.require(files.size() >= 15, fmt::format("only {} comparable files", files.size()));
    if (o.pass) o.detail = fmt::format("{} manifest/stats/report files byte-identical", identical);
    return o;
}

// ---- 6 ------------------------------------------------------------------------

Outcome criterion6() {
    Outcome o;
    const auto big = testing::synthetic_manifest({"a", "b", "c", "d", "e"}, {2000, 2000, 2000, 2000, 2000});
    const auto s = stratified_split(big, {4, 1}, 42);
    o.require(s.train.size() == 8000 && s.val.size() == 2000,
              fmt::format("sizes {}/{}", s.train.size(), s.val.size()));
    std::map<std::string, int> per_class;
    for (const auto& r : s.val.records) ++per_class[r.class_label];
    for (const auto& [c, n] : per_class) o.require(n == 400, fmt::format("class {} has {} val records", c, n));

    std::mt19937_64 gen(7);
    for (int t = 0; t < 100; ++t) {
        const int k = 1 + static_cast<int>(gen() % 6);
        std::vector<std::string> classes;
        std::vector<int> counts;
        for (int c = 0; c < k; ++c) {
            classes.push_back(fmt::format("c{}", c));
            counts.push_back(2 + static_cast<int>(gen() % 60));
        }
        const auto m = testing::synthetic_manifest(classes, counts);
        const SplitRatio ratio{1 + static_cast<int>(gen() % 5), 1 + static_cast<int>(gen() % 3)};
        const auto seed = gen();
        SplitResult r1, r2;
        try {
            r1 = stratified_split(m, ratio, seed);
            r2 = stratified_split(m, ratio, seed);
        } catch (const Error&) {
            continue;  // a class too small for this ratio
        }
        std::multiset<std::string> all, parts;
        for (const auto& r : m.records) all.insert(r.path.string());
        for (const auto& r : r1.train.records) parts.insert(r.path.string());
        for (const auto& r : r1.val.records) parts.insert(r.path.string());
        o.require(all == parts, fmt::format("trial {}: not a partition", t));
        o.require(manifest_to_json(r1.train) == manifest_to_json(r2.train) &&
                      manifest_to_json(r1.val) == manifest_to_json(r2.val),
                  fmt::format("trial {}: not deterministic", t));
    }
    if (o.pass) o.detail = "8000/2000, 400 val per class; partition and determinism over 100 manifests";
    return o;
}

// ---- 7 ------------------------------------------------------------------------

Outcome criterion7() {
    Outcome o;
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> xs(-1e3, 1e3), slopes(1e-6, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double x = xs(gen), a = slopes(gen);
        const double want = x >= 0 ? x : a * x;
        const double err = std::abs(leaky_relu(x, a) - want);
        worst = std::max(worst, err);
        o.require(err <= kReluTol, fmt::format("f({}, {}) off by {}", x, a, err));
        const double h = 1e-13;
        o.require(std::abs(leaky_relu(h, a) - leaky_relu(-h, a)) <= kReluTol, "discontinuous at 0");
    }
    o.require(leaky_relu(0.0, 0.3) == 0.0, "f(0) != 0");
    if (o.pass) o.detail = fmt::format("1000 pairs, max error {:.1e}", worst);
    return o;
}

// ---- 8 ------------------------------------------------------------------------

std::string pixel_hash(const fs::path& png) {
    const auto d = decode_image(png);
    if (!d.image) return "undecodable";
    return sha256_hex(std::span<const std::byte>(reinterpret_cast<const std::byte*>(d.image->pixels.data()),
                                                 d.image->pixels.size()));
}

Outcome criterion8() {
    Outcome o;
    const json g = fixture("render_golden.json");
    const RenderSpec spec = render_spec_from_json(g["spec"].dump());
    testing::TempDir tmp("bf_render");
    const auto batch = render_batch(spec, tmp.path(), {"1970-01-01T00:00:00Z"});
    const auto first = tmp.path() / spec.spec_id / spec.class_label / image_file_name(0);
    o.require(pixel_hash(first) == g["image0_pixel_sha256"].get<std::string>(), "image 0 pixel hash changed");
    o.require(sha256_hex(params_to_json(batch.per_image_params)) == g["params_sha256"].get<std::string>(),
              "parameter hash changed");
    o.require(batch.manifest.size() == static_cast<std::size_t>(spec.count), "count mismatch");

    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> angle(-720, 720), light(0, 1);
    int sampled = 0;
    for (int t = 0; t < 200; ++t) {
        RenderSpec s = spec;
        const double p0 = angle(gen), p1 = angle(gen), l0 = light(gen), l1 = light(gen);
        s.pose_range = {std::min(p0, p1), std::max(p0, p1)};
        s.lighting_range = {std::min(l0, l1), std::max(l0, l1)};
        s.master_seed = static_cast<std::int64_t>(gen() >> 1);
        for (int i = 0; i < 5; ++i) {
            const auto p = sample_image_params(s, static_cast<int>(gen() % 100000));
            const bool inside = p.pose_angle && p.lighting_intensity && *p.pose_angle >= s.pose_range.lo &&
                                *p.pose_angle <= s.pose_range.hi && *p.lighting_intensity >= s.lighting_range.lo &&
                                *p.lighting_intensity <= s.lighting_range.hi;
            o.require(inside, fmt::format("spec {} sample outside declared ranges", t));
            ++sampled;
        }
    }
    for (int count : {0, 1, 7}) {
        RenderSpec s = spec;
        s.spec_id = fmt::format("count_{}", count);
        s.count = count;
        s.image_width = 32;
        s.image_height = 24;
        const auto b = render_batch(s, tmp.path());
        std::size_t files = 0;
        if (fs::exists(tmp.path() / s.spec_id / s.class_label)) {
            for (const auto& e : fs::directory_iterator(tmp.path() / s.spec_id / s.class_label)) {
                files += e.path().extension() == ".png";
            }
        }
        o.require(b.manifest.size() == static_cast<std::size_t>(count) && files == static_cast<std::size_t>(count),
                  fmt::format("count {} produced {} records, {} files", count, b.manifest.size(), files));
    }
    if (o.pass) o.detail = fmt::format("pinned hashes match, {} samples in range, counts exact", sampled);
    return o;
}

// ---- 9 ------------------------------------------------------------------------

Outcome criterion9() {
    Outcome o;
    const json t = fixture("reference_tables.json");
    std::vector<ModelStats> sets;
    for (std::size_t j = 0; j < t["models"].size(); ++j) {
        ModelStats m{t["models"][j].get<std::string>(), {}};
        for (const auto& [label, row] : t["mean_table"].items()) {
            ClassAccuracyStats s;
            s.class_label = label;
            s.mean = row[j].get<double>();
            m.stats.push_back(s);
        }
        sets.push_back(m);
    }
    const auto report = compare_models(sets);
    testing::TempDir tmp("bf_plots");
    const auto chart_file = emit_comparison_chart(report, tmp.path());
    const auto chart = decode_image(chart_file);
    o.require(chart.image.has_value(), "comparison chart does not decode");
    const auto layout = layout_comparison_chart(report);
    o.require(layout.groups.size() == 5 && layout.models.size() == 3 && layout.bars.size() == 15,
              fmt::format("{} groups x {} models, {} bars", layout.groups.size(), layout.models.size(), layout.bars.size()));
    int coloured = 0;
    if (chart.image) {
        for (const auto& b : layout.bars) {
            const auto* p = chart.image->at((b.x0 + b.x1) / 2, (b.y0 + b.y1) / 2);
            coloured += p[0] == b.color[0] && p[1] == b.color[1] && p[2] == b.color[2];
        }
    }
    o.require(coloured == 15, fmt::format("{} of 15 bars found in the image", coloured));

    TrainingHistory h;
    for (int e = 0; e < 100; ++e) {
        h.train_accuracy.push_back(0.2 + 0.007 * e);
        h.val_accuracy.push_back(0.2 + 0.005 * e);
        h.train_loss.push_back(1.6 - 0.012 * e);
        h.val_loss.push_back(1.7 - 0.009 * e);
    }
    const auto files = emit_history_plots(h, tmp.path());
    o.require(files.size() == 2, "expected accuracy and loss plots");
    for (const auto& f : files) o.require(decode_image(f).image.has_value(), f.filename().string() + " does not decode");
    const auto acc = layout_line_plot("Model Accuracy", "accuracy",
                                      {{"train", palette_color(0), h.train_accuracy, {}},
                                       {"val", palette_color(1), h.val_accuracy, {}}});
    o.require(acc.series.size() == 2 && acc.series[0].points.size() == 100 && acc.series[1].points.size() == 100,
              "history layout lacks 2 series of 100 points");
    if (o.pass) o.detail = "chart 5 classes x 3 models = 15 bars located; 2 history plots with 2 series each";
    return o;
}

struct Criterion {
    int id;
    const char* title;
    double limit_s;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "CI reconstruction vs reference rows", kC1Limit, criterion1},
        {2, "reference tables consistency", kC2Limit, criterion2},
        {3, "bootstrap oracle equivalence", kC3Limit, criterion3},
        {4, "end-to-end bias adjustment on toy data", kC4Limit, criterion4},
        {5, "determinism of repeated plan runs", kC4Limit, criterion5},
        {6, "split exactness", kC6Limit, criterion6},
        {7, "leaky relu", kC7Limit, criterion7},
        {8, "render determinism and containment", kC8Limit, criterion8},
        {9, "plot smoke tests", kC9Limit, criterion9},
    };
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

    int failures = 0;
    for (const auto& c : all) {
        if (!wanted.empty() && !wanted.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const double secs = seconds_since(t0);
        if (secs > c.limit_s) {
            o.pass = false;
            o.detail += fmt::format("; runtime over the {:.0f} s limit", c.limit_s);
        }
        failures += o.pass ? 0 : 1;
        std::cout << fmt::format("criterion {}: {} [{}] {} ({:.2f} s, limit {:.0f} s)\n", c.id, o.pass ? "PASS" : "FAIL",
                                 c.title, o.detail, secs, c.limit_s)
                  << std::flush;
    }
    return failures == 0 ? 0 : 1;
}
