#include "biasforge/toy_data.hpp"

#include "biasforge/error.hpp"
#include "biasforge/fileio.hpp"
#include "biasforge/render.hpp"
#include "biasforge/seeding.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

namespace biasforge {

namespace fs = std::filesystem;

RgbImage degrade(const RgbImage& image, double noise_sigma, std::uint64_t seed) {
    Rng rng(seed);
    cv::Mat gray(image.height, image.width, CV_32F);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            const std::uint8_t* p = image.at(x, y);
            const double lum = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
            // Box-Muller on the in-house generator.
            const double u1 = std::max(rng.uniform01(), 1e-300);
            const double u2 = rng.uniform01();
            const double n = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
            gray.at<float>(y, x) = static_cast<float>(lum + noise_sigma * n);
        }
    }
    cv::Mat blurred;
    cv::GaussianBlur(gray, blurred, cv::Size(5, 5), 0.0, 0.0, cv::BORDER_REFLECT_101);
    RgbImage out(image.width, image.height);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            const auto v = static_cast<std::uint8_t>(std::clamp(std::lround(blurred.at<float>(y, x)), 0L, 255L));
            std::uint8_t* q = out.at(x, y);
            q[0] = q[1] = q[2] = v;
        }
    }
    return out;
}

namespace {

RenderSpec toy_spec(const ToyDatasetSpec& spec, const std::string& label, int count, std::uint64_t salt) {
    RenderSpec r;
    r.spec_id = "toy_" + label;
    r.class_label = label;
    r.count = count;
    r.image_width = spec.image_width;
    r.image_height = spec.image_height;
    const std::uint64_t key = stable_hash(label);
    r.master_seed = static_cast<std::int64_t>(derive_seed(static_cast<std::uint64_t>(spec.seed), {key, salt, 1}) >> 1);
    r.texture_seed = static_cast<std::int64_t>(derive_seed(static_cast<std::uint64_t>(spec.seed), {key, salt, 2}) >> 1);
    validate(r);
    return r;
}

std::size_t write_class(const RenderSpec& r, const fs::path& dir, const std::optional<double>& degrade_sigma) {
    ensure_directory(dir);
    for (int i = 0; i < r.count; ++i) {
        RgbImage img = render_image(r, sample_image_params(r, i));
        if (degrade_sigma) {
            img = degrade(img, *degrade_sigma, derive_seed(static_cast<std::uint64_t>(r.texture_seed), {static_cast<std::uint64_t>(i), 3}));
        }
        write_png(img, dir / image_file_name(i));
    }
    return static_cast<std::size_t>(r.count);
}

}  // namespace

std::size_t write_toy_dataset(const ToyDatasetSpec& spec, const fs::path& root) {
    if (spec.classes.empty() || spec.per_class < 1 || spec.degraded_count < 1) {
        throw Error(ErrorKind::invalid_argument, "toy dataset needs classes and positive counts");
    }
    if (spec.degraded_class &&
        std::find(spec.classes.begin(), spec.classes.end(), *spec.degraded_class) == spec.classes.end()) {
        throw Error(ErrorKind::invalid_argument, "degraded class '" + *spec.degraded_class + "' is not in the class list");
    }
    std::size_t total = 0;
    for (const auto& label : spec.classes) {
        const bool degraded = spec.degraded_class && *spec.degraded_class == label;
        const RenderSpec r = toy_spec(spec, label, degraded ? spec.degraded_count : spec.per_class, 0);
        total += write_class(r, root / label, degraded ? std::optional<double>(spec.noise_sigma) : std::nullopt);
    }
    return total;
}

std::size_t write_toy_eval_set(const ToyDatasetSpec& spec, int per_class, const fs::path& root) {
    if (per_class < 1) throw Error(ErrorKind::invalid_argument, "eval per_class must be >= 1");
    std::size_t total = 0;
    for (const auto& label : spec.classes) {
        total += write_class(toy_spec(spec, label, per_class, 1), root / label, std::nullopt);
    }
    return total;
}

}  // namespace biasforge
