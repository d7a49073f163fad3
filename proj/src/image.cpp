#include "biasforge/image.hpp"

#include "biasforge/error.hpp"

#include <opencv2/core.hpp>
#include <opencv2/core/utils/logger.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cctype>
#include <cstring>
#include <mutex>

namespace biasforge {

namespace {

void quiet_opencv() {
    static std::once_flag once;
    std::call_once(once, [] { cv::utils::logging::setLogLevel(cv::utils::logging::LOG_LEVEL_SILENT); });
}

RgbImage from_bgr(const cv::Mat& bgr) {
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    RgbImage out(rgb.cols, rgb.rows);
    for (int y = 0; y < rgb.rows; ++y) {
        std::memcpy(out.at(0, y), rgb.ptr<std::uint8_t>(y), static_cast<std::size_t>(rgb.cols) * 3);
    }
    return out;
}

}  // namespace

bool has_image_extension(const std::filesystem::path& file) {
    std::string ext = file.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

DecodeOutcome decode_image(const std::filesystem::path& file) {
    quiet_opencv();
    DecodeOutcome out;
    std::error_code ec;
    if (!std::filesystem::is_regular_file(file, ec)) {
        out.error = "not a readable file";
        return out;
    }
    cv::Mat m;
    try {
        m = cv::imread(file.string(), cv::IMREAD_COLOR);
    } catch (const cv::Exception& e) {
        out.error = e.what();
        return out;
    }
    if (m.empty()) {
        out.error = "decode failed (corrupt or truncated image)";
        return out;
    }
    out.image = from_bgr(m);
    return out;
}

void write_png(const RgbImage& image, const std::filesystem::path& file) {
    quiet_opencv();
    cv::Mat rgb(image.height, image.width, CV_8UC3, const_cast<std::uint8_t*>(image.pixels.data()));
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    const std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 6};
    if (file.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(file.parent_path(), ec);
    }
    bool ok = false;
    try {
        ok = cv::imwrite(file.string(), bgr, params);
    } catch (const cv::Exception&) {
        ok = false;
    }
    if (!ok) {
        throw Error(ErrorKind::io, "cannot write " + file.string());
    }
}

std::vector<float> letterbox(const RgbImage& image, int width, int height) {
    cv::Mat rgb(image.height, image.width, CV_8UC3, const_cast<std::uint8_t*>(image.pixels.data()));
    const double scale = std::min(static_cast<double>(width) / image.width, static_cast<double>(height) / image.height);
    const int w = std::clamp(static_cast<int>(image.width * scale + 0.5), 1, width);
    const int h = std::clamp(static_cast<int>(image.height * scale + 0.5), 1, height);
    cv::Mat resized;
    cv::resize(rgb, resized, cv::Size(w, h), 0, 0, scale < 1.0 ? cv::INTER_AREA : cv::INTER_LINEAR);
    const int x0 = (width - w) / 2;
    const int y0 = (height - h) / 2;

    const std::size_t plane = static_cast<std::size_t>(width) * height;
    std::vector<float> out(plane * 3, 0.0f);
    for (int y = 0; y < h; ++y) {
        const auto* row = resized.ptr<std::uint8_t>(y);
        for (int x = 0; x < w; ++x) {
            const std::size_t idx = static_cast<std::size_t>(y + y0) * width + (x + x0);
            for (int c = 0; c < 3; ++c) {
                out[c * plane + idx] = row[x * 3 + c] / 255.0f;
            }
        }
    }
    return out;
}

std::optional<std::vector<float>> load_letterboxed(const std::filesystem::path& file, int width, int height) {
    auto decoded = decode_image(file);
    if (!decoded.image) {
        return std::nullopt;
    }
    return letterbox(*decoded.image, width, height);
}

}  // namespace biasforge
