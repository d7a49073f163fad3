#include "biasforge/plots.hpp"

#include "biasforge/error.hpp"
#include "biasforge/fileio.hpp"

#include <fmt/format.h>
#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace biasforge {

namespace fs = std::filesystem;

Color palette_color(std::size_t index) {
    static constexpr std::array<Color, 10> kTab10{{{31, 119, 180}, {255, 127, 14}, {44, 160, 44}, {214, 39, 40},
                                                   {148, 103, 189}, {140, 86, 75}, {227, 119, 194}, {127, 127, 127},
                                                   {188, 189, 34}, {23, 190, 207}}};
    return kTab10[index % kTab10.size()];
}

namespace {

constexpr int kMarginLeft = 70;
constexpr int kMarginRight = 20;
constexpr int kMarginTop = 40;
constexpr int kMarginBottom = 60;
const cv::Scalar kBlack(0, 0, 0);
const cv::Scalar kGrid(225, 225, 225);
constexpr int kFont = cv::FONT_HERSHEY_SIMPLEX;

cv::Scalar rgb(const Color& c) { return {static_cast<double>(c[0]), static_cast<double>(c[1]), static_cast<double>(c[2])}; }

/// Drawing happens in an RGB-ordered Mat; the conversion to RgbImage is a copy.
RgbImage to_image(const cv::Mat& m) {
    RgbImage out(m.cols, m.rows);
    for (int y = 0; y < m.rows; ++y) {
        std::memcpy(out.at(0, y), m.ptr<std::uint8_t>(y), static_cast<std::size_t>(m.cols) * 3);
    }
    return out;
}

void centered_text(cv::Mat& m, const std::string& text, int cx, int baseline_y, double scale) {
    int base = 0;
    const cv::Size size = cv::getTextSize(text, kFont, scale, 1, &base);
    cv::putText(m, text, {cx - size.width / 2, baseline_y}, kFont, scale, kBlack, 1, cv::LINE_8);
}

double nice_step(double span) {
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
        if (raw <= m * mag) return m * mag;
    }
    return 10.0 * mag;
}

}  // namespace

LinePlotLayout layout_line_plot(const std::string& title, const std::string& y_label,
                                const std::vector<PlotSeries>& series, int width, int height) {
    LinePlotLayout L;
    L.title = title;
    L.y_label = y_label;
    L.width = width;
    L.height = height;
    L.plot_x0 = kMarginLeft;
    L.plot_x1 = width - kMarginRight;
    L.plot_y0 = kMarginTop;
    L.plot_y1 = height - kMarginBottom;
    L.series = series;

    std::size_t n = 0;
    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (const auto& s : series) {
        n = std::max(n, s.values.size());
        for (double v : s.values) {
            lo = first ? v : std::min(lo, v);
            hi = first ? v : std::max(hi, v);
            first = false;
        }
    }
    if (n == 0) {
        throw Error(ErrorKind::invalid_argument, "cannot plot an empty history");
    }
    lo = std::min(lo, 0.0);
    if (hi - lo < 1e-9) hi = lo + 1.0;
    L.y_min = lo;
    L.y_max = hi + 0.05 * (hi - lo);
    L.x_min = 1.0;
    L.x_max = static_cast<double>(n);

    const double xspan = L.x_max - L.x_min;
    for (auto& s : L.series) {
        s.points.clear();
        for (std::size_t i = 0; i < s.values.size(); ++i) {
            const double fx = xspan > 0 ? (static_cast<double>(i + 1) - L.x_min) / xspan : 0.5;
            const double fy = (s.values[i] - L.y_min) / (L.y_max - L.y_min);
            s.points.push_back({L.plot_x0 + static_cast<int>(std::lround(fx * (L.plot_x1 - L.plot_x0))),
                                L.plot_y1 - static_cast<int>(std::lround(fy * (L.plot_y1 - L.plot_y0)))});
        }
    }
    return L;
}

RgbImage draw_line_plot(const LinePlotLayout& L) {
    cv::Mat m(L.height, L.width, CV_8UC3, cv::Scalar(255, 255, 255));

    const double ystep = nice_step(L.y_max - L.y_min);
    for (double v = std::ceil(L.y_min / ystep) * ystep; v <= L.y_max + 1e-12; v += ystep) {
        const int y = L.plot_y1 - static_cast<int>(std::lround((v - L.y_min) / (L.y_max - L.y_min) * (L.plot_y1 - L.plot_y0)));
        cv::line(m, {L.plot_x0, y}, {L.plot_x1, y}, kGrid, 1, cv::LINE_8);
        cv::putText(m, fmt::format("{:.2f}", v), {8, y + 4}, kFont, 0.4, kBlack, 1, cv::LINE_8);
    }
    const double xspan = L.x_max - L.x_min;
    const double xstep = xspan > 0 ? std::max(1.0, std::round(nice_step(xspan))) : 1.0;
    for (double e = L.x_min; e <= L.x_max + 1e-9; e += xstep) {
        const double fx = xspan > 0 ? (e - L.x_min) / xspan : 0.5;
        const int x = L.plot_x0 + static_cast<int>(std::lround(fx * (L.plot_x1 - L.plot_x0)));
        cv::line(m, {x, L.plot_y1}, {x, L.plot_y1 + 4}, kBlack, 1, cv::LINE_8);
        centered_text(m, fmt::format("{}", static_cast<long>(e)), x, L.plot_y1 + 18, 0.4);
    }
    cv::rectangle(m, {L.plot_x0, L.plot_y0}, {L.plot_x1, L.plot_y1}, kBlack, 1, cv::LINE_8);
    centered_text(m, L.title, L.width / 2, 25, 0.6);
    centered_text(m, "epoch", (L.plot_x0 + L.plot_x1) / 2, L.height - 25, 0.45);
    cv::putText(m, L.y_label, {8, L.plot_y0 - 8}, kFont, 0.45, kBlack, 1, cv::LINE_8);

    int legend_y = L.plot_y0 + 18;
    for (const auto& s : L.series) {
        const cv::Scalar c = rgb(s.color);
        for (std::size_t i = 1; i < s.points.size(); ++i) {
            cv::line(m, {s.points[i - 1].x, s.points[i - 1].y}, {s.points[i].x, s.points[i].y}, c, 2, cv::LINE_8);
        }
        for (const auto& p : s.points) {
            cv::circle(m, {p.x, p.y}, 3, c, cv::FILLED, cv::LINE_8);
        }
        cv::line(m, {L.plot_x1 - 110, legend_y - 4}, {L.plot_x1 - 85, legend_y - 4}, c, 3, cv::LINE_8);
        cv::putText(m, s.name, {L.plot_x1 - 80, legend_y}, kFont, 0.45, kBlack, 1, cv::LINE_8);
        legend_y += 18;
    }
    return to_image(m);
}

BarChartLayout layout_comparison_chart(const ComparisonReport& report, int width, int height) {
    if (report.models.empty()) {
        throw Error(ErrorKind::invalid_argument, "comparison chart needs at least one model");
    }
    BarChartLayout L;
    L.title = "Per-class mean accuracy by model";
    L.width = width;
    L.height = height;
    L.plot_x0 = kMarginLeft;
    L.plot_x1 = width - kMarginRight;
    L.plot_y0 = kMarginTop + 20;
    L.plot_y1 = height - kMarginBottom;
    L.groups = report.class_set;
    L.models = report.models;

    const int groups = static_cast<int>(L.groups.size());
    const int models = static_cast<int>(L.models.size());
    const double group_w = static_cast<double>(L.plot_x1 - L.plot_x0) / std::max(groups, 1);
    const double bar_w = group_w * 0.8 / models;
    for (int g = 0; g < groups; ++g) {
        const auto& means = report.per_class.at(L.groups[static_cast<std::size_t>(g)]);
        for (int k = 0; k < models; ++k) {
            ChartBar b;
            b.class_label = L.groups[static_cast<std::size_t>(g)];
            b.model_id = L.models[static_cast<std::size_t>(k)];
            b.value = means[static_cast<std::size_t>(k)];
            b.color = palette_color(static_cast<std::size_t>(k));
            const double left = L.plot_x0 + g * group_w + group_w * 0.1 + k * bar_w;
            b.x0 = static_cast<int>(std::lround(left));
            b.x1 = std::max(b.x0, static_cast<int>(std::lround(left + bar_w)) - 2);
            const double frac = std::clamp(b.value, 0.0, 1.0);
            b.y1 = L.plot_y1 - 1;
            b.y0 = std::min(b.y1, L.plot_y1 - static_cast<int>(std::lround(frac * (L.plot_y1 - L.plot_y0))));
            L.bars.push_back(b);
        }
    }
    return L;
}

RgbImage draw_bar_chart(const BarChartLayout& L) {
    cv::Mat m(L.height, L.width, CV_8UC3, cv::Scalar(255, 255, 255));
    for (int i = 0; i <= 5; ++i) {
        const double v = i * 0.2;
        const int y = L.plot_y1 - static_cast<int>(std::lround(v * (L.plot_y1 - L.plot_y0)));
        cv::line(m, {L.plot_x0, y}, {L.plot_x1, y}, kGrid, 1, cv::LINE_8);
        cv::putText(m, fmt::format("{:.1f}", v), {20, y + 4}, kFont, 0.4, kBlack, 1, cv::LINE_8);
    }
    for (const auto& b : L.bars) {
        cv::rectangle(m, {b.x0, b.y0}, {b.x1, b.y1}, rgb(b.color), cv::FILLED, cv::LINE_8);
    }
    const double group_w = static_cast<double>(L.plot_x1 - L.plot_x0) / std::max<std::size_t>(L.groups.size(), 1);
    for (std::size_t g = 0; g < L.groups.size(); ++g) {
        centered_text(m, L.groups[g], L.plot_x0 + static_cast<int>((g + 0.5) * group_w), L.plot_y1 + 20, 0.45);
    }
    cv::line(m, {L.plot_x0, L.plot_y1}, {L.plot_x1, L.plot_y1}, kBlack, 1, cv::LINE_8);
    cv::line(m, {L.plot_x0, L.plot_y0}, {L.plot_x0, L.plot_y1}, kBlack, 1, cv::LINE_8);
    centered_text(m, L.title, L.width / 2, 25, 0.6);

    int legend_x = L.plot_x0 + 10;
    for (std::size_t k = 0; k < L.models.size(); ++k) {
        cv::rectangle(m, {legend_x, 36}, {legend_x + 12, 48}, rgb(palette_color(k)), cv::FILLED, cv::LINE_8);
        cv::putText(m, L.models[k], {legend_x + 16, 47}, kFont, 0.45, kBlack, 1, cv::LINE_8);
        int base = 0;
        legend_x += 30 + cv::getTextSize(L.models[k], kFont, 0.45, 1, &base).width;
    }
    return to_image(m);
}

std::vector<fs::path> emit_history_plots(const TrainingHistory& history, const fs::path& out_dir, const std::string& prefix) {
    if (history.epochs() == 0) {
        throw Error(ErrorKind::invalid_argument, "cannot plot an empty history");
    }
    ensure_directory(out_dir);
    const auto acc = layout_line_plot(
        "Model Accuracy", "accuracy",
        {{"train", palette_color(0), history.train_accuracy, {}}, {"val", palette_color(1), history.val_accuracy, {}}});
    const auto loss = layout_line_plot(
        "Model Loss", "loss",
        {{"train", palette_color(0), history.train_loss, {}}, {"val", palette_color(1), history.val_loss, {}}});
    const fs::path acc_file = out_dir / (prefix + "_accuracy.png");
    const fs::path loss_file = out_dir / (prefix + "_loss.png");
    write_png(draw_line_plot(acc), acc_file);
    write_png(draw_line_plot(loss), loss_file);
    return {acc_file, loss_file};
}

fs::path emit_comparison_chart(const ComparisonReport& report, const fs::path& out_dir) {
    ensure_directory(out_dir);
    const fs::path file = out_dir / "comparison_chart.png";
    write_png(draw_bar_chart(layout_comparison_chart(report)), file);
    return file;
}

}  // namespace biasforge
