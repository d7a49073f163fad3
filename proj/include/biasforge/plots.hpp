#pragma once

// Training-history curves and grouped comparison bar charts, written as PNG.
// Layout is computed separately from drawing so tests can locate series
// points and bars in the decoded image.

#include "biasforge/bias_report.hpp"
#include "biasforge/image.hpp"
#include "biasforge/trainer.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace biasforge {

using Color = std::array<std::uint8_t, 3>;  // R,G,B

/// Categorical palette; index 0 blue, 1 orange, 2 green, then red, purple, ...
Color palette_color(std::size_t index);

struct PixelPoint {
    int x = 0;
    int y = 0;
};

struct PlotSeries {
    std::string name;
    Color color{};
    std::vector<double> values;
    std::vector<PixelPoint> points;
};

struct LinePlotLayout {
    std::string title;
    std::string y_label;
    int width = 640;
    int height = 480;
    int plot_x0 = 0, plot_y0 = 0, plot_x1 = 0, plot_y1 = 0;  // plot area, pixel coords
    double x_min = 1.0, x_max = 1.0;                          // epochs
    double y_min = 0.0, y_max = 1.0;
    std::vector<PlotSeries> series;
};

LinePlotLayout layout_line_plot(const std::string& title, const std::string& y_label,
                                const std::vector<PlotSeries>& series, int width = 640, int height = 480);

struct ChartBar {
    std::string class_label;
    std::string model_id;
    double value = 0.0;
    Color color{};
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive pixel rectangle
};

struct BarChartLayout {
    std::string title;
    int width = 800;
    int height = 480;
    int plot_x0 = 0, plot_y0 = 0, plot_x1 = 0, plot_y1 = 0;
    std::vector<std::string> groups;
    std::vector<std::string> models;
    std::vector<ChartBar> bars;
};

BarChartLayout layout_comparison_chart(const ComparisonReport& report, int width = 800, int height = 480);

RgbImage draw_line_plot(const LinePlotLayout& layout);
RgbImage draw_bar_chart(const BarChartLayout& layout);

/// Writes `<prefix>_accuracy.png` and `<prefix>_loss.png`; returns both paths.
std::vector<std::filesystem::path> emit_history_plots(const TrainingHistory& history, const std::filesystem::path& out_dir,
                                                      const std::string& prefix = "model");

/// Writes `comparison_chart.png` and returns its path.
std::filesystem::path emit_comparison_chart(const ComparisonReport& report, const std::filesystem::path& out_dir);

}  // namespace biasforge
