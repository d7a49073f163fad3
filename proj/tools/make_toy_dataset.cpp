// Writes a procedural stand-in dataset: <out>/real/<class>/*.png and <out>/eval/<class>/*.png.

#include "biasforge/error.hpp"
#include "biasforge/toy_data.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Generate a toy five-class dataset with an optional degraded class"};
    biasforge::ToyDatasetSpec spec;
    std::filesystem::path out;
    int eval_per_class = 100;
    std::string degraded;
    app.add_option("out", out, "output directory")->required();
    app.add_option("--per-class", spec.per_class);
    app.add_option("--degraded", degraded, "class to degrade");
    app.add_option("--degraded-count", spec.degraded_count);
    app.add_option("--noise-sigma", spec.noise_sigma);
    app.add_option("--eval-per-class", eval_per_class);
    app.add_option("--width", spec.image_width);
    app.add_option("--height", spec.image_height);
    app.add_option("--seed", spec.seed);
    app.add_option("--classes", spec.classes)->delimiter(',');
    CLI11_PARSE(app, argc, argv);
    if (!degraded.empty()) spec.degraded_class = degraded;
    try {
        const auto n = biasforge::write_toy_dataset(spec, out / "real");
        const auto m = biasforge::write_toy_eval_set(spec, eval_per_class, out / "eval");
        std::cout << fmt::format("{} training-side images, {} eval images -> {}\n", n, m, out.string());
    } catch (const biasforge::Error& e) {
        std::cerr << e.what() << '\n';
        return biasforge::exit_code_for(e.kind());
    }
    return 0;
}
