#pragma once

// Classifier training and prediction over manifests.

#include "biasforge/manifest.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace biasforge {

enum class OptimizerChoice { rmsprop, sgd };
enum class Backbone { paper_vgg16_transfer, desk_small_conv };

std::string to_string(OptimizerChoice o);
std::string to_string(Backbone b);
OptimizerChoice optimizer_from_string(const std::string& s);
Backbone backbone_from_string(const std::string& s);

struct InputSize {
    int width = 32;
    int height = 32;
    friend bool operator==(const InputSize&, const InputSize&) = default;
};

struct TrainConfig {
    int epochs = 100;
    double learning_rate = 1e-4;
    OptimizerChoice optimizer = OptimizerChoice::rmsprop;
    double leaky_slope = 0.01;
    Backbone backbone = Backbone::desk_small_conv;
    int batch_size = 32;
    std::int64_t seed = 0;
    InputSize input_size{};
    int hidden_units = 64;            // width of the classification head
    std::string pretrained_path;      // feature extractor for paper_vgg16_transfer
    bool deterministic = true;        // false draws init/shuffle seeds from the OS

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Defaults for the pretrained-VGG16 configuration: 100 epochs, RMSprop at
/// 1e-4, 224x224 inputs.
TrainConfig transfer_train_config();

void validate(const TrainConfig& config);

struct ModelArtifact {
    std::string model_id;
    std::vector<std::string> class_set;
    TrainConfig config;
    std::filesystem::path weights_path;
    std::string train_manifest_id;
    bool nondeterministic = false;

    friend bool operator==(const ModelArtifact&, const ModelArtifact&) = default;
};

struct TrainingHistory {
    std::vector<double> train_accuracy;
    std::vector<double> val_accuracy;
    std::vector<double> train_loss;
    std::vector<double> val_loss;

    [[nodiscard]] std::size_t epochs() const noexcept { return train_accuracy.size(); }
    friend bool operator==(const TrainingHistory&, const TrainingHistory&) = default;
};

struct EpochReport {
    int epoch = 0;  // 1-based
    double train_accuracy = 0, val_accuracy = 0, train_loss = 0, val_loss = 0;
};

struct TrainOptions {
    std::string model_id = "model";
    std::filesystem::path out_dir = ".";
    /// Initialize from an existing model with the same architecture.
    std::optional<ModelArtifact> warm_start;
    std::function<void(const EpochReport&)> on_epoch;
};

struct TrainResult {
    ModelArtifact model;
    TrainingHistory history;
};

double leaky_relu(double x, double slope);

/// Trains and persists `<out_dir>/model_<id>.json` plus its weights file.
TrainResult train(const DatasetManifest& train_set, const DatasetManifest& val_set, const TrainConfig& config,
                  const TrainOptions& options = {});

struct Prediction {
    std::filesystem::path path;
    std::string true_label;
    std::string predicted_label;  // empty when `error` is set
    std::vector<double> scores;   // one per model class, sums to 1
    std::string error;

    [[nodiscard]] bool ok() const noexcept { return error.empty(); }
};

struct PredictionTable {
    std::vector<std::string> class_set;
    std::vector<Prediction> rows;

    [[nodiscard]] double accuracy() const;
};

/// Index of the first maximum; ties resolve toward the lowest index.
std::size_t argmax_first(std::span<const double> scores);

/// Scores one record; returning nullopt marks the record as unreadable.
using Scorer = std::function<std::optional<std::vector<double>>(const ImageRecord&)>;

PredictionTable predict_with(const std::vector<std::string>& class_set, const DatasetManifest& eval_set,
                             const Scorer& scorer);

PredictionTable predict(const ModelArtifact& model, const DatasetManifest& eval_set);

// ---- serialization --------------------------------------------------------

std::string model_to_json(const ModelArtifact& model, const std::filesystem::path& descriptor_dir = {});
void save_model(const ModelArtifact& model, const std::filesystem::path& descriptor);
ModelArtifact load_model(const std::filesystem::path& descriptor);

std::string train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& text, const TrainConfig& defaults = {});

std::string history_to_csv(const TrainingHistory& history);
TrainingHistory history_from_csv(const std::string& text);

std::string predictions_to_csv(const PredictionTable& table);
PredictionTable predictions_from_csv(const std::string& text);

}  // namespace biasforge
