#pragma once

// Small feed-forward CNN used by the trainer: 3x3 same-padded convolutions
// (im2col + Eigen GEMM), 2x2 max pooling, dense layers and leaky ReLU.
// Activations are planar C,H,W float buffers.

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace biasforge {
class Rng;
}

namespace biasforge::nn {

using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Shape {
    int c = 0;
    int h = 0;
    int w = 0;
    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(c) * h * w; }
    friend bool operator==(const Shape&, const Shape&) = default;
};

enum class LayerType : std::uint8_t { conv3x3 = 1, maxpool2 = 2, leaky_relu = 3, dense = 4 };

struct Layer {
    LayerType type;
    Shape in;
    Shape out;
    float slope = 0.0f;   // leaky_relu only; 0 gives a plain ReLU
    int param_index = -1;  // weights at params[i], bias at params[i + 1]
};

/// Per-sample scratch space; one per concurrent caller.
struct Trace {
    std::vector<std::vector<float>> acts;  // acts[i] is the input of layer i
    std::vector<std::vector<int>> argmax;  // pooling switches
    std::vector<Matrix> cols;              // im2col buffers
    std::vector<std::vector<float>> grad;
};

class Network {
public:
    explicit Network(Shape input = {});

    Network& conv3x3(int out_channels);
    Network& maxpool2();
    Network& leaky_relu(float slope);
    Network& dense(int units);

    [[nodiscard]] Shape input_shape() const noexcept { return input_; }
    [[nodiscard]] Shape output_shape() const noexcept { return layers_.empty() ? input_ : layers_.back().out; }
    [[nodiscard]] const std::vector<Layer>& layers() const noexcept { return layers_; }

    std::vector<Matrix>& params() noexcept { return params_; }
    [[nodiscard]] const std::vector<Matrix>& params() const noexcept { return params_; }

    /// Layers [0, frozen_layers) are treated as a fixed feature extractor.
    [[nodiscard]] std::size_t frozen_layers() const noexcept { return frozen_; }
    void set_frozen_layers(std::size_t n);
    [[nodiscard]] Shape feature_shape() const noexcept {
        return frozen_ == 0 ? input_ : layers_[frozen_ - 1].out;
    }

    /// He-uniform weights, zero biases, for layers at or after `from_layer`.
    void initialize(Rng& rng, std::size_t from_layer = 0);

    /// Runs layers [from_layer, to_layer); `input` must match layers[from_layer].in.
    std::span<const float> forward(std::span<const float> input, Trace& trace, std::size_t from_layer = 0,
                                   std::size_t to_layer = static_cast<std::size_t>(-1)) const;

    /// Runs only layers [0, to_layer).
    std::vector<float> forward_prefix(std::span<const float> input, std::size_t to_layer) const;

    /// Backpropagates `output_grad` through layers [from_layer, end) of the
    /// last forward() on `trace`, accumulating parameter gradients into `grads`.
    void backward(Trace& trace, std::span<const float> output_grad, std::vector<Matrix>& grads,
                  std::size_t from_layer = 0) const;

    /// Zero-filled gradient buffers shaped like params().
    [[nodiscard]] std::vector<Matrix> zero_grads() const;

    void save(const std::filesystem::path& file) const;
    static Network load(const std::filesystem::path& file);

    [[nodiscard]] bool same_architecture(const Network& other) const;

private:
    Layer& push(LayerType type, Shape out);

    Shape input_;
    std::vector<Layer> layers_;
    std::vector<Matrix> params_;
    std::size_t frozen_ = 0;
};

/// Numerically stable softmax in double precision.
std::vector<double> softmax(std::span<const float> logits);

/// Cross-entropy of softmax(logits) against `label`; writes dLoss/dLogits.
double softmax_cross_entropy(std::span<const float> logits, int label, std::span<float> grad);

enum class OptimizerKind { rmsprop, sgd };

struct OptimizerSettings {
    OptimizerKind kind = OptimizerKind::rmsprop;
    float learning_rate = 1e-4f;
    float rho = 0.9f;
    float epsilon = 1e-7f;
};

class Optimizer {
public:
    Optimizer(OptimizerSettings settings, const std::vector<Matrix>& params);

    /// Applies averaged gradients to params whose index is >= first_param.
    void step(std::vector<Matrix>& params, const std::vector<Matrix>& grads, std::size_t first_param = 0);

private:
    OptimizerSettings settings_;
    std::vector<Matrix> mean_square_;
};

// Pretrained feature-extractor file ("BFCONV01"): a stack of 3x3 convolutions,
// activations and 2x2 pools with weights laid out [out][in][3][3].
Network load_pretrained_stack(const std::filesystem::path& file, Shape input);
void save_pretrained_stack(const Network& stack, const std::filesystem::path& file);

}  // namespace biasforge::nn
