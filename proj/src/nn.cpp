#include "biasforge/nn.hpp"

#include "biasforge/error.hpp"
#include "biasforge/seeding.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace biasforge::nn {

namespace {

using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;

void im2col(const float* in, Shape s, Matrix& col) {
    const int hw = s.h * s.w;
    col.resize(static_cast<Eigen::Index>(s.c) * 9, hw);
    for (int ch = 0; ch < s.c; ++ch) {
        const float* plane = in + static_cast<std::size_t>(ch) * hw;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                float* row = col.row(ch * 9 + ky * 3 + kx).data();
                const int x_lo = std::max(0, 1 - kx), x_hi = std::min(s.w, s.w + 1 - kx);
                for (int y = 0; y < s.h; ++y) {
                    float* dst = row + y * s.w;
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= s.h) {
                        std::fill(dst, dst + s.w, 0.0f);
                        continue;
                    }
                    std::fill(dst, dst + x_lo, 0.0f);
                    std::fill(dst + x_hi, dst + s.w, 0.0f);
                    if (x_hi > x_lo) {
                        std::memcpy(dst + x_lo, plane + sy * s.w + (x_lo + kx - 1),
                                    static_cast<std::size_t>(x_hi - x_lo) * sizeof(float));
                    }
                }
            }
        }
    }
}

void col2im(const Matrix& col, Shape s, float* out) {
    const int hw = s.h * s.w;
    std::fill(out, out + s.size(), 0.0f);
    for (int ch = 0; ch < s.c; ++ch) {
        float* plane = out + static_cast<std::size_t>(ch) * hw;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const float* row = col.row(ch * 9 + ky * 3 + kx).data();
                const int x_lo = std::max(0, 1 - kx), x_hi = std::min(s.w, s.w + 1 - kx);
                for (int y = 0; y < s.h; ++y) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= s.h) continue;
                    const float* src = row + y * s.w;
                    float* dst = plane + sy * s.w + (kx - 1);
                    for (int x = x_lo; x < x_hi; ++x) {
                        dst[x] += src[x];
                    }
                }
            }
        }
    }
}

template <typename T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& file) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) {
        throw Error(ErrorKind::corrupt_file, "truncated weights file " + file.string());
    }
    return v;
}

void read_floats(std::ifstream& in, float* dst, std::size_t n, const std::filesystem::path& file) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) {
        throw Error(ErrorKind::corrupt_file, "truncated weights file " + file.string());
    }
}

constexpr char kNetMagic[8] = {'B', 'F', 'N', 'E', 'T', '0', '0', '1'};
constexpr char kStackMagic[8] = {'B', 'F', 'C', 'O', 'N', 'V', '0', '1'};

}  // namespace

Network::Network(Shape input) : input_(input) {}

Layer& Network::push(LayerType type, Shape out) {
    Layer l{type, output_shape(), out};
    layers_.push_back(l);
    return layers_.back();
}

Network& Network::conv3x3(int out_channels) {
    const Shape in = output_shape();
    Layer& l = push(LayerType::conv3x3, {out_channels, in.h, in.w});
    l.param_index = static_cast<int>(params_.size());
    params_.emplace_back(Matrix::Zero(out_channels, static_cast<Eigen::Index>(in.c) * 9));
    params_.emplace_back(Matrix::Zero(out_channels, 1));
    return *this;
}

Network& Network::maxpool2() {
    const Shape in = output_shape();
    if (in.h < 2 || in.w < 2) {
        throw Error(ErrorKind::invalid_argument, "max pooling needs at least 2x2 input");
    }
    push(LayerType::maxpool2, {in.c, in.h / 2, in.w / 2});
    return *this;
}

Network& Network::leaky_relu(float slope) {
    Layer& l = push(LayerType::leaky_relu, output_shape());
    l.slope = slope;
    return *this;
}

Network& Network::dense(int units) {
    const Shape in = output_shape();
    Layer& l = push(LayerType::dense, {units, 1, 1});
    l.param_index = static_cast<int>(params_.size());
    params_.emplace_back(Matrix::Zero(units, static_cast<Eigen::Index>(in.size())));
    params_.emplace_back(Matrix::Zero(units, 1));
    return *this;
}

void Network::set_frozen_layers(std::size_t n) {
    if (n > layers_.size()) {
        throw Error(ErrorKind::invalid_argument, "frozen layer count exceeds network depth");
    }
    frozen_ = n;
}

void Network::initialize(Rng& rng, std::size_t from_layer) {
    for (std::size_t i = from_layer; i < layers_.size(); ++i) {
        const Layer& l = layers_[i];
        if (l.param_index < 0) continue;
        Matrix& w = params_[l.param_index];
        const double limit = std::sqrt(6.0 / static_cast<double>(w.cols()));
        for (Eigen::Index k = 0; k < w.size(); ++k) {
            w.data()[k] = static_cast<float>(rng.uniform(-limit, limit));
        }
        params_[l.param_index + 1].setZero();
    }
}

std::span<const float> Network::forward(std::span<const float> input, Trace& trace, std::size_t from_layer,
                                        std::size_t to_layer) const {
    const std::size_t n = std::min(layers_.size(), to_layer);
    trace.acts.resize(layers_.size() + 1);
    trace.argmax.resize(layers_.size());
    trace.cols.resize(layers_.size());
    const Shape first = from_layer < layers_.size() ? layers_[from_layer].in : output_shape();
    if (input.size() != first.size()) {
        throw Error(ErrorKind::invalid_argument,
                    fmt::format("network input has {} values, expected {}", input.size(), first.size()));
    }
    trace.acts[from_layer].assign(input.begin(), input.end());

    for (std::size_t i = from_layer; i < n; ++i) {
        const Layer& l = layers_[i];
        const std::vector<float>& x = trace.acts[i];
        std::vector<float>& y = trace.acts[i + 1];
        y.resize(l.out.size());
        switch (l.type) {
            case LayerType::conv3x3: {
                Matrix& col = trace.cols[i];
                im2col(x.data(), l.in, col);
                MutMap out(y.data(), l.out.c, static_cast<Eigen::Index>(l.out.h) * l.out.w);
                out.noalias() = params_[l.param_index] * col;
                out.colwise() += params_[l.param_index + 1].col(0);
                break;
            }
            case LayerType::maxpool2: {
                std::vector<int>& arg = trace.argmax[i];
                arg.resize(l.out.size());
                for (int c = 0; c < l.out.c; ++c) {
                    for (int oy = 0; oy < l.out.h; ++oy) {
                        for (int ox = 0; ox < l.out.w; ++ox) {
                            int best = -1;
                            float bv = -std::numeric_limits<float>::infinity();
                            for (int dy = 0; dy < 2; ++dy) {
                                for (int dx = 0; dx < 2; ++dx) {
                                    const int idx = (c * l.in.h + oy * 2 + dy) * l.in.w + ox * 2 + dx;
                                    if (x[idx] > bv || best < 0) {
                                        bv = x[idx];
                                        best = idx;
                                    }
                                }
                            }
                            const std::size_t o = (static_cast<std::size_t>(c) * l.out.h + oy) * l.out.w + ox;
                            y[o] = bv;
                            arg[o] = best;
                        }
                    }
                }
                break;
            }
            case LayerType::leaky_relu:
                for (std::size_t k = 0; k < x.size(); ++k) {
                    y[k] = x[k] >= 0.0f ? x[k] : l.slope * x[k];
                }
                break;
            case LayerType::dense: {
                Eigen::Map<const Eigen::VectorXf> in(x.data(), static_cast<Eigen::Index>(x.size()));
                Eigen::Map<Eigen::VectorXf> out(y.data(), l.out.c);
                out.noalias() = params_[l.param_index] * in;
                out += params_[l.param_index + 1].col(0);
                break;
            }
        }
    }
    return trace.acts[n];
}

std::vector<float> Network::forward_prefix(std::span<const float> input, std::size_t to_layer) const {
    Trace trace;
    auto out = forward(input, trace, 0, to_layer);
    return {out.begin(), out.end()};
}

void Network::backward(Trace& trace, std::span<const float> output_grad, std::vector<Matrix>& grads,
                       std::size_t from_layer) const {
    const std::size_t n = layers_.size();
    trace.grad.resize(n + 1);
    trace.grad[n].assign(output_grad.begin(), output_grad.end());
    for (std::size_t i = n; i-- > from_layer;) {
        const Layer& l = layers_[i];
        const std::vector<float>& x = trace.acts[i];
        const std::vector<float>& dy = trace.grad[i + 1];
        std::vector<float>& dx = trace.grad[i];
        const bool need_dx = i > from_layer;
        dx.resize(l.in.size());
        switch (l.type) {
            case LayerType::conv3x3: {
                const Eigen::Index hw = static_cast<Eigen::Index>(l.out.h) * l.out.w;
                ConstMap g(dy.data(), l.out.c, hw);
                const Matrix& col = trace.cols[i];
                grads[l.param_index].noalias() += g * col.transpose();
                grads[l.param_index + 1].col(0) += g.rowwise().sum();
                if (need_dx) {
                    Matrix dcol = params_[l.param_index].transpose() * g;
                    col2im(dcol, l.in, dx.data());
                }
                break;
            }
            case LayerType::maxpool2:
                if (need_dx) {
                    std::fill(dx.begin(), dx.end(), 0.0f);
                    const auto& arg = trace.argmax[i];
                    for (std::size_t o = 0; o < dy.size(); ++o) {
                        dx[arg[o]] += dy[o];
                    }
                }
                break;
            case LayerType::leaky_relu:
                if (need_dx) {
                    for (std::size_t k = 0; k < dx.size(); ++k) {
                        dx[k] = x[k] >= 0.0f ? dy[k] : l.slope * dy[k];
                    }
                }
                break;
            case LayerType::dense: {
                Eigen::Map<const Eigen::VectorXf> g(dy.data(), l.out.c);
                Eigen::Map<const Eigen::VectorXf> in(x.data(), static_cast<Eigen::Index>(x.size()));
                grads[l.param_index].noalias() += g * in.transpose();
                grads[l.param_index + 1].col(0) += g;
                if (need_dx) {
                    Eigen::Map<Eigen::VectorXf> d(dx.data(), static_cast<Eigen::Index>(dx.size()));
                    d.noalias() = params_[l.param_index].transpose() * g;
                }
                break;
            }
        }
    }
}

std::vector<Matrix> Network::zero_grads() const {
    std::vector<Matrix> g;
    g.reserve(params_.size());
    for (const auto& p : params_) {
        g.emplace_back(Matrix::Zero(p.rows(), p.cols()));
    }
    return g;
}

bool Network::same_architecture(const Network& other) const {
    if (!(input_ == other.input_) || layers_.size() != other.layers_.size()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& a = layers_[i];
        const auto& b = other.layers_[i];
        if (a.type != b.type || !(a.out == b.out) || a.slope != b.slope) return false;
    }
    return true;
}

void Network::save(const std::filesystem::path& file) const {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorKind::io, "cannot write weights " + file.string());
    }
    out.write(kNetMagic, sizeof kNetMagic);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(input_.c));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(input_.h));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(input_.w));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(frozen_));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(layers_.size()));
    for (const auto& l : layers_) {
        put<std::uint8_t>(out, static_cast<std::uint8_t>(l.type));
        switch (l.type) {
            case LayerType::conv3x3:
            case LayerType::dense: put<std::int32_t>(out, l.out.c); break;
            case LayerType::leaky_relu: put<float>(out, l.slope); break;
            case LayerType::maxpool2: put<std::int32_t>(out, 0); break;
        }
    }
    for (const auto& p : params_) {
        out.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(float)));
    }
    if (!out) {
        throw Error(ErrorKind::io, "short write to " + file.string());
    }
}

Network Network::load(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::io, "cannot open weights " + file.string());
    }
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || !std::equal(magic, magic + 8, kNetMagic)) {
        throw Error(ErrorKind::corrupt_file, file.string() + " is not a biasforge weights file");
    }
    Shape input;
    input.c = static_cast<int>(get<std::uint32_t>(in, file));
    input.h = static_cast<int>(get<std::uint32_t>(in, file));
    input.w = static_cast<int>(get<std::uint32_t>(in, file));
    const auto frozen = get<std::uint32_t>(in, file);
    const auto count = get<std::uint32_t>(in, file);
    Network net(input);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto type = static_cast<LayerType>(get<std::uint8_t>(in, file));
        switch (type) {
            case LayerType::conv3x3: net.conv3x3(get<std::int32_t>(in, file)); break;
            case LayerType::dense: net.dense(get<std::int32_t>(in, file)); break;
            case LayerType::leaky_relu: net.leaky_relu(get<float>(in, file)); break;
            case LayerType::maxpool2: (void)get<std::int32_t>(in, file); net.maxpool2(); break;
            default: throw Error(ErrorKind::corrupt_file, "unknown layer type in " + file.string());
        }
    }
    for (auto& p : net.params_) {
        read_floats(in, p.data(), static_cast<std::size_t>(p.size()), file);
    }
    net.set_frozen_layers(frozen);
    return net;
}

std::vector<double> softmax(std::span<const float> logits) {
    std::vector<double> p(logits.size());
    if (logits.empty()) return p;
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(static_cast<double>(logits[i]) - mx);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

double softmax_cross_entropy(std::span<const float> logits, int label, std::span<float> grad) {
    const std::vector<double> p = softmax(logits);
    for (std::size_t i = 0; i < p.size(); ++i) {
        grad[i] = static_cast<float>(p[i] - (static_cast<int>(i) == label ? 1.0 : 0.0));
    }
    return -std::log(std::max(p[static_cast<std::size_t>(label)], 1e-12));
}

Optimizer::Optimizer(OptimizerSettings settings, const std::vector<Matrix>& params) : settings_(settings) {
    for (const auto& p : params) {
        mean_square_.emplace_back(Matrix::Zero(p.rows(), p.cols()));
    }
}

void Optimizer::step(std::vector<Matrix>& params, const std::vector<Matrix>& grads, std::size_t first_param) {
    const float lr = settings_.learning_rate;
    for (std::size_t i = first_param; i < params.size(); ++i) {
        if (settings_.kind == OptimizerKind::sgd) {
            params[i] -= lr * grads[i];
            continue;
        }
        auto& ms = mean_square_[i];
        ms = settings_.rho * ms + (1.0f - settings_.rho) * grads[i].cwiseProduct(grads[i]);
        params[i].array() -= lr * grads[i].array() / (ms.array().sqrt() + settings_.epsilon);
    }
}

Network load_pretrained_stack(const std::filesystem::path& file, Shape input) {
    std::ifstream in(file, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::missing_pretrained, "pretrained weights not found: " + file.string());
    }
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || !std::equal(magic, magic + 8, kStackMagic)) {
        throw Error(ErrorKind::corrupt_file, file.string() + " is not a BFCONV01 feature-extractor file");
    }
    const auto count = get<std::uint32_t>(in, file);
    Network net(input);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto type = static_cast<LayerType>(get<std::uint8_t>(in, file));
        if (type == LayerType::conv3x3) {
            const auto in_c = static_cast<int>(get<std::uint32_t>(in, file));
            const auto out_c = static_cast<int>(get<std::uint32_t>(in, file));
            if (in_c != net.output_shape().c) {
                throw Error(ErrorKind::corrupt_file,
                            fmt::format("{}: conv layer {} expects {} channels, stack provides {}", file.string(), i,
                                        in_c, net.output_shape().c));
            }
            net.conv3x3(out_c);
            const Layer& l = net.layers().back();
            Matrix& w = net.params()[l.param_index];
            read_floats(in, w.data(), static_cast<std::size_t>(w.size()), file);
            Matrix& b = net.params()[l.param_index + 1];
            read_floats(in, b.data(), static_cast<std::size_t>(b.size()), file);
        } else if (type == LayerType::maxpool2) {
            net.maxpool2();
        } else if (type == LayerType::leaky_relu) {
            net.leaky_relu(get<float>(in, file));
        } else {
            throw Error(ErrorKind::corrupt_file, "unsupported layer in feature-extractor file " + file.string());
        }
    }
    net.set_frozen_layers(net.layers().size());
    return net;
}

void save_pretrained_stack(const Network& stack, const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorKind::io, "cannot write " + file.string());
    }
    out.write(kStackMagic, sizeof kStackMagic);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(stack.layers().size()));
    for (const auto& l : stack.layers()) {
        put<std::uint8_t>(out, static_cast<std::uint8_t>(l.type));
        if (l.type == LayerType::conv3x3) {
            put<std::uint32_t>(out, static_cast<std::uint32_t>(l.in.c));
            put<std::uint32_t>(out, static_cast<std::uint32_t>(l.out.c));
            const Matrix& w = stack.params()[l.param_index];
            const Matrix& b = stack.params()[l.param_index + 1];
            out.write(reinterpret_cast<const char*>(w.data()), static_cast<std::streamsize>(w.size() * sizeof(float)));
            out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size() * sizeof(float)));
        } else if (l.type == LayerType::leaky_relu) {
            put<float>(out, l.slope);
        } else if (l.type == LayerType::dense) {
            throw Error(ErrorKind::invalid_argument, "feature-extractor stacks hold no dense layers");
        }
    }
}

}  // namespace biasforge::nn
