#include "biasforge/trainer.hpp"

#include "biasforge/error.hpp"
#include "biasforge/fileio.hpp"
#include "biasforge/image.hpp"
#include "biasforge/nn.hpp"
#include "biasforge/seeding.hpp"
#include "detail/json_codec.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace biasforge {

namespace fs = std::filesystem;
using detail::json;

std::string to_string(OptimizerChoice o) { return o == OptimizerChoice::rmsprop ? "rmsprop" : "sgd"; }

std::string to_string(Backbone b) {
    return b == Backbone::paper_vgg16_transfer ? "paper_vgg16_transfer" : "desk_small_conv";
}

OptimizerChoice optimizer_from_string(const std::string& s) {
    if (s == "rmsprop") return OptimizerChoice::rmsprop;
    if (s == "sgd") return OptimizerChoice::sgd;
    throw Error(ErrorKind::config, "unknown optimizer '" + s + "'");
}

Backbone backbone_from_string(const std::string& s) {
    if (s == "paper_vgg16_transfer") return Backbone::paper_vgg16_transfer;
    if (s == "desk_small_conv") return Backbone::desk_small_conv;
    throw Error(ErrorKind::config, "unknown backbone '" + s + "'");
}

TrainConfig transfer_train_config() {
    TrainConfig c;
    c.epochs = 100;
    c.learning_rate = 1e-4;
    c.optimizer = OptimizerChoice::rmsprop;
    c.backbone = Backbone::paper_vgg16_transfer;
    c.input_size = {224, 224};
    c.hidden_units = 256;
    return c;
}

void validate(const TrainConfig& c) {
    auto bad = [](const std::string& what) { throw Error(ErrorKind::config, "train config: " + what); };
    if (c.epochs < 1) bad("epochs must be >= 1");
    if (!(c.learning_rate > 0.0)) bad("learning_rate must be > 0");
    if (!(c.leaky_slope > 0.0 && c.leaky_slope < 1.0)) bad("leaky_slope must lie in (0, 1)");
    if (c.batch_size < 1) bad("batch_size must be >= 1");
    if (c.hidden_units < 1) bad("hidden_units must be >= 1");
    if (c.input_size.width < 4 || c.input_size.height < 4) bad("input_size must be at least 4x4");
}

double leaky_relu(double x, double slope) { return x >= 0.0 ? x : slope * x; }

namespace {

nn::Network build_network(const TrainConfig& config, int classes) {
    const nn::Shape input{3, config.input_size.height, config.input_size.width};
    const auto slope = static_cast<float>(config.leaky_slope);
    if (config.backbone == Backbone::paper_vgg16_transfer) {
        if (config.pretrained_path.empty() || !fs::is_regular_file(config.pretrained_path)) {
            throw Error(ErrorKind::missing_pretrained,
                        "paper_vgg16_transfer needs a pretrained feature-extractor file (pretrained_path='" +
                            config.pretrained_path + "')");
        }
        nn::Network net = nn::load_pretrained_stack(config.pretrained_path, input);
        const std::size_t frozen = net.layers().size();
        net.dense(config.hidden_units).leaky_relu(slope).dense(classes);
        net.set_frozen_layers(frozen);
        return net;
    }
    if (input.h < 4 || input.w < 4) {
        throw Error(ErrorKind::config, "desk_small_conv needs inputs of at least 4x4");
    }
    nn::Network net(input);
    net.conv3x3(8).leaky_relu(slope).maxpool2();
    net.conv3x3(16).leaky_relu(slope).maxpool2();
    net.dense(config.hidden_units).leaky_relu(slope).dense(classes);
    return net;
}

struct Example {
    std::vector<float> features;
    int label = 0;
};

std::vector<Example> load_examples(const DatasetManifest& m, const nn::Network& net, const TrainConfig& config,
                                   const std::map<std::string, int>& label_index) {
    std::vector<Example> out;
    out.reserve(m.records.size());
    for (const auto& r : m.records) {
        auto pixels = load_letterboxed(r.path, config.input_size.width, config.input_size.height);
        if (!pixels) {
            throw Error(ErrorKind::corrupt_file, "cannot decode training image " + r.path.string());
        }
        Example e;
        e.label = label_index.at(r.class_label);
        e.features = net.frozen_layers() > 0 ? net.forward_prefix(*pixels, net.frozen_layers()) : std::move(*pixels);
        out.push_back(std::move(e));
    }
    return out;
}

struct EvalTotals {
    double loss = 0.0;
    double accuracy = 0.0;
};

EvalTotals evaluate(const nn::Network& net, const std::vector<Example>& data) {
    nn::Trace trace;
    double loss = 0.0;
    std::size_t correct = 0;
    std::vector<float> grad(net.output_shape().size());
    for (const auto& e : data) {
        auto logits = net.forward(e.features, trace, net.frozen_layers());
        loss += nn::softmax_cross_entropy(logits, e.label, grad);
        const auto probs = nn::softmax(logits);
        if (static_cast<int>(argmax_first(probs)) == e.label) ++correct;
    }
    if (data.empty()) return {};
    return {loss / static_cast<double>(data.size()), static_cast<double>(correct) / static_cast<double>(data.size())};
}

fs::path weights_file_for(const fs::path& out_dir, const std::string& model_id) {
    return out_dir / ("model_" + model_id + ".weights");
}

}  // namespace

TrainResult train(const DatasetManifest& train_set, const DatasetManifest& val_set, const TrainConfig& config,
                  const TrainOptions& options) {
    validate(config);
    if (train_set.class_set != val_set.class_set) {
        throw Error(ErrorKind::class_set_mismatch, "training and validation manifests have different class sets");
    }
    if (train_set.class_set.empty()) {
        throw Error(ErrorKind::empty_dataset, "training manifest has no classes");
    }
    for (const auto& c : train_set.class_set) {
        if (train_set.count_class(c) == 0) {
            throw Error(ErrorKind::empty_class, "no training records for class '" + c + "'");
        }
    }

    std::map<std::string, int> label_index;
    for (std::size_t i = 0; i < train_set.class_set.size(); ++i) {
        label_index[train_set.class_set[i]] = static_cast<int>(i);
    }
    const int classes = static_cast<int>(train_set.class_set.size());

    const std::uint64_t seed = config.deterministic ? static_cast<std::uint64_t>(config.seed)
                                                    : (static_cast<std::uint64_t>(std::random_device{}()) << 32) ^
                                                          std::random_device{}();
    Rng rng(derive_seed(seed, {0x7EA1ULL}));

    nn::Network net = build_network(config, classes);
    if (options.warm_start) {
        if (options.warm_start->class_set != train_set.class_set) {
            throw Error(ErrorKind::class_set_mismatch, "warm-start model was trained on a different class set");
        }
        nn::Network prior = nn::Network::load(options.warm_start->weights_path);
        if (!prior.same_architecture(net)) {
            throw Error(ErrorKind::config, "warm-start model architecture differs from the configured one");
        }
        net.params() = prior.params();
    } else {
        net.initialize(rng, net.frozen_layers());
    }

    const std::vector<Example> train_data = load_examples(train_set, net, config, label_index);
    const std::vector<Example> val_data = load_examples(val_set, net, config, label_index);

    const std::size_t start = net.frozen_layers();
    std::size_t first_param = net.params().size();
    for (std::size_t i = start; i < net.layers().size(); ++i) {
        if (net.layers()[i].param_index >= 0) {
            first_param = std::min(first_param, static_cast<std::size_t>(net.layers()[i].param_index));
        }
    }

    nn::Optimizer optimizer({config.optimizer == OptimizerChoice::rmsprop ? nn::OptimizerKind::rmsprop
                                                                          : nn::OptimizerKind::sgd,
                             static_cast<float>(config.learning_rate)},
                            net.params());
    std::vector<nn::Matrix> grads = net.zero_grads();
    std::vector<float> out_grad(net.output_shape().size());
    nn::Trace trace;
    std::vector<std::size_t> order(train_data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainingHistory history;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), b + static_cast<std::size_t>(config.batch_size));
            for (std::size_t i = first_param; i < grads.size(); ++i) grads[i].setZero();
            for (std::size_t k = b; k < end; ++k) {
                const Example& e = train_data[order[k]];
                auto logits = net.forward(e.features, trace, start);
                if (static_cast<int>(argmax_first(nn::softmax(logits))) == e.label) ++correct;
                loss_sum += nn::softmax_cross_entropy(logits, e.label, out_grad);
                net.backward(trace, out_grad, grads, start);
            }
            const float inv = 1.0f / static_cast<float>(end - b);
            for (std::size_t i = first_param; i < grads.size(); ++i) grads[i] *= inv;
            optimizer.step(net.params(), grads, first_param);
        }
        const auto n = static_cast<double>(std::max<std::size_t>(train_data.size(), 1));
        const EvalTotals val = evaluate(net, val_data);
        EpochReport report{epoch, static_cast<double>(correct) / n, val.accuracy, loss_sum / n, val.loss};
        history.train_accuracy.push_back(report.train_accuracy);
        history.val_accuracy.push_back(report.val_accuracy);
        history.train_loss.push_back(report.train_loss);
        history.val_loss.push_back(report.val_loss);
        if (options.on_epoch) options.on_epoch(report);
    }

    ensure_directory(options.out_dir);
    TrainResult result;
    result.model.model_id = options.model_id;
    result.model.class_set = train_set.class_set;
    result.model.config = config;
    result.model.weights_path = fs::absolute(weights_file_for(options.out_dir, options.model_id)).lexically_normal();
    result.model.train_manifest_id = train_set.manifest_id;
    result.model.nondeterministic = !config.deterministic;
    net.save(result.model.weights_path);
    save_model(result.model, options.out_dir / ("model_" + options.model_id + ".json"));
    result.history = std::move(history);
    return result;
}

// ---- prediction -----------------------------------------------------------

double PredictionTable::accuracy() const {
    if (rows.empty()) return 0.0;
    const auto correct = std::count_if(rows.begin(), rows.end(),
                                       [](const Prediction& p) { return p.ok() && p.predicted_label == p.true_label; });
    return static_cast<double>(correct) / static_cast<double>(rows.size());
}

std::size_t argmax_first(std::span<const double> scores) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) best = i;
    }
    return best;
}

PredictionTable predict_with(const std::vector<std::string>& class_set, const DatasetManifest& eval_set,
                             const Scorer& scorer) {
    const std::set<std::string> known(class_set.begin(), class_set.end());
    for (const auto& c : eval_set.class_set) {
        if (!known.contains(c)) {
            throw Error(ErrorKind::class_set_mismatch, "evaluation class '" + c + "' is unknown to the model");
        }
    }
    PredictionTable table;
    table.class_set = class_set;
    table.rows.reserve(eval_set.records.size());
    for (const auto& r : eval_set.records) {
        Prediction p;
        p.path = r.path;
        p.true_label = r.class_label;
        auto scores = scorer(r);
        if (!scores) {
            p.error = "unreadable image";
        } else if (scores->size() != class_set.size()) {
            p.error = fmt::format("scorer returned {} scores for {} classes", scores->size(), class_set.size());
        } else {
            p.scores = std::move(*scores);
            p.predicted_label = class_set[argmax_first(p.scores)];
        }
        table.rows.push_back(std::move(p));
    }
    return table;
}

PredictionTable predict(const ModelArtifact& model, const DatasetManifest& eval_set) {
    const nn::Network net = nn::Network::load(model.weights_path);
    if (net.output_shape().size() != model.class_set.size()) {
        throw Error(ErrorKind::class_set_mismatch, "weights output width does not match the model class set");
    }
    const InputSize size = model.config.input_size;
    nn::Trace trace;
    return predict_with(model.class_set, eval_set, [&](const ImageRecord& r) -> std::optional<std::vector<double>> {
        auto pixels = load_letterboxed(r.path, size.width, size.height);
        if (!pixels) return std::nullopt;
        return nn::softmax(net.forward(*pixels, trace));
    });
}

// ---- serialization --------------------------------------------------------

namespace detail {

json train_config_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"learning_rate", c.learning_rate},
            {"optimizer", to_string(c.optimizer)},
            {"leaky_slope", c.leaky_slope},
            {"backbone", to_string(c.backbone)},
            {"batch_size", c.batch_size},
            {"seed", c.seed},
            {"input_size", {c.input_size.width, c.input_size.height}},
            {"hidden_units", c.hidden_units},
            {"pretrained_path", c.pretrained_path},
            {"deterministic", c.deterministic}};
}

TrainConfig train_config_from(const json& j, const TrainConfig& defaults) {
    TrainConfig c = defaults;
    try {
        c.epochs = j.value("epochs", c.epochs);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        if (j.contains("optimizer")) c.optimizer = optimizer_from_string(j["optimizer"].get<std::string>());
        c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
        if (j.contains("backbone")) c.backbone = backbone_from_string(j["backbone"].get<std::string>());
        c.batch_size = j.value("batch_size", c.batch_size);
        c.seed = j.value("seed", c.seed);
        if (j.contains("input_size")) {
            c.input_size = {j["input_size"].at(0).get<int>(), j["input_size"].at(1).get<int>()};
        }
        c.hidden_units = j.value("hidden_units", c.hidden_units);
        c.pretrained_path = j.value("pretrained_path", c.pretrained_path);
        c.deterministic = j.value("deterministic", c.deterministic);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::config, std::string("malformed train config: ") + e.what());
    }
    return c;
}

}  // namespace detail

std::string train_config_to_json(const TrainConfig& config) { return detail::train_config_json(config).dump(2) + "\n"; }

TrainConfig train_config_from_json(const std::string& text, const TrainConfig& defaults) {
    try {
        return detail::train_config_from(json::parse(text), defaults);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::config, std::string("train config is not valid JSON: ") + e.what());
    }
}

std::string model_to_json(const ModelArtifact& model, const fs::path& descriptor_dir) {
    std::string weights = model.weights_path.generic_string();
    if (!descriptor_dir.empty()) {
        const fs::path rel =
            fs::absolute(model.weights_path).lexically_normal().lexically_relative(fs::absolute(descriptor_dir).lexically_normal());
        if (!rel.empty() && *rel.begin() != "..") weights = rel.generic_string();
    }
    json j{{"model_id", model.model_id},
           {"class_set", model.class_set},
           {"config", detail::train_config_json(model.config)},
           {"weights_path", weights},
           {"train_manifest_id", model.train_manifest_id},
           {"nondeterministic", model.nondeterministic}};
    return j.dump(2) + "\n";
}

void save_model(const ModelArtifact& model, const fs::path& descriptor) {
    write_text_file(descriptor, model_to_json(model, descriptor.has_parent_path() ? descriptor.parent_path() : "."));
}

ModelArtifact load_model(const fs::path& descriptor) {
    const std::string text = read_text_file(descriptor);
    ModelArtifact m;
    try {
        const json j = json::parse(text);
        m.model_id = j.at("model_id").get<std::string>();
        m.class_set = j.at("class_set").get<std::vector<std::string>>();
        m.config = detail::train_config_from(j.at("config"));
        fs::path w = j.at("weights_path").get<std::string>();
        if (w.is_relative()) w = (descriptor.has_parent_path() ? descriptor.parent_path() : fs::path(".")) / w;
        m.weights_path = w.lexically_normal();
        m.train_manifest_id = j.value("train_manifest_id", std::string{});
        m.nondeterministic = j.value("nondeterministic", false);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::invalid_argument, "malformed model descriptor " + descriptor.string() + ": " + e.what());
    }
    return m;
}

std::string history_to_csv(const TrainingHistory& h) {
    std::string out = "epoch,train_acc,val_acc,train_loss,val_loss\n";
    for (std::size_t i = 0; i < h.epochs(); ++i) {
        out += fmt::format("{},{},{},{},{}\n", i + 1, h.train_accuracy[i], h.val_accuracy[i], h.train_loss[i],
                           h.val_loss[i]);
    }
    return out;
}

TrainingHistory history_from_csv(const std::string& text) {
    TrainingHistory h;
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    if (line.rfind("epoch,", 0) != 0) {
        throw Error(ErrorKind::invalid_argument, "history CSV lacks the epoch header");
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 5) throw Error(ErrorKind::invalid_argument, "history CSV row needs 5 columns: " + line);
        h.train_accuracy.push_back(std::stod(f[1]));
        h.val_accuracy.push_back(std::stod(f[2]));
        h.train_loss.push_back(std::stod(f[3]));
        h.val_loss.push_back(std::stod(f[4]));
    }
    return h;
}

std::string predictions_to_csv(const PredictionTable& table) {
    std::string out = "path,true_label,predicted_label,error";
    for (const auto& c : table.class_set) out += "," + csv_field("score_" + c);
    out += "\n";
    for (const auto& r : table.rows) {
        out += fmt::format("{},{},{},{}", csv_field(r.path.generic_string()), csv_field(r.true_label),
                           csv_field(r.predicted_label), csv_field(r.error));
        for (std::size_t i = 0; i < table.class_set.size(); ++i) {
            out += i < r.scores.size() ? fmt::format(",{}", r.scores[i]) : std::string(",");
        }
        out += "\n";
    }
    return out;
}

PredictionTable predictions_from_csv(const std::string& text) {
    PredictionTable t;
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    const auto header = split_csv_line(line);
    if (header.size() < 4 || header[0] != "path") {
        throw Error(ErrorKind::invalid_argument, "predictions CSV has an unexpected header");
    }
    for (std::size_t i = 4; i < header.size(); ++i) t.class_set.push_back(header[i].substr(6));
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != header.size()) throw Error(ErrorKind::invalid_argument, "ragged predictions CSV row");
        Prediction p;
        p.path = f[0];
        p.true_label = f[1];
        p.predicted_label = f[2];
        p.error = f[3];
        if (p.ok()) {
            for (std::size_t i = 4; i < f.size(); ++i) p.scores.push_back(std::stod(f[i]));
        }
        t.rows.push_back(std::move(p));
    }
    return t;
}

}  // namespace biasforge
