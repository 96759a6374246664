#include "clear/neural.hpp"

#include <cmath>
#include <stdexcept>

#include "clear/io.hpp"

namespace clear::neural {

namespace {

constexpr int kWeightsVersion = 1;

void check_finite(const std::vector<double>& values, std::size_t layer, const char* what) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw std::domain_error("adam_step: non-finite " + std::string(what) + " gradient in layer " +
                                    std::to_string(layer));
        }
    }
}

}  // namespace

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

Activation parse_activation(std::string_view name) {
    if (name == "relu") return Activation::relu;
    if (name == "identity") return Activation::identity;
    throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

DenseNet::DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw std::invalid_argument("DenseNet: no layers");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        if (l.in == 0 || l.out == 0) throw std::invalid_argument("DenseNet: zero-sized layer");
        if (l.weights.size() != l.in * l.out || l.bias.size() != l.out) {
            throw std::invalid_argument("DenseNet: layer " + std::to_string(i) + " parameter shape mismatch");
        }
        if (i > 0 && layers_[i - 1].out != l.in) {
            throw std::invalid_argument("DenseNet: layer " + std::to_string(i) + " does not chain");
        }
    }
}

std::vector<std::size_t> DenseNet::dims() const {
    std::vector<std::size_t> d{layers_.front().in};
    for (const auto& l : layers_) d.push_back(l.out);
    return d;
}

std::size_t DenseNet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
    return n;
}

DenseNet init_net(std::span<const std::size_t> dims, std::span<const Activation> activations, Rng& rng) {
    if (dims.size() < 2) throw std::invalid_argument("init_net: need at least an input and an output dim");
    if (activations.size() != dims.size() - 1) {
        throw std::invalid_argument("init_net: need one activation per layer");
    }
    for (auto d : dims) {
        if (d == 0) throw std::invalid_argument("init_net: dimensions must be positive");
    }
    std::vector<DenseLayer> layers;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        DenseLayer l;
        l.in = dims[i];
        l.out = dims[i + 1];
        l.activation = activations[i];
        const double limit = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
        l.weights.resize(l.in * l.out);
        for (auto& w : l.weights) w = rng.uniform(-limit, limit);
        l.bias.assign(l.out, 0.0);
        layers.push_back(std::move(l));
    }
    return DenseNet(std::move(layers));
}

namespace {

// out = in * W^T + b
Matrix affine(const DenseLayer& layer, const Matrix& in) {
    Matrix out(in.rows(), layer.out);
    for (std::size_t r = 0; r < in.rows(); ++r) {
        const double* x = in.row(r).data();
        double* y = out.row(r).data();
        for (std::size_t o = 0; o < layer.out; ++o) {
            const double* w = layer.weights.data() + o * layer.in;
            double acc = layer.bias[o];
            for (std::size_t i = 0; i < layer.in; ++i) acc += w[i] * x[i];
            y[o] = acc;
        }
    }
    return out;
}

void activate(Activation a, Matrix& m) {
    if (a == Activation::relu) {
        for (auto& v : m.values()) v = v > 0.0 ? v : 0.0;
    }
}

}  // namespace

ForwardCache forward(const DenseNet& net, const Matrix& batch) {
    if (batch.cols() != net.input_dim()) {
        throw std::invalid_argument("forward: batch width " + std::to_string(batch.cols()) +
                                    " does not match input dim " + std::to_string(net.input_dim()));
    }
    ForwardCache cache;
    Matrix current = batch;
    for (const auto& layer : net.layers()) {
        Matrix pre = affine(layer, current);
        cache.inputs.push_back(std::move(current));
        current = pre;
        activate(layer.activation, current);
        cache.pre_activations.push_back(std::move(pre));
    }
    cache.output = std::move(current);
    return cache;
}

Matrix predict(const DenseNet& net, const Matrix& batch) {
    if (batch.cols() != net.input_dim()) {
        throw std::invalid_argument("predict: batch width " + std::to_string(batch.cols()) +
                                    " does not match input dim " + std::to_string(net.input_dim()));
    }
    Matrix current = batch;
    for (const auto& layer : net.layers()) {
        current = affine(layer, current);
        activate(layer.activation, current);
    }
    return current;
}

void Gradients::add(const Gradients& other) {
    if (other.layers.size() != layers.size()) throw std::invalid_argument("Gradients::add: layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto& a = layers[l];
        const auto& b = other.layers[l];
        if (a.weights.size() != b.weights.size() || a.bias.size() != b.bias.size()) {
            throw std::invalid_argument("Gradients::add: shape mismatch");
        }
        for (std::size_t i = 0; i < a.weights.size(); ++i) a.weights[i] += b.weights[i];
        for (std::size_t i = 0; i < a.bias.size(); ++i) a.bias[i] += b.bias[i];
    }
}

Gradients backward(const DenseNet& net, const ForwardCache& cache, const Matrix& grad_output) {
    const auto& layers = net.layers();
    if (cache.inputs.size() != layers.size()) throw std::invalid_argument("backward: cache does not match net");
    if (grad_output.rows() != cache.output.rows() || grad_output.cols() != cache.output.cols()) {
        throw std::invalid_argument("backward: output gradient shape mismatch");
    }
    Gradients grads;
    grads.layers.resize(layers.size());
    Matrix delta = grad_output;
    for (std::size_t li = layers.size(); li-- > 0;) {
        const auto& layer = layers[li];
        const auto& pre = cache.pre_activations[li];
        const auto& in = cache.inputs[li];
        if (layer.activation == Activation::relu) {
            auto& dv = delta.values();
            const auto& pv = pre.values();
            for (std::size_t i = 0; i < dv.size(); ++i) {
                if (!(pv[i] > 0.0)) dv[i] = 0.0;
            }
        }
        auto& g = grads.layers[li];
        g.weights.assign(layer.weights.size(), 0.0);
        g.bias.assign(layer.out, 0.0);
        Matrix next(delta.rows(), layer.in);
        for (std::size_t r = 0; r < delta.rows(); ++r) {
            const double* d = delta.row(r).data();
            const double* x = in.row(r).data();
            double* dx = next.row(r).data();
            for (std::size_t o = 0; o < layer.out; ++o) {
                const double dov = d[o];
                g.bias[o] += dov;
                if (dov == 0.0) continue;
                double* gw = g.weights.data() + o * layer.in;
                const double* w = layer.weights.data() + o * layer.in;
                for (std::size_t i = 0; i < layer.in; ++i) {
                    gw[i] += dov * x[i];
                    dx[i] += dov * w[i];
                }
            }
        }
        delta = std::move(next);
    }
    grads.input = std::move(delta);
    return grads;
}

AdamState make_adam(const DenseNet& net, double learning_rate) {
    AdamState s;
    s.learning_rate = learning_rate;
    for (const auto& l : net.layers()) {
        s.m.push_back({std::vector<double>(l.weights.size(), 0.0), std::vector<double>(l.bias.size(), 0.0)});
        s.v.push_back({std::vector<double>(l.weights.size(), 0.0), std::vector<double>(l.bias.size(), 0.0)});
    }
    return s;
}

void adam_step(AdamState& state, DenseNet& net, const Gradients& grads) {
    auto& layers = net.layers();
    if (grads.layers.size() != layers.size() || state.m.size() != layers.size()) {
        throw std::invalid_argument("adam_step: layer count mismatch");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (grads.layers[l].weights.size() != layers[l].weights.size() ||
            grads.layers[l].bias.size() != layers[l].bias.size()) {
            throw std::invalid_argument("adam_step: gradient shape mismatch in layer " + std::to_string(l));
        }
        check_finite(grads.layers[l].weights, l, "weight");
        check_finite(grads.layers[l].bias, l, "bias");
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                      std::vector<double>& v) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            p[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    };
    for (std::size_t l = 0; l < layers.size(); ++l) {
        update(layers[l].weights, grads.layers[l].weights, state.m[l].weights, state.v[l].weights);
        update(layers[l].bias, grads.layers[l].bias, state.m[l].bias, state.v[l].bias);
    }
}

nlohmann::json net_to_json(const DenseNet& net) {
    nlohmann::json doc;
    doc["version"] = kWeightsVersion;
    doc["dims"] = net.dims();
    doc["activations"] = nlohmann::json::array();
    doc["layers"] = nlohmann::json::array();
    for (const auto& l : net.layers()) {
        doc["activations"].push_back(to_string(l.activation));
        doc["layers"].push_back({{"rows", l.out}, {"cols", l.in}, {"w", l.weights}, {"b", l.bias}});
    }
    return doc;
}

DenseNet net_from_json(const nlohmann::json& doc) {
    try {
        if (!doc.contains("version") || doc.at("version").get<int>() != kWeightsVersion) {
            throw std::invalid_argument("weights: missing or unsupported version");
        }
        const auto dims = doc.at("dims").get<std::vector<std::size_t>>();
        const auto acts = doc.at("activations").get<std::vector<std::string>>();
        const auto& layers_doc = doc.at("layers");
        if (dims.size() != layers_doc.size() + 1 || acts.size() != layers_doc.size()) {
            throw std::invalid_argument("weights: dims/activations/layers disagree");
        }
        std::vector<DenseLayer> layers;
        for (std::size_t i = 0; i < layers_doc.size(); ++i) {
            DenseLayer l;
            l.out = layers_doc[i].at("rows").get<std::size_t>();
            l.in = layers_doc[i].at("cols").get<std::size_t>();
            if (l.in != dims[i] || l.out != dims[i + 1]) {
                throw std::invalid_argument("weights: layer " + std::to_string(i) + " shape disagrees with dims");
            }
            l.weights = layers_doc[i].at("w").get<std::vector<double>>();
            l.bias = layers_doc[i].at("b").get<std::vector<double>>();
            l.activation = parse_activation(acts[i]);
            for (double v : l.weights) {
                if (!std::isfinite(v)) throw std::invalid_argument("weights: non-finite parameter");
            }
            layers.push_back(std::move(l));
        }
        return DenseNet(std::move(layers));
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("weights: ") + e.what());
    }
}

void save_net(const std::filesystem::path& path, const DenseNet& net) {
    io::write_file_atomic(path, net_to_json(net).dump() + "\n");
}

DenseNet load_net(const std::filesystem::path& path) {
    return net_from_json(nlohmann::json::parse(io::read_file(path)));
}

}  // namespace clear::neural
