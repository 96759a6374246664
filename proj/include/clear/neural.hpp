#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "clear/matrix.hpp"
#include "clear/rng.hpp"

namespace clear::neural {

enum class Activation { relu, identity };

std::string to_string(Activation a);
Activation parse_activation(std::string_view name);

struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weights;  // out x in, row-major
    std::vector<double> bias;     // out
    Activation activation = Activation::identity;

    double& w(std::size_t o, std::size_t i) { return weights[o * in + i]; }
    double w(std::size_t o, std::size_t i) const { return weights[o * in + i]; }

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Fully connected network; layer i maps dims[i] to dims[i+1].
class DenseNet {
public:
    DenseNet() = default;
    explicit DenseNet(std::vector<DenseLayer> layers);

    std::size_t input_dim() const { return layers_.front().in; }
    std::size_t output_dim() const { return layers_.back().out; }
    std::vector<std::size_t> dims() const;
    std::size_t parameter_count() const;

    std::vector<DenseLayer>& layers() { return layers_; }
    const std::vector<DenseLayer>& layers() const { return layers_; }

    friend bool operator==(const DenseNet&, const DenseNet&) = default;

private:
    std::vector<DenseLayer> layers_;
};

/// Glorot-uniform weights, zero biases. `activations` has one entry per layer.
DenseNet init_net(std::span<const std::size_t> dims, std::span<const Activation> activations, Rng& rng);

/// Per-layer inputs and pre-activations kept for the backward pass.
struct ForwardCache {
    std::vector<Matrix> inputs;
    std::vector<Matrix> pre_activations;
    Matrix output;
};

ForwardCache forward(const DenseNet& net, const Matrix& batch);
/// Forward pass without keeping intermediates.
Matrix predict(const DenseNet& net, const Matrix& batch);

struct LayerGradient {
    std::vector<double> weights;
    std::vector<double> bias;
};

struct Gradients {
    std::vector<LayerGradient> layers;
    Matrix input;

    /// Elementwise accumulate; shapes must match.
    void add(const Gradients& other);
};

/// Gradients of a scalar loss given dLoss/dOutput. ReLU uses subgradient 0 at 0.
Gradients backward(const DenseNet& net, const ForwardCache& cache, const Matrix& grad_output);

struct AdamState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t step = 0;
    std::vector<LayerGradient> m;
    std::vector<LayerGradient> v;
};

AdamState make_adam(const DenseNet& net, double learning_rate);

/// Bias-corrected Adam update in place. Throws on a non-finite gradient,
/// naming the layer, before touching any parameter.
void adam_step(AdamState& state, DenseNet& net, const Gradients& grads);

nlohmann::json net_to_json(const DenseNet& net);
DenseNet net_from_json(const nlohmann::json& doc);
void save_net(const std::filesystem::path& path, const DenseNet& net);
DenseNet load_net(const std::filesystem::path& path);

}  // namespace clear::neural
