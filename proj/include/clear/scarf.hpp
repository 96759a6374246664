#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "clear/matrix.hpp"
#include "clear/neural.hpp"
#include "clear/rng.hpp"

namespace clear::scarf {

struct ScarfConfig {
    std::vector<std::size_t> encoder_hidden = {64, 64};
    std::size_t embedding_dim = 32;
    std::vector<std::size_t> head_hidden = {32};
    double corruption_rate = 0.3;
    double temperature = 1.0;
    std::size_t epochs = 15;
    std::size_t batch_size = 16;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;

    void validate() const;
    /// Encoder dims for a given input width: input, hidden..., embedding.
    std::vector<std::size_t> encoder_dims(std::size_t input_dim) const;
    std::vector<std::size_t> head_dims() const;
};

/// Per-column empirical marginals of the (encoded) training matrix.
class MarginalSampler {
public:
    explicit MarginalSampler(const Matrix& train);

    std::size_t cols() const { return columns_.size(); }
    double draw(std::size_t col, Rng& rng) const;

private:
    std::vector<std::vector<double>> columns_;
};

/// ceil(rate * d), guarded against representation error in rate * d.
std::size_t corruption_count(double rate, std::size_t d);

/// Replaces exactly corruption_count(rate, d) distinct, uniformly chosen
/// entries with draws from their column marginals. The replaced indices are
/// appended to `replaced` when given.
std::vector<double> corrupt(std::span<const double> row, const MarginalSampler& sampler, double rate,
                            Rng& rng, std::vector<std::size_t>* replaced = nullptr);

Matrix corrupt_rows(const Matrix& rows, const MarginalSampler& sampler, double rate, Rng& rng);

struct InfoNceResult {
    double loss = 0.0;
    Matrix grad_anchors;
    Matrix grad_positives;
};

/// Mean over i of -log softmax_j(cos(a_i, p_j) / tau)[i], with log-sum-exp
/// stabilization. Zero vectors have cosine 0 with everything.
double info_nce(const Matrix& anchors, const Matrix& positives, double temperature);
InfoNceResult info_nce_with_grad(const Matrix& anchors, const Matrix& positives, double temperature);

struct EncoderWeights {
    neural::DenseNet encoder;
    neural::DenseNet head;

    friend bool operator==(const EncoderWeights&, const EncoderWeights&) = default;
};

EncoderWeights init_weights(const ScarfConfig& config, std::size_t input_dim, Rng& rng);

struct EpochLoss {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;  // NaN when no validation batch exists
};

struct PretrainResult {
    EncoderWeights weights;
    std::vector<EpochLoss> history;
};

/// Contrastive pretraining: each batch contrasts head(encoder(x)) with
/// head(encoder(corrupt(x))) over in-batch negatives. Returns the weights
/// after the last epoch.
PretrainResult pretrain(const ScarfConfig& config, const Matrix& train, const Matrix& val);

/// One loss/gradient evaluation on a batch and its corrupted view; exposed
/// so the full encoder+head+loss chain can be gradient-checked.
struct BatchGradients {
    double loss = 0.0;
    neural::Gradients encoder;
    neural::Gradients head;
};
BatchGradients batch_gradients(const EncoderWeights& weights, const Matrix& anchors_in,
                               const Matrix& positives_in, double temperature);

/// Encoder output only (no head).
Matrix encode(const EncoderWeights& weights, const Matrix& rows);

void save_weights(const std::filesystem::path& path, const EncoderWeights& weights);
EncoderWeights load_weights(const std::filesystem::path& path);
void write_history_csv(const std::filesystem::path& path, std::span<const EpochLoss> history);

}  // namespace clear::scarf
