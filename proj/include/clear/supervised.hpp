#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "clear/matrix.hpp"
#include "clear/neural.hpp"
#include "clear/trees.hpp"

namespace clear::supervised {

enum class Granularity { fine15, coarse5 };

std::size_t class_count(Granularity g);
Granularity parse_granularity(std::string_view name);
std::string to_string(Granularity g);
/// Level names for the classes of a granularity (A1..G or A..EFG).
std::vector<std::string> class_names(Granularity g);

/// Fine ordinals (0..14) to the target labels of a granularity.
std::vector<int> target_labels(std::span<const int> fine_ordinals, Granularity g);
std::vector<int> coarsen(std::span<const int> fine_ordinals);

struct ClassifierConfig {
    /// Hidden layers; defaults mirror the contrastive encoder (ReLU blocks
    /// ending in the 32-wide embedding) followed by a linear softmax layer.
    std::vector<std::size_t> hidden = {64, 64, 32};
    std::size_t epochs = 15;
    std::size_t batch_size = 16;
    double learning_rate = 1e-3;
    Granularity granularity = Granularity::fine15;
    std::uint64_t seed = 0;
};

neural::DenseNet init_classifier(const ClassifierConfig& config, std::size_t input_dim, Rng& rng);

struct SoftmaxLoss {
    double loss = 0.0;  // mean cross-entropy
    Matrix grad_logits;
};

SoftmaxLoss softmax_cross_entropy(const Matrix& logits, std::span<const int> labels);

/// Softmax cross-entropy with Adam over seeded mini-batches.
neural::DenseNet train_classifier(const ClassifierConfig& config, const Matrix& x, std::span<const int> labels);

/// Arg-max class, ties to the lower index.
std::vector<int> predict_classes(const neural::DenseNet& net, const Matrix& x);

struct EvalResult {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::vector<double> per_class_f1;
    std::vector<std::vector<std::size_t>> confusion;  // rows truth, columns predicted
    std::size_t n = 0;
};

/// Macro-F1 averages over all n_classes; a class with no support and no
/// predictions scores 0.
EvalResult evaluate(std::span<const int> truth, std::span<const int> predicted, std::size_t n_classes);
EvalResult evaluate(const neural::DenseNet& net, const Matrix& x, std::span<const int> truth, Granularity g);
EvalResult evaluate(const trees::ForestModel& forest, const Matrix& x, std::span<const int> truth, Granularity g);

/// Share of off-diagonal confusion mass whose |truth - predicted| <= max_gap.
double adjacent_error_share(const EvalResult& result, int max_gap);

std::string eval_to_json(const EvalResult& result, Granularity g, std::string_view model);
void write_eval_json(const std::filesystem::path& path, const EvalResult& result, Granularity g,
                     std::string_view model);
void write_confusion_csv(const std::filesystem::path& path, const EvalResult& result, Granularity g);

}  // namespace clear::supervised
