#include "clear/supervised.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "clear/io.hpp"
#include "clear/tabular.hpp"

namespace clear::supervised {

std::size_t class_count(Granularity g) {
    return g == Granularity::fine15 ? tabular::kFineLevels : tabular::kCoarseLevels;
}

Granularity parse_granularity(std::string_view name) {
    if (name == "fine" || name == "fine15") return Granularity::fine15;
    if (name == "coarse" || name == "coarse5") return Granularity::coarse5;
    throw std::invalid_argument("unknown granularity '" + std::string(name) + "' (fine|coarse)");
}

std::string to_string(Granularity g) { return g == Granularity::fine15 ? "fine" : "coarse"; }

std::vector<std::string> class_names(Granularity g) {
    std::vector<std::string> out;
    if (g == Granularity::fine15) {
        for (auto t : tabular::kFineTokens) out.emplace_back(t);
    } else {
        for (auto t : tabular::kCoarseTokens) out.emplace_back(t);
    }
    return out;
}

std::vector<int> coarsen(std::span<const int> fine_ordinals) {
    std::vector<int> out(fine_ordinals.size());
    std::transform(fine_ordinals.begin(), fine_ordinals.end(), out.begin(),
                   [](int o) { return tabular::coarsen(o); });
    return out;
}

std::vector<int> target_labels(std::span<const int> fine_ordinals, Granularity g) {
    if (g == Granularity::coarse5) return coarsen(fine_ordinals);
    for (int o : fine_ordinals) tabular::BerLevel::from_ordinal(o);
    return {fine_ordinals.begin(), fine_ordinals.end()};
}

neural::DenseNet init_classifier(const ClassifierConfig& config, std::size_t input_dim, Rng& rng) {
    std::vector<std::size_t> dims{input_dim};
    dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
    dims.push_back(class_count(config.granularity));
    std::vector<neural::Activation> acts(dims.size() - 1, neural::Activation::relu);
    acts.back() = neural::Activation::identity;
    return neural::init_net(dims, acts, rng);
}

SoftmaxLoss softmax_cross_entropy(const Matrix& logits, std::span<const int> labels) {
    if (labels.size() != logits.rows()) throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
    SoftmaxLoss out{0.0, Matrix(logits.rows(), logits.cols())};
    const double inv_n = 1.0 / static_cast<double>(logits.rows());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto z = logits.row(r);
        const double mx = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - mx);
        const double lse = mx + std::log(sum);
        if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= logits.cols()) {
            throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(labels[r]) +
                                        " outside 0.." + std::to_string(logits.cols() - 1));
        }
        const auto y = static_cast<std::size_t>(labels[r]);
        out.loss += (lse - z[y]) * inv_n;
        auto g = out.grad_logits.row(r);
        for (std::size_t c = 0; c < z.size(); ++c) g[c] = (std::exp(z[c] - lse) - (c == y ? 1.0 : 0.0)) * inv_n;
    }
    return out;
}

neural::DenseNet train_classifier(const ClassifierConfig& config, const Matrix& x, std::span<const int> labels) {
    const std::size_t n_classes = class_count(config.granularity);
    if (labels.size() != x.rows()) throw std::invalid_argument("train_classifier: label count mismatch");
    if (x.rows() == 0) throw std::invalid_argument("train_classifier: empty training set");
    if (config.batch_size == 0 || config.epochs == 0) {
        throw std::invalid_argument("train_classifier: batch size and epochs must be positive");
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= n_classes) {
            throw std::invalid_argument("train_classifier: label " + std::to_string(y) + " outside 0.." +
                                        std::to_string(n_classes - 1));
        }
    }
    Rng init_rng(derive_seed(config.seed, "classifier/init"));
    auto net = init_classifier(config, x.cols(), init_rng);
    auto adam = neural::make_adam(net, config.learning_rate);
    Rng shuffle_rng(derive_seed(config.seed, "classifier/shuffle"));

    std::vector<std::size_t> order(x.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<int> batch_labels;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            batch_labels.clear();
            for (auto i : idx) batch_labels.push_back(labels[i]);
            const auto cache = neural::forward(net, x.select_rows(idx));
            const auto loss = softmax_cross_entropy(cache.output, batch_labels);
            neural::adam_step(adam, net, neural::backward(net, cache, loss.grad_logits));
        }
    }
    return net;
}

std::vector<int> predict_classes(const neural::DenseNet& net, const Matrix& x) {
    const auto logits = neural::predict(net, x);
    std::vector<int> out(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto z = logits.row(r);
        out[r] = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
    }
    return out;
}

EvalResult evaluate(std::span<const int> truth, std::span<const int> predicted, std::size_t n_classes) {
    if (truth.size() != predicted.size()) throw std::invalid_argument("evaluate: length mismatch");
    if (truth.empty()) throw std::invalid_argument("evaluate: empty evaluation set");
    EvalResult r;
    r.n = truth.size();
    r.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int t = truth[i];
        const int p = predicted[i];
        if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= n_classes || static_cast<std::size_t>(p) >= n_classes) {
            throw std::invalid_argument("evaluate: class index outside 0.." + std::to_string(n_classes - 1));
        }
        ++r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
        correct += t == p ? 1 : 0;
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n);
    double f1_sum = 0.0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        const double tp = static_cast<double>(r.confusion[c][c]);
        double support = 0.0, predicted_c = 0.0;
        for (std::size_t j = 0; j < n_classes; ++j) {
            support += static_cast<double>(r.confusion[c][j]);
            predicted_c += static_cast<double>(r.confusion[j][c]);
        }
        // F1 = 2TP / (2TP + FP + FN); zero when the denominator vanishes.
        const double denom = support + predicted_c;
        const double f1 = denom > 0.0 ? 2.0 * tp / denom : 0.0;
        r.per_class_f1.push_back(f1);
        f1_sum += f1;
    }
    r.macro_f1 = f1_sum / static_cast<double>(n_classes);
    return r;
}

EvalResult evaluate(const neural::DenseNet& net, const Matrix& x, std::span<const int> truth, Granularity g) {
    return evaluate(truth, predict_classes(net, x), class_count(g));
}

EvalResult evaluate(const trees::ForestModel& forest, const Matrix& x, std::span<const int> truth, Granularity g) {
    return evaluate(truth, trees::predict_forest(forest, x), class_count(g));
}

double adjacent_error_share(const EvalResult& result, int max_gap) {
    double off = 0.0, near = 0.0;
    const auto n = result.confusion.size();
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t p = 0; p < n; ++p) {
            if (t == p) continue;
            const double c = static_cast<double>(result.confusion[t][p]);
            off += c;
            if (std::abs(static_cast<int>(t) - static_cast<int>(p)) <= max_gap) near += c;
        }
    }
    return off > 0.0 ? near / off : 1.0;
}

std::string eval_to_json(const EvalResult& result, Granularity g, std::string_view model) {
    nlohmann::ordered_json doc;
    doc["model"] = model;
    doc["granularity"] = to_string(g);
    doc["n"] = result.n;
    doc["accuracy"] = result.accuracy;
    doc["macro_f1"] = result.macro_f1;
    doc["classes"] = class_names(g);
    doc["per_class_f1"] = result.per_class_f1;
    doc["confusion"] = result.confusion;
    return doc.dump(2) + "\n";
}

void write_eval_json(const std::filesystem::path& path, const EvalResult& result, Granularity g,
                     std::string_view model) {
    io::write_file_atomic(path, eval_to_json(result, g, model));
}

void write_confusion_csv(const std::filesystem::path& path, const EvalResult& result, Granularity g) {
    const auto names = class_names(g);
    io::CsvRow header{"truth"};
    header.insert(header.end(), names.begin(), names.end());
    std::string out = io::csv_line(header);
    for (std::size_t t = 0; t < result.confusion.size(); ++t) {
        io::CsvRow line{names[t]};
        for (auto c : result.confusion[t]) line.push_back(std::to_string(c));
        out += io::csv_line(line);
    }
    io::write_file_atomic(path, out);
}

}  // namespace clear::supervised
