#include "clear/scarf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "clear/io.hpp"

namespace clear::scarf {

using neural::Activation;
using neural::DenseNet;

void ScarfConfig::validate() const {
    if (!(corruption_rate >= 0.0 && corruption_rate <= 1.0)) {
        throw std::invalid_argument("scarf: corruption rate must lie in [0, 1]");
    }
    if (!(temperature > 0.0)) throw std::invalid_argument("scarf: temperature must be positive");
    if (batch_size < 2) {
        throw std::invalid_argument("scarf: batch size must be at least 2 (InfoNCE needs in-batch negatives)");
    }
    if (epochs == 0) throw std::invalid_argument("scarf: epochs must be positive");
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("scarf: learning rate must be >= 0");
    if (embedding_dim == 0) throw std::invalid_argument("scarf: embedding dim must be positive");
}

std::vector<std::size_t> ScarfConfig::encoder_dims(std::size_t input_dim) const {
    std::vector<std::size_t> dims{input_dim};
    dims.insert(dims.end(), encoder_hidden.begin(), encoder_hidden.end());
    dims.push_back(embedding_dim);
    return dims;
}

std::vector<std::size_t> ScarfConfig::head_dims() const {
    std::vector<std::size_t> dims{embedding_dim};
    dims.insert(dims.end(), head_hidden.begin(), head_hidden.end());
    dims.push_back(embedding_dim);
    return dims;
}

// ---------------------------------------------------------------------------
// Corruption

MarginalSampler::MarginalSampler(const Matrix& train) {
    if (train.rows() == 0) throw std::invalid_argument("MarginalSampler: empty training matrix");
    columns_.assign(train.cols(), std::vector<double>(train.rows()));
    for (std::size_t r = 0; r < train.rows(); ++r) {
        for (std::size_t c = 0; c < train.cols(); ++c) columns_[c][r] = train(r, c);
    }
}

double MarginalSampler::draw(std::size_t col, Rng& rng) const {
    const auto& values = columns_.at(col);
    return values[rng.index(values.size())];
}

std::size_t corruption_count(double rate, std::size_t d) {
    const double raw = rate * static_cast<double>(d);
    const double k = std::ceil(raw - 1e-9);
    return std::min(d, static_cast<std::size_t>(std::max(0.0, k)));
}

std::vector<double> corrupt(std::span<const double> row, const MarginalSampler& sampler, double rate,
                            Rng& rng, std::vector<std::size_t>* replaced) {
    const std::size_t d = row.size();
    if (d != sampler.cols()) throw std::invalid_argument("corrupt: row width does not match sampler");
    std::vector<double> out(row.begin(), row.end());
    const std::size_t k = corruption_count(rate, d);
    if (k == 0) return out;
    std::vector<std::size_t> idx(d);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng.index(d - i);
        std::swap(idx[i], idx[j]);
        out[idx[i]] = sampler.draw(idx[i], rng);
        if (replaced) replaced->push_back(idx[i]);
    }
    return out;
}

Matrix corrupt_rows(const Matrix& rows, const MarginalSampler& sampler, double rate, Rng& rng) {
    Matrix out(rows.rows(), rows.cols());
    for (std::size_t r = 0; r < rows.rows(); ++r) {
        const auto c = corrupt(rows.row(r), sampler, rate, rng);
        std::copy(c.begin(), c.end(), out.row(r).begin());
    }
    return out;
}

// ---------------------------------------------------------------------------
// InfoNCE

namespace {

struct Normalized {
    Matrix unit;
    std::vector<double> norms;
};

Normalized normalize_rows(const Matrix& m) {
    Normalized n{Matrix(m.rows(), m.cols()), std::vector<double>(m.rows(), 0.0)};
    for (std::size_t r = 0; r < m.rows(); ++r) {
        double ss = 0.0;
        for (double v : m.row(r)) ss += v * v;
        const double norm = std::sqrt(ss);
        n.norms[r] = norm;
        if (norm > 0.0) {
            auto src = m.row(r);
            auto dst = n.unit.row(r);
            for (std::size_t c = 0; c < m.cols(); ++c) dst[c] = src[c] / norm;
        }
    }
    return n;
}

/// Backpropagates through u = x / ||x||. Zero rows receive zero gradient.
Matrix unnormalize_grad(const Normalized& n, const Matrix& grad_unit) {
    Matrix out(grad_unit.rows(), grad_unit.cols());
    for (std::size_t r = 0; r < grad_unit.rows(); ++r) {
        if (n.norms[r] == 0.0) continue;
        auto u = n.unit.row(r);
        auto g = grad_unit.row(r);
        double dot = 0.0;
        for (std::size_t c = 0; c < u.size(); ++c) dot += g[c] * u[c];
        auto dst = out.row(r);
        for (std::size_t c = 0; c < u.size(); ++c) dst[c] = (g[c] - dot * u[c]) / n.norms[r];
    }
    return out;
}

void check_inputs(const Matrix& a, const Matrix& p, double temperature) {
    if (a.rows() != p.rows() || a.cols() != p.cols()) {
        throw std::invalid_argument("info_nce: anchors and positives must have equal shapes");
    }
    if (a.rows() == 0) throw std::invalid_argument("info_nce: empty batch");
    if (!(temperature > 0.0)) throw std::invalid_argument("info_nce: temperature must be positive");
    if (!a.all_finite() || !p.all_finite()) throw std::domain_error("info_nce: non-finite input");
}

}  // namespace

InfoNceResult info_nce_with_grad(const Matrix& anchors, const Matrix& positives, double temperature) {
    check_inputs(anchors, positives, temperature);
    const std::size_t n = anchors.rows();
    const std::size_t d = anchors.cols();
    const auto na = normalize_rows(anchors);
    const auto np = normalize_rows(positives);

    Matrix s(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double dot = 0.0;
            auto ai = na.unit.row(i);
            auto pj = np.unit.row(j);
            for (std::size_t c = 0; c < d; ++c) dot += ai[c] * pj[c];
            s(i, j) = dot / temperature;
        }
    }

    // g(i, j) = dLoss/ds(i, j) = (softmax_ij - [i == j]) / n
    Matrix g(n, n);
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto row = s.row(i);
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double v : row) sum += std::exp(v - mx);
        const double lse = mx + std::log(sum);
        loss += lse - row[i];
        for (std::size_t j = 0; j < n; ++j) {
            g(i, j) = (std::exp(row[j] - lse) - (i == j ? 1.0 : 0.0)) * inv_n;
        }
    }
    loss *= inv_n;

    Matrix grad_ua(n, d);
    Matrix grad_up(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double gij = g(i, j) / temperature;
            if (gij == 0.0) continue;
            auto ai = na.unit.row(i);
            auto pj = np.unit.row(j);
            auto dai = grad_ua.row(i);
            auto dpj = grad_up.row(j);
            for (std::size_t c = 0; c < d; ++c) {
                dai[c] += gij * pj[c];
                dpj[c] += gij * ai[c];
            }
        }
    }
    return {loss, unnormalize_grad(na, grad_ua), unnormalize_grad(np, grad_up)};
}

double info_nce(const Matrix& anchors, const Matrix& positives, double temperature) {
    return info_nce_with_grad(anchors, positives, temperature).loss;
}

// ---------------------------------------------------------------------------
// Training

EncoderWeights init_weights(const ScarfConfig& config, std::size_t input_dim, Rng& rng) {
    // Encoder: linear+ReLU blocks throughout. Head: ReLU hidden, linear output.
    const auto enc_dims = config.encoder_dims(input_dim);
    const std::vector<Activation> enc_acts(enc_dims.size() - 1, Activation::relu);
    const auto head_dims = config.head_dims();
    std::vector<Activation> head_acts(head_dims.size() - 1, Activation::relu);
    head_acts.back() = Activation::identity;
    EncoderWeights w;
    w.encoder = neural::init_net(enc_dims, enc_acts, rng);
    w.head = neural::init_net(head_dims, head_acts, rng);
    return w;
}

BatchGradients batch_gradients(const EncoderWeights& weights, const Matrix& anchors_in,
                               const Matrix& positives_in, double temperature) {
    const auto enc_a = neural::forward(weights.encoder, anchors_in);
    const auto head_a = neural::forward(weights.head, enc_a.output);
    const auto enc_p = neural::forward(weights.encoder, positives_in);
    const auto head_p = neural::forward(weights.head, enc_p.output);

    const auto nce = info_nce_with_grad(head_a.output, head_p.output, temperature);

    BatchGradients out;
    out.loss = nce.loss;
    out.head = neural::backward(weights.head, head_a, nce.grad_anchors);
    const auto head_p_grads = neural::backward(weights.head, head_p, nce.grad_positives);
    out.encoder = neural::backward(weights.encoder, enc_a, out.head.input);
    out.encoder.add(neural::backward(weights.encoder, enc_p, head_p_grads.input));
    out.head.add(head_p_grads);
    return out;
}

namespace {

double mean_batch_loss(const EncoderWeights& w, const Matrix& x, const Matrix& x_corrupt,
                       std::size_t batch_size, double temperature) {
    double total = 0.0;
    std::size_t batches = 0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < x.rows(); start += batch_size) {
        const std::size_t end = std::min(x.rows(), start + batch_size);
        if (end - start < 2) break;
        idx.resize(end - start);
        std::iota(idx.begin(), idx.end(), start);
        const auto za = neural::predict(w.head, neural::predict(w.encoder, x.select_rows(idx)));
        const auto zp = neural::predict(w.head, neural::predict(w.encoder, x_corrupt.select_rows(idx)));
        total += info_nce(za, zp, temperature);
        ++batches;
    }
    return batches ? total / static_cast<double>(batches) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

PretrainResult pretrain(const ScarfConfig& config, const Matrix& train, const Matrix& val) {
    config.validate();
    if (train.rows() < 2) throw std::invalid_argument("pretrain: need at least 2 training rows");
    if (val.rows() > 0 && val.cols() != train.cols()) {
        throw std::invalid_argument("pretrain: validation width does not match training width");
    }
    if (!train.all_finite() || !val.all_finite()) throw std::domain_error("pretrain: non-finite input");

    Rng init_rng(derive_seed(config.seed, "scarf/init"));
    PretrainResult result;
    result.weights = init_weights(config, train.cols(), init_rng);
    auto& w = result.weights;

    const MarginalSampler sampler(train);
    Rng shuffle_rng(derive_seed(config.seed, "scarf/shuffle"));
    Rng corrupt_rng(derive_seed(config.seed, "scarf/corrupt"));
    auto adam_encoder = neural::make_adam(w.encoder, config.learning_rate);
    auto adam_head = neural::make_adam(w.head, config.learning_rate);

    // The validation pairs are corrupted from the same derived seed every
    // epoch, so they are identical across epochs.
    Matrix val_corrupt;
    if (val.rows() > 0) {
        Rng val_rng(derive_seed(config.seed, "scarf/val"));
        val_corrupt = corrupt_rows(val, sampler, config.corruption_rate, val_rng);
    }

    std::vector<std::size_t> order(train.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        shuffle_rng.shuffle(std::span<std::size_t>(order));
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            if (end - start < 2) break;
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            const Matrix anchors = train.select_rows(idx);
            const Matrix positives = corrupt_rows(anchors, sampler, config.corruption_rate, corrupt_rng);
            const auto grads = batch_gradients(w, anchors, positives, config.temperature);
            neural::adam_step(adam_encoder, w.encoder, grads.encoder);
            neural::adam_step(adam_head, w.head, grads.head);
            total += grads.loss;
            ++batches;
        }
        EpochLoss e;
        e.epoch = epoch;
        e.train_loss = total / static_cast<double>(batches);
        e.val_loss = val.rows() > 0 ? mean_batch_loss(w, val, val_corrupt, config.batch_size, config.temperature)
                                    : std::numeric_limits<double>::quiet_NaN();
        result.history.push_back(e);
    }
    return result;
}

Matrix encode(const EncoderWeights& weights, const Matrix& rows) {
    auto out = neural::predict(weights.encoder, rows);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < out.cols(); ++i) names.push_back("e" + std::to_string(i));
    out.set_col_names(std::move(names));
    return out;
}

void save_weights(const std::filesystem::path& path, const EncoderWeights& weights) {
    nlohmann::json doc;
    doc["encoder"] = neural::net_to_json(weights.encoder);
    doc["head"] = neural::net_to_json(weights.head);
    io::write_file_atomic(path, doc.dump() + "\n");
}

EncoderWeights load_weights(const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(io::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
    if (!doc.contains("encoder") || !doc.contains("head")) {
        throw std::invalid_argument(path.string() + ": expected 'encoder' and 'head' networks");
    }
    EncoderWeights w{neural::net_from_json(doc["encoder"]), neural::net_from_json(doc["head"])};
    if (w.head.input_dim() != w.encoder.output_dim()) {
        throw std::invalid_argument(path.string() + ": head input does not match encoder output");
    }
    return w;
}

void write_history_csv(const std::filesystem::path& path, std::span<const EpochLoss> history) {
    std::string out = "epoch,train_loss,val_loss\n";
    for (const auto& e : history) {
        out += std::to_string(e.epoch) + "," + io::format_double(e.train_loss) + "," +
               io::format_double(e.val_loss) + "\n";
    }
    io::write_file_atomic(path, out);
}

}  // namespace clear::scarf
