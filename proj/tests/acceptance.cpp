// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "clear/audit.hpp"
#include "clear/io.hpp"
#include "clear/latent.hpp"
#include "clear/preprocess.hpp"
#include "clear/scarf.hpp"
#include "clear/supervised.hpp"
#include "clear/synth.hpp"
#include "clear/tabular.hpp"
#include "test_support.hpp"

using namespace clear;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and thresholds.
constexpr double kGradRelTol = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr double kGradFloor = 1e-6;  // denominator floor for near-zero gradients
constexpr double kInfoNceTol = 1e-9;
constexpr double kMomentTol = 1e-9;
constexpr double kOrthoTol = 1e-8;
constexpr double kEigenTol = 1e-6;
constexpr double kEigenFloorTol = -1e-10;
constexpr double kProjectionTol = 1e-8;
constexpr std::size_t kPcaTrials = 20;
constexpr std::size_t kKnnStores = 100;
constexpr std::size_t kKnnMaxRows = 500;

// End-to-end detection run. The recall/precision bounds were calibrated once
// from a pilot run of this exact configuration (recall 1.00, precision 2.28x
// the base rate) and pinned here.
constexpr std::size_t kDetectRows = 5000;
constexpr std::uint64_t kDetectSeed = 7;
constexpr double kDetectNoise = 0.05;
constexpr std::size_t kAuditK = 10;
constexpr int kAuditThreshold = 3;
constexpr double kMinRecall = 0.6;
constexpr double kMinPrecisionLift = 2.2;

constexpr double kMaxLossRatio = 0.8;
constexpr double kMinAdjacentShare = 0.6;
constexpr int kAdjacentGap = 2;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double rel_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max(kGradFloor, std::abs(analytic) + std::abs(numeric));
}

std::string fmt(double v, int precision = 4) {
    std::ostringstream s;
    s.precision(precision);
    s << v;
    return s.str();
}

// ---------------------------------------------------------------------------
// 1. Gradients

double check_params(neural::DenseNet& net, const neural::Gradients& grads, const std::function<double()>& loss) {
    double worst = 0.0;
    for (std::size_t li = 0; li < net.layers().size(); ++li) {
        auto& layer = net.layers()[li];
        auto probe = [&](std::vector<double>& params, const std::vector<double>& analytic) {
            for (std::size_t k = 0; k < params.size(); ++k) {
                const double orig = params[k];
                params[k] = orig + kGradStep;
                const double up = loss();
                params[k] = orig - kGradStep;
                const double down = loss();
                params[k] = orig;
                worst = std::max(worst, rel_error(analytic[k], (up - down) / (2 * kGradStep)));
            }
        };
        probe(layer.weights, grads.layers[li].weights);
        probe(layer.bias, grads.layers[li].bias);
    }
    return worst;
}

Outcome criterion_gradients() {
    Rng rng(101);
    const std::size_t d = 26;
    const auto anchors = testing::random_matrix(8, d, rng, 1.0);
    const auto positives = testing::random_matrix(8, d, rng, 1.0);

    scarf::ScarfConfig cfg;
    auto w = scarf::init_weights(cfg, d, rng);
    const auto g = scarf::batch_gradients(w, anchors, positives, cfg.temperature);
    auto chain_loss = [&] { return scarf::batch_gradients(w, anchors, positives, cfg.temperature).loss; };
    const double enc = check_params(w.encoder, g.encoder, chain_loss);
    const double head = check_params(w.head, g.head, chain_loss);

    supervised::ClassifierConfig ccfg;
    auto net = supervised::init_classifier(ccfg, d, rng);
    std::vector<int> y(8);
    for (auto& v : y) v = static_cast<int>(rng.index(15));
    const auto cache = neural::forward(net, anchors);
    const auto cg = neural::backward(net, cache, supervised::softmax_cross_entropy(cache.output, y).grad_logits);
    const double cls = check_params(
        net, cg, [&] { return supervised::softmax_cross_entropy(neural::predict(net, anchors), y).loss; });

    const double worst = std::max({enc, head, cls});
    return {worst < kGradRelTol, "max relative error encoder " + fmt(enc, 3) + ", head " + fmt(head, 3) +
                                     ", classifier " + fmt(cls, 3) + " (bound " + fmt(kGradRelTol) + ")"};
}

// ---------------------------------------------------------------------------
// 2. InfoNCE identities

Outcome criterion_info_nce() {
    Matrix one(1, 4);
    one(0, 0) = 0.3;
    one(0, 2) = -1.2;
    const double single = scarf::info_nce(one, one, 1.0);

    Matrix same(16, 8);
    for (std::size_t r = 0; r < 16; ++r) {
        for (std::size_t c = 0; c < 8; ++c) same(r, c) = 0.5 + static_cast<double>(c);
    }
    const double uniform = scarf::info_nce(same, same, 1.0);

    Matrix ortho(2, 2);
    ortho(0, 0) = 1.0;
    ortho(1, 1) = 1.0;
    const double two = scarf::info_nce(ortho, ortho, 1.0);

    const bool pass = single == 0.0 && std::abs(uniform - std::log(16.0)) < kInfoNceTol &&
                      std::abs(two - std::log1p(std::exp(-1.0))) < kInfoNceTol;
    return {pass, "N=1 loss " + fmt(single) + ", 16 equal " + fmt(uniform, 12) + ", orthogonal pair " + fmt(two, 12)};
}

// ---------------------------------------------------------------------------
// 3. Preprocessing

Outcome criterion_preprocess() {
    synth::SynthConfig cfg;
    cfg.n_rows = 2000;
    cfg.seed = 3;
    const auto data = synth::generate(cfg);
    const auto parts = tabular::split(data.table, tabular::SplitSpec{0.8, 0.1, 0.1, 3});
    const auto state = preprocess::fit(parts.train, 1.5);
    const auto train = preprocess::transform(state, parts.train);
    const std::size_t n = train.rows();

    double worst_mean = 0.0, worst_sd = 0.0;
    for (std::size_t c = 0; c < state.numeric.size(); ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < n; ++r) mean += train(r, c);
        mean /= static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t r = 0; r < n; ++r) ss += (train(r, c) - mean) * (train(r, c) - mean);
        worst_mean = std::max(worst_mean, std::abs(mean));
        if (!state.numeric[c].constant) worst_sd = std::max(worst_sd, std::abs(std::sqrt(ss / n) - 1.0));
    }

    bool onehot_ok = true;
    auto check_onehot = [&](const Matrix& m) {
        std::size_t offset = state.numeric.size();
        for (const auto& cat : state.categorical) {
            for (std::size_t r = 0; r < m.rows(); ++r) {
                double s = 0.0;
                for (std::size_t j = 0; j < cat.vocabulary.size(); ++j) s += m(r, offset + j);
                onehot_ok = onehot_ok && (s == 0.0 || s == 1.0);
            }
            offset += cat.vocabulary.size();
        }
    };
    check_onehot(train);
    check_onehot(preprocess::transform(state, parts.test));

    bool clip_ok = true;
    const auto clean = preprocess::clean_numeric(state, data.table);
    for (std::size_t c = 0; c < state.numeric.size(); ++c) {
        for (std::size_t r = 0; r < clean.rows(); ++r) {
            clip_ok = clip_ok && clean(r, c) >= state.numeric[c].lower_fence &&
                      clean(r, c) <= state.numeric[c].upper_fence;
        }
    }

    testing::TempDir dir("clear-accept");
    preprocess::save_state(dir / "state.json", state);
    const auto loaded = preprocess::load_state(dir / "state.json", data.table.schema());
    const bool roundtrip = preprocess::transform(loaded, data.table) == preprocess::transform(state, data.table);

    const bool pass = worst_mean < kMomentTol && worst_sd < kMomentTol && onehot_ok && clip_ok && roundtrip;
    return {pass, "max |mean| " + fmt(worst_mean, 3) + ", max |sd-1| " + fmt(worst_sd, 3) + ", one-hot " +
                      (onehot_ok ? "ok" : "bad") + ", fences " + (clip_ok ? "ok" : "bad") + ", save/load " +
                      (roundtrip ? "bit-identical" : "differs")};
}

// ---------------------------------------------------------------------------
// 4. PCA

Outcome criterion_pca() {
    Rng rng(404);
    double worst_ortho = 0.0, worst_eig = 0.0, worst_shift = 0.0;
    bool ordered = true;
    for (std::size_t t = 0; t < kPcaTrials; ++t) {
        const auto x = testing::random_matrix(50, 32, rng, 1.0 + static_cast<double>(t) * 0.1);
        const auto basis = latent::pca_fit(x, 32);
        for (std::size_t i = 0; i < 32; ++i) {
            if (i > 0) ordered = ordered && basis.eigenvalues[i] <= basis.eigenvalues[i - 1];
            ordered = ordered && basis.eigenvalues[i] >= kEigenFloorTol;
            for (std::size_t j = i; j < 32; ++j) {
                double dot = 0.0;
                for (std::size_t c = 0; c < 32; ++c) dot += basis.components(i, c) * basis.components(j, c);
                worst_ortho = std::max(worst_ortho, std::abs(dot - (i == j ? 1.0 : 0.0)));
            }
        }

        Eigen::MatrixXd e(50, 32);
        for (Eigen::Index r = 0; r < 50; ++r) {
            for (Eigen::Index c = 0; c < 32; ++c) e(r, c) = x(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
        }
        const Eigen::MatrixXd centred = e.rowwise() - e.colwise().mean();
        const Eigen::MatrixXd cov = centred.transpose() * centred / 49.0;
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov, Eigen::EigenvaluesOnly);
        for (std::size_t i = 0; i < 32; ++i) {
            const double ref = solver.eigenvalues()(31 - static_cast<Eigen::Index>(i));
            worst_eig = std::max(worst_eig, std::abs(basis.eigenvalues[i] - ref));
        }

        auto shifted = x;
        for (std::size_t r = 0; r < 50; ++r) {
            for (std::size_t c = 0; c < 32; ++c) shifted(r, c) += 3.0 - 0.25 * static_cast<double>(c);
        }
        const auto b2 = latent::pca_fit(x, 2);
        const auto p1 = latent::pca_project(b2, x);
        const auto p2 = latent::pca_project(latent::pca_fit(shifted, 2), shifted);
        for (std::size_t k = 0; k < p1.values().size(); ++k) {
            worst_shift = std::max(worst_shift, std::abs(p1.values()[k] - p2.values()[k]));
        }
    }
    const bool pass = worst_ortho < kOrthoTol && worst_eig < kEigenTol && ordered && worst_shift < kProjectionTol;
    return {pass, std::to_string(kPcaTrials) + " trials: orthonormality " + fmt(worst_ortho, 3) +
                      ", eigenvalue gap vs reference solver " + fmt(worst_eig, 3) + ", ordering " +
                      (ordered ? "ok" : "bad") + ", translation drift " + fmt(worst_shift, 3)};
}

// ---------------------------------------------------------------------------
// 5. k-NN

Outcome criterion_knn() {
    Rng rng(505);
    std::size_t mismatches = 0, queries = 0;
    for (std::size_t s = 0; s < kKnnStores; ++s) {
        const std::size_t n = 12 + rng.index(kKnnMaxRows - 11);
        const std::size_t d = 1 + rng.index(32);
        auto x = testing::random_matrix(n, d, rng, 1.0);
        if (s % 3 == 0) {
            for (auto& v : x.values()) v = std::round(v * 2.0);  // ties
        }
        std::vector<std::string> ids(n);
        for (std::size_t i = 0; i < n; ++i) ids[i] = "n" + std::to_string(rng.next_u64() % 1000000) + "_" + std::to_string(i);
        const latent::EmbeddingStore store(ids, x);
        const std::size_t k = std::min<std::size_t>(10, n - 1);
        for (std::size_t q = 0; q < n; q += std::max<std::size_t>(1, n / 10)) {
            std::vector<std::pair<double, std::string>> all;
            for (std::size_t i = 0; i < n; ++i) {
                if (i == q) continue;
                double d2 = 0.0;
                for (std::size_t c = 0; c < d; ++c) d2 += (x(i, c) - x(q, c)) * (x(i, c) - x(q, c));
                all.emplace_back(std::sqrt(d2), ids[i]);
            }
            std::sort(all.begin(), all.end());
            const auto got = latent::knn(store, ids[q], k);
            ++queries;
            bool same = got.size() == k;
            for (std::size_t i = 0; same && i < k; ++i) {
                same = got[i].id == all[i].second && got[i].distance == all[i].first;
            }
            mismatches += same ? 0 : 1;
        }
    }
    return {mismatches == 0, std::to_string(kKnnStores) + " stores, " + std::to_string(queries) + " queries, " +
                                 std::to_string(mismatches) + " mismatches against the full-sort oracle"};
}

// ---------------------------------------------------------------------------
// 6. Split sizes

Outcome criterion_split() {
    std::size_t bad = 0;
    tabular::SplitSpec spec{0.8, 0.1, 0.1, 66};
    for (std::size_t n = 3; n <= 1000; ++n) {
        const auto val = static_cast<std::size_t>(std::floor(0.1 * static_cast<double>(n) + 0.5));
        const auto test = val;
        const auto train = n - val - test;
        if (val == 0 || test == 0 || train == 0) {
            try {
                tabular::split_indices(n, spec);
                ++bad;
            } catch (const std::invalid_argument&) {
            }
            continue;
        }
        const auto idx = tabular::split_indices(n, spec);
        std::vector<std::size_t> all;
        all.insert(all.end(), idx.train.begin(), idx.train.end());
        all.insert(all.end(), idx.val.begin(), idx.val.end());
        all.insert(all.end(), idx.test.begin(), idx.test.end());
        std::sort(all.begin(), all.end());
        std::vector<std::size_t> expect(n);
        std::iota(expect.begin(), expect.end(), std::size_t{0});
        if (idx.train.size() != train || idx.val.size() != val || idx.test.size() != test || all != expect) ++bad;
    }
    const auto big = tabular::split_sizes(112528, spec);
    const bool big_ok = big.train == 90022 && big.val == 11253 && big.test == 11253;
    return {bad == 0 && big_ok, std::to_string(bad) + " violations over n=3..1000; n=112528 -> " +
                                    std::to_string(big.train) + "/" + std::to_string(big.val) + "/" +
                                    std::to_string(big.test)};
}

// ---------------------------------------------------------------------------
// Pipeline driven through the command-line tool

int run_cli(const std::string& args) {
    const std::string cmd = std::string("CLEAR_AUDIT_LOG=error ") + CLEAR_AUDIT_BIN + " " + args;
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

bool run_pipeline(const fs::path& root, const fs::path& config) {
    const std::string r = root.string();
    const std::string c = " --config " + config.string();
    return run_cli("synth" + c + " --out " + r + "/data") == 0 &&
           run_cli("preprocess" + c + " --data " + r + "/data/data.csv --schema " + r + "/data/schema.json --out " +
                   r + "/prep") == 0 &&
           run_cli("pretrain" + c + " --features " + r + "/prep/features.csv --split " + r +
                   "/prep/split.csv --out " + r + "/model") == 0 &&
           run_cli("embed" + c + " --features " + r + "/prep/features.csv --weights " + r +
                   "/model/encoder.json --data " + r + "/data/data.csv --schema " + r + "/data/schema.json --out " +
                   r + "/embeddings.csv") == 0 &&
           run_cli("audit" + c + " --embeddings " + r + "/embeddings.csv --out " + r + "/audit") == 0;
}

struct PipelineRuns {
    bool ok = false;
    fs::path first, second;
};

// ---------------------------------------------------------------------------
// 7. Detection

Outcome criterion_detection(const PipelineRuns& runs) {
    if (!runs.ok) return {false, "pipeline run failed"};
    const auto truth = synth::read_ground_truth(runs.first / "data/ground_truth.csv");
    std::map<std::string, bool> noised;
    for (const auto& g : truth) noised[g.id] = g.label_noised;
    const auto rows = io::parse_csv(io::read_file(runs.first / "audit/audit_report.csv"));
    std::size_t flagged = 0, hits = 0, total_noised = 0, audited = 0;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const bool is_noised = noised.at(rows[r][0]);
        const bool is_flagged = rows[r][3] == "1";
        ++audited;
        total_noised += is_noised;
        flagged += is_flagged;
        hits += is_noised && is_flagged;
    }
    const double recall = total_noised ? static_cast<double>(hits) / total_noised : 0.0;
    const double precision = flagged ? static_cast<double>(hits) / flagged : 0.0;
    const double base = static_cast<double>(total_noised) / audited;
    const double lift = precision / base;
    const bool pass = audited == kDetectRows && recall >= kMinRecall && lift >= kMinPrecisionLift;
    return {pass, "recall " + fmt(recall) + " (min " + fmt(kMinRecall) + "), precision " + fmt(precision) + " = " +
                      fmt(lift, 3) + "x base rate " + fmt(base) + " (min " + fmt(kMinPrecisionLift) + "x), " +
                      std::to_string(flagged) + " flagged"};
}

// ---------------------------------------------------------------------------
// 8. Training progress

Outcome criterion_progress(const PipelineRuns& runs) {
    if (!runs.ok) return {false, "pipeline run failed"};
    const auto rows = io::parse_csv(io::read_file(runs.first / "model/history.csv"));
    if (rows.size() < 3) return {false, "history too short"};
    const double first = *io::parse_double(rows[1][1]);
    const double last = *io::parse_double(rows.back()[1]);
    const double ratio = last / first;
    return {ratio <= kMaxLossRatio, "epoch 1 loss " + fmt(first) + ", epoch " + rows.back()[0] + " loss " +
                                        fmt(last) + ", ratio " + fmt(ratio) + " (max " + fmt(kMaxLossRatio) + ")"};
}

// ---------------------------------------------------------------------------
// 9. Supervised trend

Outcome criterion_trend(const PipelineRuns& runs) {
    if (!runs.ok) return {false, "pipeline run failed"};
    const std::string r = runs.first.string();
    if (run_cli("baseline --config " + r + "/config.json --model mlp --data " + r + "/data/data.csv --schema " + r +
                "/data/schema.json --state " + r + "/prep/state.json --split " + r + "/prep/split.csv --out " + r +
                "/baseline") != 0) {
        return {false, "baseline run failed"};
    }
    const auto fine = nlohmann::json::parse(io::read_file(runs.first / "baseline/eval_mlp_fine.json"));
    const auto coarse = nlohmann::json::parse(io::read_file(runs.first / "baseline/eval_mlp_coarse.json"));
    supervised::EvalResult fine_result;
    fine_result.confusion = fine["confusion"].get<std::vector<std::vector<std::size_t>>>();
    const double share = supervised::adjacent_error_share(fine_result, kAdjacentGap);
    const double fa = fine["accuracy"].get<double>();
    const double ca = coarse["accuracy"].get<double>();
    return {ca > fa && share >= kMinAdjacentShare,
            "accuracy fine " + fmt(fa) + " vs coarse " + fmt(ca) + "; off-diagonal mass within " +
                std::to_string(kAdjacentGap) + " levels " + fmt(share) + " (min " + fmt(kMinAdjacentShare) + ")"};
}

// ---------------------------------------------------------------------------
// 10. Determinism

Outcome criterion_determinism(const PipelineRuns& runs) {
    if (!runs.ok) return {false, "pipeline run failed"};
    bool same = true;
    std::string detail;
    for (const char* file : {"embeddings.csv", "audit/audit_report.csv", "audit/audit_summary.json",
                             "model/encoder.json"}) {
        const bool eq = io::read_file(runs.first / file) == io::read_file(runs.second / file);
        same = same && eq;
        detail += std::string(detail.empty() ? "" : ", ") + file + (eq ? " identical" : " differs");
    }
    return {same, detail};
}

// ---------------------------------------------------------------------------
// 11. Audit monotonicity

Outcome criterion_monotone(const PipelineRuns& runs) {
    std::vector<latent::EmbeddingStore> stores;
    if (runs.ok) stores.push_back(latent::read_embeddings_csv(runs.first / "embeddings.csv"));
    Rng rng(1111);
    for (int s = 0; s < 5; ++s) {
        const std::size_t n = 50 + rng.index(200);
        std::vector<std::string> ids;
        std::vector<std::optional<tabular::BerLevel>> labels;
        for (std::size_t i = 0; i < n; ++i) {
            ids.push_back("s" + std::to_string(i));
            labels.push_back(tabular::BerLevel::from_ordinal(static_cast<int>(rng.index(15))));
        }
        stores.emplace_back(ids, testing::random_matrix(n, 4, rng, 1.0), labels);
    }
    std::size_t violations = 0;
    for (const auto& store : stores) {
        audit::AuditConfig cfg;
        cfg.k = std::min<std::size_t>(kAuditK, store.size() - 1);
        // Spreads do not depend on the threshold, so one pass gives every count.
        cfg.spread_threshold = 1;
        const auto report = audit::audit_all(store, cfg);
        std::size_t previous = report.findings.size() + 1;
        for (int t = 1; t <= 14; ++t) {
            cfg.spread_threshold = t;
            const std::size_t flagged = t == 1 ? report.n_flagged : audit::audit_all(store, cfg).n_flagged;
            violations += flagged > previous;
            previous = flagged;
        }
    }
    return {violations == 0 && runs.ok,
            std::to_string(stores.size()) + " stores, thresholds 1..14, " + std::to_string(violations) + " increases"};
}

}  // namespace

int main() {
    const auto start = std::chrono::steady_clock::now();
    testing::TempDir work("clear-acceptance");

    PipelineRuns runs;
    runs.first = work / "run1";
    runs.second = work / "run2";
    nlohmann::json config = {
        {"seed", kDetectSeed},
        {"synth", {{"n", kDetectRows}, {"label-noise", kDetectNoise}, {"feature-corruption", kDetectNoise}}},
        {"audit", {{"k", kAuditK}, {"threshold", kAuditThreshold}}},
    };
    runs.ok = true;
    for (const auto& root : {runs.first, runs.second}) {
        fs::create_directories(root);
        io::write_file_atomic(root / "config.json", config.dump(2));
        runs.ok = runs.ok && run_pipeline(root, root / "config.json");
    }

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient correctness", criterion_gradients},
        {"InfoNCE identities", criterion_info_nce},
        {"preprocessing invariants", criterion_preprocess},
        {"PCA", criterion_pca},
        {"exact k-NN", criterion_knn},
        {"split sizes", criterion_split},
        {"end-to-end detection", [&] { return criterion_detection(runs); }},
        {"training progress", [&] { return criterion_progress(runs); }},
        {"coarse vs fine trend", [&] { return criterion_trend(runs); }},
        {"determinism", [&] { return criterion_determinism(runs); }},
        {"audit monotonicity", [&] { return criterion_monotone(runs); }},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += o.pass ? 0 : 1;
        std::printf("criterion %2zu %s  %s: %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                    o.detail.c_str());
        std::fflush(stdout);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%d of %zu criteria failed (%.1f s)\n", failures, criteria.size(), secs);
    return failures == 0 ? 0 : 1;
}
