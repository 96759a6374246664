// clear-audit: command-line driver for the rating audit pipeline.

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
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
#include "clear/trees.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace clear;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

// Reads nested JSON objects into CLI11 config items. Top-level keys address
// global options; an object keyed by a subcommand name addresses its options.
class JsonConfig : public CLI::Config {
public:
    std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
        return dump(app, default_also).dump(2) + "\n";
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        json doc;
        try {
            input >> doc;
        } catch (const json::exception& e) {
            throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
        }
        if (!doc.is_object()) throw CLI::ConversionError("config must be a JSON object");
        std::vector<CLI::ConfigItem> items;
        flatten(doc, "", {}, items);
        return items;
    }

private:
    static json dump(const CLI::App* app, bool default_also) {
        json doc = json::object();
        for (const CLI::Option* opt : app->get_options({})) {
            if (!opt->get_configurable() || opt->get_single_name() == "help") continue;
            const std::string name = opt->get_single_name();
            if (opt->count() > 0) {
                const auto& results = opt->results();
                doc[name] = results.size() == 1 ? json(results.front()) : json(results);
            } else if (default_also && !opt->get_default_str().empty()) {
                doc[name] = opt->get_default_str();
            }
        }
        for (const CLI::App* sub : app->get_subcommands({})) {
            auto nested = dump(sub, default_also);
            if (!nested.empty()) doc[sub->get_name()] = nested;
        }
        return doc;
    }

    static void flatten(const json& node, const std::string& name, std::vector<std::string> parents,
                        std::vector<CLI::ConfigItem>& out) {
        if (node.is_object()) {
            if (!name.empty()) parents.push_back(name);
            for (const auto& [key, value] : node.items()) flatten(value, key, parents, out);
            return;
        }
        CLI::ConfigItem item;
        item.parents = std::move(parents);
        item.name = name;
        if (node.is_array()) {
            for (const auto& v : node) item.inputs.push_back(scalar(v, name));
        } else {
            item.inputs.push_back(scalar(node, name));
        }
        out.push_back(std::move(item));
    }

    static std::string scalar(const json& v, const std::string& name) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        if (v.is_number()) return v.dump();
        throw CLI::ConversionError("config key '" + name + "' has an unsupported value");
    }
};

class UsageError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(const std::string& value, const std::string& flag) {
    if (value.empty()) throw UsageError(flag + " is required");
}

void setup_logging() {
    auto logger = spdlog::stderr_logger_st("clear-audit");
    logger->set_pattern("[%l] %v");
    std::string level = "info";
    if (const char* env = std::getenv("CLEAR_AUDIT_LOG")) level = env;
    if (level == "error") {
        logger->set_level(spdlog::level::err);
    } else if (level == "debug") {
        logger->set_level(spdlog::level::debug);
    } else {
        logger->set_level(spdlog::level::info);
        if (level != "info") logger->warn("unknown CLEAR_AUDIT_LOG value '{}', using info", level);
    }
    spdlog::set_default_logger(logger);
}

// ---------------------------------------------------------------------------
// Split assignment file: id,partition

using SplitMap = std::map<std::string, std::string>;

void write_split(const fs::path& path, const tabular::DataTable& table, const tabular::SplitIndices& idx) {
    std::vector<std::string> part(table.size());
    for (auto i : idx.train) part[i] = "train";
    for (auto i : idx.val) part[i] = "val";
    for (auto i : idx.test) part[i] = "test";
    std::string out = "id,partition\n";
    for (std::size_t i = 0; i < table.size(); ++i) out += io::csv_line({table.row(i).id, part[i]});
    io::write_file_atomic(path, out);
}

SplitMap read_split(const fs::path& path) {
    const auto rows = io::parse_csv(io::read_file(path));
    if (rows.empty() || rows[0] != io::CsvRow{"id", "partition"}) {
        throw std::invalid_argument(path.string() + ": expected header 'id,partition'");
    }
    SplitMap split;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != 2) throw std::invalid_argument(path.string() + ": malformed row " + std::to_string(r + 1));
        const auto& p = rows[r][1];
        if (p != "train" && p != "val" && p != "test") {
            throw std::invalid_argument(path.string() + ": unknown partition '" + p + "'");
        }
        split[rows[r][0]] = p;
    }
    return split;
}

std::vector<std::size_t> rows_in(const std::vector<std::string>& ids, const SplitMap& split, const std::string& part) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto it = split.find(ids[i]);
        if (it == split.end()) throw std::invalid_argument("id '" + ids[i] + "' missing from split file");
        if (it->second == part) out.push_back(i);
    }
    return out;
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::vector<std::string> out;
    std::istringstream in(io::read_file(path));
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

std::string join_lines(const std::vector<std::string>& lines) {
    std::string out;
    for (const auto& l : lines) out += l + "\n";
    return out;
}

Matrix select_columns(const Matrix& m, const std::vector<std::string>& names) {
    std::vector<std::size_t> idx;
    for (const auto& n : names) {
        const auto it = std::find(m.col_names().begin(), m.col_names().end(), n);
        if (it == m.col_names().end()) throw std::invalid_argument("feature matrix has no column '" + n + "'");
        idx.push_back(static_cast<std::size_t>(it - m.col_names().begin()));
    }
    Matrix out(m.rows(), idx.size());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < idx.size(); ++c) out(r, c) = m(r, idx[c]);
    }
    out.set_col_names(names);
    return out;
}

std::vector<std::optional<tabular::BerLevel>> labels_for(const std::vector<std::string>& ids,
                                                         const tabular::DataTable& table) {
    std::vector<std::optional<tabular::BerLevel>> labels;
    labels.reserve(ids.size());
    for (const auto& id : ids) {
        const auto row = table.find(id);
        if (!row) throw std::invalid_argument("id '" + id + "' not found in data table");
        labels.push_back(table.row(*row).label);
    }
    return labels;
}

// ---------------------------------------------------------------------------
// Subcommand options

struct Options {
    std::uint64_t seed = 0;

    struct {
        std::size_t n = 5000;
        std::size_t types = 4;
        double label_noise = 0.05;
        double feature_corruption = 0.05;
        double score_noise = 5.0;
        std::optional<double> wall_u;
        bool compound = false;
        std::string out;
    } synth;

    struct {
        std::string data, schema, out;
        double iqr = 1.5;
        double train = 0.8, val = 0.1, test = 0.1;
    } preprocess;

    struct {
        std::string data, schema, state, split, exclude, out;
        std::size_t top = 40;
        std::size_t trees = 100;
        int max_depth = 12;
        std::size_t min_leaf = 5;
    } select;

    struct {
        std::string features, split, select, state, out;
        std::size_t epochs = 15;
        std::size_t batch_size = 16;
        double lr = 1e-3;
        double corruption = 0.3;
        double temperature = 1.0;
    } pretrain;

    struct {
        std::string features, weights, data, schema, out;
    } embed;

    struct {
        std::string embeddings, split, out, basis;
        std::size_t dims = 2;
        std::string fit_on = "all";
    } project;

    struct {
        std::string embeddings, id, metric = "euclidean";
        std::size_t k = 10;
    } neighbors;

    struct {
        std::string embeddings, out, metric = "euclidean", data, schema;
        std::size_t k = 10;
        int threshold = 3;
        std::optional<double> radius;
        std::size_t tables = 0;
        std::vector<std::string> columns;
    } audit;

    struct {
        std::string data, schema, state, split, select, out;
        std::string model = "both";
        std::string granularity = "both";
        std::size_t epochs = 15;
        std::size_t batch_size = 16;
        double lr = 1e-3;
        std::size_t trees = 100;
    } baseline;

    struct {
        std::string summary, out;
        std::vector<std::string> evals;
    } report;
};

// ---------------------------------------------------------------------------
// Commands

void run_synth(const Options& o) {
    require(o.synth.out, "--out");
    synth::SynthConfig cfg;
    cfg.n_rows = o.synth.n;
    cfg.n_building_types = o.synth.types;
    cfg.label_noise_rate = o.synth.label_noise;
    cfg.feature_corruption_rate = o.synth.feature_corruption;
    cfg.score_noise = o.synth.score_noise;
    cfg.wall_u_mean = o.synth.wall_u;
    cfg.compound_features = o.synth.compound;
    cfg.seed = o.seed;
    const auto result = synth::generate(cfg);
    const fs::path out = o.synth.out;
    tabular::write_csv(out / "data.csv", result.table);
    tabular::save_schema(out / "schema.json", result.table.schema());
    synth::write_ground_truth(out / "ground_truth.csv", result.truth);
    spdlog::info("synth: wrote {} rows to {}", result.table.size(), out.string());
}

void run_preprocess(const Options& o) {
    const auto& p = o.preprocess;
    require(p.data, "--data");
    require(p.schema, "--schema");
    require(p.out, "--out");
    const auto schema = tabular::load_schema(p.schema);
    const auto table = tabular::load_csv(p.data, schema);
    tabular::SplitSpec spec{p.train, p.val, p.test, derive_seed(o.seed, "split")};
    const auto idx = tabular::split_indices(table.size(), spec);
    const auto state = preprocess::fit(table.subset(idx.train), p.iqr);
    preprocess::TransformSummary summary;
    const auto encoded = preprocess::transform(state, table, &summary);

    const fs::path out = p.out;
    preprocess::save_state(out / "state.json", state);
    write_matrix_csv(out / "features.csv", encoded, table.ids());
    write_split(out / "split.csv", table, idx);
    spdlog::info("preprocess: {} rows ({} train / {} val / {} test), {} encoded columns", table.size(),
                 idx.train.size(), idx.val.size(), idx.test.size(), encoded.cols());
    spdlog::debug("preprocess: clipped {}, imputed {} numeric and {} categorical, {} unseen categories",
                  summary.clipped, summary.imputed_numeric, summary.imputed_categorical,
                  summary.unseen_categories);
}

// Encoded columns whose source feature is listed in the selection file.
std::vector<std::string> selected_columns(const preprocess::PreprocessorState& state, const fs::path& select) {
    const auto lines = read_lines(select);
    const std::set<std::string> keep(lines.begin(), lines.end());
    const auto names = state.encoded_names();
    const auto parents = state.encoded_parents();
    std::vector<std::string> cols;
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (keep.count(parents[i])) cols.push_back(names[i]);
    }
    if (cols.empty()) throw std::invalid_argument(select.string() + ": no selected feature matches the state");
    return cols;
}

void run_select(const Options& o) {
    const auto& s = o.select;
    require(s.data, "--data");
    require(s.schema, "--schema");
    require(s.state, "--state");
    require(s.split, "--split");
    require(s.out, "--out");
    const auto schema = tabular::load_schema(s.schema);
    const auto table = tabular::load_csv(s.data, schema);
    const auto state = preprocess::load_state(s.state, schema);
    const auto train = table.subset(rows_in(table.ids(), read_split(s.split), "train"));
    const auto x = preprocess::transform(state, train);
    const auto y = tabular::label_ordinals(train);

    trees::ForestParams params;
    params.n_trees = s.trees;
    params.max_depth = s.max_depth;
    params.min_leaf = s.min_leaf;
    params.seed = derive_seed(o.seed, "select-features");
    const auto forest = trees::fit_forest(x, y, tabular::kFineLevels, params);
    const auto importance = trees::feature_importance(forest);
    const auto parents = state.encoded_parents();
    const auto ranked = trees::rank_features(importance, parents);
    std::vector<std::string> excluded;
    if (!s.exclude.empty()) excluded = trees::read_excludelist(s.exclude);
    const auto top = trees::select_top(ranked, s.top, excluded);

    const fs::path out = s.out;
    trees::write_importance_csv(out / "importance.csv", ranked);
    std::vector<std::string> names;
    for (const auto& f : top) names.push_back(f.name);
    io::write_file_atomic(out / "selected.txt", join_lines(names));
    spdlog::info("select-features: kept {} of {} features", top.size(), ranked.size());
}

void run_pretrain(const Options& o) {
    const auto& p = o.pretrain;
    require(p.features, "--features");
    require(p.split, "--split");
    require(p.out, "--out");
    auto data = read_matrix_csv(p.features);
    if (!p.select.empty()) {
        require(p.state, "--state");
        data.matrix = select_columns(data.matrix, selected_columns(preprocess::load_state(p.state), p.select));
    }
    const auto split = read_split(p.split);
    const auto train = data.matrix.select_rows(rows_in(data.ids, split, "train"));
    const auto val = data.matrix.select_rows(rows_in(data.ids, split, "val"));

    scarf::ScarfConfig cfg;
    cfg.epochs = p.epochs;
    cfg.batch_size = p.batch_size;
    cfg.learning_rate = p.lr;
    cfg.corruption_rate = p.corruption;
    cfg.temperature = p.temperature;
    cfg.seed = derive_seed(o.seed, "pretrain");
    cfg.validate();
    spdlog::info("pretrain: {} train / {} val rows, {} columns, {} epochs", train.rows(), val.rows(), train.cols(),
                 cfg.epochs);
    const auto result = scarf::pretrain(cfg, train, val);
    for (const auto& e : result.history) {
        spdlog::debug("epoch {:2d}  train {:.6f}  val {:.6f}", e.epoch, e.train_loss, e.val_loss);
    }

    const fs::path out = p.out;
    scarf::save_weights(out / "encoder.json", result.weights);
    scarf::write_history_csv(out / "history.csv", result.history);
    io::write_file_atomic(out / "columns.txt", join_lines(data.matrix.col_names()));
    spdlog::info("pretrain: final train loss {:.4f}", result.history.back().train_loss);
}

void run_embed(const Options& o) {
    const auto& e = o.embed;
    require(e.features, "--features");
    require(e.weights, "--weights");
    require(e.out, "--out");
    auto data = read_matrix_csv(e.features);
    const fs::path columns = fs::path(e.weights).parent_path() / "columns.txt";
    if (fs::exists(columns)) data.matrix = select_columns(data.matrix, read_lines(columns));
    const auto weights = scarf::load_weights(e.weights);
    const auto vectors = scarf::encode(weights, data.matrix);

    std::vector<std::optional<tabular::BerLevel>> labels;
    if (!e.data.empty()) {
        require(e.schema, "--schema");
        labels = labels_for(data.ids, tabular::load_csv(e.data, tabular::load_schema(e.schema)));
    }
    const latent::EmbeddingStore store(data.ids, vectors, labels);
    latent::write_embeddings_csv(e.out, store);
    spdlog::info("embed: {} rows -> {} dims", store.size(), store.dim());
}

void run_project(const Options& o) {
    const auto& p = o.project;
    require(p.embeddings, "--embeddings");
    require(p.out, "--out");
    const auto store = latent::read_embeddings_csv(p.embeddings);
    Matrix fit_rows = store.vectors();
    if (p.fit_on == "train") {
        require(p.split, "--split");
        fit_rows = store.vectors().select_rows(rows_in(store.ids(), read_split(p.split), "train"));
    } else if (p.fit_on != "all") {
        throw UsageError("--fit-on must be 'all' or 'train'");
    }
    const auto basis = latent::pca_fit(fit_rows, p.dims);
    latent::write_projection_csv(p.out, store, latent::pca_project(basis, store.vectors()));
    if (!p.basis.empty()) io::write_file_atomic(p.basis, latent::basis_to_json(basis));
    spdlog::info("project: explained variance {}", io::format_double([&] {
                     double s = 0.0;
                     for (double r : basis.explained_variance_ratio) s += r;
                     return s;
                 }()));
}

void run_neighbors(const Options& o) {
    const auto& n = o.neighbors;
    require(n.embeddings, "--embeddings");
    require(n.id, "--id");
    const auto store = latent::read_embeddings_csv(n.embeddings);
    const auto result = latent::knn(store, n.id, n.k, latent::parse_metric(n.metric));
    for (const auto& nb : result) {
        const auto& label = store.label(nb.index);
        std::cout << io::csv_line({nb.id, label ? tabular::format_ber(*label) : "", io::format_double(nb.distance)});
    }
}

void run_audit(const Options& o) {
    const auto& a = o.audit;
    require(a.embeddings, "--embeddings");
    require(a.out, "--out");
    const auto store = latent::read_embeddings_csv(a.embeddings);
    if (!store.has_labels()) throw std::invalid_argument(a.embeddings + ": embeddings carry no labels");
    audit::AuditConfig cfg;
    cfg.k = a.k;
    cfg.spread_threshold = a.threshold;
    cfg.radius = a.radius;
    cfg.metric = latent::parse_metric(a.metric);
    cfg.validate();
    const auto report = audit::audit_all(store, cfg);

    const fs::path out = a.out;
    audit::write_report_csv(out / "audit_report.csv", report);
    audit::write_summary_json(out / "audit_summary.json", report);
    spdlog::info("audit: flagged {} of {} buildings", report.n_flagged, report.findings.size());

    if (a.tables > 0) {
        require(a.data, "--data");
        require(a.schema, "--schema");
        const auto raw = tabular::load_csv(a.data, tabular::load_schema(a.schema));
        const auto fences = audit::fences_from_table(raw);
        std::vector<const audit::AuditFinding*> flagged;
        for (const auto& f : report.findings) {
            if (f.flagged) flagged.push_back(&f);
        }
        std::stable_sort(flagged.begin(), flagged.end(),
                         [](const auto* x, const auto* y) { return x->spread > y->spread; });
        if (flagged.size() > a.tables) flagged.resize(a.tables);
        std::vector<audit::BoxStats> box;
        for (const auto* f : flagged) {
            const auto table = audit::feature_table(raw, *f, a.columns, fences);
            audit::write_feature_table_csv(out / "tables" / (f->ref_id + ".csv"), table);
            box = table.summary;
        }
        if (!flagged.empty()) audit::write_boxplot_csv(out / "boxplot.csv", box);
        spdlog::info("audit: wrote {} feature tables", flagged.size());
    }
}

void run_baseline(const Options& o) {
    const auto& b = o.baseline;
    require(b.data, "--data");
    require(b.schema, "--schema");
    require(b.state, "--state");
    require(b.split, "--split");
    require(b.out, "--out");
    const std::set<std::string> models = b.model == "both" ? std::set<std::string>{"mlp", "forest"}
                                                          : std::set<std::string>{b.model};
    for (const auto& m : models) {
        if (m != "mlp" && m != "forest") throw UsageError("--model must be mlp, forest or both");
    }
    std::vector<supervised::Granularity> grans;
    if (b.granularity == "both") {
        grans = {supervised::Granularity::fine15, supervised::Granularity::coarse5};
    } else {
        grans = {supervised::parse_granularity(b.granularity)};
    }

    const auto schema = tabular::load_schema(b.schema);
    const auto table = tabular::load_csv(b.data, schema);
    const auto state = preprocess::load_state(b.state, schema);
    const auto split = read_split(b.split);
    const auto ids = table.ids();
    const auto train = table.subset(rows_in(ids, split, "train"));
    const auto test = table.subset(rows_in(ids, split, "test"));
    Matrix x_train = preprocess::transform(state, train);
    Matrix x_test = preprocess::transform(state, test);
    if (!b.select.empty()) {
        const auto cols = selected_columns(state, b.select);
        x_train = select_columns(x_train, cols);
        x_test = select_columns(x_test, cols);
    }
    const auto fine_train = tabular::label_ordinals(train);
    const auto fine_test = tabular::label_ordinals(test);

    const fs::path out = b.out;
    for (auto g : grans) {
        const auto y_train = supervised::target_labels(fine_train, g);
        const auto y_test = supervised::target_labels(fine_test, g);
        const auto gname = supervised::to_string(g);
        if (models.count("mlp")) {
            supervised::ClassifierConfig cfg;
            cfg.granularity = g;
            cfg.epochs = b.epochs;
            cfg.batch_size = b.batch_size;
            cfg.learning_rate = b.lr;
            cfg.seed = derive_seed(o.seed, "baseline/mlp");
            const auto net = supervised::train_classifier(cfg, x_train, y_train);
            const auto r = supervised::evaluate(net, x_test, y_test, g);
            supervised::write_eval_json(out / ("eval_mlp_" + gname + ".json"), r, g, "mlp");
            supervised::write_confusion_csv(out / ("confusion_mlp_" + gname + ".csv"), r, g);
            spdlog::info("baseline: mlp {} accuracy {:.4f} macro-F1 {:.4f}", gname, r.accuracy, r.macro_f1);
        }
        if (models.count("forest")) {
            trees::ForestParams params;
            params.n_trees = b.trees;
            params.seed = derive_seed(o.seed, "baseline/forest");
            const auto forest = trees::fit_forest(x_train, y_train, supervised::class_count(g), params);
            const auto r = supervised::evaluate(forest, x_test, y_test, g);
            supervised::write_eval_json(out / ("eval_forest_" + gname + ".json"), r, g, "forest");
            supervised::write_confusion_csv(out / ("confusion_forest_" + gname + ".csv"), r, g);
            spdlog::info("baseline: forest {} accuracy {:.4f} macro-F1 {:.4f}", gname, r.accuracy, r.macro_f1);
        }
    }
}

nlohmann::ordered_json parse_json_file(const std::string& path) {
    try {
        return nlohmann::ordered_json::parse(io::read_file(path));
    } catch (const json::exception& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
}

void run_report(const Options& o) {
    const auto& r = o.report;
    require(r.summary, "--summary");
    require(r.out, "--out");
    nlohmann::ordered_json doc;
    doc["audit"] = parse_json_file(r.summary);
    doc["evaluations"] = nlohmann::ordered_json::array();
    for (const auto& path : r.evals) {
        auto e = parse_json_file(path);
        e.erase("confusion");
        doc["evaluations"].push_back(e);
    }
    io::write_file_atomic(r.out, doc.dump(2) + "\n");
    spdlog::info("report: wrote {}", r.out);
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();

    CLI::App app{"Audit building energy ratings through contrastive latent neighbors", "clear-audit"};
    app.require_subcommand(1);
    app.fallthrough();
    app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "", "JSON config file; explicit flags take precedence");

    Options o;
    app.add_option("--seed", o.seed, "Master seed; each stage derives its own")->capture_default_str();

    auto* synth = app.add_subcommand("synth", "Generate a synthetic building stock with ground truth");
    synth->add_option("--n", o.synth.n, "Rows")->capture_default_str();
    synth->add_option("--types", o.synth.types, "Building types")->capture_default_str();
    synth->add_option("--label-noise", o.synth.label_noise, "Share of rows with a shifted label")
        ->capture_default_str();
    synth->add_option("--feature-corruption", o.synth.feature_corruption,
                      "Share of rows with an abnormal water or lighting value")
        ->capture_default_str();
    synth->add_option("--score-noise", o.synth.score_noise, "Deviation of the energy score noise")
        ->capture_default_str();
    synth->add_option("--wall-u", o.synth.wall_u, "Force the wall U-value regime");
    synth->add_flag("--compound", o.synth.compound, "Add primary energy and CO2 columns");
    synth->add_option("--out", o.synth.out, "Output directory");

    auto* pre = app.add_subcommand("preprocess", "Split, fit and encode a table");
    pre->add_option("--data", o.preprocess.data, "Data CSV")->check(CLI::ExistingFile);
    pre->add_option("--schema", o.preprocess.schema, "Schema JSON")->check(CLI::ExistingFile);
    pre->add_option("--iqr", o.preprocess.iqr, "IQR fence multiplier")->capture_default_str();
    pre->add_option("--train-frac", o.preprocess.train, "Train share")->capture_default_str();
    pre->add_option("--val-frac", o.preprocess.val, "Validation share")->capture_default_str();
    pre->add_option("--test-frac", o.preprocess.test, "Test share")->capture_default_str();
    pre->add_option("--out", o.preprocess.out, "Output directory");

    auto* sel = app.add_subcommand("select-features", "Rank features by forest importance and keep the top k");
    sel->add_option("--data", o.select.data, "Data CSV")->check(CLI::ExistingFile);
    sel->add_option("--schema", o.select.schema, "Schema JSON")->check(CLI::ExistingFile);
    sel->add_option("--state", o.select.state, "Preprocessor state")->check(CLI::ExistingFile);
    sel->add_option("--split", o.select.split, "Split file")->check(CLI::ExistingFile);
    sel->add_option("--exclude", o.select.exclude, "Excludelist of compound features")->check(CLI::ExistingFile);
    sel->add_option("--top", o.select.top, "Features to keep")->capture_default_str();
    sel->add_option("--trees", o.select.trees, "Forest size")->capture_default_str();
    sel->add_option("--max-depth", o.select.max_depth, "Tree depth limit")->capture_default_str();
    sel->add_option("--min-leaf", o.select.min_leaf, "Minimum rows per leaf")->capture_default_str();
    sel->add_option("--out", o.select.out, "Output directory");

    auto* pt = app.add_subcommand("pretrain", "Contrastive pretraining of the encoder");
    pt->add_option("--features", o.pretrain.features, "Encoded feature CSV")->check(CLI::ExistingFile);
    pt->add_option("--split", o.pretrain.split, "Split file")->check(CLI::ExistingFile);
    pt->add_option("--select", o.pretrain.select, "Selected feature list")->check(CLI::ExistingFile);
    pt->add_option("--state", o.pretrain.state, "Preprocessor state (with --select)")->check(CLI::ExistingFile);
    pt->add_option("--epochs", o.pretrain.epochs, "Epochs")->capture_default_str();
    pt->add_option("--batch-size", o.pretrain.batch_size, "Batch size")->capture_default_str();
    pt->add_option("--lr", o.pretrain.lr, "Adam learning rate")->capture_default_str();
    pt->add_option("--corruption", o.pretrain.corruption, "Share of features corrupted per view")
        ->capture_default_str();
    pt->add_option("--temperature", o.pretrain.temperature, "InfoNCE temperature")->capture_default_str();
    pt->add_option("--out", o.pretrain.out, "Output directory");

    auto* emb = app.add_subcommand("embed", "Encode every row into the latent space");
    emb->add_option("--features", o.embed.features, "Encoded feature CSV")->check(CLI::ExistingFile);
    emb->add_option("--weights", o.embed.weights, "Encoder weights")->check(CLI::ExistingFile);
    emb->add_option("--data", o.embed.data, "Data CSV supplying labels")->check(CLI::ExistingFile);
    emb->add_option("--schema", o.embed.schema, "Schema JSON")->check(CLI::ExistingFile);
    emb->add_option("--out", o.embed.out, "Embeddings CSV");

    auto* proj = app.add_subcommand("project", "PCA projection of embeddings for plotting");
    proj->add_option("--embeddings", o.project.embeddings, "Embeddings CSV")->check(CLI::ExistingFile);
    proj->add_option("--dims", o.project.dims, "Components (2 or 3)")->check(CLI::Range(2, 3))->capture_default_str();
    proj->add_option("--fit-on", o.project.fit_on, "Rows the basis is fitted on: all or train")
        ->capture_default_str();
    proj->add_option("--split", o.project.split, "Split file (with --fit-on train)")->check(CLI::ExistingFile);
    proj->add_option("--basis", o.project.basis, "Also write the basis as JSON");
    proj->add_option("--out", o.project.out, "Projection CSV");

    auto* nb = app.add_subcommand("neighbors", "Nearest latent neighbors of one building");
    nb->add_option("--embeddings", o.neighbors.embeddings, "Embeddings CSV")->check(CLI::ExistingFile);
    nb->add_option("--id", o.neighbors.id, "Reference building id");
    nb->add_option("--k", o.neighbors.k, "Neighbors")->capture_default_str();
    nb->add_option("--metric", o.neighbors.metric, "euclidean or cosine")->capture_default_str();

    auto* au = app.add_subcommand("audit", "Flag buildings whose neighbors carry distant ratings");
    au->add_option("--embeddings", o.audit.embeddings, "Labeled embeddings CSV")->check(CLI::ExistingFile);
    au->add_option("--k", o.audit.k, "Neighbors per building")->capture_default_str();
    au->add_option("--threshold", o.audit.threshold, "Ordinal spread that raises a flag")->capture_default_str();
    au->add_option("--radius", o.audit.radius, "Ignore neighbors farther than this");
    au->add_option("--metric", o.audit.metric, "euclidean or cosine")->capture_default_str();
    au->add_option("--tables", o.audit.tables, "Feature tables to write for the widest-spread flags")
        ->capture_default_str();
    au->add_option("--columns", o.audit.columns, "Raw columns shown in feature tables");
    au->add_option("--data", o.audit.data, "Raw data CSV (with --tables)")->check(CLI::ExistingFile);
    au->add_option("--schema", o.audit.schema, "Schema JSON (with --tables)")->check(CLI::ExistingFile);
    au->add_option("--out", o.audit.out, "Output directory");

    auto* base = app.add_subcommand("baseline", "Supervised rating classifiers on the raw features");
    base->add_option("--data", o.baseline.data, "Data CSV")->check(CLI::ExistingFile);
    base->add_option("--schema", o.baseline.schema, "Schema JSON")->check(CLI::ExistingFile);
    base->add_option("--state", o.baseline.state, "Preprocessor state")->check(CLI::ExistingFile);
    base->add_option("--split", o.baseline.split, "Split file")->check(CLI::ExistingFile);
    base->add_option("--select", o.baseline.select, "Selected feature list")->check(CLI::ExistingFile);
    base->add_option("--model", o.baseline.model, "mlp, forest or both")->capture_default_str();
    base->add_option("--granularity", o.baseline.granularity, "fine, coarse or both")->capture_default_str();
    base->add_option("--epochs", o.baseline.epochs, "MLP epochs")->capture_default_str();
    base->add_option("--batch-size", o.baseline.batch_size, "MLP batch size")->capture_default_str();
    base->add_option("--lr", o.baseline.lr, "MLP learning rate")->capture_default_str();
    base->add_option("--trees", o.baseline.trees, "Forest size")->capture_default_str();
    base->add_option("--out", o.baseline.out, "Output directory");

    auto* rep = app.add_subcommand("report", "Bundle the audit summary and evaluations into one JSON");
    rep->add_option("--summary", o.report.summary, "Audit summary JSON")->check(CLI::ExistingFile);
    rep->add_option("--eval", o.report.evals, "Evaluation JSON (repeatable)")->check(CLI::ExistingFile);
    rep->add_option("--out", o.report.out, "Report JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    const std::map<CLI::App*, void (*)(const Options&)> commands{
        {synth, run_synth},       {pre, run_preprocess}, {sel, run_select},  {pt, run_pretrain},
        {emb, run_embed},         {proj, run_project},   {nb, run_neighbors}, {au, run_audit},
        {base, run_baseline},     {rep, run_report},
    };
    CLI::App* chosen = app.get_subcommands().front();
    try {
        commands.at(chosen)(o);
    } catch (const UsageError& e) {
        std::cerr << chosen->get_name() << ": " << e.what() << "\n\n" << chosen->help();
        return kExitUsage;
    } catch (const std::exception& e) {
        spdlog::error("{}: {}", chosen->get_name(), e.what());
        return kExitData;
    }
    return 0;
}
