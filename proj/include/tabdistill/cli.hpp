#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tabdistill/tabdistill.hpp"

namespace tabdistill::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

inline std::string fmt(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

/// Integral values as JSON integers so grids echo as written (1, not 1.0).
inline ojson json_number(double v) {
    if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 1e15) return static_cast<long long>(v);
    return v;
}

inline ojson json_numbers(const std::vector<double>& vs) {
    auto a = ojson::array();
    for (double v : vs) a.push_back(json_number(v));
    return a;
}

/// "R=4,L=10" (either order, both required).
inline std::pair<std::size_t, std::size_t> parse_arch(const std::string& s) {
    std::optional<std::size_t> R, L;
    for (const auto& part : detail::split(s, ',')) {
        const auto eq = part.find('=');
        const auto key = detail::trim(part.substr(0, eq == std::string::npos ? part.size() : eq));
        const auto val = eq == std::string::npos ? std::optional<double>{} : detail::parse_double(part.substr(eq + 1));
        if (!val || *val < 1 || *val != std::floor(*val))
            throw ConfigError("--arch expects R=<int>,L=<int>, got '" + s + "'");
        if (key == "R")
            R = static_cast<std::size_t>(*val);
        else if (key == "L")
            L = static_cast<std::size_t>(*val);
        else
            throw ConfigError("--arch expects R=<int>,L=<int>, got '" + s + "'");
    }
    if (!R || !L) throw ConfigError("--arch expects R=<int>,L=<int>, got '" + s + "'");
    return {*R, *L};
}

// ---------------------------------------------------------------------------
// Shared option groups

struct DataOptions {
    std::string config;

    FeatureSchema schema() const { return load_schema_config(config); }

    static RawDataset train(const FeatureSchema& s) {
        if (s.csv_path.empty()) throw ConfigError("dataset config has no csv_path");
        return load_csv(s.csv_path, s, Split::train);
    }

    static std::optional<RawDataset> test(const FeatureSchema& s) {
        if (s.test_csv_path.empty()) return std::nullopt;
        return load_csv(s.test_csv_path, s, Split::test);
    }
};

struct EncoderOptions {
    std::string spec = "builtin";
    BuiltinEncoderConfig builtin;

    void add(CLI::App& app) {
        app.add_option("--encoder", spec, "builtin | external:<command line>")->capture_default_str();
        app.add_option("--builtin-width", builtin.width, "builtin encoder width E")->capture_default_str();
        app.add_option("--builtin-heads", builtin.heads, "builtin encoder attention heads")->capture_default_str();
        app.add_option("--builtin-layers", builtin.layers, "builtin encoder attention rounds")->capture_default_str();
        app.add_option("--builtin-seed", builtin.seed, "builtin encoder weight seed")->capture_default_str();
    }

    bool is_builtin() const { return spec == "builtin"; }

    void validate() const {
        if (is_builtin()) {
            builtin.validate();
            return;
        }
        if (spec.rfind("external:", 0) != 0 || spec.size() == 9)
            throw ConfigError("--encoder must be 'builtin' or 'external:<command line>', got '" + spec + "'");
    }

    std::unique_ptr<FrozenEncoder> make() const {
        validate();
        if (is_builtin()) return std::make_unique<BuiltinEncoder>(builtin);
        return std::make_unique<ExternalEncoderClient>(spec.substr(9));
    }

    ojson echo() const {
        ojson j{{"encoder", spec}};
        if (is_builtin())
            j["builtin"] = {{"width", builtin.width},
                            {"heads", builtin.heads},
                            {"layers", builtin.layers},
                            {"seed", builtin.seed}};
        return j;
    }
};

struct TrainOptions {
    std::string arch = "R=4,L=10";
    std::string final_act = "none";
    std::size_t epochs = 300;
    std::size_t k = 100;
    double lr = 1e-4;
    double lr2 = 1e-2;
    double wd = 1e-3;
    bool fixed_query = false;

    void add(CLI::App& app) {
        app.add_option("--arch", arch, "generated MLP shape R=<layers>,L=<width>")->capture_default_str();
        app.add_option("--final-act", final_act, "activation on the output logits: none | relu")->capture_default_str();
        app.add_option("--epochs", epochs, "Phase 1 epochs T")->capture_default_str();
        app.add_option("--k", k, "Phase 2 epochs K")->capture_default_str();
        app.add_option("--lr", lr, "Phase 1 learning rate")->capture_default_str();
        app.add_option("--lr2", lr2, "Phase 2 learning rate")->capture_default_str();
        app.add_option("--wd", wd, "Phase 1 weight decay")->capture_default_str();
        app.add_flag("--fixed-query-inputs", fixed_query,
                     "do not permute the query rows' MLP inputs during Phase 1");
    }

    Phase1Config phase1(Seed seed) const {
        Phase1Config c;
        const auto [R, L] = parse_arch(arch);
        c.epochs = epochs;
        c.lr = lr;
        c.weight_decay = wd;
        c.seed = seed;
        c.R = R;
        c.L = L;
        c.final_activation = parse_final_activation(final_act);
        c.permute_query_inputs = !fixed_query;
        c.validate();
        return c;
    }

    Phase2Config phase2() const {
        Phase2Config c{k, lr2};
        c.validate();
        return c;
    }

    ojson echo() const {
        const auto [R, L] = parse_arch(arch);
        return {{"R", R},         {"L", L},   {"final_activation", final_act},
                {"epochs", epochs}, {"k", k}, {"lr", lr},
                {"lr2", lr2},     {"weight_decay", wd}, {"permute_query_inputs", !fixed_query}};
    }
};

inline void check_n(std::size_t n) {
    if (n < 2 || n % 2 != 0)
        throw ConfigError("--n must be a positive even number so D_N can be class-balanced, got " + std::to_string(n));
}

struct BinaryMetrics {
    double auc = 0.0;
    double accuracy = 0.0;
};

inline BinaryMetrics score_metrics(const std::vector<double>& p, const Labels& y) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < p.size(); ++i) correct += static_cast<std::uint8_t>(p[i] > 0.5) == y[i];
    return {roc_auc(p, y), static_cast<double>(correct) / static_cast<double>(p.size())};
}

// ---------------------------------------------------------------------------
// distill

struct DistillOptions {
    DataOptions data;
    std::size_t n = 0;
    Seed seed = 0;
    EncoderOptions encoder;
    TrainOptions train;
    std::string out;
    std::string manifest;
};

inline int cmd_distill(const DistillOptions& o, std::ostream& out) {
    check_n(o.n);
    o.encoder.validate();
    const auto p1 = o.train.phase1(o.seed);
    const auto p2 = o.train.phase2();
    const auto schema = o.data.schema();
    const auto train = DataOptions::train(schema);
    const auto test = DataOptions::test(schema);
    const std::filesystem::path model_path = o.out;
    const std::filesystem::path manifest_path = o.manifest.empty() ? o.out + ".manifest.json" : o.manifest;

    RunManifest man("distill");
    man.config() = {{"data", o.data.config}, {"n", o.n}, {"seed", o.seed}, {"out", o.out}};
    man.config().update(o.encoder.echo());
    man.config().update(o.train.echo());
    const auto scheme = partition_scheme(o.n);
    man.config()["partition"] = {{"support_size", scheme.size_s},
                                 {"query_size", scheme.size_q},
                                 {"pairs", scheme.num_pairs},
                                 {"same_sets", scheme.same_sets}};

    const auto dn = sample_few_shot(train, o.n, sample_seed(o.seed));
    auto encoder = o.encoder.make();
    const auto res = distill(dn, schema, *encoder, p1, p2);
    write_model(model_path, res.model, schema);

    man.seeds() = {{"run", o.seed},
                   {"sample", sample_seed(o.seed)},
                   {"hypermap_init", derive_seed(o.seed, "hypermap-init")}};
    man.dataset("train", train);
    man.dataset("dn", dn);
    if (test) man.dataset("test", *test);
    man.encoder(encoder->handshake());
    man.history(res.history);
    auto& m = man.metrics();
    m["extracted_train_loss"] = res.extracted_train_loss;
    m["final_train_loss"] = res.phase2.best_loss;
    m["phase2_best_epoch"] = res.phase2.best_epoch;
    m["validation_accuracy"] = res.validation_accuracy;
    m["best_epoch"] = res.history.best_epoch;
    out << "final train loss: " << fmt(res.phase2.best_loss, 6) << "\n";
    out << "validation accuracy: " << fmt(res.validation_accuracy) << " (epoch " << res.history.best_epoch << ")\n";
    if (test) {
        const auto enc = res.model.encode(*test, schema);
        const auto metrics = score_metrics(res.model.score(enc.X), enc.y);
        m["test_auc"] = metrics.auc;
        m["test_accuracy"] = metrics.accuracy;
        out << "test AUC: " << fmt(metrics.auc) << "  accuracy: " << fmt(metrics.accuracy) << "\n";
    }
    man.artifact("model", model_path);
    man.write(manifest_path);
    out << "model: " << model_path.string() << "\nmanifest: " << manifest_path.string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
    std::string model;
    DataOptions data;
    bool attribution = false;
    std::size_t repeats = 5;
    Seed seed = 0;
    std::string manifest;
};

inline int cmd_eval(const EvalOptions& o, std::ostream& out) {
    if (o.attribution && o.repeats < 1) throw ConfigError("--repeats must be >= 1");
    const auto schema = o.data.schema();
    const auto test = DataOptions::test(schema);
    if (!test) throw ConfigError("dataset config has no test_csv_path to evaluate on");
    const auto loaded = load_model(o.model);
    const auto model = loaded.bind(schema);
    const auto enc = model.encode(*test, schema);
    const auto metrics = score_metrics(model.score(enc.X), enc.y);

    RunManifest man("eval");
    man.config() = {{"model", o.model}, {"data", o.data.config}, {"attribution", o.attribution},
                    {"repeats", o.repeats}, {"seed", o.seed}};
    man.dataset("test", *test);
    man.metrics()["test_auc"] = metrics.auc;
    man.metrics()["test_accuracy"] = metrics.accuracy;
    out << "test AUC: " << fmt(metrics.auc) << "  accuracy: " << fmt(metrics.accuracy) << "\n";
    if (o.attribution) {
        const Seed s = derive_seed(o.seed, "attribution");
        man.seeds()["attribution"] = s;
        const auto scores = feature_attribution(model, enc, o.repeats, s);
        ojson attr = ojson::object();
        out << "permutation importance (mean |change in P(class 1)|):\n";
        for (const auto& fs : scores) {
            attr[schema.features[fs.feature].name] = fs.score;
            out << "  " << schema.features[fs.feature].name << " " << fmt(fs.score, 6) << "\n";
        }
        man.metrics()["attribution"] = std::move(attr);
    }
    const std::filesystem::path manifest_path = o.manifest.empty() ? o.model + ".eval.manifest.json" : o.manifest;
    man.write(manifest_path);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// baseline

struct BaselineOptions {
    std::string method;
    DataOptions data;
    std::size_t n = 0;
    Seed seed = 0;
    std::string manifest;
};

inline int cmd_baseline(const BaselineOptions& o, std::ostream& out) {
    const auto method = parse_method(o.method);
    if (method == Method::tabdistill) throw ConfigError("--method must be lr or mlp");
    check_n(o.n);
    const auto schema = o.data.schema();
    const auto train = DataOptions::train(schema);
    const auto test = DataOptions::test(schema);
    if (!test) throw ConfigError("dataset config has no test_csv_path to evaluate on");

    const auto dn_raw = sample_few_shot(train, o.n, sample_seed(o.seed));
    const auto dn = preprocess(dn_raw, schema);
    const auto te = preprocess(*test, schema, &dn);
    const auto fit = run_baseline(method, dn, te, o.seed);
    const double auc = roc_auc(fit.test_scores, te.y);

    const auto plan = method == Method::logistic_regression ? logistic_regression_plan(o.n) : scratch_mlp_plan(o.n);
    RunManifest man("baseline");
    ojson grid = ojson::object();
    for (const auto& [name, values] : plan.grid) grid[name] = json_numbers(values);
    man.config() = {{"method", o.method}, {"data", o.data.config}, {"n", o.n}, {"seed", o.seed},
                    {"folds", plan.folds}, {"grid", grid}};
    man.seeds() = {{"run", o.seed}, {"sample", sample_seed(o.seed)}, {"cv_folds", derive_seed(o.seed, "cv-folds")}};
    man.dataset("train", train);
    man.dataset("dn", dn_raw);
    man.dataset("test", *test);
    ojson best = ojson::object();
    for (const auto& [k, v] : fit.cv.best) best[k] = json_number(v);
    auto mean_auc = ojson::array();
    for (double a : fit.cv.mean_auc) mean_auc.push_back(std::isnan(a) ? ojson(nullptr) : ojson(a));
    man["cv"] = {{"best", best}, {"mean_auc", mean_auc}};
    man.metrics()["test_auc"] = auc;
    out << method_label(method) << " N=" << o.n << " seed=" << o.seed << " folds=" << plan.folds << "\n";
    out << "selected:";
    for (const auto& [k, v] : fit.cv.best) out << " " << k << "=" << v;
    out << "\ntest AUC: " << fmt(auc) << "\n";
    const std::filesystem::path manifest_path =
        o.manifest.empty() ? "baseline-" + o.method + "-n" + std::to_string(o.n) + "-seed" + std::to_string(o.seed) +
                                 ".manifest.json"
                           : o.manifest;
    man.write(manifest_path);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepPoint {
    double lr = 1e-4;
    std::size_t epochs = 300;
    std::size_t R = 4;
    std::size_t L = 10;
    FinalActivation final_act = FinalActivation::none;
};

/// Grid file: JSON object with any of "lr", "epochs", "R", "L", "final_act" mapping
/// to lists; omitted keys keep a single default value. Expanded with lr varying
/// slowest and final_act fastest.
inline std::vector<SweepPoint> parse_sweep_grid(const std::string& text, const SweepPoint& defaults) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("grid file is not valid JSON: ") + e.what());
    }
    if (!j.is_object() || j.empty()) throw ConfigError("empty grid: the grid file must name at least one list");
    for (const auto& [key, _] : j.items())
        if (key != "lr" && key != "epochs" && key != "R" && key != "L" && key != "final_act")
            throw ConfigError("grid file has unknown key '" + key + "' (expected lr, epochs, R, L, final_act)");
    auto list = [&](const char* key) -> const nlohmann::json* {
        if (!j.contains(key)) return nullptr;
        const auto& v = j[key];
        if (!v.is_array()) throw ConfigError(std::string("grid key '") + key + "' must be a list");
        if (v.empty()) throw ConfigError(std::string("empty grid: list '") + key + "' has no values");
        return &v;
    };
    auto numbers = [&](const char* key, double def) {
        std::vector<double> out;
        if (const auto* v = list(key)) {
            for (const auto& x : *v) {
                if (!x.is_number()) throw ConfigError(std::string("grid key '") + key + "' must list numbers");
                out.push_back(x.get<double>());
            }
        } else {
            out.push_back(def);
        }
        return out;
    };
    auto counts = [&](const char* key, std::size_t def) {
        std::vector<std::size_t> out;
        for (double v : numbers(key, static_cast<double>(def))) {
            if (v < 0 || v != std::floor(v))
                throw ConfigError(std::string("grid key '") + key + "' must list non-negative integers");
            out.push_back(static_cast<std::size_t>(v));
        }
        return out;
    };
    const auto lrs = numbers("lr", defaults.lr);
    const auto epochs = counts("epochs", defaults.epochs);
    const auto Rs = counts("R", defaults.R);
    const auto Ls = counts("L", defaults.L);
    std::vector<FinalActivation> acts;
    if (const auto* v = list("final_act")) {
        for (const auto& x : *v) {
            if (!x.is_string()) throw ConfigError("grid key 'final_act' must list strings");
            acts.push_back(parse_final_activation(x.get<std::string>()));
        }
    } else {
        acts.push_back(defaults.final_act);
    }
    std::vector<SweepPoint> out;
    for (double lr : lrs)
        for (auto t : epochs)
            for (auto R : Rs)
                for (auto L : Ls)
                    for (auto a : acts) out.push_back({lr, t, R, L, a});
    return out;
}

struct SweepRow {
    std::size_t grid_index = 0;
    SweepPoint point;
    double validation_accuracy = 0.0;
    std::size_t best_epoch = 0;
};

/// Ranked descending in validation accuracy; ties keep grid order.
inline std::vector<SweepRow> rank_sweep(std::vector<SweepRow> rows) {
    std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
        return a.validation_accuracy > b.validation_accuracy;
    });
    return rows;
}

struct SweepOptions {
    DataOptions data;
    std::size_t n = 0;
    Seed seed = 0;
    std::string grid;
    EncoderOptions encoder;
    double wd = 1e-3;
    std::size_t threads = 0;  // 0: hardware concurrency
    std::string out = "sweep-results.json";
    std::string manifest;
};

inline int cmd_sweep(const SweepOptions& o, std::ostream& out) {
    check_n(o.n);
    o.encoder.validate();
    const auto points = parse_sweep_grid(read_text_file(o.grid), {});
    for (const auto& p : points) {
        Phase1Config c;
        c.lr = p.lr;
        c.weight_decay = o.wd;
        c.R = p.R;
        c.L = p.L;
        c.validate();
    }
    const auto schema = o.data.schema();
    const auto train = DataOptions::train(schema);
    const auto dn = sample_few_shot(train, o.n, sample_seed(o.seed));

    std::vector<SweepRow> rows(points.size());
    std::vector<std::string> errors(points.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < points.size(); i = next++) {
            try {
                auto encoder = o.encoder.make();
                FewShotTask task(dn, schema, *encoder);
                Phase1Config c;
                c.lr = points[i].lr;
                c.epochs = points[i].epochs;
                c.R = points[i].R;
                c.L = points[i].L;
                c.final_activation = points[i].final_act;
                c.weight_decay = o.wd;
                c.seed = o.seed;
                const auto res = phase1_train(task, c);
                const auto* best = res.history.best();
                rows[i] = {i, points[i], best ? best->validation_accuracy : 0.0, res.history.best_epoch};
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    std::size_t n_threads = o.threads ? o.threads : std::max(1u, std::thread::hardware_concurrency());
    if (!o.encoder.is_builtin()) n_threads = 1;  // one bridge process at a time
    n_threads = std::min(n_threads, points.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (std::size_t i = 0; i < errors.size(); ++i)
        if (!errors[i].empty()) throw std::runtime_error("grid point " + std::to_string(i) + ": " + errors[i]);

    const auto ranked = rank_sweep(rows);
    auto results = ojson::array();
    char line[256];
    std::snprintf(line, sizeof line, "%-5s %-10s %-7s %-4s %-4s %-10s %-10s %s\n", "rank", "lr", "epochs", "R", "L",
                  "final_act", "val_acc", "best_epoch");
    out << line;
    for (std::size_t r = 0; r < ranked.size(); ++r) {
        const auto& row = ranked[r];
        results.push_back({{"rank", r + 1},
                           {"grid_index", row.grid_index},
                           {"lr", row.point.lr},
                           {"epochs", row.point.epochs},
                           {"R", row.point.R},
                           {"L", row.point.L},
                           {"final_act", to_string(row.point.final_act)},
                           {"best_validation_accuracy", row.validation_accuracy},
                           {"best_epoch", row.best_epoch},
                           {"best", r == 0}});
        std::snprintf(line, sizeof line, "%-5zu %-10g %-7zu %-4zu %-4zu %-10s %-10.4f %zu%s\n", r + 1, row.point.lr,
                      row.point.epochs, row.point.R, row.point.L, to_string(row.point.final_act).c_str(),
                      row.validation_accuracy, row.best_epoch, r == 0 ? "  *" : "");
        out << line;
    }
    const std::filesystem::path out_path = o.out;
    write_text_file(out_path, ojson{{"results", results}}.dump(1) + "\n");

    RunManifest man("sweep");
    man.config() = {{"data", o.data.config}, {"n", o.n}, {"seed", o.seed}, {"grid", o.grid},
                    {"weight_decay", o.wd}, {"points", points.size()}, {"out", o.out}};
    man.config().update(o.encoder.echo());
    man.seeds() = {{"run", o.seed}, {"sample", sample_seed(o.seed)}};
    man.dataset("train", train);
    man.dataset("dn", dn);
    man.metrics()["best_grid_index"] = ranked.front().grid_index;
    man.metrics()["best_validation_accuracy"] = ranked.front().validation_accuracy;
    man.artifact("results", out_path);
    man.write(o.manifest.empty() ? o.out + ".manifest.json" : o.manifest);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// benchmark

struct BenchmarkOptions {
    std::vector<std::string> data;
    std::vector<std::string> methods{"lr", "mlp"};
    std::vector<std::size_t> ns{4, 8, 16, 32, 64};
    std::vector<Seed> seeds{0, 1, 2, 3, 4};
    EncoderOptions encoder;
    TrainOptions train;
    std::string out = "benchmark-results.json";
    std::string manifest;
};

inline ojson benchmark_to_json(const std::vector<BenchmarkResult>& results) {
    auto a = ojson::array();
    for (const auto& r : results)
        a.push_back({{"dataset", r.dataset},
                     {"method", to_string(r.method)},
                     {"n", r.n},
                     {"seeds", r.seeds},
                     {"aucs", r.aucs},
                     {"mean", std::isnan(r.mean) ? ojson(nullptr) : ojson(r.mean)},
                     {"std", std::isnan(r.std) ? ojson(nullptr) : ojson(r.std)},
                     {"failures", r.failures}});
    return a;
}

inline int cmd_benchmark(const BenchmarkOptions& o, std::ostream& out) {
    if (o.data.empty()) throw ConfigError("benchmark needs at least one --data config");
    BenchmarkPlan plan;
    for (const auto& m : o.methods) plan.methods.push_back(parse_method(m));
    for (auto n : o.ns) check_n(n);
    plan.ns = o.ns;
    plan.seeds = o.seeds;
    plan.phase1 = o.train.phase1(0);
    plan.phase2 = o.train.phase2();
    o.encoder.validate();
    plan.encoder = [enc = o.encoder] { return enc.make(); };
    RunManifest man("benchmark");
    for (const auto& cfg : o.data) {
        const auto schema = load_schema_config(cfg);
        auto test = DataOptions::test(schema);
        if (!test) throw ConfigError("dataset config '" + cfg + "' has no test_csv_path");
        const auto name = std::filesystem::path(cfg).stem().string();
        plan.datasets.push_back({name, schema, DataOptions::train(schema), std::move(*test)});
        man.dataset(name + ".train", plan.datasets.back().train);
        man.dataset(name + ".test", plan.datasets.back().test);
    }
    const auto results = run_benchmark(plan);
    const auto table = render_table(results);
    out << table;
    const std::filesystem::path out_path = o.out;
    write_text_file(out_path, ojson{{"results", benchmark_to_json(results)}, {"table", table}}.dump(1) + "\n");

    man.config() = {{"data", o.data}, {"methods", o.methods}, {"ns", o.ns}, {"seeds", o.seeds}, {"out", o.out}};
    man.config().update(o.encoder.echo());
    man.config().update(o.train.echo());
    std::size_t failures = 0;
    for (const auto& r : results) failures += r.failures.size();
    man.metrics()["cells"] = results.size();
    man.metrics()["failed_runs"] = failures;
    man.artifact("results", out_path);
    man.write(o.manifest.empty() ? o.out + ".manifest.json" : o.manifest);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
    std::string out_dir;
    std::size_t noise = 2;
    std::size_t train_rows = 1000;
    std::size_t test_rows = 1000;
    Seed seed = 0;
};

inline int cmd_synth(const SynthOptions& o, std::ostream& out) {
    if (o.train_rows < 2 || o.test_rows < 2) throw ConfigError("--train-rows and --test-rows must be >= 2");
    auto task = make_threshold_task(o.train_rows, o.test_rows, o.noise, o.seed);
    const std::filesystem::path dir = o.out_dir;
    std::filesystem::create_directories(dir);
    std::ostringstream tr, te, cfg;
    write_csv(task.train, task.schema, tr);
    write_csv(task.test, task.schema, te);
    write_text_file(dir / "synthetic_train.csv", tr.str());
    write_text_file(dir / "synthetic_test.csv", te.str());
    task.schema.csv_path = "synthetic_train.csv";
    task.schema.test_csv_path = "synthetic_test.csv";
    write_schema_config(task.schema, cfg);
    write_text_file(dir / "synthetic.cfg", cfg.str());

    RunManifest man("synth");
    man.config() = {{"out_dir", o.out_dir}, {"noise", o.noise}, {"train_rows", o.train_rows},
                    {"test_rows", o.test_rows}, {"seed", o.seed}};
    man.seeds() = {{"run", o.seed}};
    man.dataset("train", task.train);
    man.dataset("test", task.test);
    man.artifact("train_csv", dir / "synthetic_train.csv");
    man.artifact("test_csv", dir / "synthetic_test.csv");
    man.artifact("config", dir / "synthetic.cfg");
    man.write(dir / "synthetic.manifest.json");
    out << "wrote " << (dir / "synthetic.cfg").string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

/// Parses argv and dispatches. Exit codes: 0 success, 1 runtime failure, 2 usage or
/// configuration error.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Distill few-shot tabular classifiers into small MLPs", "tabdistill"};
    app.require_subcommand(1);

    DistillOptions d;
    auto* distill_cmd = app.add_subcommand("distill", "train the hypermap, extract and fine-tune the MLP");
    distill_cmd->add_option("--data", d.data.config, "dataset config")->required();
    distill_cmd->add_option("--n", d.n, "few-shot training set size N")->required();
    distill_cmd->add_option("--seed", d.seed, "run seed")->capture_default_str();
    d.encoder.add(*distill_cmd);
    d.train.add(*distill_cmd);
    distill_cmd->add_option("--out", d.out, "model dump path")->required();
    distill_cmd->add_option("--manifest", d.manifest, "manifest path (default <out>.manifest.json)");

    EvalOptions e;
    auto* eval_cmd = app.add_subcommand("eval", "score a model dump on the test split");
    eval_cmd->add_option("--model", e.model, "model dump")->required();
    eval_cmd->add_option("--data", e.data.config, "dataset config")->required();
    eval_cmd->add_flag("--attribution", e.attribution, "print permutation importance per source feature");
    eval_cmd->add_option("--repeats", e.repeats, "attribution shuffles per feature")->capture_default_str();
    eval_cmd->add_option("--seed", e.seed, "attribution seed")->capture_default_str();
    eval_cmd->add_option("--manifest", e.manifest, "manifest path (default <model>.eval.manifest.json)");

    BaselineOptions b;
    auto* baseline_cmd = app.add_subcommand("baseline", "cross-validated logistic regression or scratch MLP");
    baseline_cmd->add_option("--method", b.method, "lr | mlp")->required();
    baseline_cmd->add_option("--data", b.data.config, "dataset config")->required();
    baseline_cmd->add_option("--n", b.n, "few-shot training set size N")->required();
    baseline_cmd->add_option("--seed", b.seed, "run seed")->capture_default_str();
    baseline_cmd->add_option("--manifest", b.manifest, "manifest path");

    SweepOptions s;
    auto* sweep_cmd = app.add_subcommand("sweep", "Phase 1 grid sweep ranked by validation accuracy");
    sweep_cmd->add_option("--data", s.data.config, "dataset config")->required();
    sweep_cmd->add_option("--n", s.n, "few-shot training set size N")->required();
    sweep_cmd->add_option("--seed", s.seed, "run seed")->capture_default_str();
    sweep_cmd->add_option("--grid", s.grid, "grid JSON file")->required();
    s.encoder.add(*sweep_cmd);
    sweep_cmd->add_option("--wd", s.wd, "Phase 1 weight decay")->capture_default_str();
    sweep_cmd->add_option("--threads", s.threads, "worker threads (0: all cores)")->capture_default_str();
    sweep_cmd->add_option("--out", s.out, "ranked results JSON")->capture_default_str();
    sweep_cmd->add_option("--manifest", s.manifest, "manifest path (default <out>.manifest.json)");

    BenchmarkOptions bm;
    auto* bench_cmd = app.add_subcommand("benchmark", "multi-seed AUC table over datasets, methods and N");
    bench_cmd->add_option("--data", bm.data, "dataset configs")->required();
    bench_cmd->add_option("--methods", bm.methods, "lr, mlp, tabdistill")->delimiter(',')->capture_default_str();
    bench_cmd->add_option("--ns", bm.ns, "training set sizes")->delimiter(',')->capture_default_str();
    bench_cmd->add_option("--seeds", bm.seeds, "seeds")->delimiter(',')->capture_default_str();
    bm.encoder.add(*bench_cmd);
    bm.train.add(*bench_cmd);
    bench_cmd->add_option("--out", bm.out, "results JSON")->capture_default_str();
    bench_cmd->add_option("--manifest", bm.manifest, "manifest path (default <out>.manifest.json)");

    SynthOptions sy;
    auto* synth_cmd = app.add_subcommand("synth", "write the synthetic threshold task (y = 1[x0 > 0])");
    synth_cmd->add_option("--out-dir", sy.out_dir, "output directory")->required();
    synth_cmd->add_option("--noise", sy.noise, "noise columns")->capture_default_str();
    synth_cmd->add_option("--train-rows", sy.train_rows)->capture_default_str();
    synth_cmd->add_option("--test-rows", sy.test_rows)->capture_default_str();
    synth_cmd->add_option("--seed", sy.seed)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& ex) {
        if (ex.get_exit_code() == 0) {
            app.exit(ex, out, err);
            return kExitOk;
        }
        err << "usage error: " << ex.what() << "\n" << app.help();
        return kExitUsage;
    }

    try {
        if (*distill_cmd) return cmd_distill(d, out);
        if (*eval_cmd) return cmd_eval(e, out);
        if (*baseline_cmd) return cmd_baseline(b, out);
        if (*sweep_cmd) return cmd_sweep(s, out);
        if (*bench_cmd) return cmd_benchmark(bm, out);
        if (*synth_cmd) return cmd_synth(sy, out);
    } catch (const ConfigError& ex) {
        err << "error: " << ex.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    std::vector<const char*> argv{"tabdistill"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace tabdistill::cli
