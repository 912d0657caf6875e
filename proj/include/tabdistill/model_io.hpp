#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tabdistill/data.hpp"
#include "tabdistill/errors.hpp"
#include "tabdistill/hypernet.hpp"
#include "tabdistill/network.hpp"
#include "tabdistill/train.hpp"

namespace tabdistill {

using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Model dump

/// JSON form of a distilled model. Doubles are written in shortest round-trip form,
/// so loading reproduces every parameter bit for bit. No timestamps: identical runs
/// give identical files.
inline ojson model_to_json(const DistilledModel& m, const FeatureSchema& schema) {
    ojson j;
    j["arch"] = {{"d", m.arch.d},
                 {"R", m.arch.R},
                 {"L", m.arch.L},
                 {"final_activation", to_string(m.arch.final_activation)}};
    j["flat"] = m.theta.flat;
    auto cols = ojson::array();
    for (const auto& c : m.column_map) {
        ojson col;
        col["feature"] = schema.features.at(c.feature).name;
        col["index"] = c.feature;
        if (c.category) col["category"] = *c.category;
        cols.push_back(std::move(col));
    }
    j["column_map"] = std::move(cols);
    auto order = ojson::array();
    for (auto f : m.feature_order) order.push_back(schema.features.at(f).name);
    j["feature_order"] = std::move(order);
    j["normalization"] = {{"means", m.means}, {"stds", m.stds}};
    if (m.hypermap) {
        j["hypermap"] = {{"rows", m.hypermap->A.rows},
                         {"cols", m.hypermap->A.cols},
                         {"A", m.hypermap->A.data},
                         {"b", m.hypermap->b}};
    }
    return j;
}

inline std::string dump_model(const DistilledModel& m, const FeatureSchema& schema) {
    return model_to_json(m, schema).dump(1) + "\n";
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw DataError("failed writing '" + path.string() + "'");
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_model(const std::filesystem::path& path, const DistilledModel& m, const FeatureSchema& schema) {
    write_text_file(path, dump_model(m, schema));
}

/// Model dump as read from disk; column identities are names until bound to a schema.
struct LoadedModel {
    MlpArchitecture arch;
    MlpParameters theta;
    struct Column {
        std::string feature;
        std::size_t index = 0;
        std::optional<std::string> category;
    };
    std::vector<Column> columns;
    std::vector<std::string> feature_order;
    std::vector<double> means;
    std::vector<double> stds;
    std::optional<HyperMapParams> hypermap;

    /// Resolves the model's columns against `schema`; a mismatch names the first
    /// offending column.
    DistilledModel bind(const FeatureSchema& schema) const {
        DistilledModel m{arch, theta, {}, {}, means, stds, hypermap};
        for (std::size_t c = 0; c < columns.size(); ++c) {
            const auto& col = columns[c];
            const auto idx = schema.find(col.feature);
            if (!idx || *idx != col.index)
                throw DataError("column " + std::to_string(c) + " ('" + col.feature +
                                "'): model does not match the data schema" +
                                (col.index < schema.size() ? " (schema has '" + schema.features[col.index].name +
                                                                 "' at feature " + std::to_string(col.index) + ")"
                                                           : std::string(" (no such feature in schema)")));
            const auto& spec = schema.features[*idx];
            const bool categorical = spec.kind == FeatureKind::categorical;
            if (categorical != col.category.has_value() ||
                (categorical && std::find(spec.categories.begin(), spec.categories.end(), *col.category) ==
                                    spec.categories.end()))
                throw DataError("column " + std::to_string(c) + " ('" + col.feature +
                                "'): encoding differs from the data schema");
            m.column_map.push_back({*idx, col.category});
        }
        for (const auto& name : feature_order) {
            const auto idx = schema.find(name);
            if (!idx) throw DataError("model feature '" + name + "' is not in the data schema");
            m.feature_order.push_back(*idx);
        }
        return m;
    }
};

namespace detail {

[[noreturn]] inline void bad_key(const std::string& source, const std::string& key, const std::string& what) {
    throw FormatError("malformed " + source + ": key '" + key + "' " + what);
}

inline const nlohmann::json& need(const nlohmann::json& j, const std::string& key, const std::string& path,
                                  const std::string& source) {
    if (!j.is_object() || !j.contains(key)) bad_key(source, path, "is missing");
    return j[key];
}

inline std::size_t need_size(const nlohmann::json& j, const std::string& key, const std::string& path,
                             const std::string& source) {
    const auto& v = need(j, key, path, source);
    if (!v.is_number_unsigned()) bad_key(source, path, "must be a non-negative integer");
    return v.get<std::size_t>();
}

inline std::vector<double> need_doubles(const nlohmann::json& j, const std::string& key, const std::string& path,
                                        const std::string& source) {
    const auto& v = need(j, key, path, source);
    if (!v.is_array()) bad_key(source, path, "must be an array of numbers");
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& x : v) {
        if (!x.is_number()) bad_key(source, path, "must be an array of numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

inline std::string need_string(const nlohmann::json& j, const std::string& key, const std::string& path,
                               const std::string& source) {
    const auto& v = need(j, key, path, source);
    if (!v.is_string()) bad_key(source, path, "must be a string");
    return v.get<std::string>();
}

}  // namespace detail

inline LoadedModel parse_model(const std::string& text, const std::string& source = "model file") {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed " + source + ": not valid JSON (" + e.what() + ")");
    }
    if (!j.is_object()) throw FormatError("malformed " + source + ": top level is not an object");
    using namespace detail;
    LoadedModel m;
    const auto& arch = need(j, "arch", "arch", source);
    m.arch.d = need_size(arch, "d", "arch.d", source);
    m.arch.R = need_size(arch, "R", "arch.R", source);
    m.arch.L = need_size(arch, "L", "arch.L", source);
    try {
        m.arch.final_activation = parse_final_activation(need_string(arch, "final_activation", "arch.final_activation", source));
        m.arch.validate();
    } catch (const ConfigError& e) {
        bad_key(source, "arch", std::string("is invalid: ") + e.what());
    }
    m.theta.flat = need_doubles(j, "flat", "flat", source);
    if (m.theta.flat.size() != param_count(m.arch))
        bad_key(source, "flat", "has " + std::to_string(m.theta.flat.size()) + " values; the architecture needs " +
                                    std::to_string(param_count(m.arch)));

    const auto& cols = need(j, "column_map", "column_map", source);
    if (!cols.is_array()) bad_key(source, "column_map", "must be an array");
    for (std::size_t c = 0; c < cols.size(); ++c) {
        const std::string p = "column_map[" + std::to_string(c) + "]";
        LoadedModel::Column col;
        col.feature = need_string(cols[c], "feature", p + ".feature", source);
        col.index = need_size(cols[c], "index", p + ".index", source);
        if (cols[c].contains("category")) col.category = need_string(cols[c], "category", p + ".category", source);
        m.columns.push_back(std::move(col));
    }
    if (m.columns.size() != m.arch.d)
        bad_key(source, "column_map", "has " + std::to_string(m.columns.size()) + " columns; arch.d is " +
                                          std::to_string(m.arch.d));
    const auto& order = need(j, "feature_order", "feature_order", source);
    if (!order.is_array()) bad_key(source, "feature_order", "must be an array of names");
    for (const auto& name : order) {
        if (!name.is_string()) bad_key(source, "feature_order", "must be an array of names");
        m.feature_order.push_back(name.get<std::string>());
    }
    const auto& norm = need(j, "normalization", "normalization", source);
    m.means = need_doubles(norm, "means", "normalization.means", source);
    m.stds = need_doubles(norm, "stds", "normalization.stds", source);
    if (m.means.size() != m.arch.d) bad_key(source, "normalization.means", "length differs from arch.d");
    if (m.stds.size() != m.arch.d) bad_key(source, "normalization.stds", "length differs from arch.d");
    for (double s : m.stds)
        if (!(s > 0.0)) bad_key(source, "normalization.stds", "must be positive");

    if (j.contains("hypermap")) {
        const auto& h = j["hypermap"];
        HyperMapParams eta;
        const auto rows = need_size(h, "rows", "hypermap.rows", source);
        const auto colsz = need_size(h, "cols", "hypermap.cols", source);
        eta.A = Matrix(rows, colsz);
        eta.A.data = need_doubles(h, "A", "hypermap.A", source);
        eta.b = need_doubles(h, "b", "hypermap.b", source);
        if (eta.A.data.size() != rows * colsz) bad_key(source, "hypermap.A", "length differs from rows*cols");
        if (eta.b.size() != rows) bad_key(source, "hypermap.b", "length differs from rows");
        if (rows != m.theta.flat.size()) bad_key(source, "hypermap.rows", "differs from the parameter count");
        m.hypermap = std::move(eta);
    }
    return m;
}

inline LoadedModel load_model(const std::filesystem::path& path) {
    return parse_model(read_text_file(path), "model file '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Run manifest

inline std::string utc_timestamp(std::chrono::system_clock::time_point t) {
    const std::time_t tt = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Persisted record of one command: config echo, seeds, data fingerprint, encoder
/// identity, metrics, produced files and timing.
class RunManifest {
public:
    explicit RunManifest(std::string command)
        : started_(std::chrono::system_clock::now()), steady_start_(std::chrono::steady_clock::now()) {
        j_["command"] = std::move(command);
        j_["config"] = ojson::object();
        j_["seeds"] = ojson::object();
        j_["datasets"] = ojson::object();
        j_["encoder"] = nullptr;
        j_["metrics"] = ojson::object();
        j_["artifacts"] = ojson::array();
    }

    ojson& config() { return j_["config"]; }
    ojson& seeds() { return j_["seeds"]; }
    ojson& metrics() { return j_["metrics"]; }
    ojson& operator[](const std::string& key) { return j_[key]; }

    void dataset(const std::string& role, const RawDataset& ds) {
        char hex[17];
        std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fingerprint(ds)));
        j_["datasets"][role] = {{"rows", ds.size()}, {"columns", ds.num_features()}, {"content_hash", hex}};
    }

    void encoder(const EncoderHandshake& hs) {
        j_["encoder"] = {{"name", hs.name},
                         {"kind", to_string(hs.policy.kind)},
                         {"dim_mode", to_string(hs.policy.dim_mode)},
                         {"dim", hs.policy.dim}};
    }

    void history(const TrainHistory& h) {
        auto epochs = ojson::array();
        for (const auto& e : h.epochs)
            epochs.push_back({{"epoch", e.epoch},
                              {"train_loss", e.train_loss},
                              {"validation_accuracy", e.validation_accuracy},
                              {"permutation_seed", e.permutation_seed},
                              {"validation_seed", e.validation_seed}});
        j_["history"] = {{"best_epoch", h.best_epoch}, {"epochs", std::move(epochs)}};
    }

    void artifact(const std::string& kind, const std::filesystem::path& path) {
        j_["artifacts"].push_back({{"kind", kind}, {"path", path.string()}});
    }

    /// Stamps timing, lists the manifest itself and writes it.
    void write(const std::filesystem::path& path) {
        artifact("manifest", path);
        const auto finished = std::chrono::system_clock::now();
        j_["timestamps"] = {
            {"started", utc_timestamp(started_)},
            {"finished", utc_timestamp(finished)},
            {"wall_clock_seconds",
             std::chrono::duration<double>(std::chrono::steady_clock::now() - steady_start_).count()}};
        write_text_file(path, j_.dump(1) + "\n");
    }

    const ojson& json() const { return j_; }

private:
    ojson j_;
    std::chrono::system_clock::time_point started_;
    std::chrono::steady_clock::time_point steady_start_;
};

inline nlohmann::json load_manifest(const std::filesystem::path& path) {
    try {
        auto j = nlohmann::json::parse(read_text_file(path));
        if (!j.is_object() || !j.contains("command") || !j.contains("config"))
            throw FormatError("malformed manifest '" + path.string() + "': key 'command' or 'config' is missing");
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed manifest '" + path.string() + "': " + e.what());
    }
}

}  // namespace tabdistill
