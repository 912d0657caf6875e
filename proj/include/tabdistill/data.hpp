#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tabdistill/errors.hpp"
#include "tabdistill/matrix.hpp"
#include "tabdistill/rng.hpp"

namespace tabdistill {

using Labels = std::vector<std::uint8_t>;

enum class FeatureKind { numeric, categorical };

struct FeatureSpec {
    std::string name;
    FeatureKind kind = FeatureKind::numeric;
    std::vector<std::string> categories;  // categorical only, in one-hot order
    std::string phrase;                   // e.g. "The median income is"
};

/// Column layout, label mapping and prompt template of a binary classification table.
struct FeatureSchema {
    std::vector<FeatureSpec> features;
    std::string target_name;
    std::string positive_label;
    std::string negative_label;  // empty: every non-positive target value is class 0
    std::string preamble;        // optional sentence before the features of each example
    std::string question;
    std::string answer_yes = "yes";
    std::string answer_no = "no";
    std::filesystem::path csv_path;
    std::filesystem::path test_csv_path;

    std::size_t size() const { return features.size(); }

    std::optional<std::size_t> find(std::string_view name) const {
        for (std::size_t i = 0; i < features.size(); ++i)
            if (features[i].name == name) return i;
        return std::nullopt;
    }

    void validate() const {
        if (features.empty()) throw SchemaError("schema has no features");
        if (target_name.empty()) throw SchemaError("schema has no target column");
        if (positive_label.empty()) throw SchemaError("schema has no positive_label");
        if (!negative_label.empty() && negative_label == positive_label)
            throw SchemaError("positive_label and negative_label are both '" + positive_label + "'");
        std::unordered_set<std::string> names;
        for (const auto& f : features) {
            if (f.name.empty()) throw SchemaError("feature with empty name");
            if (f.name == target_name) throw SchemaError("feature '" + f.name + "' is also the target");
            if (!names.insert(f.name).second) throw SchemaError("duplicate feature name '" + f.name + "'");
            if (f.kind == FeatureKind::categorical) {
                if (f.categories.empty())
                    throw SchemaError("categorical feature '" + f.name + "' has no categories");
                std::unordered_set<std::string> cats(f.categories.begin(), f.categories.end());
                if (cats.size() != f.categories.size())
                    throw SchemaError("categorical feature '" + f.name + "' lists a category twice");
            }
        }
    }
};

inline std::string format_number(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, end);
    if (std::isfinite(v) && s.find_first_of(".e") == std::string::npos) s += ".0";
    return s;
}

/// One raw table cell. Numeric cells keep the text they were parsed from so prompts
/// reproduce the source values verbatim.
struct Cell {
    std::string text;
    double number = 0.0;

    static Cell from_number(double v) { return {format_number(v), v}; }
    static Cell from_text(std::string s) { return {std::move(s), 0.0}; }

    bool operator==(const Cell&) const = default;
};

enum class Split { train, test };

struct RawDataset {
    std::vector<std::size_t> feature_order;  // schema index of each column
    std::vector<std::vector<Cell>> rows;
    Labels labels;
    Split split = Split::train;

    std::size_t size() const { return rows.size(); }
    std::size_t num_features() const { return feature_order.size(); }

    RawDataset subset(std::span<const std::size_t> idx) const {
        RawDataset out{feature_order, {}, {}, split};
        out.rows.reserve(idx.size());
        for (auto i : idx) {
            out.rows.push_back(rows.at(i));
            out.labels.push_back(labels.at(i));
        }
        return out;
    }

    bool operator==(const RawDataset&) const = default;
};

/// Bijection on column positions: column i of the result is column pi[i] of the input.
class FeaturePermutation {
public:
    FeaturePermutation() = default;
    explicit FeaturePermutation(std::vector<std::size_t> pi) : pi_(std::move(pi)) {
        std::vector<bool> seen(pi_.size(), false);
        for (auto p : pi_) {
            if (p >= pi_.size() || seen[p]) throw ConfigError("feature permutation is not a bijection");
            seen[p] = true;
        }
    }

    static FeaturePermutation identity(std::size_t n) {
        std::vector<std::size_t> pi(n);
        for (std::size_t i = 0; i < n; ++i) pi[i] = i;
        return FeaturePermutation(std::move(pi));
    }

    static FeaturePermutation random(std::size_t n, Seed seed) {
        Rng rng(seed);
        return FeaturePermutation(rng.permutation(n));
    }

    FeaturePermutation inverse() const {
        std::vector<std::size_t> inv(pi_.size());
        for (std::size_t i = 0; i < pi_.size(); ++i) inv[pi_[i]] = i;
        return FeaturePermutation(std::move(inv));
    }

    bool is_identity() const {
        for (std::size_t i = 0; i < pi_.size(); ++i)
            if (pi_[i] != i) return false;
        return true;
    }

    std::size_t size() const { return pi_.size(); }
    std::size_t operator[](std::size_t i) const { return pi_[i]; }
    const std::vector<std::size_t>& values() const { return pi_; }

    bool operator==(const FeaturePermutation&) const = default;

private:
    std::vector<std::size_t> pi_;
};

struct EncodedColumn {
    std::size_t feature = 0;  // schema index of the source feature
    std::optional<std::string> category;

    bool operator==(const EncodedColumn&) const = default;
};

/// Numeric design matrix after one-hot encoding and z-scoring.
struct EncodedDataset {
    Matrix X;
    Labels y;
    std::vector<double> means;
    std::vector<double> stds;
    std::vector<EncodedColumn> column_map;
    std::vector<std::size_t> feature_order;  // source features in block order

    std::size_t size() const { return X.rows; }
    std::size_t dim() const { return X.cols; }

    EncodedDataset subset(std::span<const std::size_t> idx) const {
        EncodedDataset out{take_rows(X, idx), {}, means, stds, column_map, feature_order};
        for (auto i : idx) out.y.push_back(y.at(i));
        return out;
    }

    /// [first, last) encoded column range of each block, in block order.
    std::vector<std::pair<std::size_t, std::size_t>> blocks() const {
        std::vector<std::pair<std::size_t, std::size_t>> out;
        std::size_t c = 0;
        for (auto f : feature_order) {
            const std::size_t start = c;
            while (c < column_map.size() && column_map[c].feature == f) ++c;
            out.emplace_back(start, c);
        }
        return out;
    }

    bool operator==(const EncodedDataset&) const = default;
};

// ---------------------------------------------------------------------------
// Text parsing helpers

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::optional<double> parse_double(std::string_view s) {
    const std::string t = trim(s);
    if (t.empty()) return std::nullopt;
    const char* first = t.data();
    if (*first == '+') ++first;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

/// RFC 4180 record splitter: quoted fields, doubled quotes, CRLF.
inline std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false;
    bool any = false;
    char c;
    while (in.get(c)) {
        any = true;
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    field += '"';
                    in.get();
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            record.push_back(std::move(field));
            field.clear();
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && in.peek() == '\n') in.get();
            record.push_back(std::move(field));
            field.clear();
            if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
            record.clear();
            any = false;
        } else {
            field += c;
        }
    }
    if (quoted) throw DataError("unterminated quoted field at end of CSV");
    if (any) {
        record.push_back(std::move(field));
        records.push_back(std::move(record));
    }
    if (!records.empty() && !records[0].empty() && records[0][0].rfind("\xEF\xBB\xBF", 0) == 0)
        records[0][0].erase(0, 3);
    return records;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Schema config

/// Reads the key-value dataset config. Example:
///
///     csv_path = heart_train.csv
///     test_csv_path = heart_test.csv
///     target = target
///     positive_label = 1
///     negative_label = 0
///     question = Does this patient have a heart disease? Yes or no?
///     feature.age = numeric | The age is
///     feature.thal = categorical normal,fixed,reversible | The thal is
///
/// Features keep their order of appearance. Relative paths resolve against the
/// config file's directory.
inline FeatureSchema parse_schema_config(std::istream& in, const std::filesystem::path& base_dir = {}) {
    FeatureSchema s;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = detail::trim(std::string_view(t).substr(0, eq));
        const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
        if (key.rfind("feature.", 0) == 0) {
            FeatureSpec f;
            f.name = key.substr(8);
            std::string spec = value;
            const auto bar = value.find('|');
            if (bar != std::string::npos) {
                spec = detail::trim(std::string_view(value).substr(0, bar));
                f.phrase = detail::trim(std::string_view(value).substr(bar + 1));
            }
            if (f.phrase.empty()) f.phrase = "The " + f.name + " is";
            const auto sp = spec.find_first_of(" \t");
            const std::string kind = spec.substr(0, sp);
            if (kind == "numeric") {
                f.kind = FeatureKind::numeric;
            } else if (kind == "categorical") {
                f.kind = FeatureKind::categorical;
                if (sp == std::string::npos)
                    throw ConfigError("config line " + std::to_string(lineno) + ": categorical feature '" + f.name +
                                      "' needs a category list");
                f.categories = detail::split(detail::trim(std::string_view(spec).substr(sp)), ',');
            } else {
                throw ConfigError("config line " + std::to_string(lineno) + ": unknown feature kind '" + kind +
                                  "' (expected numeric or categorical)");
            }
            s.features.push_back(std::move(f));
        } else if (key == "csv_path") {
            s.csv_path = value.empty() ? std::filesystem::path{} : base_dir / value;
        } else if (key == "test_csv_path") {
            s.test_csv_path = value.empty() ? std::filesystem::path{} : base_dir / value;
        } else if (key == "target") {
            s.target_name = value;
        } else if (key == "positive_label") {
            s.positive_label = value;
        } else if (key == "negative_label") {
            s.negative_label = value;
        } else if (key == "question") {
            s.question = value;
        } else if (key == "preamble") {
            s.preamble = value;
        } else if (key == "answer_yes") {
            s.answer_yes = value;
        } else if (key == "answer_no") {
            s.answer_no = value;
        } else {
            throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
    }
    s.validate();
    return s;
}

inline FeatureSchema load_schema_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open dataset config " + path.string());
    return parse_schema_config(in, path.parent_path());
}

inline void write_schema_config(const FeatureSchema& s, std::ostream& out) {
    if (!s.csv_path.empty()) out << "csv_path = " << s.csv_path.string() << "\n";
    if (!s.test_csv_path.empty()) out << "test_csv_path = " << s.test_csv_path.string() << "\n";
    out << "target = " << s.target_name << "\n";
    out << "positive_label = " << s.positive_label << "\n";
    if (!s.negative_label.empty()) out << "negative_label = " << s.negative_label << "\n";
    if (!s.preamble.empty()) out << "preamble = " << s.preamble << "\n";
    out << "question = " << s.question << "\n";
    out << "answer_yes = " << s.answer_yes << "\n";
    out << "answer_no = " << s.answer_no << "\n";
    for (const auto& f : s.features) {
        out << "feature." << f.name << " = ";
        if (f.kind == FeatureKind::numeric) {
            out << "numeric";
        } else {
            out << "categorical ";
            for (std::size_t i = 0; i < f.categories.size(); ++i) out << (i ? "," : "") << f.categories[i];
        }
        out << " | " << f.phrase << "\n";
    }
}

// ---------------------------------------------------------------------------
// Ingestion

inline Cell parse_cell(const FeatureSpec& f, const std::string& raw, std::size_t row) {
    const std::string text = detail::trim(raw);
    if (f.kind == FeatureKind::numeric) {
        auto v = detail::parse_double(text);
        if (!v)
            throw DataError("row " + std::to_string(row) + ": cannot parse numeric value '" + text + "' for feature '" +
                            f.name + "'");
        return {text, *v};
    }
    if (std::find(f.categories.begin(), f.categories.end(), text) == f.categories.end()) {
        std::string allowed;
        for (const auto& c : f.categories) allowed += (allowed.empty() ? "" : ", ") + c;
        throw DataError("row " + std::to_string(row) + ": unknown category '" + text + "' for feature '" + f.name +
                        "' (allowed: " + allowed + ")");
    }
    return Cell::from_text(text);
}

inline std::uint8_t parse_label(const FeatureSchema& schema, const std::string& raw, std::size_t row) {
    const std::string t = detail::trim(raw);
    if (t == schema.positive_label) return 1;
    if (schema.negative_label.empty() || t == schema.negative_label) return 0;
    throw DataError("row " + std::to_string(row) + ": target value '" + t + "' is neither '" + schema.positive_label +
                    "' nor '" + schema.negative_label + "'");
}

/// Parses CSV text. Row indices in errors count data rows from 0.
inline RawDataset parse_csv_dataset(std::istream& in, const FeatureSchema& schema, Split split = Split::train) {
    const auto records = detail::parse_csv(in);
    if (records.empty()) throw SchemaError("CSV has no header row");
    const auto& header = records[0];

    std::unordered_map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) {
        const std::string name = detail::trim(header[i]);
        if (name != schema.target_name && !schema.find(name))
            throw SchemaError("unexpected column '" + name + "' in CSV header");
        col[name] = i;
    }
    if (!col.contains(schema.target_name))
        throw SchemaError("missing column '" + schema.target_name + "' (target) in CSV header");
    std::vector<std::size_t> src(schema.size());
    for (std::size_t f = 0; f < schema.size(); ++f) {
        auto it = col.find(schema.features[f].name);
        if (it == col.end()) throw SchemaError("missing column '" + schema.features[f].name + "' in CSV header");
        src[f] = it->second;
    }
    const std::size_t target_col = col.at(schema.target_name);

    RawDataset ds;
    ds.split = split;
    ds.feature_order.resize(schema.size());
    for (std::size_t f = 0; f < schema.size(); ++f) ds.feature_order[f] = f;
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        const std::size_t row = r - 1;
        if (rec.size() != header.size())
            throw DataError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                            " cells, found " + std::to_string(rec.size()));
        std::vector<Cell> cells;
        cells.reserve(schema.size());
        for (std::size_t f = 0; f < schema.size(); ++f) cells.push_back(parse_cell(schema.features[f], rec[src[f]], row));
        ds.rows.push_back(std::move(cells));
        ds.labels.push_back(parse_label(schema, rec[target_col], row));
    }
    return ds;
}

inline RawDataset load_csv(const std::filesystem::path& path, const FeatureSchema& schema, Split split = Split::train) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open CSV file " + path.string());
    return parse_csv_dataset(in, schema, split);
}

inline void write_csv(const RawDataset& ds, const FeatureSchema& schema, std::ostream& out) {
    for (auto f : ds.feature_order) out << schema.features[f].name << ",";
    out << schema.target_name << "\n";
    for (std::size_t r = 0; r < ds.size(); ++r) {
        for (const auto& c : ds.rows[r]) out << c.text << ",";
        out << (ds.labels[r] ? schema.positive_label
                             : (schema.negative_label.empty() ? std::string("0") : schema.negative_label))
            << "\n";
    }
}

// ---------------------------------------------------------------------------
// Preprocessing

inline constexpr double kStdClampThreshold = 1e-8;

/// One-hot encodes categorical features and z-scores numeric ones. Statistics come
/// from `stats_source` when given (e.g. test rows encoded with D_N's statistics),
/// otherwise from `raw` itself. Column blocks follow raw.feature_order.
inline EncodedDataset preprocess(const RawDataset& raw, const FeatureSchema& schema,
                                 const EncodedDataset* stats_source = nullptr) {
    if (raw.size() == 0) throw DataError("cannot preprocess an empty dataset");

    EncodedDataset out;
    out.feature_order = raw.feature_order;
    std::vector<std::size_t> block_start;
    for (auto f : raw.feature_order) {
        block_start.push_back(out.column_map.size());
        const auto& spec = schema.features.at(f);
        if (spec.kind == FeatureKind::numeric) {
            out.column_map.push_back({f, std::nullopt});
        } else {
            for (const auto& c : spec.categories) out.column_map.push_back({f, c});
        }
    }
    if (stats_source && stats_source->column_map != out.column_map)
        throw SchemaError("encoding statistics were computed for a different column layout");

    const std::size_t n = raw.size();
    const std::size_t d = out.column_map.size();
    out.X = Matrix(n, d);
    out.y = raw.labels;
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < raw.num_features(); ++j) {
            const auto& spec = schema.features[raw.feature_order[j]];
            const Cell& cell = raw.rows[r].at(j);
            if (spec.kind == FeatureKind::numeric) {
                out.X(r, block_start[j]) = cell.number;
            } else {
                auto it = std::find(spec.categories.begin(), spec.categories.end(), cell.text);
                if (it == spec.categories.end())
                    throw DataError("row " + std::to_string(r) + ": unknown category '" + cell.text + "' for feature '" +
                                    spec.name + "'");
                out.X(r, block_start[j] + static_cast<std::size_t>(it - spec.categories.begin())) = 1.0;
            }
        }
    }

    out.means.assign(d, 0.0);
    out.stds.assign(d, 1.0);
    for (std::size_t c = 0; c < d; ++c) {
        if (out.column_map[c].category) continue;
        if (stats_source) {
            out.means[c] = stats_source->means[c];
            out.stds[c] = stats_source->stds[c];
        } else {
            double mean = 0.0;
            for (std::size_t r = 0; r < n; ++r) mean += out.X(r, c);
            mean /= static_cast<double>(n);
            double var = 0.0;
            for (std::size_t r = 0; r < n; ++r) var += (out.X(r, c) - mean) * (out.X(r, c) - mean);
            double sd = std::sqrt(var / static_cast<double>(n));
            if (sd < kStdClampThreshold) sd = 1.0;
            out.means[c] = mean;
            out.stds[c] = sd;
        }
        for (std::size_t r = 0; r < n; ++r) out.X(r, c) = (out.X(r, c) - out.means[c]) / out.stds[c];
    }
    for (double v : out.X.data)
        if (!std::isfinite(v)) throw NumericError("non-finite value after preprocessing");
    return out;
}

// ---------------------------------------------------------------------------
// Few-shot sampling, permutation, partitions

/// Class-balanced sample of N rows without replacement, deterministic in seed.
inline RawDataset sample_few_shot(const RawDataset& train, std::size_t n, Seed seed) {
    if (n == 0 || n % 2 != 0)
        throw ConfigError("N must be a positive even number for a class-balanced sample, got " + std::to_string(n));
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < train.size(); ++i) (train.labels[i] ? pos : neg).push_back(i);
    const std::size_t half = n / 2;
    if (pos.size() < half || neg.size() < half)
        throw DataError("class-balanced sample of N=" + std::to_string(n) + " needs " + std::to_string(half) +
                        " examples per class; have " + std::to_string(pos.size()) + " positive and " +
                        std::to_string(neg.size()) + " negative");
    Rng rng(seed);
    rng.shuffle(pos);
    rng.shuffle(neg);
    std::vector<std::size_t> chosen(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(half));
    chosen.insert(chosen.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(half));
    rng.shuffle(chosen);
    return train.subset(chosen);
}

inline RawDataset permute_features(const FeaturePermutation& pi, const RawDataset& data) {
    if (pi.size() != data.num_features())
        throw ShapeError("permutation of length " + std::to_string(pi.size()) + " applied to " +
                         std::to_string(data.num_features()) + " features");
    RawDataset out{{}, {}, data.labels, data.split};
    out.feature_order.resize(pi.size());
    for (std::size_t i = 0; i < pi.size(); ++i) out.feature_order[i] = data.feature_order[pi[i]];
    out.rows.reserve(data.size());
    for (const auto& row : data.rows) {
        std::vector<Cell> cells(pi.size());
        for (std::size_t i = 0; i < pi.size(); ++i) cells[i] = row[pi[i]];
        out.rows.push_back(std::move(cells));
    }
    return out;
}

/// Moves whole encoded blocks: all one-hot columns of a source feature stay contiguous.
inline EncodedDataset permute_features(const FeaturePermutation& pi, const EncodedDataset& data) {
    if (pi.size() != data.feature_order.size())
        throw ShapeError("permutation of length " + std::to_string(pi.size()) + " applied to " +
                         std::to_string(data.feature_order.size()) + " features");
    const auto blocks = data.blocks();
    std::vector<std::size_t> cols;
    cols.reserve(data.dim());
    EncodedDataset out;
    out.y = data.y;
    for (std::size_t i = 0; i < pi.size(); ++i) {
        out.feature_order.push_back(data.feature_order[pi[i]]);
        for (auto c = blocks[pi[i]].first; c < blocks[pi[i]].second; ++c) cols.push_back(c);
    }
    out.X = Matrix(data.size(), data.dim());
    for (std::size_t r = 0; r < data.size(); ++r)
        for (std::size_t c = 0; c < cols.size(); ++c) out.X(r, c) = data.X(r, cols[c]);
    for (auto c : cols) {
        out.means.push_back(data.means[c]);
        out.stds.push_back(data.stds[c]);
        out.column_map.push_back(data.column_map[c]);
    }
    return out;
}

struct PartitionScheme {
    std::size_t size_s = 0;
    std::size_t size_q = 0;
    bool same_sets = true;
    std::size_t num_pairs = 1;

    bool operator==(const PartitionScheme&) const = default;
};

/// Support/query partition scheme for a few-shot set of size N. Documented sizes
/// 4, 8, 16, 32, 64; other N use the largest documented size not above N, and N < 4
/// uses the whole set as a single shared pair.
inline PartitionScheme partition_scheme(std::size_t n) {
    if (n < 2 || n % 2 != 0) throw ConfigError("N must be an even number >= 2, got " + std::to_string(n));
    if (n < 4) return {n, n, true, 1};
    if (n < 8) return {4, 4, true, 1};
    if (n < 16) return {4, 4, true, 2};
    if (n < 32) return {8, 8, false, 1};
    if (n < 64) return {8, 8, false, 2};
    return {8, 8, false, 4};
}

/// Row indices of each (support, query) pair. Each subset is class-balanced, pairs are
/// mutually disjoint and membership is reshuffled by epoch_seed.
inline std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> make_partition_indices(
    const Labels& labels, Seed epoch_seed) {
    const auto scheme = partition_scheme(labels.size());
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);

    const std::size_t subsets = scheme.same_sets ? scheme.num_pairs : 2 * scheme.num_pairs;
    const std::size_t half = scheme.size_s / 2;
    if (pos.size() < subsets * half || neg.size() < subsets * half)
        throw DataError("cannot build class-balanced partitions for N=" + std::to_string(labels.size()) + " with " +
                        std::to_string(pos.size()) + " positive and " + std::to_string(neg.size()) +
                        " negative examples");

    Rng rng(epoch_seed);
    rng.shuffle(pos);
    rng.shuffle(neg);
    std::size_t next = 0;
    auto take = [&] {
        std::vector<std::size_t> s(pos.begin() + static_cast<std::ptrdiff_t>(next),
                                   pos.begin() + static_cast<std::ptrdiff_t>(next + half));
        s.insert(s.end(), neg.begin() + static_cast<std::ptrdiff_t>(next),
                 neg.begin() + static_cast<std::ptrdiff_t>(next + half));
        next += half;
        rng.shuffle(s);
        return s;
    };

    std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> pairs;
    for (std::size_t p = 0; p < scheme.num_pairs; ++p) {
        auto support = take();
        auto query = scheme.same_sets ? support : take();
        pairs.emplace_back(std::move(support), std::move(query));
    }
    return pairs;
}

inline std::vector<std::pair<RawDataset, RawDataset>> make_partitions(const RawDataset& dn, Seed epoch_seed) {
    std::vector<std::pair<RawDataset, RawDataset>> out;
    for (const auto& [s, q] : make_partition_indices(dn.labels, epoch_seed)) out.emplace_back(dn.subset(s), dn.subset(q));
    return out;
}

/// Splits D_N into consecutive class-balanced chunks of `chunk_size` rows, preserving
/// row order inside each chunk. Used to present D_N to encoders whose input size is
/// fixed to the support size.
inline std::vector<std::vector<std::size_t>> balanced_chunks(const Labels& labels, std::size_t chunk_size) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
    const std::size_t half = chunk_size / 2;
    if (half == 0 || chunk_size % 2 != 0 || pos.size() != neg.size() || pos.size() % half != 0)
        throw DataError("cannot split " + std::to_string(labels.size()) + " rows into class-balanced chunks of " +
                        std::to_string(chunk_size));
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t c = 0; c < pos.size() / half; ++c) {
        std::vector<std::size_t> chunk(pos.begin() + static_cast<std::ptrdiff_t>(c * half),
                                       pos.begin() + static_cast<std::ptrdiff_t>((c + 1) * half));
        chunk.insert(chunk.end(), neg.begin() + static_cast<std::ptrdiff_t>(c * half),
                     neg.begin() + static_cast<std::ptrdiff_t>((c + 1) * half));
        std::sort(chunk.begin(), chunk.end());
        out.push_back(std::move(chunk));
    }
    return out;
}

/// Order-sensitive content hash used in run manifests.
inline std::uint64_t fingerprint(const RawDataset& ds) {
    std::uint64_t h = fnv1a("tabdistill-dataset");
    for (auto f : ds.feature_order) h = fnv1a(std::to_string(f) + ";", h);
    for (std::size_t r = 0; r < ds.size(); ++r) {
        for (const auto& c : ds.rows[r]) h = fnv1a(c.text + "\x1f", h);
        h = fnv1a(ds.labels[r] ? "1\n" : "0\n", h);
    }
    return h;
}

}  // namespace tabdistill
