#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "tabdistill/data.hpp"
#include "tabdistill/errors.hpp"
#include "tabdistill/matrix.hpp"
#include "tabdistill/rng.hpp"
#include "tabdistill/serialize.hpp"

namespace tabdistill {

enum class EncoderKind { tabular, text };
enum class DimMode { per_example, fixed };

inline std::string to_string(EncoderKind k) { return k == EncoderKind::text ? "text" : "tabular"; }
inline std::string to_string(DimMode m) { return m == DimMode::fixed ? "fixed" : "per_example"; }

/// How the embedding width depends on the prompt: E per example, or a fixed D.
struct EncoderPolicy {
    EncoderKind kind = EncoderKind::tabular;
    DimMode dim_mode = DimMode::per_example;
    std::size_t dim = 1;

    void validate() const {
        if (dim < 1) throw ConfigError("encoder dimension must be >= 1");
    }

    bool operator==(const EncoderPolicy&) const = default;
};

inline std::size_t embedding_dim(const EncoderPolicy& policy, std::size_t n_prompt_examples) {
    if (n_prompt_examples < 1) throw ConfigError("a prompt needs at least one example");
    return policy.dim_mode == DimMode::per_example ? policy.dim * n_prompt_examples : policy.dim;
}

/// Identity of an encoder as announced at session start.
struct EncoderHandshake {
    std::string name;
    EncoderPolicy policy;
};

struct EmbeddingVector {
    std::vector<double> values;
    std::string encoder_id;

    std::size_t dim() const { return values.size(); }
};

/// What an encoder may look at: the raw rows (for text prompts) and their encoded
/// counterpart (for tabular encoders). Both share the same row and feature order.
struct EncoderInput {
    const RawDataset* raw = nullptr;
    const EncodedDataset* encoded = nullptr;
    const FeatureSchema* schema = nullptr;

    std::size_t rows() const { return encoded ? encoded->size() : (raw ? raw->size() : 0); }
};

/// A pre-trained encoder whose weights never change during distillation.
class FrozenEncoder {
public:
    virtual ~FrozenEncoder() = default;
    virtual const EncoderHandshake& handshake() const = 0;
    virtual EmbeddingVector encode(const EncoderInput& input) = 0;

    const EncoderPolicy& policy() const { return handshake().policy; }
};

// ---------------------------------------------------------------------------
// Builtin desk-scale encoder

struct BuiltinEncoderConfig {
    std::size_t width = 64;  // E
    std::size_t heads = 2;
    std::size_t layers = 1;
    Seed seed = 0;

    void validate() const {
        if (width < 1 || heads < 1) throw ConfigError("builtin encoder width and heads must be >= 1");
        if (width % heads != 0)
            throw ConfigError("builtin encoder width " + std::to_string(width) + " is not divisible by heads " +
                              std::to_string(heads));
    }

    std::string describe() const {
        return "builtin-random-attention(E=" + std::to_string(width) + ",heads=" + std::to_string(heads) +
               ",layers=" + std::to_string(layers) + ",seed=" + std::to_string(seed) + ")";
    }
};

/// Frozen random-feature attention encoder for tabular data.
///
/// Each cell of a row becomes one token: its feature vector (value, s, value*s, 1),
/// with s = +1/-1 the row's label sign, is projected by a random E×4 matrix owned by
/// the cell's column position. A label token (s, 1) is projected by its own matrix.
/// The row's tokens pass through `layers` rounds of multi-head softmax attention with
/// a residual connection and are mean-pooled to an E-vector; the rows' vectors are
/// concatenated in row order. All weights derive from the seed and are never trained.
class BuiltinEncoder final : public FrozenEncoder {
public:
    explicit BuiltinEncoder(BuiltinEncoderConfig cfg = {}) : cfg_(cfg) {
        cfg_.validate();
        handshake_ = {cfg_.describe(), {EncoderKind::tabular, DimMode::per_example, cfg_.width}};
        const std::size_t E = cfg_.width;
        const std::size_t dh = E / cfg_.heads;
        label_proj_ = random_matrix(E, 2, 0.5, derive_seed(cfg_.seed, "label-token"));
        const double s = std::sqrt(1.0 / static_cast<double>(E));
        for (std::size_t l = 0; l < cfg_.layers; ++l) {
            Layer layer;
            for (std::size_t h = 0; h < cfg_.heads; ++h) {
                layer.wq.push_back(random_matrix(E, dh, s, derive_seed(cfg_.seed, "wq", l * 1000 + h)));
                layer.wk.push_back(random_matrix(E, dh, s, derive_seed(cfg_.seed, "wk", l * 1000 + h)));
                layer.wv.push_back(random_matrix(E, dh, s, derive_seed(cfg_.seed, "wv", l * 1000 + h)));
            }
            layer.wo = random_matrix(E, E, s, derive_seed(cfg_.seed, "wo", l));
            layers_.push_back(std::move(layer));
        }
    }

    const EncoderHandshake& handshake() const override { return handshake_; }
    const BuiltinEncoderConfig& config() const { return cfg_; }

    EmbeddingVector encode(const EncoderInput& input) override {
        if (!input.encoded) throw EncoderError("builtin encoder needs the encoded dataset");
        return {encode_matrix(input.encoded->X, input.encoded->y), handshake_.name};
    }

    /// Pure function of (X, y) and the configuration.
    std::vector<double> encode_matrix(const Matrix& X, std::span<const std::uint8_t> y) const {
        if (X.rows == 0) throw EncoderError("builtin encoder got an empty dataset");
        if (X.rows != y.size()) throw ShapeError("builtin encoder: row and label counts differ");
        for (double v : X.data)
            if (!std::isfinite(v)) throw EncoderError("builtin encoder got a non-finite input cell");
        const std::size_t E = cfg_.width;
        std::vector<Matrix> cell_proj;
        cell_proj.reserve(X.cols);
        for (std::size_t p = 0; p < X.cols; ++p)
            cell_proj.push_back(random_matrix(E, 4, 0.5, derive_seed(cfg_.seed, "cell-position", p)));

        std::vector<double> out;
        out.reserve(E * X.rows);
        for (std::size_t r = 0; r < X.rows; ++r) {
            const double sign = y[r] ? 1.0 : -1.0;
            Matrix tokens(X.cols + 1, E);
            for (std::size_t p = 0; p < X.cols; ++p) {
                const double v = X(r, p);
                const double phi[4] = {v, sign, v * sign, 1.0};
                for (std::size_t e = 0; e < E; ++e) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < 4; ++k) acc += cell_proj[p](e, k) * phi[k];
                    tokens(p, e) = acc;
                }
            }
            for (std::size_t e = 0; e < E; ++e) tokens(X.cols, e) = label_proj_(e, 0) * sign + label_proj_(e, 1);

            for (const auto& layer : layers_) tokens = attend(layer, tokens);

            for (std::size_t e = 0; e < E; ++e) {
                double acc = 0.0;
                for (std::size_t t = 0; t < tokens.rows; ++t) acc += tokens(t, e);
                out.push_back(acc / static_cast<double>(tokens.rows));
            }
        }
        return out;
    }

private:
    struct Layer {
        std::vector<Matrix> wq, wk, wv;  // E x dh per head
        Matrix wo;                       // E x E
    };

    static Matrix random_matrix(std::size_t rows, std::size_t cols, double bound, Seed seed) {
        Matrix m(rows, cols);
        Rng rng(seed);
        for (double& v : m.data) v = rng.uniform(-bound, bound);
        return m;
    }

    // tokens (T x E) @ w (E x k)
    static Matrix project(const Matrix& tokens, const Matrix& w) {
        Matrix out(tokens.rows, w.cols);
        for (std::size_t t = 0; t < tokens.rows; ++t)
            for (std::size_t e = 0; e < tokens.cols; ++e) {
                const double x = tokens(t, e);
                for (std::size_t k = 0; k < w.cols; ++k) out(t, k) += x * w(e, k);
            }
        return out;
    }

    Matrix attend(const Layer& layer, const Matrix& tokens) const {
        const std::size_t T = tokens.rows;
        const std::size_t E = cfg_.width;
        const std::size_t dh = E / cfg_.heads;
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        Matrix concat(T, E);
        for (std::size_t h = 0; h < cfg_.heads; ++h) {
            const Matrix q = project(tokens, layer.wq[h]);
            const Matrix k = project(tokens, layer.wk[h]);
            const Matrix v = project(tokens, layer.wv[h]);
            std::vector<double> w(T);
            for (std::size_t i = 0; i < T; ++i) {
                double mx = -INFINITY;
                for (std::size_t j = 0; j < T; ++j) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < dh; ++c) dot += q(i, c) * k(j, c);
                    w[j] = dot * scale;
                    mx = std::max(mx, w[j]);
                }
                double sum = 0.0;
                for (double& x : w) sum += (x = std::exp(x - mx));
                for (std::size_t j = 0; j < T; ++j)
                    for (std::size_t c = 0; c < dh; ++c) concat(i, h * dh + c) += (w[j] / sum) * v(j, c);
            }
        }
        Matrix out = project(concat, layer.wo);
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += tokens.data[i];
        return out;
    }

    BuiltinEncoderConfig cfg_;
    EncoderHandshake handshake_;
    Matrix label_proj_;
    std::vector<Layer> layers_;
};

inline EmbeddingVector builtin_encode(const EncodedDataset& ds, const BuiltinEncoderConfig& cfg) {
    BuiltinEncoder enc(cfg);
    return {enc.encode_matrix(ds.X, ds.y), enc.handshake().name};
}

}  // namespace tabdistill
