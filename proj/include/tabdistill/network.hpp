#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tabdistill/errors.hpp"
#include "tabdistill/matrix.hpp"
#include "tabdistill/rng.hpp"

namespace tabdistill {

enum class FinalActivation { none, relu };

inline std::string to_string(FinalActivation a) { return a == FinalActivation::relu ? "relu" : "none"; }

inline FinalActivation parse_final_activation(const std::string& s) {
    if (s == "none") return FinalActivation::none;
    if (s == "relu") return FinalActivation::relu;
    throw ConfigError("final activation must be 'none' or 'relu', got '" + s + "'");
}

/// Fully connected ReLU network with R linear layers of width L and two output logits.
struct MlpArchitecture {
    std::size_t d = 1;
    std::size_t R = 2;
    std::size_t L = 1;
    FinalActivation final_activation = FinalActivation::none;

    static constexpr std::size_t out = 2;

    void validate() const {
        if (d < 1) throw ConfigError("MLP input dimension must be >= 1");
        if (R < 2) throw ConfigError("MLP needs at least 2 layers, got R=" + std::to_string(R));
        if (L < 1) throw ConfigError("MLP hidden width must be >= 1");
    }

    std::size_t in_dim(std::size_t layer) const { return layer == 0 ? d : L; }
    std::size_t out_dim(std::size_t layer) const { return layer + 1 == R ? out : L; }

    bool operator==(const MlpArchitecture&) const = default;
};

inline std::size_t param_count(const MlpArchitecture& a) {
    a.validate();
    return a.L * a.d + a.L + (a.R - 2) * (a.L * a.L + a.L) + 2 * a.L + 2;
}

/// Offsets of W_i (row-major out×in) followed by b_i, for each layer i.
struct LayerSlice {
    std::size_t weight = 0;
    std::size_t bias = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
};

inline std::vector<LayerSlice> layer_layout(const MlpArchitecture& a) {
    a.validate();
    std::vector<LayerSlice> out;
    std::size_t off = 0;
    for (std::size_t i = 0; i < a.R; ++i) {
        LayerSlice s{off, 0, a.out_dim(i), a.in_dim(i)};
        off += s.rows * s.cols;
        s.bias = off;
        off += s.rows;
        out.push_back(s);
    }
    return out;
}

struct MlpParameters {
    std::vector<double> flat;

    bool operator==(const MlpParameters&) const = default;
};

struct LayerWeights {
    Matrix W;
    std::vector<double> b;

    bool operator==(const LayerWeights&) const = default;
};

inline std::vector<LayerWeights> unflatten(const MlpParameters& theta, const MlpArchitecture& a) {
    const auto layout = layer_layout(a);
    if (theta.flat.size() != param_count(a))
        throw ShapeError("parameter vector has " + std::to_string(theta.flat.size()) + " entries, architecture needs " +
                         std::to_string(param_count(a)));
    std::vector<LayerWeights> out;
    for (const auto& s : layout) {
        LayerWeights lw{Matrix(s.rows, s.cols), {}};
        std::copy_n(theta.flat.begin() + static_cast<std::ptrdiff_t>(s.weight), s.rows * s.cols, lw.W.data.begin());
        lw.b.assign(theta.flat.begin() + static_cast<std::ptrdiff_t>(s.bias),
                    theta.flat.begin() + static_cast<std::ptrdiff_t>(s.bias + s.rows));
        out.push_back(std::move(lw));
    }
    return out;
}

inline MlpParameters flatten(const std::vector<LayerWeights>& layers) {
    MlpParameters p;
    for (const auto& l : layers) {
        p.flat.insert(p.flat.end(), l.W.data.begin(), l.W.data.end());
        p.flat.insert(p.flat.end(), l.b.begin(), l.b.end());
    }
    return p;
}

/// Uniform in ±sqrt(1/fan_in) for weights, zero biases.
inline MlpParameters init_mlp(const MlpArchitecture& a, Seed seed) {
    Rng rng(seed);
    MlpParameters p{std::vector<double>(param_count(a), 0.0)};
    for (const auto& s : layer_layout(a)) {
        const double bound = std::sqrt(1.0 / static_cast<double>(s.cols));
        for (std::size_t k = 0; k < s.rows * s.cols; ++k) p.flat[s.weight + k] = rng.uniform(-bound, bound);
    }
    return p;
}

/// Activations of one forward pass: inputs to every layer plus pre-activations.
struct ForwardCache {
    std::vector<std::vector<double>> activations;      // a_0 = x, ..., a_{R-1}
    std::vector<std::vector<double>> pre_activations;  // W_i a_{i-1} + b_i for every layer
    std::vector<double> logits;
};

namespace detail {

inline void check_finite(std::span<const double> v, const std::string& what) {
    for (double x : v)
        if (!std::isfinite(x)) throw NumericError("non-finite value in " + what);
}

}  // namespace detail

inline ForwardCache mlp_forward_cached(const MlpParameters& theta, const MlpArchitecture& a, std::span<const double> x) {
    if (x.size() != a.d)
        throw ShapeError("input has " + std::to_string(x.size()) + " features, network expects " + std::to_string(a.d));
    if (theta.flat.size() != param_count(a))
        throw ShapeError("parameter vector has " + std::to_string(theta.flat.size()) + " entries, architecture needs " +
                         std::to_string(param_count(a)));
    detail::check_finite(x, "network input");
    ForwardCache cache;
    cache.activations.emplace_back(x.begin(), x.end());
    const auto layout = layer_layout(a);
    for (std::size_t i = 0; i < a.R; ++i) {
        const auto& s = layout[i];
        const auto& in = cache.activations.back();
        std::vector<double> z(s.rows);
        for (std::size_t r = 0; r < s.rows; ++r) {
            const double* w = theta.flat.data() + s.weight + r * s.cols;
            double acc = theta.flat[s.bias + r];
            for (std::size_t c = 0; c < s.cols; ++c) acc += w[c] * in[c];
            z[r] = acc;
        }
        cache.pre_activations.push_back(z);
        const bool last = i + 1 == a.R;
        if (!last || a.final_activation == FinalActivation::relu)
            for (double& v : z) v = v > 0.0 ? v : 0.0;
        if (last)
            cache.logits = std::move(z);
        else
            cache.activations.push_back(std::move(z));
    }
    return cache;
}

inline std::vector<double> mlp_forward(const MlpParameters& theta, const MlpArchitecture& a, std::span<const double> x) {
    return mlp_forward_cached(theta, a, x).logits;
}

inline std::vector<double> softmax(std::span<const double> logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) sum += (p[i] = std::exp(logits[i] - m));
    for (double& v : p) v /= sum;
    return p;
}

struct LossReport {
    double mean_loss = 0.0;
    std::vector<double> per_example;
    double accuracy = 0.0;
};

inline constexpr double kProbClamp = 1e-12;

/// Mean binary cross-entropy of predicted class probabilities (rows [p0, p1]).
inline LossReport cross_entropy(const Matrix& probs, std::span<const std::uint8_t> y) {
    if (probs.rows != y.size())
        throw ShapeError("cross_entropy: " + std::to_string(probs.rows) + " predictions for " + std::to_string(y.size()) +
                         " labels");
    if (probs.cols != 2) throw ShapeError("cross_entropy expects two class probabilities per row");
    LossReport rep;
    rep.per_example.resize(y.size());
    std::size_t correct = 0;
    double sum = 0.0;
    for (std::size_t n = 0; n < y.size(); ++n) {
        const double p = std::clamp(probs(n, y[n] ? 1 : 0), kProbClamp, 1.0 - kProbClamp);
        rep.per_example[n] = -std::log(p);
        sum += rep.per_example[n];
        const std::uint8_t pred = probs(n, 1) > probs(n, 0) ? 1 : 0;
        correct += pred == y[n];
    }
    rep.mean_loss = y.empty() ? 0.0 : sum / static_cast<double>(y.size());
    rep.accuracy = y.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(y.size());
    return rep;
}

inline Matrix predict_proba(const MlpParameters& theta, const MlpArchitecture& a, const Matrix& X) {
    Matrix out(X.rows, 2);
    for (std::size_t n = 0; n < X.rows; ++n) {
        const auto p = softmax(mlp_forward(theta, a, X.row(n)));
        out(n, 0) = p[0];
        out(n, 1) = p[1];
    }
    return out;
}

/// Probability of class 1 for every row.
inline std::vector<double> predict_positive(const MlpParameters& theta, const MlpArchitecture& a, const Matrix& X) {
    const Matrix p = predict_proba(theta, a, X);
    std::vector<double> out(X.rows);
    for (std::size_t n = 0; n < X.rows; ++n) out[n] = p(n, 1);
    return out;
}

struct GradientResult {
    LossReport loss;
    std::vector<double> grad;
};

/// Batch-mean cross-entropy and its exact gradient with respect to the flat parameters.
/// ReLU subgradient at 0 is 0. Probability clamping is ignored by the gradient.
inline GradientResult backward_params(const MlpParameters& theta, const MlpArchitecture& a, const Matrix& X,
                                      std::span<const std::uint8_t> y) {
    if (X.rows != y.size())
        throw ShapeError("backward_params: " + std::to_string(X.rows) + " rows for " + std::to_string(y.size()) +
                         " labels");
    if (X.rows == 0) throw ShapeError("backward_params: empty batch");
    const auto layout = layer_layout(a);
    GradientResult res;
    res.grad.assign(theta.flat.size(), 0.0);
    Matrix probs(X.rows, 2);
    const double inv_n = 1.0 / static_cast<double>(X.rows);

    for (std::size_t n = 0; n < X.rows; ++n) {
        const auto cache = mlp_forward_cached(theta, a, X.row(n));
        detail::check_finite(cache.logits, "layer " + std::to_string(a.R) + " output");
        const auto p = softmax(cache.logits);
        probs(n, 0) = p[0];
        probs(n, 1) = p[1];

        // dL/dlogits for softmax + cross-entropy
        std::vector<double> delta = {p[0] - (y[n] ? 0.0 : 1.0), p[1] - (y[n] ? 1.0 : 0.0)};
        for (std::size_t i = a.R; i-- > 0;) {
            const auto& s = layout[i];
            const auto& pre = cache.pre_activations[i];
            const bool relu = i + 1 < a.R || a.final_activation == FinalActivation::relu;
            if (relu)
                for (std::size_t r = 0; r < s.rows; ++r)
                    if (pre[r] <= 0.0) delta[r] = 0.0;
            const auto& in = cache.activations[i];
            for (std::size_t r = 0; r < s.rows; ++r) {
                const double g = delta[r] * inv_n;
                if (g == 0.0) continue;
                double* gw = res.grad.data() + s.weight + r * s.cols;
                for (std::size_t c = 0; c < s.cols; ++c) gw[c] += g * in[c];
                res.grad[s.bias + r] += g;
            }
            if (i == 0) break;
            std::vector<double> prev(s.cols, 0.0);
            for (std::size_t r = 0; r < s.rows; ++r) {
                if (delta[r] == 0.0) continue;
                const double* w = theta.flat.data() + s.weight + r * s.cols;
                for (std::size_t c = 0; c < s.cols; ++c) prev[c] += delta[r] * w[c];
            }
            delta = std::move(prev);
            detail::check_finite(delta, "gradient of layer " + std::to_string(i));
        }
    }
    res.loss = cross_entropy(probs, y);
    return res;
}

inline LossReport evaluate_loss(const MlpParameters& theta, const MlpArchitecture& a, const Matrix& X,
                                std::span<const std::uint8_t> y) {
    return cross_entropy(predict_proba(theta, a, X), y);
}

}  // namespace tabdistill
