#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "tabdistill/errors.hpp"
#include "tabdistill/matrix.hpp"
#include "tabdistill/network.hpp"
#include "tabdistill/rng.hpp"

namespace tabdistill {

/// Linear map from encoder embeddings to MLP parameters, theta = LayerNorm(A z + b).
struct HyperMapParams {
    Matrix A;  // dim(theta) x dim(z)
    std::vector<double> b;

    std::size_t dim_theta() const { return A.rows; }
    std::size_t dim_z() const { return A.cols; }

    bool operator==(const HyperMapParams&) const = default;
};

inline HyperMapParams init_hypermap(std::size_t dim_theta, std::size_t dim_z, Seed seed) {
    if (dim_theta < 1 || dim_z < 1) throw ConfigError("hypermap dimensions must be >= 1");
    HyperMapParams eta{Matrix(dim_theta, dim_z), std::vector<double>(dim_theta, 0.0)};
    const double s = std::sqrt(1.0 / static_cast<double>(dim_z));
    Rng rng(seed);
    for (double& v : eta.A.data) v = rng.uniform(-s, s);
    return eta;
}

inline constexpr double kLayerNormEps = 1e-5;

struct LayerNormCache {
    std::vector<double> normalized;
    double inv_std = 0.0;
};

/// (u - mean) / sqrt(var + eps) with population variance; no affine parameters.
inline LayerNormCache layernorm(std::span<const double> u) {
    if (u.size() < 2) throw ShapeError("layernorm needs at least 2 entries, got " + std::to_string(u.size()));
    const double n = static_cast<double>(u.size());
    double mean = 0.0;
    for (double v : u) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : u) var += (v - mean) * (v - mean);
    var /= n;
    LayerNormCache c;
    c.inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
    c.normalized.resize(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) c.normalized[i] = (u[i] - mean) * c.inv_std;
    return c;
}

/// Vector-Jacobian product of layernorm: J^T g.
inline std::vector<double> layernorm_backward(const LayerNormCache& c, std::span<const double> g) {
    if (g.size() != c.normalized.size()) throw ShapeError("layernorm_backward: gradient length mismatch");
    const double n = static_cast<double>(g.size());
    double mean_g = 0.0, mean_gy = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        mean_g += g[i];
        mean_gy += g[i] * c.normalized[i];
    }
    mean_g /= n;
    mean_gy /= n;
    std::vector<double> du(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) du[i] = c.inv_std * (g[i] - mean_g - c.normalized[i] * mean_gy);
    return du;
}

struct HyperForwardCache {
    std::vector<double> z;
    std::vector<double> u;
    LayerNormCache norm;
};

struct HyperForwardResult {
    MlpParameters theta;
    HyperForwardCache cache;
};

inline HyperForwardResult hyper_forward(const HyperMapParams& eta, std::span<const double> z) {
    if (z.size() != eta.dim_z())
        throw ShapeError("embedding has dimension " + std::to_string(z.size()) + ", hypermap expects " +
                         std::to_string(eta.dim_z()));
    HyperForwardResult r;
    r.cache.z.assign(z.begin(), z.end());
    r.cache.u = matvec(eta.A, z);
    for (std::size_t i = 0; i < r.cache.u.size(); ++i) r.cache.u[i] += eta.b[i];
    r.cache.norm = layernorm(r.cache.u);
    r.theta.flat = r.cache.norm.normalized;
    return r;
}

struct HyperGradients {
    Matrix dA;
    std::vector<double> db;
};

inline HyperGradients hyper_backward(const HyperForwardCache& cache, std::span<const double> dtheta) {
    if (dtheta.size() != cache.u.size())
        throw ShapeError("hyper_backward: gradient has " + std::to_string(dtheta.size()) + " entries, expected " +
                         std::to_string(cache.u.size()));
    HyperGradients g;
    g.db = layernorm_backward(cache.norm, dtheta);
    g.dA = Matrix(cache.u.size(), cache.z.size());
    for (std::size_t r = 0; r < g.dA.rows; ++r) {
        const double du = g.db[r];
        double* row = g.dA.data.data() + r * g.dA.cols;
        for (std::size_t c = 0; c < g.dA.cols; ++c) row[c] = du * cache.z[c];
    }
    return g;
}

// ---------------------------------------------------------------------------
// Adam with decoupled weight decay

struct AdamHyper {
    double lr = 1e-4;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    bool operator==(const AdamHyper&) const = default;
};

struct AdamState {
    std::size_t step = 0;
    std::vector<double> m;
    std::vector<double> v;
    AdamHyper hyper;

    AdamState() = default;
    AdamState(std::size_t n, AdamHyper h) : m(n, 0.0), v(n, 0.0), hyper(h) {}

    bool operator==(const AdamState&) const = default;
};

/// One update of a flat parameter vector. Decay is applied to the parameters,
/// p <- p * (1 - lr * wd), before the bias-corrected Adam step.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ShapeError("adam_step: parameter, gradient and state sizes differ");
    for (double g : grads)
        if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient");
    const auto& h = state.hyper;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double corr1 = 1.0 - std::pow(h.beta1, t);
    const double corr2 = 1.0 - std::pow(h.beta2, t);
    const double decay = 1.0 - h.lr * h.weight_decay;
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = h.beta1 * state.m[i] + (1.0 - h.beta1) * grads[i];
        state.v[i] = h.beta2 * state.v[i] + (1.0 - h.beta2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / corr1;
        const double v_hat = state.v[i] / corr2;
        params[i] = params[i] * decay - h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
    }
}

inline AdamState make_adam_state(const HyperMapParams& eta, AdamHyper h) {
    return AdamState(eta.A.data.size() + eta.b.size(), h);
}

/// Adam over eta = (A, b); the state treats A (row-major) followed by b as one vector.
inline void adam_step(HyperMapParams& eta, const HyperGradients& g, AdamState& state) {
    if (g.dA.rows != eta.A.rows || g.dA.cols != eta.A.cols || g.db.size() != eta.b.size())
        throw ShapeError("adam_step: gradient shape does not match hypermap");
    std::vector<double> params(eta.A.data);
    params.insert(params.end(), eta.b.begin(), eta.b.end());
    std::vector<double> grads(g.dA.data);
    grads.insert(grads.end(), g.db.begin(), g.db.end());
    adam_step(std::span<double>(params), std::span<const double>(grads), state);
    std::copy_n(params.begin(), eta.A.data.size(), eta.A.data.begin());
    std::copy(params.begin() + static_cast<std::ptrdiff_t>(eta.A.data.size()), params.end(), eta.b.begin());
}

}  // namespace tabdistill
