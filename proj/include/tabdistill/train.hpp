#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tabdistill/data.hpp"
#include "tabdistill/encoder.hpp"
#include "tabdistill/hypernet.hpp"
#include "tabdistill/network.hpp"
#include "tabdistill/rng.hpp"

namespace tabdistill {

/// Observes one (support, query) step of Phase 1; used for instrumentation in tests.
struct PairTrace {
    std::size_t epoch = 0;
    std::size_t pair = 0;
    const RawDataset* prompt_rows = nullptr;
    const EncodedDataset* prompt_encoded = nullptr;
    const EncodedDataset* query = nullptr;
    const EmbeddingVector* embedding = nullptr;
};

struct Phase1Config {
    std::size_t epochs = 300;
    double lr = 1e-4;
    double weight_decay = 1e-3;
    Seed seed = 0;
    std::size_t R = 4;
    std::size_t L = 10;
    FinalActivation final_activation = FinalActivation::none;
    bool permute_query_inputs = true;
    std::function<void(const PairTrace&)> on_pair;

    void validate() const {
        if (!(lr > 0.0 && lr < 1.0)) throw ConfigError("phase 1 learning rate must lie in (0, 1)");
        if (weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
        MlpArchitecture{1, R, L, final_activation}.validate();
    }

    MlpArchitecture arch_for(std::size_t d) const { return {d, R, L, final_activation}; }
};

struct Phase2Config {
    std::size_t epochs = 100;
    double lr = 1e-2;

    void validate() const {
        if (lr < 0.0) throw ConfigError("phase 2 learning rate must be >= 0");
    }
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double validation_accuracy = 0.0;
    Seed permutation_seed = 0;
    Seed validation_seed = 0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;  // 1-based; 0 when no epoch ran

    const EpochRecord* best() const { return best_epoch ? &epochs.at(best_epoch - 1) : nullptr; }
};

/// Everything Phase 1 needs to know about D_N.
struct FewShotTask {
    const RawDataset& dn;
    const FeatureSchema& schema;
    FrozenEncoder& encoder;
    EncodedDataset encoded;  // D_N with its own normalization statistics

    FewShotTask(const RawDataset& d, const FeatureSchema& s, FrozenEncoder& e)
        : dn(d), schema(s), encoder(e), encoded(preprocess(d, s)) {}

    std::size_t support_size() const { return partition_scheme(dn.size()).size_s; }

    std::size_t embedding_width() const { return embedding_dim(encoder.policy(), support_size()); }
};

namespace detail {

inline EmbeddingVector encode_or_throw(FrozenEncoder& enc, const EncoderInput& in, const std::string& where) {
    try {
        return enc.encode(in);
    } catch (const std::exception& e) {
        throw EncoderError("encoder failed at " + where + ": " + e.what());
    }
}

}  // namespace detail

/// Embedding of a whole (already permuted) D_N. Per-example encoders have a fixed input
/// size, so D_N is presented as class-balanced chunks of the support size and their
/// embeddings are averaged; fixed-width encoders see all of D_N in one prompt.
inline std::vector<double> embed_full_set(const FewShotTask& task, const RawDataset& raw, const EncodedDataset& enc,
                                          const std::string& where) {
    if (task.encoder.policy().dim_mode == DimMode::fixed) {
        EncoderInput in{&raw, &enc, &task.schema};
        return detail::encode_or_throw(task.encoder, in, where).values;
    }
    const auto chunks = balanced_chunks(raw.labels, task.support_size());
    std::vector<double> z;
    for (std::size_t c = 0; c < chunks.size(); ++c) {
        const RawDataset r = raw.subset(chunks[c]);
        const EncodedDataset e = enc.subset(chunks[c]);
        EncoderInput in{&r, &e, &task.schema};
        const auto part = detail::encode_or_throw(task.encoder, in, where + ", chunk " + std::to_string(c)).values;
        if (z.empty()) z.assign(part.size(), 0.0);
        if (part.size() != z.size()) throw EncoderError("encoder returned chunks of different widths");
        for (std::size_t i = 0; i < z.size(); ++i) z[i] += part[i];
    }
    for (double& v : z) v /= static_cast<double>(chunks.size());
    return z;
}

/// Accuracy on D_N of the MLP generated from a feature-permuted prompt of D_N,
/// evaluated on identically permuted inputs.
inline double validation_accuracy(const HyperMapParams& eta, const FewShotTask& task, Seed perm_seed,
                                  const Phase1Config& cfg) {
    const auto pi = FeaturePermutation::random(task.dn.num_features(), perm_seed);
    const RawDataset raw = permute_features(pi, task.dn);
    const EncodedDataset enc = permute_features(pi, task.encoded);
    const auto z = embed_full_set(task, raw, enc, "validation");
    const auto theta = hyper_forward(eta, z).theta;
    return evaluate_loss(theta, cfg.arch_for(enc.dim()), enc.X, enc.y).accuracy;
}

struct Phase1Result {
    HyperMapParams eta_best;
    TrainHistory history;
};

inline Phase1Result phase1_train(const FewShotTask& task, const Phase1Config& cfg) {
    cfg.validate();
    const auto arch = cfg.arch_for(task.encoded.dim());
    const std::size_t m = task.dn.num_features();
    HyperMapParams eta = init_hypermap(param_count(arch), task.embedding_width(), derive_seed(cfg.seed, "hypermap-init"));
    AdamState adam = make_adam_state(eta, {cfg.lr, cfg.weight_decay});

    Phase1Result res{eta, {}};
    double best_acc = -1.0;
    for (std::size_t t = 1; t <= cfg.epochs; ++t) {
        const Seed perm_seed = derive_seed(cfg.seed, "train-permutation", t);
        const auto pi = FeaturePermutation::random(m, perm_seed);
        const RawDataset raw_p = permute_features(pi, task.dn);
        const EncodedDataset enc_p = permute_features(pi, task.encoded);
        const EncodedDataset& query_source = cfg.permute_query_inputs ? enc_p : task.encoded;
        const auto pairs = make_partition_indices(task.dn.labels, derive_seed(cfg.seed, "partition", t));

        HyperGradients acc{Matrix(eta.A.rows, eta.A.cols), std::vector<double>(eta.b.size(), 0.0)};
        double loss_sum = 0.0;
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            const auto& [support, query] = pairs[p];
            const RawDataset s_raw = raw_p.subset(support);
            const EncodedDataset s_enc = enc_p.subset(support);
            const EncodedDataset q_enc = query_source.subset(query);
            EncoderInput in{&s_raw, &s_enc, &task.schema};
            const auto z = detail::encode_or_throw(task.encoder, in,
                                                   "epoch " + std::to_string(t) + ", pair " + std::to_string(p));
            if (cfg.on_pair) cfg.on_pair({t, p, &s_raw, &s_enc, &q_enc, &z});

            const auto fwd = hyper_forward(eta, z.values);
            const auto g = backward_params(fwd.theta, arch, q_enc.X, q_enc.y);
            const auto hg = hyper_backward(fwd.cache, g.grad);
            for (std::size_t i = 0; i < acc.dA.data.size(); ++i) acc.dA.data[i] += hg.dA.data[i];
            for (std::size_t i = 0; i < acc.db.size(); ++i) acc.db[i] += hg.db[i];
            loss_sum += g.loss.mean_loss;
        }
        const double inv = 1.0 / static_cast<double>(pairs.size());
        for (double& v : acc.dA.data) v *= inv;
        for (double& v : acc.db) v *= inv;
        adam_step(eta, acc, adam);

        const Seed val_seed = derive_seed(cfg.seed, "validation-permutation", t);
        const double val = validation_accuracy(eta, task, val_seed, cfg);
        res.history.epochs.push_back({t, loss_sum * inv, val, perm_seed, val_seed});
        if (val > best_acc) {
            best_acc = val;
            res.eta_best = eta;
            res.history.best_epoch = t;
        }
    }
    return res;
}

/// theta from the canonical (unpermuted) D_N.
inline MlpParameters extract_mlp(const HyperMapParams& eta, const FewShotTask& task) {
    const auto z = embed_full_set(task, task.dn, task.encoded, "extraction");
    return hyper_forward(eta, z).theta;
}

/// theta from D_N presented under permutation pi; the result reads pi-permuted inputs.
inline MlpParameters extract_mlp(const HyperMapParams& eta, const FewShotTask& task, const FeaturePermutation& pi) {
    const RawDataset raw = permute_features(pi, task.dn);
    const EncodedDataset enc = permute_features(pi, task.encoded);
    return hyper_forward(eta, embed_full_set(task, raw, enc, "extraction")).theta;
}

struct FinetuneResult {
    MlpParameters theta;
    double initial_loss = 0.0;
    double best_loss = 0.0;
    std::size_t best_epoch = 0;  // 0: the input parameters were kept
    std::vector<double> losses;  // training loss after each epoch
};

/// Full-batch Adam without weight decay; returns the parameters with the lowest
/// training loss seen, including the starting point.
inline FinetuneResult finetune_mlp(const MlpParameters& theta, const MlpArchitecture& arch, const Matrix& X,
                                   std::span<const std::uint8_t> y, std::size_t epochs, double lr) {
    FinetuneResult res{theta, 0.0, 0.0, 0, {}};
    res.initial_loss = res.best_loss = evaluate_loss(theta, arch, X, y).mean_loss;
    if (epochs == 0) return res;
    MlpParameters cur = theta;
    AdamState adam(cur.flat.size(), {lr, 0.0});
    for (std::size_t k = 1; k <= epochs; ++k) {
        const auto g = backward_params(cur, arch, X, y);
        adam_step(std::span<double>(cur.flat), std::span<const double>(g.grad), adam);
        const double loss = evaluate_loss(cur, arch, X, y).mean_loss;
        if (!std::isfinite(loss)) throw NumericError("non-finite training loss at epoch " + std::to_string(k));
        res.losses.push_back(loss);
        if (loss < res.best_loss) {
            res.best_loss = loss;
            res.theta = cur;
            res.best_epoch = k;
        }
    }
    return res;
}

inline FinetuneResult phase2_finetune(const MlpParameters& theta, const MlpArchitecture& arch, const EncodedDataset& dn,
                                      const Phase2Config& cfg) {
    cfg.validate();
    return finetune_mlp(theta, arch, dn.X, dn.y, cfg.epochs, cfg.lr);
}

/// A distilled classifier together with the preprocessing it expects.
struct DistilledModel {
    MlpArchitecture arch;
    MlpParameters theta;
    std::vector<EncodedColumn> column_map;
    std::vector<std::size_t> feature_order;
    std::vector<double> means;
    std::vector<double> stds;
    std::optional<HyperMapParams> hypermap;

    /// Encodes rows with the training-time statistics.
    EncodedDataset encode(const RawDataset& raw, const FeatureSchema& schema) const {
        EncodedDataset stats;
        stats.column_map = column_map;
        stats.means = means;
        stats.stds = stds;
        return preprocess(raw, schema, &stats);
    }

    std::vector<double> score(const Matrix& X) const { return predict_positive(theta, arch, X); }
};

struct DistillResult {
    DistilledModel model;
    TrainHistory history;
    double extracted_train_loss = 0.0;
    FinetuneResult phase2;
    double validation_accuracy = 0.0;  // best Phase 1 validation accuracy (0 if T = 0)
};

/// Phase 1, extraction, Phase 2.
inline DistillResult distill(const RawDataset& dn, const FeatureSchema& schema, FrozenEncoder& encoder,
                             const Phase1Config& p1, const Phase2Config& p2) {
    FewShotTask task(dn, schema, encoder);
    auto phase1 = phase1_train(task, p1);
    const auto arch = p1.arch_for(task.encoded.dim());
    const auto theta = extract_mlp(phase1.eta_best, task);
    DistillResult res;
    res.history = std::move(phase1.history);
    res.extracted_train_loss = evaluate_loss(theta, arch, task.encoded.X, task.encoded.y).mean_loss;
    res.phase2 = phase2_finetune(theta, arch, task.encoded, p2);
    if (const auto* b = res.history.best()) res.validation_accuracy = b->validation_accuracy;
    res.model = {arch,
                 res.phase2.theta,
                 task.encoded.column_map,
                 task.encoded.feature_order,
                 task.encoded.means,
                 task.encoded.stds,
                 std::move(phase1.eta_best)};
    return res;
}

}  // namespace tabdistill
