#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tabdistill/data.hpp"
#include "tabdistill/errors.hpp"
#include "tabdistill/network.hpp"
#include "tabdistill/rng.hpp"
#include "tabdistill/train.hpp"

namespace tabdistill {

// ---------------------------------------------------------------------------
// ROC-AUC

/// Mann-Whitney form with average ranks for tied scores.
inline double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw ShapeError("roc_auc: score and label counts differ");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    double pos = 0.0, rank_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (labels[i]) {
            pos += 1.0;
            rank_sum += rank[i];
        }
    const double neg = static_cast<double>(n) - pos;
    if (pos == 0.0 || neg == 0.0) throw DataError("roc_auc needs both classes among the labels");
    return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

// ---------------------------------------------------------------------------
// Logistic regression

struct LogisticModel {
    std::vector<double> w;
    double c = 0.0;
    std::size_t iterations = 0;

    std::vector<double> score(const Matrix& X) const {
        std::vector<double> out(X.rows);
        for (std::size_t r = 0; r < X.rows; ++r) {
            double z = c;
            for (std::size_t j = 0; j < X.cols; ++j) z += w[j] * X(r, j);
            out[r] = 1.0 / (1.0 + std::exp(-z));
        }
        return out;
    }
};

/// Minimizes mean cross-entropy + ||w||^2 / (2 C N) with damped Newton steps; the
/// intercept is not penalized. Stops at gradient norm < 1e-8 or 10^4 iterations.
inline LogisticModel fit_logistic_regression(const Matrix& X, std::span<const std::uint8_t> y, double C) {
    if (X.rows != y.size()) throw ShapeError("logistic regression: row and label counts differ");
    if (!(C > 0.0)) throw ConfigError("logistic regression needs C > 0");
    const auto n = static_cast<Eigen::Index>(X.rows);
    const auto d = static_cast<Eigen::Index>(X.cols);
    Eigen::MatrixXd Z(n, d + 1);
    Eigen::VectorXd t(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index j = 0; j < d; ++j) Z(r, j) = X(static_cast<std::size_t>(r), static_cast<std::size_t>(j));
        Z(r, d) = 1.0;
        t(r) = y[static_cast<std::size_t>(r)] ? 1.0 : 0.0;
    }
    const double lambda = 1.0 / (C * static_cast<double>(n));
    Eigen::VectorXd penalty = Eigen::VectorXd::Constant(d + 1, lambda);
    penalty(d) = 0.0;

    auto objective = [&](const Eigen::VectorXd& beta) {
        const Eigen::VectorXd z = Z * beta;
        double f = 0.0;
        for (Eigen::Index r = 0; r < n; ++r) {
            // log(1 + e^z) - t z, computed stably
            const double zr = z(r);
            f += (zr > 0 ? zr + std::log1p(std::exp(-zr)) : std::log1p(std::exp(zr))) - t(r) * zr;
        }
        return f / static_cast<double>(n) + 0.5 * beta.cwiseProduct(penalty).dot(beta);
    };

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(d + 1);
    LogisticModel model;
    double f = objective(beta);
    for (std::size_t it = 0; it < 10000; ++it) {
        const Eigen::VectorXd z = Z * beta;
        Eigen::VectorXd p(n), s(n);
        for (Eigen::Index r = 0; r < n; ++r) {
            p(r) = 1.0 / (1.0 + std::exp(-z(r)));
            s(r) = p(r) * (1.0 - p(r));
        }
        const Eigen::VectorXd grad = Z.transpose() * (p - t) / static_cast<double>(n) + penalty.cwiseProduct(beta);
        model.iterations = it;
        if (grad.norm() < 1e-8) break;
        Eigen::MatrixXd H = Z.transpose() * s.asDiagonal() * Z / static_cast<double>(n);
        H.diagonal() += penalty;
        H.diagonal().array() += 1e-12;
        const Eigen::VectorXd step = H.ldlt().solve(grad);
        double alpha = 1.0;
        Eigen::VectorXd next = beta - step;
        double fn = objective(next);
        while (fn > f - 1e-4 * alpha * grad.dot(step) && alpha > 1e-10) {
            alpha *= 0.5;
            next = beta - alpha * step;
            fn = objective(next);
        }
        if (fn >= f) break;  // no further decrease representable
        beta = next;
        f = fn;
    }
    model.w.assign(beta.data(), beta.data() + d);
    model.c = beta(d);
    return model;
}

// ---------------------------------------------------------------------------
// Scratch MLP baseline

inline MlpArchitecture baseline_mlp_arch(std::size_t d) { return {d, 4, 10, FinalActivation::none}; }

/// Independently trained MLP of the distilled architecture (R=4, L=10).
inline MlpParameters fit_scratch_mlp(const EncodedDataset& ds, std::size_t epochs, double lr, Seed seed) {
    const auto arch = baseline_mlp_arch(ds.dim());
    return finetune_mlp(init_mlp(arch, seed), arch, ds.X, ds.y, epochs, lr).theta;
}

// ---------------------------------------------------------------------------
// Cross-validation

using GridPoint = std::map<std::string, double>;

struct CvPlan {
    std::size_t folds = 4;
    std::vector<std::pair<std::string, std::vector<double>>> grid;  // declared order

    /// 2 folds when the training set has 4 examples, 4 otherwise.
    static std::size_t folds_for(std::size_t n) { return n == 4 ? 2 : 4; }

    /// Cartesian product, first named list varying slowest.
    std::vector<GridPoint> points() const {
        std::vector<GridPoint> out{GridPoint{}};
        for (const auto& [name, values] : grid) {
            if (values.empty()) throw ConfigError("grid list '" + name + "' is empty");
            std::vector<GridPoint> next;
            for (const auto& p : out)
                for (double v : values) {
                    auto q = p;
                    q[name] = v;
                    next.push_back(std::move(q));
                }
            out = std::move(next);
        }
        return out;
    }
};

inline CvPlan logistic_regression_plan(std::size_t n) { return {CvPlan::folds_for(n), {{"C", {0.01, 0.1, 1, 10}}}}; }

inline CvPlan scratch_mlp_plan(std::size_t n) {
    return {CvPlan::folds_for(n), {{"epochs", {30, 50, 100, 300}}, {"lr", {1e-5, 1e-4, 1e-3, 1e-2}}}};
}

/// Stratified fold index lists, deterministic in seed.
inline std::vector<std::vector<std::size_t>> stratified_folds(const Labels& y, std::size_t k, Seed seed) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < y.size(); ++i) (y[i] ? pos : neg).push_back(i);
    if (k < 2 || pos.size() < k || neg.size() < k)
        throw DataError(std::to_string(k) + "-fold stratified split needs at least " + std::to_string(k) +
                        " examples of each class; have " + std::to_string(pos.size()) + " positive and " +
                        std::to_string(neg.size()) + " negative");
    Rng rng(seed);
    rng.shuffle(pos);
    rng.shuffle(neg);
    std::vector<std::vector<std::size_t>> folds(k);
    for (std::size_t i = 0; i < pos.size(); ++i) folds[i % k].push_back(pos[i]);
    for (std::size_t i = 0; i < neg.size(); ++i) folds[i % k].push_back(neg[i]);
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

/// Trains on `train` with the grid point's hyperparameters and returns scores for
/// the rows of `validation`.
using CvFitter =
    std::function<std::vector<double>(const EncodedDataset& train, const EncodedDataset& validation, const GridPoint&)>;

struct CvResult {
    GridPoint best;
    std::vector<double> mean_auc;  // per grid point, declared order
    std::vector<std::vector<std::size_t>> folds;
};

/// Selects the grid point with the highest mean validation AUC; ties keep the
/// earlier point. A single-point grid is returned without fitting.
inline CvResult cross_validate(const EncodedDataset& ds, const CvPlan& plan, const CvFitter& fitter, Seed seed) {
    const auto points = plan.points();
    CvResult res;
    res.folds = stratified_folds(ds.y, plan.folds, seed);
    if (points.size() == 1) {
        res.best = points.front();
        res.mean_auc = {std::numeric_limits<double>::quiet_NaN()};
        return res;
    }
    double best = -1.0;
    for (const auto& point : points) {
        double sum = 0.0;
        for (std::size_t f = 0; f < res.folds.size(); ++f) {
            std::vector<std::size_t> train_idx;
            for (std::size_t g = 0; g < res.folds.size(); ++g)
                if (g != f) train_idx.insert(train_idx.end(), res.folds[g].begin(), res.folds[g].end());
            std::sort(train_idx.begin(), train_idx.end());
            const auto train = ds.subset(train_idx);
            const auto val = ds.subset(res.folds[f]);
            sum += roc_auc(fitter(train, val, point), val.y);
        }
        const double mean = sum / static_cast<double>(res.folds.size());
        res.mean_auc.push_back(mean);
        if (mean > best) {
            best = mean;
            res.best = point;
        }
    }
    return res;
}

inline CvFitter logistic_regression_fitter() {
    return [](const EncodedDataset& train, const EncodedDataset& val, const GridPoint& p) {
        return fit_logistic_regression(train.X, train.y, p.at("C")).score(val.X);
    };
}

inline CvFitter scratch_mlp_fitter(Seed seed) {
    return [seed](const EncodedDataset& train, const EncodedDataset& val, const GridPoint& p) {
        const auto theta = fit_scratch_mlp(train, static_cast<std::size_t>(p.at("epochs")), p.at("lr"), seed);
        return predict_positive(theta, baseline_mlp_arch(train.dim()), val.X);
    };
}

// ---------------------------------------------------------------------------
// Feature attribution

using ScoreFunction = std::function<std::vector<double>(const Matrix&)>;

/// Permutation importance per source-feature block: mean absolute change of the
/// predicted positive-class probability when the block's columns are shuffled across
/// rows (jointly), averaged over n_repeats. Returned in block order.
inline std::vector<double> feature_attribution(const ScoreFunction& predict, const Matrix& X_ref,
                                               const std::vector<std::pair<std::size_t, std::size_t>>& blocks,
                                               std::size_t n_repeats, Seed seed) {
    if (X_ref.rows < 10) throw DataError("feature attribution needs at least 10 reference rows");
    if (n_repeats < 1) throw ConfigError("feature attribution needs n_repeats >= 1");
    const auto base = predict(X_ref);
    std::vector<double> scores(blocks.size(), 0.0);
    Rng rng(seed);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        for (std::size_t rep = 0; rep < n_repeats; ++rep) {
            const auto perm = rng.permutation(X_ref.rows);
            Matrix Xs = X_ref;
            for (std::size_t r = 0; r < X_ref.rows; ++r)
                for (auto c = blocks[b].first; c < blocks[b].second; ++c) Xs(r, c) = X_ref(perm[r], c);
            const auto shuffled = predict(Xs);
            double delta = 0.0;
            for (std::size_t r = 0; r < X_ref.rows; ++r) delta += std::abs(shuffled[r] - base[r]);
            scores[b] += delta / static_cast<double>(X_ref.rows);
        }
        scores[b] /= static_cast<double>(n_repeats);
    }
    return scores;
}

struct FeatureScore {
    std::size_t feature = 0;  // schema index
    double score = 0.0;
};

/// Attribution of a distilled model keyed by schema feature index.
inline std::vector<FeatureScore> feature_attribution(const DistilledModel& model, const EncodedDataset& ref,
                                                     std::size_t n_repeats, Seed seed) {
    const auto scores = feature_attribution([&model](const Matrix& X) { return model.score(X); }, ref.X, ref.blocks(),
                                            n_repeats, seed);
    std::vector<FeatureScore> out;
    for (std::size_t b = 0; b < scores.size(); ++b) out.push_back({ref.feature_order[b], scores[b]});
    return out;
}

inline std::size_t top_feature(const std::vector<FeatureScore>& scores) {
    if (scores.empty()) throw DataError("no attribution scores");
    return std::max_element(scores.begin(), scores.end(),
                            [](const FeatureScore& a, const FeatureScore& b) { return a.score < b.score; })
        ->feature;
}

// ---------------------------------------------------------------------------
// Benchmark harness

enum class Method { logistic_regression, scratch_mlp, tabdistill };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::logistic_regression: return "lr";
        case Method::scratch_mlp: return "mlp";
        case Method::tabdistill: return "tabdistill";
    }
    return "?";
}

inline Method parse_method(const std::string& s) {
    if (s == "lr") return Method::logistic_regression;
    if (s == "mlp") return Method::scratch_mlp;
    if (s == "tabdistill") return Method::tabdistill;
    throw ConfigError("unknown method '" + s + "' (expected lr, mlp or tabdistill)");
}

inline std::string method_label(Method m) {
    switch (m) {
        case Method::logistic_regression: return "Logistic Regression";
        case Method::scratch_mlp: return "MLP";
        case Method::tabdistill: return "TabDistill";
    }
    return "?";
}

inline Seed sample_seed(Seed seed) { return derive_seed(seed, "few-shot-sample"); }

struct BaselineFit {
    std::vector<double> test_scores;
    CvResult cv;
};

/// Cross-validates the method's grid on D_N, refits on all of D_N, scores the test rows.
inline BaselineFit run_baseline(Method method, const EncodedDataset& dn, const EncodedDataset& test, Seed seed) {
    BaselineFit out;
    const Seed fold_seed = derive_seed(seed, "cv-folds");
    if (method == Method::logistic_regression) {
        out.cv = cross_validate(dn, logistic_regression_plan(dn.size()), logistic_regression_fitter(), fold_seed);
        out.test_scores = fit_logistic_regression(dn.X, dn.y, out.cv.best.at("C")).score(test.X);
    } else if (method == Method::scratch_mlp) {
        const Seed init_seed = derive_seed(seed, "mlp-init");
        out.cv = cross_validate(dn, scratch_mlp_plan(dn.size()), scratch_mlp_fitter(init_seed), fold_seed);
        const auto theta =
            fit_scratch_mlp(dn, static_cast<std::size_t>(out.cv.best.at("epochs")), out.cv.best.at("lr"), init_seed);
        out.test_scores = predict_positive(theta, baseline_mlp_arch(dn.dim()), test.X);
    } else {
        throw ConfigError("run_baseline handles lr and mlp only");
    }
    return out;
}

struct BenchmarkResult {
    std::string dataset;
    Method method = Method::logistic_regression;
    std::size_t n = 0;
    std::vector<Seed> seeds;
    std::vector<double> aucs;
    std::vector<std::string> failures;  // "seed <s>: <message>"
    double mean = 0.0;
    double std = 0.0;  // population standard deviation

    void aggregate() {
        if (aucs.empty()) {
            mean = std = std::numeric_limits<double>::quiet_NaN();
            return;
        }
        mean = std::accumulate(aucs.begin(), aucs.end(), 0.0) / static_cast<double>(aucs.size());
        double var = 0.0;
        for (double a : aucs) var += (a - mean) * (a - mean);
        std = std::sqrt(var / static_cast<double>(aucs.size()));
    }
};

struct BenchmarkDataset {
    std::string name;
    FeatureSchema schema;
    RawDataset train;
    RawDataset test;
};

using EncoderFactory = std::function<std::unique_ptr<FrozenEncoder>()>;

struct BenchmarkPlan {
    std::vector<BenchmarkDataset> datasets;
    std::vector<Method> methods;
    std::vector<std::size_t> ns{4, 8, 16, 32, 64};
    std::vector<Seed> seeds{0, 1, 2, 3, 4};
    Phase1Config phase1;
    Phase2Config phase2;
    EncoderFactory encoder;  // required for Method::tabdistill
};

/// Test AUC of one (dataset, method, N, seed) cell.
inline double run_benchmark_cell(const BenchmarkDataset& ds, Method method, std::size_t n, Seed seed,
                                 const BenchmarkPlan& plan) {
    const auto dn_raw = sample_few_shot(ds.train, n, sample_seed(seed));
    if (method == Method::tabdistill) {
        if (!plan.encoder) throw ConfigError("tabdistill benchmark needs an encoder");
        auto encoder = plan.encoder();
        auto p1 = plan.phase1;
        p1.seed = seed;
        const auto res = distill(dn_raw, ds.schema, *encoder, p1, plan.phase2);
        const auto test = res.model.encode(ds.test, ds.schema);
        return roc_auc(res.model.score(test.X), test.y);
    }
    const auto dn = preprocess(dn_raw, ds.schema);
    const auto test = preprocess(ds.test, ds.schema, &dn);
    return roc_auc(run_baseline(method, dn, test, seed).test_scores, test.y);
}

inline std::vector<BenchmarkResult> run_benchmark(const BenchmarkPlan& plan) {
    std::vector<BenchmarkResult> out;
    for (const auto& ds : plan.datasets)
        for (auto method : plan.methods)
            for (auto n : plan.ns) {
                BenchmarkResult r{ds.name, method, n, plan.seeds, {}, {}, 0.0, 0.0};
                for (auto seed : plan.seeds) {
                    try {
                        r.aucs.push_back(run_benchmark_cell(ds, method, n, seed, plan));
                    } catch (const std::exception& e) {
                        r.failures.push_back("seed " + std::to_string(seed) + ": " + e.what());
                    }
                }
                r.aggregate();
                out.push_back(std::move(r));
            }
    return out;
}

/// "0.75 (.02)"
inline std::string format_mean_std(double mean, double std) {
    if (std::isnan(mean)) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", mean);
    std::string s = buf;
    std::snprintf(buf, sizeof buf, "%.2f", std);
    std::string sd = buf;
    if (sd.rfind("0.", 0) == 0) sd.erase(0, 1);
    return s + " (" + sd + ")";
}

/// Aligned text table: one row per (dataset, method), one column per N.
inline std::string render_table(const std::vector<BenchmarkResult>& results) {
    std::vector<std::size_t> ns;
    std::vector<std::pair<std::string, Method>> rows;
    for (const auto& r : results) {
        if (std::find(ns.begin(), ns.end(), r.n) == ns.end()) ns.push_back(r.n);
        const std::pair<std::string, Method> key{r.dataset, r.method};
        if (std::find(rows.begin(), rows.end(), key) == rows.end()) rows.push_back(key);
    }
    std::sort(ns.begin(), ns.end());
    std::size_t w0 = 7, w1 = 6;
    for (const auto& [d, m] : rows) {
        w0 = std::max(w0, d.size());
        w1 = std::max(w1, method_label(m).size());
    }
    const std::size_t wc = 11;
    auto pad = [](std::string s, std::size_t w) {
        s.resize(std::max(w, s.size()), ' ');
        return s;
    };
    std::ostringstream os;
    os << pad("Dataset", w0) << "  " << pad("Method", w1);
    for (auto n : ns) os << "  " << pad("N=" + std::to_string(n), wc);
    os << "\n";
    for (const auto& [d, m] : rows) {
        os << pad(d, w0) << "  " << pad(method_label(m), w1);
        for (auto n : ns) {
            std::string cell = "-";
            for (const auto& r : results)
                if (r.dataset == d && r.method == m && r.n == n) cell = format_mean_std(r.mean, r.std);
            os << "  " << pad(cell, wc);
        }
        os << "\n";
    }
    return os.str();
}

}  // namespace tabdistill
