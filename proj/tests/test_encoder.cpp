#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace tabdistill;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
    Matrix m(rows, cols);
    for (auto& v : m.data) v = rng.normal() * scale;
    return m;
}

Labels alternating(std::size_t n) {
    Labels y;
    for (std::size_t i = 0; i < n; ++i) y.push_back(i % 2 == 0 ? 1 : 0);
    return y;
}

}  // namespace

TEST(EmbeddingDim, PerExampleScalesWithPromptSize) {
    EXPECT_EQ(embedding_dim({EncoderKind::tabular, DimMode::per_example, 192}, 4), 768u);
    EXPECT_EQ(embedding_dim({EncoderKind::text, DimMode::fixed, 4096}, 4), 4096u);
    EXPECT_EQ(embedding_dim({EncoderKind::text, DimMode::fixed, 4096}, 64), 4096u);
    EXPECT_EQ(embedding_dim({EncoderKind::tabular, DimMode::per_example, 8}, 1), 8u);
}

TEST(EmbeddingDim, EmptyPromptIsRejected) {
    EXPECT_THROW(embedding_dim({EncoderKind::tabular, DimMode::per_example, 8}, 0), ConfigError);
}

TEST(BuiltinEncoder, ConfigValidation) {
    EXPECT_THROW(BuiltinEncoder({.width = 10, .heads = 3}), ConfigError);
    EXPECT_THROW(BuiltinEncoder({.width = 0}), ConfigError);
    BuiltinEncoder enc;
    EXPECT_EQ(enc.policy().dim, 64u);
    EXPECT_EQ(enc.policy().dim_mode, DimMode::per_example);
    EXPECT_EQ(enc.policy().kind, EncoderKind::tabular);
}

TEST(BuiltinEncoder, SingleRowGivesOneBlock) {
    BuiltinEncoder enc({.width = 8, .heads = 2});
    Matrix X(1, 3);
    X.data = {0.5, -1.0, 2.0};
    EXPECT_EQ(enc.encode_matrix(X, Labels{1}).size(), 8u);
}

TEST(BuiltinEncoder, DeterministicAcrossInstances) {
    Rng rng(3);
    const auto X = random_matrix(8, 5, rng);
    const auto y = alternating(8);
    BuiltinEncoder a({.width = 16, .heads = 2, .layers = 2, .seed = 7});
    BuiltinEncoder b({.width = 16, .heads = 2, .layers = 2, .seed = 7});
    EXPECT_EQ(a.encode_matrix(X, y), b.encode_matrix(X, y));
    EXPECT_EQ(a.encode_matrix(X, y), a.encode_matrix(X, y));
    BuiltinEncoder c({.width = 16, .heads = 2, .layers = 2, .seed = 8});
    EXPECT_NE(a.encode_matrix(X, y), c.encode_matrix(X, y));
}

TEST(BuiltinEncoder, OutputReactsToCellsAndLabels) {
    Rng rng(4);
    auto X = random_matrix(4, 3, rng);
    auto y = alternating(4);
    BuiltinEncoder enc({.width = 16, .heads = 2});
    const auto base = enc.encode_matrix(X, y);
    auto X2 = X;
    X2(2, 1) += 0.5;
    EXPECT_NE(enc.encode_matrix(X2, y), base);
    auto y2 = y;
    y2[0] = 0;
    EXPECT_NE(enc.encode_matrix(X, y2), base);
}

TEST(BuiltinEncoder, RowSwapSwapsBlocks) {
    Rng rng(5);
    const auto X = random_matrix(4, 3, rng);
    const auto y = alternating(4);
    const std::size_t E = 16;
    BuiltinEncoder enc({.width = E, .heads = 4});
    const auto base = enc.encode_matrix(X, y);
    const std::vector<std::size_t> order{1, 0, 2, 3};
    auto Xs = take_rows(X, order);
    Labels ys{y[1], y[0], y[2], y[3]};
    const auto swapped = enc.encode_matrix(Xs, ys);
    for (std::size_t k = 0; k < E; ++k) {
        EXPECT_EQ(swapped[k], base[E + k]);
        EXPECT_EQ(swapped[E + k], base[k]);
        EXPECT_EQ(swapped[2 * E + k], base[2 * E + k]);
    }
}

TEST(BuiltinEncoder, BoundedOverRandomDatasets) {
    BuiltinEncoder enc({.width = 16, .heads = 2});
    Rng rng(6);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.below(8);
        const std::size_t d = 1 + rng.below(12);
        const auto X = random_matrix(n, d, rng, 3.0);
        Labels y;
        for (std::size_t i = 0; i < n; ++i) y.push_back(static_cast<std::uint8_t>(rng.below(2)));
        for (double v : enc.encode_matrix(X, y)) {
            ASSERT_TRUE(std::isfinite(v));
            worst = std::max(worst, std::abs(v));
        }
    }
    EXPECT_LE(worst, 100.0);
}

TEST(BuiltinEncoder, RejectsBadInput) {
    BuiltinEncoder enc({.width = 8, .heads = 2});
    Matrix X(2, 2);
    X.data = {1.0, std::nan(""), 0.0, 1.0};
    EXPECT_THROW(enc.encode_matrix(X, Labels{1, 0}), EncoderError);
    X.data = {1.0, 2.0, 0.0, 1.0};
    EXPECT_THROW(enc.encode_matrix(X, Labels{1}), ShapeError);
    EXPECT_THROW(enc.encode_matrix(Matrix(0, 2), Labels{}), EncoderError);
    EXPECT_THROW(enc.encode(EncoderInput{}), EncoderError);
}

TEST(BuiltinEncoder, EncodeThroughInterface) {
    const auto schema = td_test::numeric_schema(3);
    const auto raw = td_test::random_dataset(6, 3, 1);
    const auto ds = preprocess(raw, schema);
    BuiltinEncoder enc({.width = 8, .heads = 2});
    FrozenEncoder& fe = enc;
    const auto emb = fe.encode({&raw, &ds, &schema});
    EXPECT_EQ(emb.dim(), 48u);
    EXPECT_EQ(emb.encoder_id, enc.handshake().name);
    EXPECT_EQ(emb.values, builtin_encode(ds, {.width = 8, .heads = 2}).values);
}
