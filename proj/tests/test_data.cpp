#include <gtest/gtest.h>

#include <set>

#include "test_util.hpp"

using namespace tabdistill;
using td_test::parse_rows;
using td_test::parse_schema;

namespace {

const char* kJobSchema = R"(
target = target
positive_label = yes
negative_label = no
question = Will it happen? Yes or no?
feature.age = numeric | The age is
feature.job = categorical a,b | The job is
)";

RawDataset labelled_pool(std::size_t pos, std::size_t neg) {
    auto ds = td_test::random_dataset(pos + neg, 2, 11);
    for (std::size_t i = 0; i < ds.size(); ++i) ds.labels[i] = i < pos ? 1 : 0;
    return ds;
}

}  // namespace

TEST(SchemaConfig, ParsesFeaturesInOrder) {
    const auto s = parse_schema(kJobSchema);
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s.features[0].name, "age");
    EXPECT_EQ(s.features[0].kind, FeatureKind::numeric);
    EXPECT_EQ(s.features[1].kind, FeatureKind::categorical);
    EXPECT_EQ(s.features[1].categories, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(s.features[1].phrase, "The job is");
    EXPECT_EQ(s.positive_label, "yes");
}

TEST(SchemaConfig, RejectsInvalidSchemas) {
    EXPECT_THROW(parse_schema("target = t\npositive_label = 1\nfeature.a = numeric\nfeature.a = numeric\n"), SchemaError);
    EXPECT_THROW(parse_schema("target = t\npositive_label = 1\nnegative_label = 1\nfeature.a = numeric\n"), SchemaError);
    EXPECT_THROW(parse_schema("target = t\npositive_label = 1\nfeature.a = categorical x,x\n"), SchemaError);
    EXPECT_THROW(parse_schema("target = t\npositive_label = 1\nfeature.a = categorical\n"), ConfigError);
    EXPECT_THROW(parse_schema("target = t\npositive_label = 1\nfeature.a = numbers\n"), ConfigError);
    EXPECT_THROW(parse_schema("target = t\npositive_label = 1\nwhatever = 3\nfeature.a = numeric\n"), ConfigError);
}

TEST(SchemaConfig, WriteParseRoundTrip) {
    const auto s = parse_schema(kJobSchema);
    std::ostringstream out;
    write_schema_config(s, out);
    const auto back = parse_schema(out.str());
    EXPECT_EQ(back.size(), s.size());
    EXPECT_EQ(back.features[1].categories, s.features[1].categories);
    EXPECT_EQ(back.question, s.question);
}

TEST(Csv, ParsesQuotedFieldsCrlfAndBom) {
    std::istringstream in("\xEF\xBB\xBF" "a,b\r\n\"x, y\",\"say \"\"hi\"\"\"\r\n1,2\n");
    const auto rows = detail::parse_csv(in);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0][0], "a");
    EXPECT_EQ(rows[1][0], "x, y");
    EXPECT_EQ(rows[1][1], "say \"hi\"");
    EXPECT_EQ(rows[2][1], "2");
}

TEST(LoadCsv, TwoRowsBinarizedByPositiveLabel) {
    const auto s = parse_schema(kJobSchema);
    const auto ds = parse_rows("age,job,target\n29,a,yes\n41,b,no\n", s);
    ASSERT_EQ(ds.size(), 2u);
    EXPECT_EQ(ds.labels, (Labels{1, 0}));
    EXPECT_EQ(ds.rows[0][0].text, "29");
    EXPECT_DOUBLE_EQ(ds.rows[1][0].number, 41.0);
    EXPECT_EQ(ds.rows[1][1].text, "b");
}

TEST(LoadCsv, MisspelledHeaderNamesTheColumn) {
    const auto s = parse_schema(kJobSchema);
    try {
        parse_rows("agee,job,target\n29,a,yes\n", s);
        FAIL() << "expected a schema error";
    } catch (const SchemaError& e) {
        EXPECT_NE(std::string(e.what()).find("agee"), std::string::npos) << e.what();
    }
}

TEST(LoadCsv, MissingColumnIsNamed) {
    const auto s = parse_schema(kJobSchema);
    try {
        parse_rows("age,target\n29,yes\n", s);
        FAIL() << "expected a schema error";
    } catch (const SchemaError& e) {
        EXPECT_NE(std::string(e.what()).find("job"), std::string::npos) << e.what();
    }
}

TEST(LoadCsv, BadNumericCellReportsRow) {
    const auto s = parse_schema(kJobSchema);
    try {
        parse_rows("age,job,target\n29,a,yes\nold,b,no\n", s);
        FAIL() << "expected a data error";
    } catch (const std::exception& e) {
        EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos) << e.what();
    }
}

TEST(LoadCsv, UnknownCategoryListsAllowedValues) {
    const auto s = parse_schema(kJobSchema);
    try {
        parse_rows("age,job,target\n29,c,yes\n", s);
        FAIL() << "expected a data error";
    } catch (const std::exception& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("'c'"), std::string::npos) << msg;
        EXPECT_NE(msg.find("a, b"), std::string::npos) << msg;
    }
}

TEST(LoadCsv, UnknownTargetValueRejectedWhenNegativeLabelDeclared) {
    const auto s = parse_schema(kJobSchema);
    EXPECT_ANY_THROW(parse_rows("age,job,target\n29,a,maybe\n", s));
}

TEST(LoadCsv, BloodTrainSplitHas374Rows) {
    const auto cfg = td_test::data_dir() / "blood" / "blood.cfg";
    if (!std::filesystem::exists(cfg)) GTEST_SKIP() << "blood dataset not present under data/blood";
    const auto schema = load_schema_config(cfg);
    EXPECT_EQ(load_csv(schema.csv_path, schema).size(), 374u);
}

TEST(LoadCsv, HeartSplitsLoad) {
    const auto schema = load_schema_config(td_test::data_dir() / "heart" / "heart.cfg");
    const auto train = load_csv(schema.csv_path, schema);
    const auto test = load_csv(schema.test_csv_path, schema, Split::test);
    EXPECT_EQ(train.size(), 152u);
    EXPECT_EQ(test.size(), 151u);
    std::size_t pos = 0;
    for (auto y : train.labels) pos += y;
    EXPECT_EQ(pos, 42u);
}

TEST(Preprocess, TwoPointZScore) {
    const auto s = td_test::numeric_schema(1);
    const auto ds = parse_rows("f0,y\n2,1\n4,0\n", s);
    const auto enc = preprocess(ds, s);
    EXPECT_DOUBLE_EQ(enc.X(0, 0), -1.0);
    EXPECT_DOUBLE_EQ(enc.X(1, 0), 1.0);
    EXPECT_DOUBLE_EQ(enc.means[0], 3.0);
    EXPECT_DOUBLE_EQ(enc.stds[0], 1.0);
}

TEST(Preprocess, ConstantFeatureClampsStd) {
    const auto s = td_test::numeric_schema(1);
    const auto enc = preprocess(parse_rows("f0,y\n5,1\n5,0\n5,1\n", s), s);
    for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(enc.X(r, 0), 0.0);
    EXPECT_EQ(enc.stds[0], 1.0);
}

TEST(Preprocess, OneHotSlice) {
    const auto s = parse_schema(R"(
target = y
positive_label = 1
feature.kind = categorical a,b,c
)");
    const auto enc = preprocess(parse_rows("kind,y\nb,1\n", s), s);
    ASSERT_EQ(enc.dim(), 3u);
    EXPECT_EQ(enc.X(0, 0), 0.0);
    EXPECT_EQ(enc.X(0, 1), 1.0);
    EXPECT_EQ(enc.X(0, 2), 0.0);
    EXPECT_EQ(enc.column_map[1].category, std::optional<std::string>("b"));
}

TEST(Preprocess, StatsSourceIsIdempotent) {
    const auto s = td_test::numeric_schema(3);
    const auto raw = td_test::random_dataset(20, 3, 5);
    const auto first = preprocess(raw, s);
    const auto second = preprocess(raw, s, &first);
    for (std::size_t i = 0; i < first.X.data.size(); ++i) EXPECT_NEAR(first.X.data[i], second.X.data[i], 1e-12);
}

TEST(Preprocess, EmptyDatasetIsAnError) {
    const auto s = td_test::numeric_schema(1);
    RawDataset empty;
    empty.feature_order = {0};
    EXPECT_THROW(preprocess(empty, s), DataError);
}

TEST(Preprocess, StatsSourceLayoutMustMatch) {
    const auto s = td_test::numeric_schema(2);
    const auto other = preprocess(td_test::random_dataset(4, 1, 1), td_test::numeric_schema(1));
    EXPECT_THROW(preprocess(td_test::random_dataset(4, 2, 1), s, &other), SchemaError);
}

TEST(SampleFewShot, BalancedAndDeterministic) {
    const auto pool = labelled_pool(50, 50);
    const auto a = sample_few_shot(pool, 4, 0);
    const auto b = sample_few_shot(pool, 4, 0);
    ASSERT_EQ(a.size(), 4u);
    EXPECT_EQ(std::count(a.labels.begin(), a.labels.end(), 1), 2);
    EXPECT_EQ(a.rows, b.rows);
    EXPECT_EQ(a.labels, b.labels);
}

TEST(SampleFewShot, Preconditions) {
    EXPECT_THROW(sample_few_shot(labelled_pool(50, 50), 3, 0), ConfigError);
    EXPECT_THROW(sample_few_shot(labelled_pool(1, 50), 4, 0), DataError);
}

TEST(SampleFewShot, DifferentSeedsEventuallyDiffer) {
    const auto pool = labelled_pool(30, 30);
    bool any_differs = false;
    for (Seed s = 0; s < 100 && !any_differs; ++s)
        any_differs = sample_few_shot(pool, 8, 2 * s).rows != sample_few_shot(pool, 8, 2 * s + 1).rows;
    EXPECT_TRUE(any_differs);
}

TEST(PermuteFeatures, IdentityIsNoOp) {
    const auto ds = td_test::random_dataset(3, 3, 2);
    const auto out = permute_features(FeaturePermutation::identity(3), ds);
    EXPECT_EQ(out.rows, ds.rows);
    EXPECT_EQ(out.feature_order, ds.feature_order);
}

TEST(PermuteFeatures, HandAppliedPermutation) {
    const auto s = td_test::numeric_schema(3);
    const auto ds = parse_rows("f0,f1,f2,y\n10,11,12,1\n", s);
    const auto out = permute_features(FeaturePermutation({2, 0, 1}), ds);
    EXPECT_EQ(out.feature_order, (std::vector<std::size_t>{2, 0, 1}));
    EXPECT_EQ(out.rows[0][0].text, "12");
    EXPECT_EQ(out.rows[0][1].text, "10");
    EXPECT_EQ(out.rows[0][2].text, "11");
}

TEST(PermuteFeatures, InverseRestoresAndLabelsUntouched) {
    const auto ds = td_test::random_dataset(6, 5, 9);
    for (Seed seed = 0; seed < 20; ++seed) {
        const auto pi = FeaturePermutation::random(5, seed);
        const auto p = permute_features(pi, ds);
        EXPECT_EQ(p.labels, ds.labels);
        for (std::size_t r = 0; r < ds.size(); ++r) {
            std::multiset<std::string> a, b;
            for (const auto& c : ds.rows[r]) a.insert(c.text);
            for (const auto& c : p.rows[r]) b.insert(c.text);
            EXPECT_EQ(a, b);
        }
        const auto back = permute_features(pi.inverse(), p);
        EXPECT_EQ(back.rows, ds.rows);
        EXPECT_EQ(back.feature_order, ds.feature_order);
    }
}

TEST(PermuteFeatures, EncodedBlocksMoveTogether) {
    const auto s = parse_schema(R"(
target = y
positive_label = 1
feature.a = numeric
feature.c = categorical p,q,r
feature.b = numeric
)");
    const auto raw = parse_rows("a,c,b,y\n1,q,7,1\n3,r,5,0\n", s);
    const auto enc = preprocess(raw, s);
    const FeaturePermutation pi({1, 2, 0});
    const auto pe = permute_features(pi, enc);
    // raw-then-encode equals encode-then-permute
    const auto direct = preprocess(permute_features(pi, raw), s, nullptr);
    EXPECT_EQ(pe.column_map, direct.column_map);
    EXPECT_EQ(pe.X.data, direct.X.data);
    EXPECT_EQ(pe.y, enc.y);
    ASSERT_EQ(pe.blocks().size(), 3u);
    EXPECT_EQ(pe.blocks()[0], (std::pair<std::size_t, std::size_t>{0, 3}));
}

TEST(PermuteFeatures, LengthMismatchIsAnError) {
    EXPECT_ANY_THROW(permute_features(FeaturePermutation::identity(2), td_test::random_dataset(2, 3, 0)));
}

TEST(PartitionScheme, DocumentedSizes) {
    EXPECT_EQ(partition_scheme(4), (PartitionScheme{4, 4, true, 1}));
    EXPECT_EQ(partition_scheme(8), (PartitionScheme{4, 4, true, 2}));
    EXPECT_EQ(partition_scheme(16), (PartitionScheme{8, 8, false, 1}));
    EXPECT_EQ(partition_scheme(32), (PartitionScheme{8, 8, false, 2}));
    EXPECT_EQ(partition_scheme(64), (PartitionScheme{8, 8, false, 4}));
    // largest documented size not above N
    EXPECT_EQ(partition_scheme(40), partition_scheme(32));
    EXPECT_EQ(partition_scheme(128), partition_scheme(64));
}

TEST(MakePartitions, N4IsWholeSetTwice) {
    const auto dn = sample_few_shot(labelled_pool(10, 10), 4, 3);
    const auto parts = make_partitions(dn, 17);
    ASSERT_EQ(parts.size(), 1u);
    std::multiset<std::string> all, s, q;
    for (const auto& r : dn.rows) all.insert(r[0].text);
    for (const auto& r : parts[0].first.rows) s.insert(r[0].text);
    for (const auto& r : parts[0].second.rows) q.insert(r[0].text);
    EXPECT_EQ(s, all);
    EXPECT_EQ(q, all);
}

TEST(MakePartitions, BalancedDisjointWithinDn) {
    for (std::size_t n : {4u, 8u, 16u, 32u, 64u}) {
        const auto dn = sample_few_shot(labelled_pool(40, 40), n, n);
        const auto scheme = partition_scheme(n);
        for (Seed seed = 0; seed < 10; ++seed) {
            const auto parts = make_partition_indices(dn.labels, seed);
            ASSERT_EQ(parts.size(), scheme.num_pairs);
            std::set<std::size_t> used;
            for (const auto& [sup, qry] : parts) {
                EXPECT_EQ(sup.size(), scheme.size_s);
                EXPECT_EQ(qry.size(), scheme.size_q);
                for (const auto* set : {&sup, &qry}) {
                    std::size_t pos = 0;
                    for (auto i : *set) {
                        ASSERT_LT(i, n);
                        pos += dn.labels[i];
                    }
                    EXPECT_EQ(2 * pos, set->size()) << "N=" << n;
                }
                if (scheme.same_sets) {
                    EXPECT_EQ(std::set<std::size_t>(sup.begin(), sup.end()), std::set<std::size_t>(qry.begin(), qry.end()));
                } else {
                    for (auto i : sup) EXPECT_EQ(std::count(qry.begin(), qry.end(), i), 0);
                }
                // pairs are mutually disjoint
                for (auto i : sup) EXPECT_TRUE(used.insert(i).second || scheme.num_pairs == 1);
                if (!scheme.same_sets) {
                    for (auto i : qry) EXPECT_TRUE(used.insert(i).second);
                }
            }
        }
    }
}

TEST(MakePartitions, EpochSeedsReshuffle) {
    const auto dn = sample_few_shot(labelled_pool(40, 40), 32, 1);
    EXPECT_NE(make_partition_indices(dn.labels, 1), make_partition_indices(dn.labels, 2));
    EXPECT_EQ(make_partition_indices(dn.labels, 1), make_partition_indices(dn.labels, 1));
}

TEST(BalancedChunks, SplitsIntoBalancedChunks) {
    const auto dn = sample_few_shot(labelled_pool(40, 40), 32, 1);
    const auto chunks = balanced_chunks(dn.labels, 8);
    ASSERT_EQ(chunks.size(), 4u);
    std::set<std::size_t> all;
    for (const auto& c : chunks) {
        EXPECT_EQ(c.size(), 8u);
        std::size_t pos = 0;
        for (auto i : c) {
            pos += dn.labels[i];
            all.insert(i);
        }
        EXPECT_EQ(pos, 4u);
    }
    EXPECT_EQ(all.size(), 32u);
}

TEST(Rng, DerivedStreamsAreStableAndDistinct) {
    EXPECT_EQ(derive_seed(1, "a", 2), derive_seed(1, "a", 2));
    EXPECT_NE(derive_seed(1, "a", 2), derive_seed(1, "a", 3));
    EXPECT_NE(derive_seed(1, "a", 2), derive_seed(1, "b", 2));
    EXPECT_NE(derive_seed(1, "a", 2), derive_seed(2, "a", 2));
    Rng a(5), b(5);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.uniform(), b.uniform());
    auto p = Rng(3).permutation(10);
    std::sort(p.begin(), p.end());
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(p[i], i);
}

TEST(Fingerprint, SensitiveToContent) {
    auto ds = td_test::random_dataset(4, 2, 1);
    const auto h = fingerprint(ds);
    EXPECT_EQ(h, fingerprint(ds));
    ds.rows[2][1].text = "99";
    EXPECT_NE(h, fingerprint(ds));
}
