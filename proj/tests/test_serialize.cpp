#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace tabdistill;

namespace {

struct Fixture {
    FeatureSchema schema;
    RawDataset rows;
    std::string golden;
};

Fixture load_fixture(const std::string& name) {
    const auto dir = td_test::fixture_dir() / "prompts";
    Fixture f;
    f.schema = load_schema_config(dir / (name + ".cfg"));
    f.rows = load_csv(dir / (name + "_rows.csv"), f.schema);
    f.golden = read_text_file(dir / (name + "_prompt.txt"));
    return f;
}

}  // namespace

TEST(SerializeRow, CalhousingRowTemplate) {
    const auto f = load_fixture("calhousing");
    const auto s = serialize_row(f.rows, 0, f.schema, FeaturePermutation::identity(8), 1);
    EXPECT_EQ(s.rfind("The median income is 4.3292.", 0), 0u) << s;
    const std::string tail = "Is this house block valuable? Yes or no? The answer is yes.";
    EXPECT_EQ(s.substr(s.size() - tail.size()), tail);
}

TEST(SerializeRow, BloodRowNegativeAnswer) {
    const auto f = load_fixture("blood");
    const auto s = serialize_row(f.rows, 0, f.schema, FeaturePermutation::identity(4), 0);
    const std::string tail = "Will this person donate blood next time? Yes or no? The answer is no.";
    EXPECT_EQ(s.substr(s.size() - tail.size()), tail);
}

TEST(SerializeRow, InferenceModeHasNoAnswer) {
    const auto schema = td_test::parse_schema("target = y\npositive_label = 1\nquestion = Is it? Yes or no?\nfeature.age = numeric | The age is\n");
    RawDataset ds;
    ds.feature_order = {0};
    ds.rows = {{Cell::from_number(29)}};
    ds.labels = {1};
    EXPECT_EQ(serialize_row(ds, 0, schema, FeaturePermutation::identity(1)), "The age is 29.0. Is it? Yes or no?");
}

TEST(SerializeRow, LabelsDifferOnlyInAnswerWord) {
    const auto f = load_fixture("calhousing");
    const auto pi = FeaturePermutation::identity(8);
    const auto yes = serialize_row(f.rows, 2, f.schema, pi, 1);
    const auto no = serialize_row(f.rows, 2, f.schema, pi, 0);
    ASSERT_NE(yes, no);
    EXPECT_EQ(yes.substr(0, yes.size() - 4), no.substr(0, no.size() - 3));
    EXPECT_EQ(yes.substr(yes.size() - 4), "yes.");
    EXPECT_EQ(no.substr(no.size() - 3), "no.");
}

TEST(BuildPrompt, CalhousingFourExamplesMatchGolden) {
    const auto f = load_fixture("calhousing");
    const auto p = build_prompt(f.rows, f.schema, FeaturePermutation::identity(8));
    EXPECT_EQ(p.example_count, 4u);
    EXPECT_EQ(p.text.rfind("Example 0:", 0), 0u);
    std::size_t markers = 0;
    for (auto pos = p.text.find("Example "); pos != std::string::npos; pos = p.text.find("Example ", pos + 1)) ++markers;
    EXPECT_EQ(markers, 4u);
    EXPECT_EQ(p.text, f.golden);
}

TEST(BuildPrompt, BloodPreambleMatchesGolden) {
    const auto f = load_fixture("blood");
    EXPECT_EQ(build_prompt(f.rows, f.schema, FeaturePermutation::identity(4)).text, f.golden);
}

TEST(BuildPrompt, SingleRowHasNoSeparator) {
    const auto f = load_fixture("calhousing");
    const std::vector<std::size_t> first{0};
    const auto p = build_prompt(f.rows.subset(first), f.schema, FeaturePermutation::identity(8));
    EXPECT_EQ(p.text.rfind("Example 0: ", 0), 0u);
    EXPECT_EQ(p.text.find("\n"), std::string::npos);
    EXPECT_NE(p.text.back(), ' ');
}

TEST(BuildPrompt, PermutationOnlyReordersSentences) {
    const auto schema = td_test::parse_schema(
        "target = y\npositive_label = 1\nquestion = Q?\nfeature.a = numeric | The a is\nfeature.b = numeric | The b is\n");
    const auto ds = td_test::parse_rows("a,b,y\n1,2,1\n3,4,0\n", schema);
    const auto id = build_prompt(ds, schema, FeaturePermutation::identity(2)).text;
    const auto sw = build_prompt(ds, schema, FeaturePermutation({1, 0})).text;
    EXPECT_EQ(id, "Example 0: The a is 1. The b is 2. Q? The answer is yes.\n\nExample 1: The a is 3. The b is 4. Q? The answer is no.");
    EXPECT_EQ(sw, "Example 0: The b is 2. The a is 1. Q? The answer is yes.\n\nExample 1: The b is 4. The a is 3. Q? The answer is no.");
}

TEST(BuildPrompt, PermutationCommutesWithSerialization) {
    const auto f = load_fixture("calhousing");
    for (Seed seed = 0; seed < 10; ++seed) {
        const auto pi = FeaturePermutation::random(8, seed);
        EXPECT_EQ(build_prompt(f.rows, f.schema, pi).text,
                  build_prompt(permute_features(pi, f.rows), f.schema, FeaturePermutation::identity(8)).text);
    }
}

TEST(BuildPrompt, EmptyDatasetIsAnError) {
    const auto f = load_fixture("calhousing");
    EXPECT_THROW(build_prompt(f.rows.subset(std::vector<std::size_t>{}), f.schema, FeaturePermutation::identity(8)),
                 DataError);
}
