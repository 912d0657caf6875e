#pragma once

#include <string>

#include "tabdistill/data.hpp"
#include "tabdistill/rng.hpp"

namespace tabdistill {

struct SyntheticTask {
    FeatureSchema schema;
    RawDataset train;
    RawDataset test;
};

/// Threshold task y = 1[x0 > 0] with `noise_columns` extra standard-normal columns
/// that carry no label information. Values are rounded to 4 decimals.
inline SyntheticTask make_threshold_task(std::size_t train_rows, std::size_t test_rows, std::size_t noise_columns,
                                         Seed seed) {
    SyntheticTask t;
    t.schema.target_name = "y";
    t.schema.positive_label = "1";
    t.schema.negative_label = "0";
    t.schema.question = "Does this example belong to the positive class? Yes or no?";
    for (std::size_t j = 0; j <= noise_columns; ++j) {
        const std::string name = "x" + std::to_string(j);
        t.schema.features.push_back({name, FeatureKind::numeric, {}, "The " + name + " is"});
    }
    auto generate = [&](std::size_t rows, Split split, Seed s) {
        RawDataset ds;
        ds.split = split;
        for (std::size_t j = 0; j <= noise_columns; ++j) ds.feature_order.push_back(j);
        Rng rng(s);
        for (std::size_t r = 0; r < rows; ++r) {
            std::vector<Cell> cells;
            for (std::size_t j = 0; j <= noise_columns; ++j) {
                double v = std::round(rng.normal() * 1e4) / 1e4;
                if (j == 0 && v == 0.0) v = 1e-4;
                cells.push_back(Cell::from_number(v));
            }
            ds.labels.push_back(cells[0].number > 0.0 ? 1 : 0);
            ds.rows.push_back(std::move(cells));
        }
        return ds;
    };
    t.train = generate(train_rows, Split::train, derive_seed(seed, "synthetic-train"));
    t.test = generate(test_rows, Split::test, derive_seed(seed, "synthetic-test"));
    return t;
}

}  // namespace tabdistill
