#pragma once

#include <optional>
#include <string>

#include "tabdistill/data.hpp"

namespace tabdistill {

struct PromptText {
    std::string text;
    std::size_t example_count = 0;
    FeaturePermutation permutation_used;
};

/// "<phrase> <value>." for every feature in pi order, then the question, then
/// " The answer is <yes|no>." when a label is given.
inline std::string serialize_row(const RawDataset& ds, std::size_t row, const FeatureSchema& schema,
                                 const FeaturePermutation& pi, std::optional<std::uint8_t> label = std::nullopt) {
    if (pi.size() != ds.num_features())
        throw ShapeError("permutation of length " + std::to_string(pi.size()) + " for a row with " +
                         std::to_string(ds.num_features()) + " features");
    const auto& cells = ds.rows.at(row);
    std::string out;
    auto sentence = [&out](const std::string& s) {
        if (s.empty()) return;
        if (!out.empty()) out += ' ';
        out += s;
    };
    sentence(schema.preamble);
    for (std::size_t i = 0; i < pi.size(); ++i) {
        const std::size_t col = pi[i];
        const auto& spec = schema.features.at(ds.feature_order[col]);
        sentence(spec.phrase + " " + cells.at(col).text + ".");
    }
    sentence(schema.question);
    if (label) sentence("The answer is " + (*label ? schema.answer_yes : schema.answer_no) + ".");
    return out;
}

/// Labelled examples as "Example <i>: ..." separated by one blank line, no trailing separator.
inline PromptText build_prompt(const RawDataset& ds, const FeatureSchema& schema, const FeaturePermutation& pi) {
    if (ds.size() == 0) throw DataError("cannot build a prompt from an empty dataset");
    PromptText p{{}, ds.size(), pi};
    for (std::size_t r = 0; r < ds.size(); ++r) {
        if (r) p.text += "\n\n";
        p.text += "Example " + std::to_string(r) + ": " + serialize_row(ds, r, schema, pi, ds.labels[r]);
    }
    return p;
}

}  // namespace tabdistill
