#pragma once

#include <vector>

#include "sparseft/errors.hpp"

namespace sparseft {

// Row-major supervised dataset. Classification uses `labels`, regression
// uses `targets` (n * target_dim).
struct Dataset {
    bool classification = true;
    int input_dim = 0;
    int target_dim = 1;
    std::vector<double> x;
    std::vector<int> labels;
    std::vector<double> targets;

    int size() const {
        return input_dim == 0 ? 0 : static_cast<int>(x.size()) / input_dim;
    }

    Dataset select(const std::vector<int>& rows) const {
        Dataset out;
        out.classification = classification;
        out.input_dim = input_dim;
        out.target_dim = target_dim;
        out.x.reserve(rows.size() * static_cast<std::size_t>(input_dim));
        for (int r : rows) {
            for (int j = 0; j < input_dim; ++j) out.x.push_back(x[static_cast<std::size_t>(r * input_dim + j)]);
            if (classification) {
                out.labels.push_back(labels[static_cast<std::size_t>(r)]);
            } else {
                for (int j = 0; j < target_dim; ++j)
                    out.targets.push_back(targets[static_cast<std::size_t>(r * target_dim + j)]);
            }
        }
        return out;
    }

    Dataset without_row(int drop) const {
        std::vector<int> rows;
        rows.reserve(static_cast<std::size_t>(size() > 0 ? size() - 1 : 0));
        for (int r = 0; r < size(); ++r) {
            if (r != drop) rows.push_back(r);
        }
        return select(rows);
    }
};

struct SplitData {
    Dataset train;
    Dataset dev;
    Dataset test;
};

}  // namespace sparseft
