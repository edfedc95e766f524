#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "fedfnn/matrix.hpp"

namespace fedfnn {

// Labeled classification dataset: N x D features, integer labels in {0..C-1}.
struct LabeledDataset {
    Matrix features;          // N x D
    std::vector<int> labels;  // length N
    int class_count = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t feature_dim() const { return features.cols; }
    bool empty() const { return labels.empty(); }

    std::span<const double> sample(std::size_t i) const { return features.row(i); }

    void validate() const {
        if (features.rows != labels.size())
            throw std::invalid_argument("dataset: feature rows and label count differ");
        for (int y : labels)
            if (y < 0 || y >= class_count)
                throw std::invalid_argument("dataset: label out of range");
    }
};

inline Vector one_hot(int label, int class_count) {
    if (label < 0 || label >= class_count)
        throw std::invalid_argument("one_hot: label out of range");
    Vector v(static_cast<std::size_t>(class_count), 0.0);
    v[static_cast<std::size_t>(label)] = 1.0;
    return v;
}

}  // namespace fedfnn
