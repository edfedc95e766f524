#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fedfnn/dataset.hpp"
#include "fedfnn/matrix.hpp"
#include "fedfnn/rng.hpp"

namespace fedfnn {

struct PartitionSpec {
    double alpha = 0.5;  // Dirichlet concentration; smaller means stronger skew
    int clients = 5;
    std::uint64_t seed = 0;
};

// Raw parsed CSV: real features plus one label column, with the label
// vocabulary mapped to dense indices in first-appearance order.
struct RawTable {
    std::vector<std::string> header;       // empty when the file had none
    std::vector<std::string> label_names;  // vocabulary, index order
    Matrix features;                       // N x D
    std::vector<int> labels;               // length N

    std::size_t size() const { return labels.size(); }
    std::size_t feature_dim() const { return features.cols; }
    int class_count() const { return static_cast<int>(label_names.size()); }
};

namespace detail {

inline std::optional<double> parse_number(std::string_view field) {
    const char* begin = field.data();
    const char* end = begin + field.size();
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end) return std::nullopt;
    return value;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(trim(line.substr(start)));
            break;
        }
        fields.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
    return fields;
}

}  // namespace detail

// Comma-separated file, optional header, last column is the label (numeric or
// string vocabulary). Parse failures report the offending 1-based line.
inline RawTable load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);

    RawTable table;
    std::size_t width = 0;
    std::vector<double> values;
    std::string line;
    std::size_t line_no = 0;
    bool saw_data = false;

    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const std::vector<std::string_view> fields = detail::split_fields(line);

        if (!saw_data) {
            // Header detection: a first row whose feature fields are not all
            // numeric is a header, not data.
            bool numeric = fields.size() >= 2;
            for (std::size_t j = 0; numeric && j + 1 < fields.size(); ++j)
                numeric = detail::parse_number(fields[j]).has_value();
            if (!numeric && table.header.empty() && fields.size() >= 2) {
                for (std::string_view f : fields) table.header.emplace_back(f);
                width = fields.size();
                continue;
            }
        }
        if (fields.size() < 2)
            throw std::runtime_error("line " + std::to_string(line_no) +
                                     ": expected at least one feature and a label");
        if (width == 0) width = fields.size();
        if (fields.size() != width)
            throw std::runtime_error("line " + std::to_string(line_no) + ": expected " +
                                     std::to_string(width) + " fields, got " +
                                     std::to_string(fields.size()));

        for (std::size_t j = 0; j + 1 < fields.size(); ++j) {
            const std::optional<double> v = detail::parse_number(fields[j]);
            if (!v)
                throw std::runtime_error("line " + std::to_string(line_no) +
                                         ": non-numeric feature '" + std::string(fields[j]) +
                                         "'");
            values.push_back(*v);
        }

        const std::string label(fields.back());
        auto found = std::find(table.label_names.begin(), table.label_names.end(), label);
        if (found == table.label_names.end()) {
            table.label_names.push_back(label);
            found = table.label_names.end() - 1;
        }
        table.labels.push_back(static_cast<int>(found - table.label_names.begin()));
        saw_data = true;
    }

    if (!saw_data) throw std::runtime_error("empty file: " + path);
    table.features = Matrix(table.labels.size(), width - 1);
    table.features.data = std::move(values);
    return table;
}

// Per-feature linear map onto [-1, 1]; constant features map to 0. Applied to
// the whole table before any split, so the feature range is shared globally.
inline LabeledDataset normalize_mapminmax(const RawTable& table) {
    if (table.size() == 0) throw std::invalid_argument("normalize: empty table");
    LabeledDataset out;
    out.features = table.features;
    out.labels = table.labels;
    out.class_count = table.class_count();

    const std::size_t cols = table.features.cols;
    for (std::size_t j = 0; j < cols; ++j) {
        double lo = table.features(0, j);
        double hi = lo;
        for (std::size_t i = 1; i < table.features.rows; ++i) {
            lo = std::min(lo, table.features(i, j));
            hi = std::max(hi, table.features(i, j));
        }
        const double span = hi - lo;
        for (std::size_t i = 0; i < table.features.rows; ++i) {
            double& v = out.features(i, j);
            v = span == 0.0 ? 0.0 : 2.0 * (v - lo) / span - 1.0;
        }
    }
    return out;
}

// One Dirichlet(alpha * 1_Q) draw per class: proportions[c][q] is the share
// of class c assigned to client q.
inline std::vector<std::vector<double>> dirichlet_proportions(int classes, int clients,
                                                              double alpha, std::uint64_t seed) {
    if (!(alpha > 0.0)) throw std::invalid_argument("dirichlet: alpha must be > 0");
    if (clients < 1) throw std::invalid_argument("dirichlet: clients must be >= 1");
    std::vector<std::vector<double>> proportions(static_cast<std::size_t>(classes));
    for (int c = 0; c < classes; ++c) {
        std::mt19937_64 rng =
            make_rng(derive_seed(seed, {seed_tag::proportions, static_cast<std::uint64_t>(c)}));
        std::gamma_distribution<double> gamma(alpha, 1.0);
        std::vector<double>& p = proportions[static_cast<std::size_t>(c)];
        p.resize(static_cast<std::size_t>(clients));
        double total = 0.0;
        for (double& v : p) {
            v = gamma(rng);
            total += v;
        }
        if (total == 0.0) {
            std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(clients));
        } else {
            for (double& v : p) v /= total;
        }
    }
    return proportions;
}

namespace detail {

// Integer allocation of n items by proportions using largest remainders.
inline std::vector<std::size_t> largest_remainder_counts(std::span<const double> proportions,
                                                         std::size_t n) {
    const std::size_t q = proportions.size();
    std::vector<std::size_t> counts(q, 0);
    std::vector<std::pair<double, std::size_t>> remainders;  // (fraction, client)
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < q; ++i) {
        const double quota = proportions[i] * static_cast<double>(n);
        counts[i] = static_cast<std::size_t>(quota);
        assigned += counts[i];
        remainders.emplace_back(quota - static_cast<double>(counts[i]), i);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < n; ++i, ++assigned) counts[remainders[i % q].second] += 1;
    return counts;
}

inline LabeledDataset take_rows(const LabeledDataset& data,
                                const std::vector<std::size_t>& rows) {
    LabeledDataset out;
    out.class_count = data.class_count;
    out.features = Matrix(rows.size(), data.features.cols);
    out.labels.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = data.sample(rows[i]);
        std::copy(src.begin(), src.end(), out.features.row(i).begin());
        out.labels.push_back(data.labels[rows[i]]);
    }
    return out;
}

}  // namespace detail

// Split a dataset across clients class by class following the given
// proportions. Guarantees a disjoint cover of the input; clients left empty
// are repaired with one sample taken from the largest partition.
inline std::vector<LabeledDataset> partition_by_proportions(
    const LabeledDataset& data, const std::vector<std::vector<double>>& proportions,
    std::uint64_t seed) {
    const std::size_t clients = proportions.empty() ? 0 : proportions[0].size();
    if (clients == 0) throw std::invalid_argument("partition: no clients");
    if (proportions.size() != static_cast<std::size_t>(data.class_count))
        throw std::invalid_argument("partition: one proportion row per class required");
    std::vector<std::vector<std::size_t>> member_rows(clients);

    for (int c = 0; c < data.class_count; ++c) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < data.size(); ++i)
            if (data.labels[i] == c) rows.push_back(i);
        if (rows.empty()) continue;

        std::mt19937_64 rng =
            make_rng(derive_seed(seed, {seed_tag::train_split, static_cast<std::uint64_t>(c)}));
        std::shuffle(rows.begin(), rows.end(), rng);

        const std::vector<std::size_t> counts = detail::largest_remainder_counts(
            proportions[static_cast<std::size_t>(c)], rows.size());
        std::size_t cursor = 0;
        for (std::size_t q = 0; q < clients; ++q) {
            for (std::size_t i = 0; i < counts[q]; ++i)
                member_rows[q].push_back(rows[cursor++]);
        }
    }

    // Repair: every client must own at least one sample.
    for (std::size_t q = 0; q < clients; ++q) {
        if (!member_rows[q].empty()) continue;
        std::size_t largest = 0;
        for (std::size_t p = 1; p < clients; ++p)
            if (member_rows[p].size() > member_rows[largest].size()) largest = p;
        if (member_rows[largest].size() <= 1)
            throw std::runtime_error("partition: not enough samples for every client");
        member_rows[q].push_back(member_rows[largest].back());
        member_rows[largest].pop_back();
    }

    std::vector<LabeledDataset> parts;
    parts.reserve(clients);
    for (std::size_t q = 0; q < clients; ++q)
        parts.push_back(detail::take_rows(data, member_rows[q]));
    return parts;
}

// Label-skewed non-IID split: per-class client proportions drawn from
// Dirichlet(alpha), then allocated by largest remainder.
inline std::vector<LabeledDataset> dirichlet_partition(const LabeledDataset& data,
                                                       const PartitionSpec& spec) {
    const std::vector<std::vector<double>> proportions =
        dirichlet_proportions(data.class_count, spec.clients, spec.alpha, spec.seed);
    return partition_by_proportions(data, proportions, spec.seed);
}

// Perturb a uniformly chosen floor(level * N) subset of samples with standard
// normal noise on every feature. Labels are untouched.
inline LabeledDataset inject_noise(const LabeledDataset& data, double level,
                                   std::uint64_t seed) {
    if (level < 0.0 || level > 1.0)
        throw std::invalid_argument("noise level must be in [0,1]");
    LabeledDataset out = data;
    const auto count =
        static_cast<std::size_t>(level * static_cast<double>(data.size()));
    if (count == 0) return out;

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng = make_rng(derive_seed(seed, {seed_tag::noise}));
    std::shuffle(order.begin(), order.end(), rng);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t i = 0; i < count; ++i) {
        auto row = out.features.row(order[i]);
        for (double& v : row) v += noise(rng);
    }
    return out;
}

// Seeded shuffled indices chunked into near-equal disjoint test folds; the
// train side of each pair is the complement.
inline std::vector<std::pair<LabeledDataset, LabeledDataset>> kfold_split(
    const LabeledDataset& data, int folds, std::uint64_t seed) {
    if (folds < 2) throw std::invalid_argument("kfold: folds must be >= 2");
    if (data.size() < static_cast<std::size_t>(folds))
        throw std::invalid_argument("kfold: more folds than samples");

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng = make_rng(derive_seed(seed, {seed_tag::folds}));
    std::shuffle(order.begin(), order.end(), rng);

    const std::size_t n = data.size();
    const auto f = static_cast<std::size_t>(folds);
    std::vector<std::pair<LabeledDataset, LabeledDataset>> splits;
    std::size_t start = 0;
    for (std::size_t i = 0; i < f; ++i) {
        const std::size_t size = n / f + (i < n % f ? 1 : 0);
        std::vector<std::size_t> test_rows(order.begin() + static_cast<long>(start),
                                           order.begin() + static_cast<long>(start + size));
        std::vector<std::size_t> train_rows;
        train_rows.reserve(n - size);
        train_rows.insert(train_rows.end(), order.begin(),
                          order.begin() + static_cast<long>(start));
        train_rows.insert(train_rows.end(), order.begin() + static_cast<long>(start + size),
                          order.end());
        splits.emplace_back(detail::take_rows(data, train_rows),
                            detail::take_rows(data, test_rows));
        start += size;
    }
    return splits;
}

}  // namespace fedfnn
