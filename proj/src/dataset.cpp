#include "adaptree/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace adaptree {

std::string to_string(Split split) {
    switch (split) {
    case Split::Train: return "train";
    case Split::Validation: return "val";
    case Split::Test: return "test";
    }
    return "unknown";
}

Split parse_split(std::string_view text) {
    if (text == "train") return Split::Train;
    if (text == "val" || text == "validation") return Split::Validation;
    if (text == "test") return Split::Test;
    throw Error("unknown split '" + std::string(text) + "'");
}

std::vector<int> Dataset::class_labels() const {
    std::vector<int> out(static_cast<std::size_t>(labels.size()));
    for (Eigen::Index i = 0; i < labels.size(); ++i) out[static_cast<std::size_t>(i)] = label(i);
    return out;
}

std::vector<int> Dataset::class_counts() const {
    std::vector<int> counts(static_cast<std::size_t>(std::max(n_classes, 0)), 0);
    for (Eigen::Index i = 0; i < labels.size(); ++i) ++counts.at(static_cast<std::size_t>(label(i)));
    return counts;
}

Dataset Dataset::take(std::span<const int> rows) const {
    Dataset out;
    out.n_classes = n_classes;
    out.task = task;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
    out.labels.resize(static_cast<Eigen::Index>(rows.size()));
    out.splits.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(rows[i]);
        out.features.row(static_cast<Eigen::Index>(i)) = features.row(r);
        out.labels(static_cast<Eigen::Index>(i)) = labels(r);
        out.splits.push_back(splits.at(static_cast<std::size_t>(r)));
    }
    return out;
}

Dataset Dataset::select(Split split) const {
    std::vector<int> rows;
    for (std::size_t i = 0; i < splits.size(); ++i) {
        if (splits[i] == split) rows.push_back(static_cast<int>(i));
    }
    return take(rows);
}

bool Dataset::has_split(Split split) const { return std::find(splits.begin(), splits.end(), split) != splits.end(); }

void check_dataset(const Dataset& data) {
    if (data.features.rows() != data.labels.size() ||
        static_cast<std::size_t>(data.features.rows()) != data.splits.size()) {
        throw Error("features, labels and split tags have different row counts");
    }
    if (!data.features.allFinite() || !data.labels.allFinite()) throw Error("dataset contains non-finite values");
    if (data.task == Task::Classification) {
        for (Eigen::Index i = 0; i < data.labels.size(); ++i) {
            const double y = data.labels(i);
            if (y != std::floor(y) || y < 0 || y >= data.n_classes) {
                throw Error("label out of range at row " + std::to_string(i));
            }
        }
    }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_number(const std::string& cell, const std::string& where) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(cell, &used);
    } catch (const std::exception&) {
        throw Error(where + ": cannot parse '" + cell + "' as a number");
    }
    if (used != cell.size()) throw Error(where + ": cannot parse '" + cell + "' as a number");
    if (!std::isfinite(v)) throw Error(where + ": non-finite value");
    return v;
}

} // namespace

Dataset parse_dataset(std::istream& in, const DatasetSchema& schema, const std::string& source) {
    std::string line;
    if (!std::getline(in, line)) throw Error(source + ": empty file");
    const auto header = split_csv(line);
    if (header.size() < 3 || header[header.size() - 2] != "label" || header.back() != "split") {
        throw Error(source + ":1: header must be f0,...,f{F-1},label,split");
    }
    const std::size_t n_features = header.size() - 2;
    for (std::size_t f = 0; f < n_features; ++f) {
        if (header[f] != "f" + std::to_string(f)) throw Error(source + ":1: expected column f" + std::to_string(f));
    }

    std::vector<double> values;
    std::vector<double> labels;
    std::vector<Split> splits;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const std::string where = source + ":" + std::to_string(line_no);
        const auto cells = split_csv(line);
        if (cells.size() != header.size()) {
            throw Error(where + ": expected " + std::to_string(header.size()) + " columns, got " +
                        std::to_string(cells.size()));
        }
        for (std::size_t f = 0; f < n_features; ++f) values.push_back(parse_number(cells[f], where));
        labels.push_back(parse_number(cells[n_features], where));
        try {
            splits.push_back(parse_split(cells.back()));
        } catch (const Error& e) {
            throw Error(where + ": " + e.what());
        }
    }

    Dataset data;
    data.task = schema.task;
    const auto rows = static_cast<Eigen::Index>(labels.size());
    data.features.resize(rows, static_cast<Eigen::Index>(n_features));
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index f = 0; f < data.features.cols(); ++f) {
            data.features(r, f) = values[static_cast<std::size_t>(r) * n_features + static_cast<std::size_t>(f)];
        }
    }
    data.labels = Eigen::Map<const Eigen::VectorXd>(labels.data(), rows);
    data.splits = std::move(splits);
    if (data.task == Task::Classification) {
        int max_label = -1;
        for (Eigen::Index r = 0; r < rows; ++r) {
            const double y = data.labels(r);
            const std::string where = source + ":" + std::to_string(r + 2);
            if (y != std::floor(y) || y < 0) throw Error(where + ": label must be a non-negative integer");
            if (schema.n_classes && y >= *schema.n_classes) throw Error(where + ": label out of range");
            max_label = std::max(max_label, static_cast<int>(y));
        }
        data.n_classes = schema.n_classes.value_or(max_label + 1);
    } else {
        data.n_classes = 1;
    }
    return data;
}

Dataset load_dataset(const std::string& path, const DatasetSchema& schema) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open dataset '" + path + "'");
    return parse_dataset(in, schema, path);
}

void write_dataset(std::ostream& out, const Dataset& data) {
    for (int f = 0; f < data.n_features(); ++f) out << 'f' << f << ',';
    out << "label,split\n";
    char buf[64];
    for (Eigen::Index r = 0; r < data.n_rows(); ++r) {
        for (Eigen::Index f = 0; f < data.features.cols(); ++f) {
            std::snprintf(buf, sizeof buf, "%.17g,", data.features(r, f));
            out << buf;
        }
        std::snprintf(buf, sizeof buf, "%.17g,", data.labels(r));
        out << buf << to_string(data.splits[static_cast<std::size_t>(r)]) << '\n';
    }
}

void save_dataset(const std::string& path, const Dataset& data) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write dataset '" + path + "'");
    write_dataset(out, data);
}

SynthKind parse_synth_kind(std::string_view text) {
    if (text == "gaussian_blobs" || text == "blobs") return SynthKind::GaussianBlobs;
    if (text == "binary_imbalanced") return SynthKind::BinaryImbalanced;
    throw Error("unknown synthetic dataset kind '" + std::string(text) + "'");
}

Dataset synth_dataset(const SynthParams& p) {
    if (p.n_classes < 2 || p.n < p.n_classes) throw Error("synthetic data needs n >= M >= 2");
    if (p.n_features < 1) throw Error("synthetic data needs at least one feature");
    if (p.difficulty < 0) throw Error("difficulty must be non-negative");
    if (p.train_fraction <= 0 || p.validation_fraction < 0 || p.train_fraction + p.validation_fraction > 1) {
        throw Error("invalid split fractions");
    }
    if (p.kind == SynthKind::BinaryImbalanced && (p.n_classes != 2 || p.minority_ratio <= 0 || p.minority_ratio >= 1)) {
        throw Error("binary_imbalanced needs M = 2 and a minority ratio in (0,1)");
    }

    std::mt19937_64 rng(p.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    constexpr double kSpread = 3.0;

    Eigen::MatrixXd centroids(p.n_classes, p.n_features);
    if (p.kind == SynthKind::GaussianBlobs) {
        for (Eigen::Index i = 0; i < centroids.size(); ++i) centroids.data()[i] = kSpread * normal(rng);
    } else {
        centroids.row(0).setZero();
        centroids.row(1).setConstant(kSpread / std::sqrt(static_cast<double>(p.n_features)));
    }

    Dataset data;
    data.n_classes = p.n_classes;
    data.features.resize(p.n, p.n_features);
    data.labels.resize(p.n);
    const int minority = static_cast<int>(std::lround(p.n * p.minority_ratio));
    for (int i = 0; i < p.n; ++i) {
        const int c = p.kind == SynthKind::GaussianBlobs ? i % p.n_classes : (i < p.n - minority ? 0 : 1);
        data.labels(i) = c;
        for (int f = 0; f < p.n_features; ++f) {
            data.features(i, f) = centroids(c, f) + kSpread * p.difficulty * normal(rng);
        }
    }

    std::vector<int> order(static_cast<std::size_t>(p.n));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::lround(p.n * p.train_fraction));
    const auto n_val = static_cast<std::size_t>(std::lround(p.n * p.validation_fraction));
    data.splits.assign(static_cast<std::size_t>(p.n), Split::Test);
    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto row = static_cast<std::size_t>(order[k]);
        data.splits[row] = k < n_train ? Split::Train : k < n_train + n_val ? Split::Validation : Split::Test;
    }
    return data;
}

} // namespace adaptree
