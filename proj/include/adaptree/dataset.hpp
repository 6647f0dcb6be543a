#ifndef ADAPTREE_DATASET_HPP
#define ADAPTREE_DATASET_HPP

#include "adaptree/common.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace adaptree {

enum class Split { Train, Validation, Test };

std::string to_string(Split split);
Split parse_split(std::string_view text);

/// Samples in rows. Labels are class indices stored as reals for
/// classification, targets for regression. Every row carries a split tag.
struct Dataset {
    Eigen::MatrixXd features;
    Eigen::VectorXd labels;
    std::vector<Split> splits;
    int n_classes = 0;
    Task task = Task::Classification;

    Eigen::Index n_rows() const { return features.rows(); }
    int n_features() const { return static_cast<int>(features.cols()); }
    int label(Eigen::Index row) const { return static_cast<int>(labels(row)); }
    std::vector<int> class_labels() const;
    std::vector<int> class_counts() const;

    Dataset select(Split split) const;
    Dataset take(std::span<const int> rows) const;
    bool has_split(Split split) const;
};

void check_dataset(const Dataset& data);

struct DatasetSchema {
    std::optional<int> n_classes; // inferred from the labels when absent
    Task task = Task::Classification;
};

/// CSV with header `f0,...,f{F-1},label,split`, split in {train,val,test}.
Dataset load_dataset(const std::string& path, const DatasetSchema& schema = {});
Dataset parse_dataset(std::istream& in, const DatasetSchema& schema = {}, const std::string& source = "<stream>");
void write_dataset(std::ostream& out, const Dataset& data);
void save_dataset(const std::string& path, const Dataset& data);

enum class SynthKind { GaussianBlobs, BinaryImbalanced };

SynthKind parse_synth_kind(std::string_view text);

struct SynthParams {
    SynthKind kind = SynthKind::GaussianBlobs;
    int n = 1000;
    int n_classes = 3;
    int n_features = 8;
    /// Noise level relative to class separation; 0 puts every sample on its
    /// class centroid.
    double difficulty = 0.5;
    std::uint64_t seed = 0;
    double minority_ratio = 0.1; // binary_imbalanced only
    double train_fraction = 0.6;
    double validation_fraction = 0.2;
};

/// Deterministic synthetic data standing in for real sensor datasets.
Dataset synth_dataset(const SynthParams& params);

} // namespace adaptree

#endif
