#ifndef ADAPTREE_TRAINER_HPP
#define ADAPTREE_TRAINER_HPP

#include "adaptree/dataset.hpp"
#include "adaptree/logical_tree.hpp"

#include <cstdint>
#include <span>

namespace adaptree {

struct FitParams {
    int n_estimators = 10;
    int max_depth = 4;
    double feature_subsample = 1.0; // fraction of features offered to each RF tree
    bool bootstrap = true;
    double learning_rate = 0.1; // GBT only
    std::uint64_t rng_seed = 0;
};

void check_fit_params(const FitParams& params);

/// CART on the given rows and candidate features. Classification leaves hold
/// class frequencies (length n_classes), regression leaves hold the mean.
/// Splits use midpoints between consecutive distinct values; among equal
/// impurities the lowest feature, then the lowest threshold, wins.
LogicalTree fit_tree(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets, std::span<const int> rows,
                     Task task, int n_classes, int max_depth, std::span<const int> candidate_features);

/// Every row and every feature of `data`.
LogicalTree fit_tree(const Dataset& data, int max_depth);

/// Bagged CART trees. Each tree draws its randomness from (rng_seed, tree
/// index), so the first n trees equal an n-tree forest with the same seed.
/// Binary forests store a single leaf value, the class-0 probability.
LogicalEnsemble fit_random_forest(const Dataset& data, const FitParams& params);

/// Gradient boosting from a zero initial score. Binary problems fit one
/// regression tree per estimator on the class-1 logit; M > 2 fits M trees per
/// estimator (softmax). Leaves are scaled by the learning rate.
LogicalEnsemble fit_gbt(const Dataset& data, const FitParams& params);

/// Duplicates randomly chosen minority-class rows until every class matches
/// the majority count.
Dataset oversample_minority(const Dataset& data, std::uint64_t seed);

} // namespace adaptree

#endif
