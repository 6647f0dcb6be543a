#ifndef ADAPTREE_COMMON_HPP
#define ADAPTREE_COMMON_HPP

#include <Eigen/Dense>

#include <concepts>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>

namespace adaptree {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ModelKind { RandomForest, GradientBoosting };
enum class Task { Classification, Regression };

/// Leaf sentinel stored in NodeRecord::fidx.
inline constexpr int kLeafSentinel = -2;

/// Offsets and indices are 16-bit in the deployed layout.
inline constexpr int kMaxNodes = 1 << 16;

/// Scalars an ensemble can be instantiated with: real-valued models and
/// integer (quantized) models with a 32-bit signed accumulator.
template <typename T>
concept EnsembleScalar = std::same_as<T, double> || std::same_as<T, std::int32_t>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
inline constexpr bool is_quantized_v = std::is_integral_v<Scalar>;

std::string to_string(ModelKind kind);
std::string to_string(Task task);
ModelKind parse_model_kind(std::string_view text);
Task parse_task(std::string_view text);

/// Index of the largest entry; ties go to the lowest index.
template <typename Derived>
int argmax(const Eigen::DenseBase<Derived>& values) {
    if (values.size() == 0) throw Error("argmax of an empty vector");
    int best = 0;
    for (Eigen::Index i = 1; i < values.size(); ++i) {
        if (values(i) > values(best)) best = static_cast<int>(i);
    }
    return best;
}

} // namespace adaptree

#endif
