#ifndef ADAPTREE_METRICS_HPP
#define ADAPTREE_METRICS_HPP

#include <span>
#include <string>
#include <string_view>

namespace adaptree {

enum class MetricKind { BalancedAccuracy, F1Binary };

std::string to_string(MetricKind kind);
MetricKind parse_metric_kind(std::string_view text);

/// Balanced accuracy is the mean per-class recall over classes [0, n_classes)
/// (or over the classes present in `labels` when n_classes is 0); every
/// counted class must occur in `labels`. F1 treats class 1 as positive.
double metric(std::span<const int> preds, std::span<const int> labels, MetricKind kind, int n_classes = 0);

double accuracy(std::span<const int> preds, std::span<const int> labels);

} // namespace adaptree

#endif
