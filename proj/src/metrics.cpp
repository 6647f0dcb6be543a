#include "adaptree/metrics.hpp"

#include "adaptree/common.hpp"

#include <algorithm>
#include <vector>

namespace adaptree {

std::string to_string(MetricKind kind) { return kind == MetricKind::BalancedAccuracy ? "balanced_accuracy" : "f1"; }

MetricKind parse_metric_kind(std::string_view text) {
    if (text == "balanced_accuracy" || text == "bacc") return MetricKind::BalancedAccuracy;
    if (text == "f1" || text == "f1_binary") return MetricKind::F1Binary;
    throw Error("unknown metric '" + std::string(text) + "'");
}

double accuracy(std::span<const int> preds, std::span<const int> labels) {
    if (preds.size() != labels.size()) throw Error("prediction and label counts differ");
    if (labels.empty()) throw Error("accuracy of an empty set");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += preds[i] == labels[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double metric(std::span<const int> preds, std::span<const int> labels, MetricKind kind, int n_classes) {
    if (preds.size() != labels.size()) throw Error("prediction and label counts differ");
    if (labels.empty()) throw Error("metric of an empty set");

    if (kind == MetricKind::F1Binary) {
        double tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if ((labels[i] != 0 && labels[i] != 1) || (preds[i] != 0 && preds[i] != 1)) {
                throw Error("F1 needs binary labels and predictions");
            }
            tp += preds[i] == 1 && labels[i] == 1;
            fp += preds[i] == 1 && labels[i] == 0;
            fn += preds[i] == 0 && labels[i] == 1;
        }
        if (tp + fp + fn == 0) return 1.0; // no positives anywhere: nothing was missed
        return 2.0 * tp / (2.0 * tp + fp + fn);
    }

    const int max_label = *std::max_element(labels.begin(), labels.end());
    const int classes = n_classes > 0 ? n_classes : max_label + 1;
    std::vector<double> support(static_cast<std::size_t>(classes), 0.0);
    std::vector<double> hits(static_cast<std::size_t>(classes), 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= classes) throw Error("label out of range");
        support[static_cast<std::size_t>(labels[i])] += 1;
        hits[static_cast<std::size_t>(labels[i])] += preds[i] == labels[i];
    }
    double sum = 0.0;
    int counted = 0;
    for (int c = 0; c < classes; ++c) {
        if (support[static_cast<std::size_t>(c)] == 0) {
            if (n_classes > 0) throw Error("class " + std::to_string(c) + " absent from labels; recall undefined");
            continue;
        }
        sum += hits[static_cast<std::size_t>(c)] / support[static_cast<std::size_t>(c)];
        ++counted;
    }
    return sum / counted;
}

} // namespace adaptree
