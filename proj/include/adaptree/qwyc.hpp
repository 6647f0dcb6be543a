#ifndef ADAPTREE_QWYC_HPP
#define ADAPTREE_QWYC_HPP

#include "adaptree/engine.hpp"

namespace adaptree {

struct QwycCalibration {
    QwycThresholds thresholds;
    int checkpoints = 0;     // policy evaluation points considered (all samples)
    int bad_checkpoints = 0; // checkpoints whose running argmax differs from the final class
};

/// Chooses (eps_minus, eps_plus) on calibration inputs so that the dynamic
/// engine (batch size `batch_size`) reproduces the full ensemble's prediction
/// on every calibration sample. An exit fires only where the running argmax
/// already equals the final class; each threshold is the most aggressive
/// value that keeps every disagreeing checkpoint on the non-firing side.
/// Exits with no admissible value stay disabled.
template <EnsembleScalar Scalar>
QwycCalibration calibrate_qwyc(const FlatEnsemble<Scalar>& flat, const Eigen::MatrixXd& inputs, int batch_size);

extern template QwycCalibration calibrate_qwyc(const FlatEnsemble<double>&, const Eigen::MatrixXd&, int);
extern template QwycCalibration calibrate_qwyc(const FlatEnsemble<std::int32_t>&, const Eigen::MatrixXd&, int);

} // namespace adaptree

#endif
