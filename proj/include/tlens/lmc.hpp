#pragma once
// Linear-mode-connectivity probes: weight interpolation scans, ensemble
// baselines and layerwise gradient drift. The spawn-and-train harness that
// produces the child parameter vectors lives with the experiment runner.

#include <cstddef>
#include <vector>

#include "tlens/mat.hpp"
#include "tlens/net.hpp"

namespace tlens {

struct EvalMetrics {
    double loss = 0.0;  // mean per-example loss
    double err = 0.0;   // 0-1 error under the 0.5 threshold (binary tasks)
};

EvalMetrics eval_model(const ArchSpec& spec, const ParamVector& params, const Mat& X,
                       const Vec& y, Loss loss);

// alpha * a + (1 - alpha) * b; layouts must match.
ParamVector interpolate_params(const ParamVector& a, const ParamVector& b, double alpha);

struct BarrierRow {
    double alpha;
    double loss_lmc, loss_avg;
    double acc_lmc, acc_avg;
};

struct BarrierReport {
    std::vector<BarrierRow> rows;
    double barrier = 0.0;  // max over the grid of loss_lmc - loss_avg
    double acc_gap = 0.0;  // max over the grid of acc_avg - acc_lmc
};

// grid_size equally spaced alphas over [0,1] inclusive; endpoints evaluate the
// child models exactly.
BarrierReport barrier_scan(const ArchSpec& spec, const ParamVector& theta_a,
                           const ParamVector& theta_b, std::size_t grid_size, const Mat& X,
                           const Vec& y, Loss loss);

enum class EnsembleMode { prediction_avg, preactivation_avg };

EvalMetrics ensemble_eval(const ArchSpec& spec, const ParamVector& theta_a,
                          const ParamVector& theta_b, double alpha, const Mat& X, const Vec& y,
                          EnsembleMode mode, Loss loss);

struct LayerDrift {
    std::string layer;
    double drift;  // mean over examples and layer params of squared grad change
};

// Pre-activation-head gradients compared between two parameter snapshots.
std::vector<LayerDrift> grad_drift_by_layer(const ArchSpec& spec, const ParamVector& at_t,
                                            const ParamVector& at_t_plus_h, const Mat& X_eval);

}  // namespace tlens
