#pragma once
// Telescoped prediction bookkeeping: for a set of tracked inputs, maintains the
// true prediction f, the telescoped prediction f~ accumulated from per-step
// first-order functional updates, and the linearized-at-init baseline f_lin.

#include <cstddef>
#include <vector>

#include "tlens/mat.hpp"
#include "tlens/net.hpp"

namespace tlens {

struct TraceSet {
    Mat inputs;     // tracked inputs, one row each
    Vec f_true;     // recomputed from the live network each step
    Vec f_tilde;    // telescoped accumulator
    Vec f_lin;      // linearized-at-init accumulator (only if track_lin)
    Mat grad_init;  // rows x p, retained (only if track_lin)
    Mat grad_prev;  // rows x p, refreshed each step (dense mode only)
    bool dense = true;
    bool track_lin = true;
    GradHead head = GradHead::post;

    std::size_t count() const { return inputs.rows; }
};

// Snapshot values start at f_{theta0}; gradients are taken at theta0.
// In dense mode grad_prev/grad_init hold full p-rows; in kernel mode the
// caller supplies per-step functional deltas (vanilla-SGD runs, where
// grad_prev^T delta-theta equals gamma * k_row . g and no p-row is needed).
void telescope_init(const ArchSpec& spec, const ParamVector& params0, const Mat& inputs,
                    TraceSet& ts, bool track_lin, GradHead head, bool dense);

// f_tilde += grad_prev . delta; f_lin += grad_init . delta; f_true recomputed
// at the updated parameters; grad_prev refreshed there.
void telescope_step(TraceSet& ts, const Vec& delta_theta, const ArchSpec& spec,
                    const ParamVector& params_new);

// Kernel-mode variant: the caller computed each row's functional delta already.
void telescope_step_kernelized(TraceSet& ts, const Vec& delta_f_tilde, const ArchSpec& spec,
                               const ParamVector& params_new);

// (mean |f - f~|, mean |f - f_lin|) over the tracked set.
struct ApproxError {
    double mean_abs_tilde;
    double mean_abs_lin;
};
ApproxError approx_error(const TraceSet& ts);

// Masked, batch-normalized tangent kernel of Eq-3 shape; raw=true drops the
// indicator and the 1/|B| factor.
double tangent_kernel(const ArchSpec& spec, const ParamVector& params, const double* x,
                      const double* xi, bool in_batch, std::size_t batch_size,
                      bool raw = false, GradHead head = GradHead::post);

// (1{i in B_k}/|B_k|) grad f_{theta_t}(x) . grad f_{theta_k}(x_i) for two
// parameter snapshots.
double cross_temporal_kernel(const ArchSpec& spec, const ParamVector& params_t,
                             const ParamVector& params_k, const double* x, const double* xi,
                             bool in_batch_k, std::size_t batch_k_size,
                             GradHead head = GradHead::post);

struct KernelSnapshot {
    std::size_t t = 0;
    Mat values;  // one row per tracked input: [K(x, x_1), ..., K(x, x_n)]
};

double kernel_row_norm(const KernelSnapshot& snap, std::size_t row);

}  // namespace tlens
