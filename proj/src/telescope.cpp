#include "tlens/telescope.hpp"

#include <cmath>
#include <stdexcept>

#include "tlens/kernels.hpp"

namespace tlens {

void telescope_init(const ArchSpec& spec, const ParamVector& params0, const Mat& inputs,
                    TraceSet& ts, bool track_lin, GradHead head, bool dense) {
    const std::size_t n = inputs.rows;
    const std::size_t p = params0.size();
    ts.inputs = inputs;
    ts.dense = dense;
    ts.track_lin = track_lin;
    ts.head = head;
    ts.f_true.resize(n);
    ts.f_tilde.resize(n);
    ts.f_lin.assign(track_lin ? n : 0, 0.0);
    const bool pre = head == GradHead::pre;
    for (std::size_t i = 0; i < n; ++i)
        ts.f_true[i] = predict(spec, params0, inputs.row(i), pre);
    ts.f_tilde = ts.f_true;
    if (track_lin) ts.f_lin = ts.f_true;

    if (dense) {
        ts.grad_prev.assign(n, p);
        for (std::size_t i = 0; i < n; ++i)
            predict_grad(spec, params0, inputs.row(i), ts.grad_prev.row(i), head);
        if (track_lin) ts.grad_init = ts.grad_prev;
    } else if (track_lin) {
        throw std::invalid_argument("telescope: f_lin tracking requires dense mode");
    }
}

namespace {

void refresh_true(TraceSet& ts, const ArchSpec& spec, const ParamVector& params_new) {
    const bool pre = ts.head == GradHead::pre;
    for (std::size_t i = 0; i < ts.count(); ++i)
        ts.f_true[i] = predict(spec, params_new, ts.inputs.row(i), pre);
}

}  // namespace

void telescope_step(TraceSet& ts, const Vec& delta_theta, const ArchSpec& spec,
                    const ParamVector& params_new) {
    if (!ts.dense) throw std::logic_error("telescope_step: trace set is in kernel mode");
    const std::size_t p = params_new.size();
    if (delta_theta.size() != p)
        throw std::invalid_argument("telescope_step: delta size mismatch");
    for (std::size_t i = 0; i < ts.count(); ++i) {
        ts.f_tilde[i] += kern::dot(ts.grad_prev.row(i), delta_theta.data(), p);
        if (ts.track_lin)
            ts.f_lin[i] += kern::dot(ts.grad_init.row(i), delta_theta.data(), p);
    }
    refresh_true(ts, spec, params_new);
    for (std::size_t i = 0; i < ts.count(); ++i)
        predict_grad(spec, params_new, ts.inputs.row(i), ts.grad_prev.row(i), ts.head);
}

void telescope_step_kernelized(TraceSet& ts, const Vec& delta_f_tilde, const ArchSpec& spec,
                               const ParamVector& params_new) {
    if (delta_f_tilde.size() != ts.count())
        throw std::invalid_argument("telescope_step_kernelized: row count mismatch");
    for (std::size_t i = 0; i < ts.count(); ++i) ts.f_tilde[i] += delta_f_tilde[i];
    refresh_true(ts, spec, params_new);
}

ApproxError approx_error(const TraceSet& ts) {
    if (ts.count() == 0) throw std::invalid_argument("approx_error: empty trace set");
    double st = 0.0, sl = 0.0;
    for (std::size_t i = 0; i < ts.count(); ++i) {
        st += std::fabs(ts.f_true[i] - ts.f_tilde[i]);
        if (ts.track_lin) sl += std::fabs(ts.f_true[i] - ts.f_lin[i]);
    }
    const double n = static_cast<double>(ts.count());
    return {st / n, ts.track_lin ? sl / n : 0.0};
}

double tangent_kernel(const ArchSpec& spec, const ParamVector& params, const double* x,
                      const double* xi, bool in_batch, std::size_t batch_size, bool raw,
                      GradHead head) {
    if (!raw && !in_batch) return 0.0;
    const std::size_t p = params.size();
    Vec gx(p), gi(p);
    predict_grad(spec, params, x, gx.data(), head);
    predict_grad(spec, params, xi, gi.data(), head);
    const double ip = kern::dot(gx.data(), gi.data(), p);
    if (raw) return ip;
    return ip / static_cast<double>(batch_size);
}

double cross_temporal_kernel(const ArchSpec& spec, const ParamVector& params_t,
                             const ParamVector& params_k, const double* x, const double* xi,
                             bool in_batch_k, std::size_t batch_k_size, GradHead head) {
    if (!in_batch_k) return 0.0;
    const std::size_t p = params_t.size();
    Vec gx(p), gi(p);
    predict_grad(spec, params_t, x, gx.data(), head);
    predict_grad(spec, params_k, xi, gi.data(), head);
    return kern::dot(gx.data(), gi.data(), p) / static_cast<double>(batch_k_size);
}

double kernel_row_norm(const KernelSnapshot& snap, std::size_t row) {
    if (row >= snap.values.rows) throw std::out_of_range("kernel_row_norm: no such row");
    return std::sqrt(kern::nrm2sq(snap.values.row(row), snap.values.cols));
}

}  // namespace tlens
