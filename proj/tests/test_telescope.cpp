#include <doctest.h>

#include <cmath>
#include <vector>

#include "tlens/kernels.hpp"
#include "tlens/net.hpp"
#include "tlens/optim.hpp"
#include "tlens/rng.hpp"
#include "tlens/telescope.hpp"

using namespace tlens;

namespace {

struct MiniTask {
    Mat X;
    Vec y;
};

MiniTask make_task(Rng& rng, std::size_t n, std::size_t d) {
    MiniTask t;
    t.X.assign(n, d);
    t.y.assign(n, 0.0);
    for (auto& v : t.X.d) v = rng.normal();
    for (auto& v : t.y) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
    return t;
}

// Minimal training loop with dense telescoping; returns parameter snapshots
// theta_0..theta_T plus per-step batches and loss gradients when asked.
struct LoopLog {
    std::vector<Vec> theta;                      // T+1 snapshots
    std::vector<std::vector<std::size_t>> batches;
    std::vector<Vec> loss_grads;                 // full-n, zero outside batch
};

LoopLog train_loop(const ArchSpec& spec, ParamVector& pv, const MiniTask& task,
                   const OptimConfig& cfg, std::size_t steps, std::size_t batch_size,
                   TraceSet* traces) {
    LoopLog log;
    log.theta.push_back(pv.values);
    OptimState st;
    const std::size_t n = task.X.rows;
    const std::size_t p = pv.size();
    for (std::size_t t = 0; t < steps; ++t) {
        std::vector<std::size_t> batch;
        for (std::size_t j = 0; j < batch_size; ++j)
            batch.push_back((t * batch_size + j) % n);
        const GradMatrix T = batch_grad_matrix(pv, batch, task.X, spec);
        Vec g_full(n, 0.0);
        Vec raw(p, 0.0);
        for (std::size_t j = 0; j < batch.size(); ++j) {
            const double f = predict(spec, pv, task.X.row(batch[j]));
            const double g = loss_and_grad(f, task.y[batch[j]], Loss::squared).grad;
            g_full[batch[j]] = g;
            kern::axpy(g, T.rows.row(j), raw.data(), p);
        }
        const Vec delta = optim_step(st, cfg, raw, pv);
        kern::axpy(1.0, delta.data(), pv.values.data(), p);
        if (traces) telescope_step(*traces, delta, spec, pv);
        log.theta.push_back(pv.values);
        log.batches.push_back(batch);
        log.loss_grads.push_back(g_full);
    }
    return log;
}

}  // namespace

TEST_CASE("a zero update leaves all three trace values unchanged") {
    Rng rng(1);
    const ArchSpec spec{4, {6}, 1};
    ParamVector pv = build_network(spec, 2, 1.0);
    MiniTask task = make_task(rng, 5, 4);
    TraceSet ts;
    telescope_init(spec, pv, task.X, ts, true, GradHead::pre, true);
    const Vec before_t = ts.f_tilde, before_l = ts.f_lin, before_f = ts.f_true;
    const Vec zero(pv.size(), 0.0);
    telescope_step(ts, zero, spec, pv);
    CHECK(ts.f_tilde == before_t);
    CHECK(ts.f_lin == before_l);
    CHECK(ts.f_true == before_f);
}

TEST_CASE("parameter-linear model: telescoped prediction is exact for any optimizer") {
    Rng rng(2);
    const ArchSpec spec{6, {}, 1};
    MiniTask task = make_task(rng, 10, 6);
    for (auto kind : {OptimKind::sgd, OptimKind::momentum, OptimKind::weight_decay,
                      OptimKind::adamw}) {
        ParamVector pv = build_network(spec, 3, 1.0);
        OptimConfig cfg;
        cfg.kind = kind;
        cfg.gamma = 0.05;
        cfg.beta1 = 0.9;
        cfg.beta2 = 0.99;
        cfg.lambda = 0.1;
        TraceSet ts;
        telescope_init(spec, pv, task.X, ts, true, GradHead::pre, true);
        train_loop(spec, pv, task, cfg, 60, 3, &ts);
        const ApproxError ae = approx_error(ts);
        CHECK(ae.mean_abs_tilde <= 1e-10);
        CHECK(ae.mean_abs_lin <= 1e-10);
    }
}

TEST_CASE("telescoped error beats linearized-at-init error on a small MLP") {
    Rng rng(3);
    const ArchSpec spec{5, {16, 16}, 1};
    ParamVector pv = build_network(spec, 9, 1.0);
    MiniTask task = make_task(rng, 12, 5);
    TraceSet ts;
    telescope_init(spec, pv, task.X, ts, true, GradHead::pre, true);
    OptimConfig cfg;
    cfg.gamma = 1e-3;
    train_loop(spec, pv, task, cfg, 50, 4, &ts);
    const ApproxError ae = approx_error(ts);
    CHECK(ae.mean_abs_tilde < ae.mean_abs_lin);
}

TEST_CASE("f_lin equals f_tilde after exactly one step") {
    Rng rng(4);
    const ArchSpec spec{5, {8}, 1};
    ParamVector pv = build_network(spec, 11, 1.0);
    MiniTask task = make_task(rng, 6, 5);
    TraceSet ts;
    telescope_init(spec, pv, task.X, ts, true, GradHead::pre, true);
    OptimConfig cfg;
    cfg.gamma = 0.05;
    train_loop(spec, pv, task, cfg, 1, 3, &ts);
    for (std::size_t i = 0; i < ts.count(); ++i)
        CHECK(ts.f_lin[i] == doctest::Approx(ts.f_tilde[i]).epsilon(1e-15));
}

TEST_CASE("telescoping identity: true per-step differences sum exactly") {
    Rng rng(5);
    const ArchSpec spec{4, {7}, 1};
    ParamVector pv = build_network(spec, 6, 1.0);
    MiniTask task = make_task(rng, 8, 4);
    OptimConfig cfg;
    cfg.gamma = 0.04;
    const Vec x0(task.X.row(0), task.X.row(0) + 4);
    const double f0 = predict(spec, pv, x0.data());
    double acc = 0.0;
    double prev = f0;
    LoopLog log = train_loop(spec, pv, task, cfg, 30, 2, nullptr);
    for (std::size_t t = 1; t < log.theta.size(); ++t) {
        ParamVector snap = pv;
        snap.values = log.theta[t];
        const double cur = predict(spec, snap, x0.data());
        acc += cur - prev;
        prev = cur;
    }
    const double fT = predict(spec, pv, x0.data());
    CHECK(std::fabs((fT - f0) - acc) <= 1e-12);
}

TEST_CASE("tangent kernel: batch mask, linear-model value, raw symmetry") {
    const ArchSpec lin{1, {}, 1};
    ParamVector pv = build_network(lin, 1, 1.0);
    const double x = 2.0, xi = 3.0;
    CHECK(tangent_kernel(lin, pv, &x, &xi, false, 1) == 0.0);
    CHECK(tangent_kernel(lin, pv, &x, &xi, true, 1) == doctest::Approx(6.0));

    Rng rng(6);
    const ArchSpec spec{4, {5}, 1};
    ParamVector mlp = build_network(spec, 8, 1.0);
    Vec a(4), b(4);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    const double k1 = tangent_kernel(spec, mlp, a.data(), b.data(), true, 1, true);
    const double k2 = tangent_kernel(spec, mlp, b.data(), a.data(), true, 1, true);
    CHECK(k1 == k2);
}

TEST_CASE("cross-temporal kernel: same-step case and constant-gradient case") {
    Rng rng(7);
    const ArchSpec spec{3, {4}, 1};
    ParamVector pv = build_network(spec, 12, 1.0);
    Vec a(3), b(3);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    CHECK(cross_temporal_kernel(spec, pv, pv, a.data(), b.data(), true, 4) ==
          doctest::Approx(tangent_kernel(spec, pv, a.data(), b.data(), true, 4)));

    const ArchSpec lin{3, {}, 1};
    ParamVector p1 = build_network(lin, 1, 1.0);
    ParamVector p2 = build_network(lin, 2, 1.0);
    ParamVector p3 = build_network(lin, 3, 1.0);
    const double k12 = cross_temporal_kernel(lin, p1, p2, a.data(), b.data(), true, 2);
    const double k33 = cross_temporal_kernel(lin, p3, p3, a.data(), b.data(), true, 2);
    CHECK(k12 == doctest::Approx(k33).epsilon(1e-15));
}

TEST_CASE("momentum functional update reconstructed from cross-temporal kernels") {
    Rng rng(8);
    const ArchSpec spec{4, {8}, 1};
    ParamVector pv = build_network(spec, 21, 1.0);
    MiniTask task = make_task(rng, 6, 4);
    OptimConfig cfg;
    cfg.kind = OptimKind::momentum;
    cfg.beta1 = 0.8;
    cfg.gamma = 0.02;
    const std::size_t B = 2;
    LoopLog log = train_loop(spec, pv, task, cfg, 8, B, nullptr);

    Vec x(4);
    for (auto& v : x) v = rng.normal();

    for (std::size_t t = 5; t <= 8; ++t) {
        // Weight-space oracle: grad at theta_{t-1} dotted with delta theta_t.
        ParamVector prev = pv;
        prev.values = log.theta[t - 1];
        Vec gx(pv.size());
        predict_grad(spec, prev, x.data(), gx.data());
        Vec dtheta(pv.size());
        for (std::size_t k = 0; k < pv.size(); ++k)
            dtheta[k] = log.theta[t][k] - log.theta[t - 1][k];
        const double oracle = kern::dot(gx.data(), dtheta.data(), pv.size());

        // Kernel-space reconstruction of the momentum update.
        const double corr = (1.0 - cfg.beta1) / (1.0 - std::pow(cfg.beta1, t));
        double recon = 0.0;
        for (std::size_t i = 0; i < task.X.rows; ++i) {
            for (std::size_t k = 1; k <= t; ++k) {
                const auto& bk = log.batches[k - 1];
                const bool in_b = std::find(bk.begin(), bk.end(), i) != bk.end();
                if (!in_b) continue;
                ParamVector pk = pv;
                pk.values = log.theta[k - 1];
                const double kk = cross_temporal_kernel(spec, prev, pk, x.data(),
                                                        task.X.row(i), true, bk.size());
                recon += std::pow(cfg.beta1, t - k) * kk * log.loss_grads[k - 1][i];
            }
        }
        recon *= -cfg.gamma * corr;
        CHECK(std::fabs(recon - oracle) <= 1e-10 * (std::fabs(oracle) + 1.0));
    }
}

TEST_CASE("approx_error is zero at t=0 and shrinks with the learning rate under adamw") {
    Rng rng(9);
    const ArchSpec spec{5, {12}, 1};
    MiniTask task = make_task(rng, 10, 5);

    double err_big = 0.0, err_small = 0.0;
    for (int pass = 0; pass < 2; ++pass) {
        ParamVector pv = build_network(spec, 4, 1.0);
        TraceSet ts;
        telescope_init(spec, pv, task.X, ts, true, GradHead::pre, true);
        const ApproxError at0 = approx_error(ts);
        CHECK(at0.mean_abs_tilde == 0.0);
        CHECK(at0.mean_abs_lin == 0.0);
        OptimConfig cfg;
        cfg.kind = OptimKind::adamw;
        cfg.beta1 = 0.9;
        cfg.beta2 = 0.99;
        cfg.lambda = 0.0;
        cfg.gamma = pass == 0 ? 1e-2 : 1e-3;
        train_loop(spec, pv, task, cfg, 40, 5, &ts);
        (pass == 0 ? err_big : err_small) = approx_error(ts).mean_abs_tilde;
    }
    CHECK(err_small < err_big);
}

TEST_CASE("halving the learning rate at fixed step budget does not hurt the telescoping") {
    Rng rng(10);
    const ArchSpec spec{5, {16}, 1};
    MiniTask task = make_task(rng, 8, 5);
    double prev_err = 1e300;
    std::size_t steps = 16;
    double gamma = 0.08;
    for (int h = 0; h < 4; ++h) {
        ParamVector pv = build_network(spec, 14, 1.0);
        TraceSet ts;
        telescope_init(spec, pv, task.X, ts, false, GradHead::pre, true);
        OptimConfig cfg;
        cfg.gamma = gamma;
        train_loop(spec, pv, task, cfg, steps, 8, &ts);
        const double err = approx_error(ts).mean_abs_tilde;
        CHECK(err <= prev_err * (1.0 + 1e-9));
        prev_err = err;
        steps *= 2;
        gamma *= 0.5;
    }
}

TEST_CASE("kernel row norms: zeros, single entry, brute force") {
    KernelSnapshot snap;
    snap.values.assign(2, 3);
    CHECK(kernel_row_norm(snap, 0) == 0.0);
    snap.values(1, 0) = 6.0;
    snap.values(1, 1) = 0.0;
    snap.values(1, 2) = 0.0;
    CHECK(kernel_row_norm(snap, 1) == doctest::Approx(6.0));

    Rng rng(11);
    KernelSnapshot s2;
    s2.values.assign(1, 9);
    double acc = 0.0;
    for (std::size_t j = 0; j < 9; ++j) {
        s2.values(0, j) = rng.normal();
        acc += s2.values(0, j) * s2.values(0, j);
    }
    CHECK(kernel_row_norm(s2, 0) == doctest::Approx(std::sqrt(acc)).epsilon(1e-14));
    CHECK_THROWS(kernel_row_norm(s2, 5));
}

TEST_CASE("post-activation kernel factorizes into sigmoid slopes times the pre kernel") {
    Rng rng(12);
    const ArchSpec spec{4, {6}, 1, HiddenAct::relu, 0.0, OutputAct::sigmoid, true};
    ParamVector pv = build_network(spec, 19, 1.0);
    Vec a(4), b(4);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();

    const double k_pre = tangent_kernel(spec, pv, a.data(), b.data(), true, 1, true,
                                        GradHead::pre);
    const double k_post = tangent_kernel(spec, pv, a.data(), b.data(), true, 1, true,
                                         GradHead::post);
    auto slope = [&](const double* x) {
        const double s = predict(spec, pv, x);
        return s * (1.0 - s);
    };
    CHECK(k_post == doctest::Approx(slope(a.data()) * slope(b.data()) * k_pre).epsilon(1e-12));
}
