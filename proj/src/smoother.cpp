#include "tlens/smoother.hpp"

#include <cmath>
#include <stdexcept>

#include "tlens/kernels.hpp"

namespace tlens {

namespace {

bool needs_momentum_buffers(OptimKind k) {
    return k == OptimKind::momentum || k == OptimKind::adamw;
}
bool needs_decay_buffers(OptimKind k) {
    return k == OptimKind::weight_decay || k == OptimKind::adamw;
}

}  // namespace

void smoother_init(SmootherState& st, const SmootherConfig& cfg, std::size_t p,
                   const Vec& f0_train, const Vec& f0_test, const Vec* theta0) {
    if (cfg.loss != Loss::squared)
        throw std::invalid_argument("smoother: only the squared loss is supported");
    const std::size_t n = f0_train.size();
    const std::size_t m = f0_test.size();
    if (n == 0) throw std::invalid_argument("smoother: empty training set");

    std::size_t aux = 0;
    if (needs_momentum_buffers(cfg.kind)) ++aux;
    if (needs_decay_buffers(cfg.kind)) ++aux;
    if (aux > 0 && p * n > cfg.budget_doubles)
        throw std::runtime_error(
            "smoother: p*n auxiliary buffers exceed the configured memory budget");

    st.n = n;
    st.m = m;
    st.p = p;
    st.t = 0;
    st.S.assign(n, n);
    st.c = f0_train;
    st.S_test.assign(m, n);
    st.c_test = f0_test;
    st.Ut_S = Mat();
    st.Ut_C.clear();
    st.D_S = Mat();
    st.D_C.clear();
    if (needs_momentum_buffers(cfg.kind)) {
        st.Ut_S.assign(p, n);
        st.Ut_C.assign(p, 0.0);
    }
    if (needs_decay_buffers(cfg.kind)) {
        if (!theta0) throw std::invalid_argument("smoother: weight decay needs theta0");
        if (theta0->size() != p) throw std::invalid_argument("smoother: theta0 size mismatch");
        st.D_S.assign(p, n);
        st.D_C = *theta0;
    }
}

namespace {

// (I - S) restricted to the batch rows, as a dense b x n matrix.
Mat gather_residual_rows(const Mat& S, const std::vector<std::size_t>& batch) {
    Mat A(batch.size(), S.cols);
    for (std::size_t j = 0; j < batch.size(); ++j) {
        const double* src = S.row(batch[j]);
        double* dst = A.row(j);
        for (std::size_t k = 0; k < S.cols; ++k) dst[k] = -src[k];
        dst[batch[j]] += 1.0;
    }
    return A;
}

void dense_step(SmootherState& st, const SmootherConfig& cfg, const SmootherStepInputs& in) {
    const std::size_t p = st.p, n = st.n, m = st.m;
    const auto& batch = *in.batch;
    const std::size_t b = batch.size();
    const Mat& T = *in.T_rows;
    if (T.rows != b || T.cols != p) throw std::invalid_argument("smoother: bad T shape");
    const std::size_t t = st.t + 1;

    const Mat A = gather_residual_rows(st.S, batch);

    // Tc = T * c_{t-1}  (p-vector)
    Vec Tc(p, 0.0);
    for (std::size_t j = 0; j < b; ++j) kern::axpy(st.c[batch[j]], T.row(j), Tc.data(), p);

    // Transposed batch gradients for the p x n products.
    Mat Tt(p, b);
    for (std::size_t j = 0; j < b; ++j) {
        const double* src = T.row(j);
        for (std::size_t k = 0; k < p; ++k) Tt(k, j) = src[k];
    }

    Mat U(p, n);
    Vec u(p, 0.0);
    switch (cfg.kind) {
        case OptimKind::sgd:
            kern::gemm_nn_acc(1.0, Tt.d.data(), b, A.d.data(), n, U.d.data(), n, p, n, b);
            kern::axpy(-1.0, Tc.data(), u.data(), p);
            break;
        case OptimKind::momentum:
        case OptimKind::adamw: {
            kern::scal(cfg.beta1, st.Ut_S.d.data(), st.Ut_S.d.size());
            kern::gemm_nn_acc(1.0 - cfg.beta1, Tt.d.data(), b, A.d.data(), n,
                              st.Ut_S.d.data(), n, p, n, b);
            kern::scal(cfg.beta1, st.Ut_C.data(), p);
            kern::axpy(-(1.0 - cfg.beta1), Tc.data(), st.Ut_C.data(), p);
            const double corr = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
            if (cfg.kind == OptimKind::momentum) {
                for (std::size_t k = 0; k < p; ++k) {
                    const double s = 1.0 / corr;
                    double* ur = U.row(k);
                    const double* mr = st.Ut_S.row(k);
                    for (std::size_t q = 0; q < n; ++q) ur[q] = s * mr[q];
                    u[k] = s * st.Ut_C[k];
                }
            } else {
                if (!in.phi) throw std::invalid_argument("smoother: adamw step without phi");
                const Vec& phi = *in.phi;
                if (phi.size() != p) throw std::invalid_argument("smoother: phi size mismatch");
                for (std::size_t k = 0; k < p; ++k) {
                    const double s = 1.0 / (corr * phi[k]);
                    double* ur = U.row(k);
                    const double* mr = st.Ut_S.row(k);
                    const double* dr = st.D_S.row(k);
                    for (std::size_t q = 0; q < n; ++q) ur[q] = s * mr[q] - cfg.lambda * dr[q];
                    u[k] = s * st.Ut_C[k] - cfg.lambda * st.D_C[k];
                }
            }
            break;
        }
        case OptimKind::weight_decay: {
            kern::gemm_nn_acc(1.0, Tt.d.data(), b, A.d.data(), n, U.d.data(), n, p, n, b);
            kern::axpy(-cfg.lambda, st.D_S.d.data(), U.d.data(), U.d.size());
            kern::axpy(-1.0, Tc.data(), u.data(), p);
            kern::axpy(-cfg.lambda, st.D_C.data(), u.data(), p);
            break;
        }
    }

    // Tracked-row updates: S += gamma R U, c += gamma R u.
    const Mat& Rtr = *in.R_train;
    if (Rtr.rows != n || Rtr.cols != p) throw std::invalid_argument("smoother: bad R_train");
    kern::gemm_nn_acc(in.gamma, Rtr.d.data(), p, U.d.data(), n, st.S.d.data(), n, n, n, p);
    for (std::size_t i = 0; i < n; ++i)
        st.c[i] += in.gamma * kern::dot(Rtr.row(i), u.data(), p);
    if (m > 0) {
        const Mat& Rte = *in.R_test;
        if (Rte.rows != m || Rte.cols != p)
            throw std::invalid_argument("smoother: bad R_test");
        kern::gemm_nn_acc(in.gamma, Rte.d.data(), p, U.d.data(), n, st.S_test.d.data(), n, m,
                          n, p);
        for (std::size_t i = 0; i < m; ++i)
            st.c_test[i] += in.gamma * kern::dot(Rte.row(i), u.data(), p);
    }

    if (needs_decay_buffers(cfg.kind)) {
        kern::axpy(in.gamma, U.d.data(), st.D_S.d.data(), U.d.size());
        kern::axpy(in.gamma, u.data(), st.D_C.data(), p);
    }
    st.t = t;
}

void kernel_step(SmootherState& st, const SmootherStepInputs& in) {
    const std::size_t n = st.n, m = st.m;
    const auto& batch = *in.batch;
    const std::size_t b = batch.size();
    const Mat& Ktr = *in.K_train;
    if (Ktr.rows != n || Ktr.cols != b) throw std::invalid_argument("smoother: bad K_train");

    Mat Sb(b, n);
    Vec cb(b);
    for (std::size_t j = 0; j < b; ++j) {
        const double* src = st.S.row(batch[j]);
        std::copy(src, src + n, Sb.row(j));
        cb[j] = st.c[batch[j]];
    }

    auto update_rows = [&](Mat& S, Vec& c, const Mat& K) {
        // delta s = gamma (k - k S_b), delta c = -gamma k . c_b
        kern::gemm_nn_acc(-in.gamma, K.d.data(), b, Sb.d.data(), n, S.d.data(), n, K.rows, n,
                          b);
        for (std::size_t i = 0; i < K.rows; ++i) {
            const double* kr = K.row(i);
            double* sr = S.row(i);
            for (std::size_t j = 0; j < b; ++j) sr[batch[j]] += in.gamma * kr[j];
            c[i] -= in.gamma * kern::dot(kr, cb.data(), b);
        }
    };
    update_rows(st.S, st.c, Ktr);
    if (m > 0) {
        const Mat& Kte = *in.K_test;
        if (Kte.rows != m || Kte.cols != b)
            throw std::invalid_argument("smoother: bad K_test");
        update_rows(st.S_test, st.c_test, Kte);
    }
    st.t += 1;
}

}  // namespace

void smoother_step(SmootherState& st, const SmootherConfig& cfg, const SmootherStepInputs& in) {
    if (cfg.loss != Loss::squared)
        throw std::invalid_argument("smoother: only the squared loss is supported");
    if (!in.batch || in.batch->empty())
        throw std::invalid_argument("smoother: empty batch");
    for (auto i : *in.batch)
        if (i >= st.n) throw std::out_of_range("smoother: batch index outside training set");

    if (in.K_train) {
        if (cfg.kind != OptimKind::sgd)
            throw std::invalid_argument("smoother: kernel path is vanilla-sgd only");
        kernel_step(st, in);
        return;
    }
    if (!in.T_rows || !in.R_train)
        throw std::invalid_argument("smoother: dense step needs T and tracked gradients");
    dense_step(st, cfg, in);
}

double apply_smoother(const double* s_row, std::size_t n, double c, const Vec& y) {
    if (y.size() != n) throw std::invalid_argument("apply_smoother: label size mismatch");
    return kern::dot(s_row, y.data(), n) + c;
}

double smoother_value(const SmootherState& st, std::size_t row, bool test, const Vec& y) {
    const Mat& S = test ? st.S_test : st.S;
    const Vec& c = test ? st.c_test : st.c;
    if (row >= S.rows) throw std::out_of_range("smoother_value: no such row");
    return apply_smoother(S.row(row), st.n, c[row], y);
}

double effective_params(const Mat& rows, std::size_t n_train) {
    if (rows.rows == 0) throw std::invalid_argument("effective_params: empty row set");
    double s = 0.0;
    for (std::size_t i = 0; i < rows.rows; ++i) s += kern::nrm2sq(rows.row(i), rows.cols);
    return s * static_cast<double>(n_train) / static_cast<double>(rows.rows);
}

}  // namespace tlens
