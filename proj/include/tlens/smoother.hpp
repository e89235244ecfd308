#pragma once
// Exact smoother decomposition of the telescoped predictions,
//   f~_t(x) = s_t(x) . y + c_t(x),
// maintained step-by-step for each optimizer via update matrices U^S_t (p x n)
// and update vectors U^C_t (p):
//   delta s_t(x) = gamma_t grad f(x)^T U^S_t,  delta c_t(x) = gamma_t grad f(x)^T U^C_t.
//
//   sgd:          U^S = T (I - S),                  U^C = -T c
//   momentum:     U~^S = (1-b1) T (I - S) + b1 U~^S,  U^S = U~^S / (1 - b1^t)
//                 U~^C = -(1-b1) T c + b1 U~^C,       U^C = U~^C / (1 - b1^t)
//   weight decay: U^S = T (I - S) - lambda D^S,     U^C = -T c - lambda D^C
//                 where (D^S, D^C) decompose theta_{t-1} = D^S y + D^C,
//                 advanced as D += gamma_t U  (D^S_1 = 0, D^C_1 = theta_0)
//   adamw:        U^S = diag(1/phi) U~^S / (1 - b1^t) - lambda D^S   (and same for U^C)
//
// Vanilla-SGD runs use a low-memory path that never materializes a p x n
// buffer: the caller hands in kernel rows grad(x)^T T (1 x b) and the update
// is completed against the gathered batch rows of S.

#include <cstddef>
#include <optional>
#include <vector>

#include "tlens/mat.hpp"
#include "tlens/net.hpp"
#include "tlens/optim.hpp"

namespace tlens {

struct SmootherConfig {
    OptimKind kind = OptimKind::sgd;
    Loss loss = Loss::squared;
    double beta1 = 0.0;
    double lambda = 0.0;
    // Cap on the number of doubles in each p x n auxiliary buffer; runs whose
    // optimizer needs history mixing refuse to start above it.
    std::size_t budget_doubles = 200000000;
};

struct SmootherState {
    std::size_t n = 0;  // training rows
    std::size_t m = 0;  // test rows
    std::size_t p = 0;
    std::size_t t = 0;
    Mat S;       // n x n
    Vec c;       // n
    Mat S_test;  // m x n
    Vec c_test;  // m
    Mat Ut_S;    // p x n momentum accumulator
    Vec Ut_C;
    Mat D_S;  // p x n decomposition of theta
    Vec D_C;
};

// theta0 is required for the weight-decay kinds (D^C starts at theta_0).
void smoother_init(SmootherState& st, const SmootherConfig& cfg, std::size_t p,
                   const Vec& f0_train, const Vec& f0_test, const Vec* theta0);

struct SmootherStepInputs {
    double gamma = 0.0;
    const std::vector<std::size_t>* batch = nullptr;
    // dense path (momentum / weight decay / adamw, also valid for sgd):
    const Mat* T_rows = nullptr;   // b x p, scaled by 1/|B|
    const Mat* R_train = nullptr;  // n x p gradients at theta_{t-1}
    const Mat* R_test = nullptr;   // m x p
    const Vec* phi = nullptr;      // adamw scaling vector
    // kernel path (sgd only):
    const Mat* K_train = nullptr;  // n x b rows of grad(x_i)^T T
    const Mat* K_test = nullptr;   // m x b
};

void smoother_step(SmootherState& st, const SmootherConfig& cfg, const SmootherStepInputs& in);

// s . y + c
double apply_smoother(const double* s_row, std::size_t n, double c, const Vec& y);
double smoother_value(const SmootherState& st, std::size_t row, bool test, const Vec& y);

// p0 = (n / |rows|) * sum ||s(x_j)||^2
double effective_params(const Mat& rows, std::size_t n_train);

}  // namespace tlens
