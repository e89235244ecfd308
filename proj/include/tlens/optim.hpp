#pragma once
// Optimizer state machines producing delta-theta updates. Every internal
// quantity the smoother recursions need (momentum buffer, second-moment
// buffer, the elementwise scaling vector phi_t) is exposed.

#include <cstddef>
#include <vector>

#include "tlens/mat.hpp"
#include "tlens/net.hpp"

namespace tlens {

enum class OptimKind { sgd, momentum, weight_decay, adamw };

struct OptimConfig {
    OptimKind kind = OptimKind::sgd;
    double gamma = 0.01;
    std::size_t warmup_steps = 0;           // linear warmup over the first W steps
    std::vector<std::size_t> decay_steps;   // stepwise decay boundaries
    double decay_factor = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double lambda = 0.0;
    double eps = 1e-8;

    void validate() const;
    double lr_at(std::size_t t) const;  // gamma_t for 1-based step t
};

struct OptimState {
    std::size_t t = 0;  // completed steps
    Vec m;              // first-moment buffer
    Vec v;              // second-moment buffer
    Vec phi;            // scaling vector from the most recent adamw step
};

// raw_grad is T_t g_t (the batch-mean product of prediction gradients and loss
// gradients); params holds theta_{t-1}. Returns delta-theta and advances state.
Vec optim_step(OptimState& state, const OptimConfig& cfg, const Vec& raw_grad,
               const ParamVector& params);

// The exact phi_t used in the most recent step. Throws before the first
// adaptive step.
const Vec& expose_scaling(const OptimState& state);

}  // namespace tlens
