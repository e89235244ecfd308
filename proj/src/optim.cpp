#include "tlens/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "tlens/kernels.hpp"

namespace tlens {

void OptimConfig::validate() const {
    if (!(gamma > 0.0)) throw std::invalid_argument("optim: gamma must be > 0");
    if (beta1 < 0.0 || beta1 >= 1.0) throw std::invalid_argument("optim: beta1 outside [0,1)");
    if (beta2 < 0.0 || beta2 >= 1.0) throw std::invalid_argument("optim: beta2 outside [0,1)");
    if (lambda < 0.0) throw std::invalid_argument("optim: lambda must be >= 0");
    if (!(eps > 0.0)) throw std::invalid_argument("optim: eps must be > 0");
    if (!(decay_factor > 0.0)) throw std::invalid_argument("optim: decay_factor must be > 0");
}

double OptimConfig::lr_at(std::size_t t) const {
    double g = gamma;
    if (warmup_steps > 0 && t <= warmup_steps)
        g *= static_cast<double>(t) / static_cast<double>(warmup_steps);
    for (auto b : decay_steps)
        if (t > b) g *= decay_factor;
    return g;
}

Vec optim_step(OptimState& state, const OptimConfig& cfg, const Vec& raw_grad,
               const ParamVector& params) {
    const std::size_t p = raw_grad.size();
    if (params.size() != p) throw std::invalid_argument("optim_step: size mismatch");
    const std::size_t t = state.t + 1;
    const double g = cfg.lr_at(t);
    Vec delta(p, 0.0);

    switch (cfg.kind) {
        case OptimKind::sgd:
            kern::axpy(-g, raw_grad.data(), delta.data(), p);
            break;
        case OptimKind::momentum: {
            if (state.m.empty()) state.m.assign(p, 0.0);
            kern::ema(cfg.beta1, raw_grad.data(), state.m.data(), p);
            const double corr = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
            kern::axpy(-g / corr, state.m.data(), delta.data(), p);
            break;
        }
        case OptimKind::weight_decay:
            kern::axpy(-g, raw_grad.data(), delta.data(), p);
            kern::axpy(-g * cfg.lambda, params.values.data(), delta.data(), p);
            break;
        case OptimKind::adamw: {
            if (state.m.empty()) {
                state.m.assign(p, 0.0);
                state.v.assign(p, 0.0);
                state.phi.assign(p, 0.0);
            }
            kern::ema(cfg.beta1, raw_grad.data(), state.m.data(), p);
            kern::ema_sq(cfg.beta2, raw_grad.data(), state.v.data(), p);
            const double corr1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
            const double corr2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
            kern::phi_from_v(state.v.data(), 1.0 / corr2, cfg.eps, state.phi.data(), p);
            for (std::size_t i = 0; i < p; ++i)
                delta[i] = -g * (state.m[i] / corr1 / state.phi[i] +
                                 cfg.lambda * params.values[i]);
            break;
        }
    }
    state.t = t;
    return delta;
}

const Vec& expose_scaling(const OptimState& state) {
    if (state.phi.empty())
        throw std::logic_error("expose_scaling: no adaptive step has been taken");
    return state.phi;
}

}  // namespace tlens
