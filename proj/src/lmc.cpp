#include "tlens/lmc.hpp"

#include <cmath>
#include <stdexcept>

#include "tlens/kernels.hpp"

namespace tlens {

EvalMetrics eval_model(const ArchSpec& spec, const ParamVector& params, const Mat& X,
                       const Vec& y, Loss loss) {
    EvalMetrics m;
    const std::size_t n = X.rows;
    for (std::size_t i = 0; i < n; ++i) {
        const double f = predict(spec, params, X.row(i));
        m.loss += loss_and_grad(f, y[i], loss).loss;
        const double cls = f > 0.5 ? 1.0 : 0.0;
        if (cls != y[i]) m.err += 1.0;
    }
    m.loss /= static_cast<double>(n);
    m.err /= static_cast<double>(n);
    return m;
}

ParamVector interpolate_params(const ParamVector& a, const ParamVector& b, double alpha) {
    if (a.size() != b.size() || a.layout.size() != b.layout.size())
        throw std::invalid_argument("interpolate_params: layout mismatch");
    for (std::size_t i = 0; i < a.layout.size(); ++i)
        if (a.layout[i].rows != b.layout[i].rows || a.layout[i].cols != b.layout[i].cols)
            throw std::invalid_argument("interpolate_params: layout mismatch");
    ParamVector out = a;
    if (alpha == 1.0) return out;
    if (alpha == 0.0) {
        out.values = b.values;
        return out;
    }
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = alpha * a.values[i] + (1.0 - alpha) * b.values[i];
    return out;
}

BarrierReport barrier_scan(const ArchSpec& spec, const ParamVector& theta_a,
                           const ParamVector& theta_b, std::size_t grid_size, const Mat& X,
                           const Vec& y, Loss loss) {
    if (grid_size < 2) throw std::invalid_argument("barrier_scan: grid needs >= 2 points");
    const EvalMetrics ma = eval_model(spec, theta_a, X, y, loss);
    const EvalMetrics mb = eval_model(spec, theta_b, X, y, loss);

    BarrierReport rep;
    rep.barrier = -1e300;
    rep.acc_gap = -1e300;
    for (std::size_t k = 0; k < grid_size; ++k) {
        const double alpha = static_cast<double>(k) / static_cast<double>(grid_size - 1);
        EvalMetrics mi;
        if (alpha == 0.0)
            mi = mb;
        else if (alpha == 1.0)
            mi = ma;
        else
            mi = eval_model(spec, interpolate_params(theta_a, theta_b, alpha), X, y, loss);
        BarrierRow row;
        row.alpha = alpha;
        row.loss_lmc = mi.loss;
        row.loss_avg = alpha * ma.loss + (1.0 - alpha) * mb.loss;
        row.acc_lmc = 1.0 - mi.err;
        row.acc_avg = alpha * (1.0 - ma.err) + (1.0 - alpha) * (1.0 - mb.err);
        rep.barrier = std::max(rep.barrier, row.loss_lmc - row.loss_avg);
        rep.acc_gap = std::max(rep.acc_gap, row.acc_avg - row.acc_lmc);
        rep.rows.push_back(row);
    }
    return rep;
}

EvalMetrics ensemble_eval(const ArchSpec& spec, const ParamVector& theta_a,
                          const ParamVector& theta_b, double alpha, const Mat& X, const Vec& y,
                          EnsembleMode mode, Loss loss) {
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("ensemble_eval: bad alpha");
    EvalMetrics m;
    const std::size_t n = X.rows;
    const bool sigmoid = spec.output_activation == OutputAct::sigmoid;
    for (std::size_t i = 0; i < n; ++i) {
        double f;
        if (mode == EnsembleMode::prediction_avg) {
            f = alpha * predict(spec, theta_a, X.row(i)) +
                (1.0 - alpha) * predict(spec, theta_b, X.row(i));
        } else {
            const double g = alpha * predict(spec, theta_a, X.row(i), true) +
                             (1.0 - alpha) * predict(spec, theta_b, X.row(i), true);
            f = sigmoid ? 1.0 / (1.0 + std::exp(-g)) : g;
        }
        m.loss += loss_and_grad(f, y[i], loss).loss;
        if ((f > 0.5 ? 1.0 : 0.0) != y[i]) m.err += 1.0;
    }
    m.loss /= static_cast<double>(n);
    m.err /= static_cast<double>(n);
    return m;
}

std::vector<LayerDrift> grad_drift_by_layer(const ArchSpec& spec, const ParamVector& at_t,
                                            const ParamVector& at_t_plus_h, const Mat& X_eval) {
    if (at_t.size() != at_t_plus_h.size())
        throw std::invalid_argument("grad_drift_by_layer: layout mismatch");
    const std::size_t p = at_t.size();
    const std::size_t n = X_eval.rows;

    // Group weight+bias entries of the same depth into one layer bucket.
    std::vector<std::pair<std::string, std::vector<std::size_t>>> layers;
    for (std::size_t e = 0; e < at_t.layout.size(); ++e) {
        const std::string name = "layer" + at_t.layout[e].name.substr(1);
        if (layers.empty() || layers.back().first != name) layers.push_back({name, {}});
        layers.back().second.push_back(e);
    }

    Vec g1(p), g2(p), acc(p, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        predict_grad(spec, at_t, X_eval.row(i), g1.data(), GradHead::pre);
        predict_grad(spec, at_t_plus_h, X_eval.row(i), g2.data(), GradHead::pre);
        for (std::size_t k = 0; k < p; ++k) {
            const double dgl = g2[k] - g1[k];
            acc[k] += dgl * dgl;
        }
    }

    std::vector<LayerDrift> out;
    for (const auto& [name, entries] : layers) {
        double s = 0.0;
        std::size_t count = 0;
        for (auto e : entries) {
            const auto& le = at_t.layout[e];
            for (std::size_t k = 0; k < le.rows * le.cols; ++k) s += acc[le.offset + k];
            count += le.rows * le.cols;
        }
        out.push_back({name, s / static_cast<double>(count) / static_cast<double>(n)});
    }
    return out;
}

}  // namespace tlens
