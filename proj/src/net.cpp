#include "tlens/net.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "tlens/kernels.hpp"
#include "tlens/rng.hpp"

namespace tlens {

namespace {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

void ArchSpec::validate() const {
    if (input_dim == 0) throw std::invalid_argument("arch: input_dim must be positive");
    if (output_dim == 0) throw std::invalid_argument("arch: output_dim must be positive");
    if (output_dim != 1)
        throw std::invalid_argument("arch: only scalar outputs are supported");
    for (auto h : hidden_dims)
        if (h == 0) throw std::invalid_argument("arch: zero-dimensional hidden layer");
    if (hidden_activation == HiddenAct::quad) {
        if (final_layer_trainable)
            throw std::invalid_argument("arch: quad activation requires a frozen final layer");
        if (hidden_dims.size() != 1)
            throw std::invalid_argument("arch: quad net has exactly one hidden layer");
        if (output_activation != OutputAct::identity)
            throw std::invalid_argument("arch: quad net uses an identity head");
    } else if (!final_layer_trainable) {
        throw std::invalid_argument("arch: frozen final layer only supported for quad nets");
    }
}

std::size_t ArchSpec::param_count() const {
    if (is_linear_map()) return output_dim * input_dim;
    if (is_frozen_quad()) return hidden_dims[0] * input_dim;
    std::size_t p = 0, in = input_dim;
    for (auto h : hidden_dims) {
        p += h * in + h;
        in = h;
    }
    p += output_dim * in + output_dim;
    return p;
}

const LayoutEntry& ParamVector::entry(const std::string& name) const {
    for (const auto& e : layout)
        if (e.name == name) return e;
    throw std::out_of_range("param layout: no entry named " + name);
}

ParamVector build_network(const ArchSpec& spec, std::uint64_t seed, double init_scale) {
    spec.validate();
    if (!(init_scale > 0.0)) throw std::invalid_argument("init_scale must be > 0");

    ParamVector pv;
    std::size_t off = 0;
    auto add = [&](const std::string& name, std::size_t r, std::size_t c) {
        pv.layout.push_back({name, r, c, off});
        off += r * c;
    };

    if (spec.is_linear_map()) {
        add("w0", spec.output_dim, spec.input_dim);
    } else if (spec.is_frozen_quad()) {
        add("w0", spec.hidden_dims[0], spec.input_dim);
    } else {
        std::size_t in = spec.input_dim;
        for (std::size_t l = 0; l < spec.hidden_dims.size(); ++l) {
            add("w" + std::to_string(l), spec.hidden_dims[l], in);
            add("b" + std::to_string(l), spec.hidden_dims[l], 1);
            in = spec.hidden_dims[l];
        }
        const std::size_t lo = spec.hidden_dims.size();
        add("w" + std::to_string(lo), spec.output_dim, in);
        add("b" + std::to_string(lo), spec.output_dim, 1);
    }
    pv.values.assign(off, 0.0);

    for (const auto& e : pv.layout) {
        if (e.name[0] == 'b') continue;  // biases stay zero
        Rng rng = Rng::stream(seed, "init." + e.name);
        double* w = pv.values.data() + e.offset;
        const std::size_t count = e.rows * e.cols;
        if (spec.is_frozen_quad()) {
            for (std::size_t i = 0; i < count; ++i) w[i] = rng.normal();
        } else {
            const double bound = std::sqrt(6.0 / static_cast<double>(e.cols));
            for (std::size_t i = 0; i < count; ++i)
                w[i] = bound * (2.0 * rng.uniform() - 1.0);
        }
    }
    if (init_scale != 1.0) kern::scal(init_scale, pv.values.data(), pv.values.size());
    return pv;
}

void forward(const ArchSpec& spec, const ParamVector& params, const double* x, FwdCache& c) {
    const std::size_t d = spec.input_dim;
    if (spec.is_linear_map()) {
        c.out_pre = kern::dot(params.values.data(), x, d);
    } else if (spec.is_frozen_quad()) {
        const std::size_t nh = spec.hidden_dims[0];
        c.pre.resize(1);
        c.pre[0].resize(nh);
        const double* w = params.values.data();
        for (std::size_t j = 0; j < nh; ++j) c.pre[0][j] = kern::dot(w + j * d, x, d);
        double s = 0.0;
        const double eps = spec.quad_eps;
        for (std::size_t j = 0; j < nh; ++j) {
            const double h = c.pre[0][j];
            s += h + 0.5 * eps * h * h;
        }
        c.out_pre = s / static_cast<double>(nh);
    } else {
        const std::size_t L = spec.hidden_dims.size();
        c.pre.resize(L);
        c.act.resize(L + 1);
        c.act[0].assign(x, x + d);
        std::size_t in = d;
        const double* base = params.values.data();
        for (std::size_t l = 0; l < L; ++l) {
            const std::size_t outn = spec.hidden_dims[l];
            const double* W = base + params.layout[2 * l].offset;
            const double* b = base + params.layout[2 * l + 1].offset;
            c.pre[l].resize(outn);
            c.act[l + 1].resize(outn);
            const double* prev = c.act[l].data();
            for (std::size_t j = 0; j < outn; ++j) {
                const double z = kern::dot(W + j * in, prev, in) + b[j];
                c.pre[l][j] = z;
                c.act[l + 1][j] = z > 0.0 ? z : 0.0;
            }
            in = outn;
        }
        const double* Wo = base + params.layout[2 * L].offset;
        const double* bo = base + params.layout[2 * L + 1].offset;
        c.out_pre = kern::dot(Wo, c.act[L].data(), in) + bo[0];
    }
    c.out_post = spec.output_activation == OutputAct::sigmoid ? sigmoid(c.out_pre) : c.out_pre;
}

double predict(const ArchSpec& spec, const ParamVector& params, const double* x,
               bool pre_activation) {
    FwdCache c;
    forward(spec, params, x, c);
    return pre_activation ? c.out_pre : c.out_post;
}

void predict_grad(const ArchSpec& spec, const ParamVector& params, const double* x,
                  double* grad, GradHead head) {
    // Every position of grad is written exactly once below; no pre-zeroing.
    FwdCache c;
    forward(spec, params, x, c);
    double dout = 1.0;
    if (spec.output_activation == OutputAct::sigmoid && head == GradHead::post) {
        const double s = c.out_post;
        dout = s * (1.0 - s);
    }

    const std::size_t d = spec.input_dim;
    if (spec.is_linear_map()) {
        for (std::size_t k = 0; k < d; ++k) grad[k] = dout * x[k];
        return;
    }
    if (spec.is_frozen_quad()) {
        const std::size_t nh = spec.hidden_dims[0];
        const double inv = dout / static_cast<double>(nh);
        for (std::size_t j = 0; j < nh; ++j) {
            const double g = inv * (1.0 + spec.quad_eps * c.pre[0][j]);
            double* row = grad + j * d;
            for (std::size_t k = 0; k < d; ++k) row[k] = g * x[k];
        }
        return;
    }

    const std::size_t L = spec.hidden_dims.size();
    const double* base = params.values.data();
    const double* Wo = base + params.layout[2 * L].offset;
    const std::size_t last = spec.hidden_dims[L - 1];

    // Output layer grads.
    {
        double* gw = grad + params.layout[2 * L].offset;
        double* gb = grad + params.layout[2 * L + 1].offset;
        const double* act = c.act[L].data();
        for (std::size_t k = 0; k < last; ++k) gw[k] = dout * act[k];
        gb[0] = dout;
    }

    // Backpropagate delta through the hidden stack.
    Vec delta(last);
    for (std::size_t j = 0; j < last; ++j)
        delta[j] = c.pre[L - 1][j] > 0.0 ? dout * Wo[j] : 0.0;

    for (std::size_t l = L; l-- > 0;) {
        const std::size_t outn = spec.hidden_dims[l];
        const std::size_t in = l == 0 ? d : spec.hidden_dims[l - 1];
        const double* prev = c.act[l].data();
        double* gw = grad + params.layout[2 * l].offset;
        double* gb = grad + params.layout[2 * l + 1].offset;
        for (std::size_t j = 0; j < outn; ++j) {
            const double dj = delta[j];
            if (dj != 0.0)
                kern::scale_store(dj, prev, gw + j * in, in);
            else
                std::fill(gw + j * in, gw + (j + 1) * in, 0.0);
            gb[j] = dj;
        }
        if (l == 0) break;
        const double* W = params.values.data() + params.layout[2 * l].offset;
        Vec nd(in, 0.0);
        for (std::size_t j = 0; j < outn; ++j)
            if (delta[j] != 0.0) kern::axpy(delta[j], W + j * in, nd.data(), in);
        for (std::size_t k = 0; k < in; ++k)
            if (c.pre[l - 1][k] <= 0.0) nd[k] = 0.0;
        delta = std::move(nd);
    }
}

GradMatrix batch_grad_matrix(const ParamVector& params, const std::vector<std::size_t>& batch,
                             const Mat& X, const ArchSpec& spec, GradHead head) {
    if (batch.empty()) throw std::invalid_argument("batch_grad_matrix: empty batch");
    std::set<std::size_t> uniq(batch.begin(), batch.end());
    if (uniq.size() != batch.size())
        throw std::invalid_argument("batch_grad_matrix: duplicate batch indices");
    for (auto i : batch)
        if (i >= X.rows) throw std::out_of_range("batch_grad_matrix: index out of range");

    GradMatrix g;
    g.indices = batch;
    g.batch_scale = 1.0 / static_cast<double>(batch.size());
    g.rows.assign(batch.size(), params.size());
    for (std::size_t j = 0; j < batch.size(); ++j) {
        predict_grad(spec, params, X.row(batch[j]), g.rows.row(j), head);
        kern::scal(g.batch_scale, g.rows.row(j), params.size());
    }
    return g;
}

LossGrad loss_and_grad(double pred, double y, Loss loss) {
    if (loss == Loss::squared) {
        const double r = y - pred;
        return {0.5 * r * r, pred - y};
    }
    if (pred < 0.0 || pred > 1.0)
        throw std::invalid_argument("bce: prediction outside [0,1]");
    constexpr double kClamp = 1e-12;
    const double q = std::min(std::max(pred, kClamp), 1.0 - kClamp);
    const double l = -(y * std::log(q) + (1.0 - y) * std::log(1.0 - q));
    return {l, (q - y) / (q * (1.0 - q))};
}

FeatKind feature_kind(const ArchSpec& spec) {
    if (spec.is_frozen_quad()) return FeatKind::frozen_quad;
    if (!spec.is_linear_map() && spec.hidden_dims.size() == 1 &&
        spec.hidden_activation == HiddenAct::relu)
        return FeatKind::shallow_relu;
    return FeatKind::dense;
}

void tangent_features_as(FeatKind kind, const ArchSpec& spec, const ParamVector& params,
                         const Mat& X, TangentFeatures& out, GradHead head) {
    const std::size_t n = X.rows;
    out.kind = kind;
    out.count = n;
    out.out_scale.clear();
    const bool sig_post =
        spec.output_activation == OutputAct::sigmoid && head == GradHead::post;

    if (kind == FeatKind::dense) {
        out.dense.assign(n, params.size());
        for (std::size_t i = 0; i < n; ++i)
            predict_grad(spec, params, X.row(i), out.dense.row(i), head);
        return;
    }
    if (kind == FeatKind::frozen_quad) {
        const std::size_t nh = spec.hidden_dims[0];
        const std::size_t d = spec.input_dim;
        out.a.assign(n, nh);
        const double* w = params.values.data();
        const double inv = 1.0 / static_cast<double>(nh);
        for (std::size_t i = 0; i < n; ++i) {
            const double* x = X.row(i);
            double* ar = out.a.row(i);
            for (std::size_t j = 0; j < nh; ++j) {
                const double pre = kern::dot(w + j * d, x, d);
                ar[j] = inv * (1.0 + spec.quad_eps * pre);
            }
        }
        return;
    }
    // shallow_relu
    const std::size_t w = spec.hidden_dims[0];
    out.h.assign(n, w);
    out.u.assign(n, w);
    if (sig_post) out.out_scale.assign(n, 1.0);
    const double* v = params.values.data() + params.entry("w1").offset;
    FwdCache c;
    for (std::size_t i = 0; i < n; ++i) {
        forward(spec, params, X.row(i), c);
        double* hr = out.h.row(i);
        double* ur = out.u.row(i);
        for (std::size_t j = 0; j < w; ++j) {
            hr[j] = c.act[1][j];
            ur[j] = c.pre[0][j] > 0.0 ? v[j] : 0.0;
        }
        if (sig_post) {
            const double s = c.out_post;
            out.out_scale[i] = s * (1.0 - s);
        }
    }
}

void tangent_features(const ArchSpec& spec, const ParamVector& params, const Mat& X,
                      TangentFeatures& out, GradHead head) {
    tangent_features_as(feature_kind(spec), spec, params, X, out, head);
}

void kernel_block(const TangentFeatures& rowsF, const TangentFeatures& colsF,
                  const Mat* input_gram, Mat& K) {
    if (rowsF.kind != colsF.kind)
        throw std::invalid_argument("kernel_block: mismatched feature kinds");
    const std::size_t m = rowsF.count, n = colsF.count;
    K.assign(m, n);
    switch (rowsF.kind) {
        case FeatKind::dense:
            kern::gemm_nt(rowsF.dense.d.data(), rowsF.dense.cols, colsF.dense.d.data(),
                          colsF.dense.cols, K.d.data(), n, m, n, rowsF.dense.cols);
            break;
        case FeatKind::frozen_quad: {
            if (!input_gram) throw std::invalid_argument("kernel_block: input gram required");
            kern::gemm_nt(rowsF.a.d.data(), rowsF.a.cols, colsF.a.d.data(), colsF.a.cols,
                          K.d.data(), n, m, n, rowsF.a.cols);
            for (std::size_t i = 0; i < m; ++i) {
                double* kr = K.row(i);
                const double* gr = input_gram->row(i);
                for (std::size_t j = 0; j < n; ++j) kr[j] *= gr[j];
            }
            break;
        }
        case FeatKind::shallow_relu: {
            if (!input_gram) throw std::invalid_argument("kernel_block: input gram required");
            Mat ku(m, n);
            kern::gemm_nt(rowsF.h.d.data(), rowsF.h.cols, colsF.h.d.data(), colsF.h.cols,
                          K.d.data(), n, m, n, rowsF.h.cols);
            kern::gemm_nt(rowsF.u.d.data(), rowsF.u.cols, colsF.u.d.data(), colsF.u.cols,
                          ku.d.data(), n, m, n, rowsF.u.cols);
            for (std::size_t i = 0; i < m; ++i) {
                double* kr = K.row(i);
                const double* gr = input_gram->row(i);
                const double* ur = ku.row(i);
                for (std::size_t j = 0; j < n; ++j)
                    kr[j] = kr[j] + 1.0 + (gr[j] + 1.0) * ur[j];
            }
            break;
        }
    }
    if (!rowsF.out_scale.empty() || !colsF.out_scale.empty()) {
        for (std::size_t i = 0; i < m; ++i) {
            const double si = rowsF.out_scale.empty() ? 1.0 : rowsF.out_scale[i];
            double* kr = K.row(i);
            for (std::size_t j = 0; j < n; ++j) {
                const double sj = colsF.out_scale.empty() ? 1.0 : colsF.out_scale[j];
                kr[j] *= si * sj;
            }
        }
    }
}

void input_gram(const Mat& A, const Mat& B, Mat& G) {
    G.assign(A.rows, B.rows);
    kern::gemm_nt(A.d.data(), A.cols, B.d.data(), B.cols, G.d.data(), B.rows, A.rows, B.rows,
                  A.cols);
}

}  // namespace tlens
