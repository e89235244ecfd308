#include <doctest.h>

#include <cmath>
#include <vector>

#include "tlens/kernels.hpp"
#include "tlens/net.hpp"
#include "tlens/rng.hpp"

using namespace tlens;

namespace {

// Independent straight-line re-implementation of the forward pass, used as the
// oracle for predict().
double naive_forward(const ArchSpec& spec, const ParamVector& pv, const double* x) {
    if (spec.is_linear_map()) {
        double s = 0.0;
        for (std::size_t k = 0; k < spec.input_dim; ++k) s += pv.values[k] * x[k];
        return spec.output_activation == OutputAct::sigmoid ? 1.0 / (1.0 + std::exp(-s)) : s;
    }
    if (spec.is_frozen_quad()) {
        const std::size_t nh = spec.hidden_dims[0];
        double s = 0.0;
        for (std::size_t j = 0; j < nh; ++j) {
            double h = 0.0;
            for (std::size_t k = 0; k < spec.input_dim; ++k)
                h += pv.values[j * spec.input_dim + k] * x[k];
            s += h + 0.5 * spec.quad_eps * h * h;
        }
        return s / static_cast<double>(nh);
    }
    std::vector<double> act(x, x + spec.input_dim);
    std::size_t e = 0;
    for (std::size_t l = 0; l < spec.hidden_dims.size(); ++l) {
        const auto& w = pv.layout[e++];
        const auto& b = pv.layout[e++];
        std::vector<double> next(w.rows);
        for (std::size_t j = 0; j < w.rows; ++j) {
            double z = pv.values[b.offset + j];
            for (std::size_t k = 0; k < w.cols; ++k)
                z += pv.values[w.offset + j * w.cols + k] * act[k];
            next[j] = z > 0.0 ? z : 0.0;
        }
        act = std::move(next);
    }
    const auto& wo = pv.layout[e++];
    const auto& bo = pv.layout[e++];
    double z = pv.values[bo.offset];
    for (std::size_t k = 0; k < wo.cols; ++k) z += pv.values[wo.offset + k] * act[k];
    return spec.output_activation == OutputAct::sigmoid ? 1.0 / (1.0 + std::exp(-z)) : z;
}

// Central finite differences, the gradient oracle.
void fd_grad(const ArchSpec& spec, ParamVector pv, const double* x, GradHead head, Vec& out,
             double step = 1e-5) {
    const std::size_t p = pv.size();
    out.assign(p, 0.0);
    const bool pre = head == GradHead::pre;
    for (std::size_t k = 0; k < p; ++k) {
        const double orig = pv.values[k];
        pv.values[k] = orig + step;
        const double fp = predict(spec, pv, x, pre);
        pv.values[k] = orig - step;
        const double fm = predict(spec, pv, x, pre);
        pv.values[k] = orig;
        out[k] = (fp - fm) / (2.0 * step);
    }
}

ArchSpec mlp(std::size_t d, std::vector<std::size_t> hidden, OutputAct out = OutputAct::identity) {
    ArchSpec s;
    s.input_dim = d;
    s.hidden_dims = std::move(hidden);
    s.output_activation = out;
    return s;
}

Vec random_input(Rng& rng, std::size_t d) {
    Vec x(d);
    for (auto& v : x) v = rng.normal();
    return x;
}

}  // namespace

TEST_CASE("build_network is deterministic and alpha scales elementwise") {
    const ArchSpec spec = mlp(5, {7, 3});
    const ParamVector a = build_network(spec, 7, 1.0);
    const ParamVector b = build_network(spec, 7, 1.0);
    CHECK(a.values == b.values);

    const ParamVector c = build_network(spec, 7, 6.0);
    REQUIRE(c.size() == a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(c.values[i] == doctest::Approx(6.0 * a.values[i]).epsilon(1e-15));

    const ParamVector d = build_network(spec, 8, 1.0);
    CHECK(a.values != d.values);
}

TEST_CASE("parameter count of the 3-layer width-200 net on 64 inputs is 53401") {
    const ArchSpec spec = mlp(64, {200, 200});
    CHECK(spec.param_count() == 53401);
    CHECK(build_network(spec, 1, 1.0).size() == 53401);
}

TEST_CASE("layout partitions [0,p) and the flatten/unflatten round-trip is exact") {
    const ArchSpec spec = mlp(4, {6, 5});
    const ParamVector pv = build_network(spec, 3, 1.0);
    std::size_t expect = 0;
    for (const auto& e : pv.layout) {
        CHECK(e.offset == expect);
        expect += e.rows * e.cols;
    }
    CHECK(expect == pv.size());

    // Reassemble from the layout views; must reproduce the vector bit-for-bit.
    Vec rebuilt(pv.size(), 0.0);
    for (const auto& e : pv.layout)
        for (std::size_t k = 0; k < e.rows * e.cols; ++k)
            rebuilt[e.offset + k] = pv.values[e.offset + k];
    CHECK(rebuilt == pv.values);
}

TEST_CASE("zero-dimensional layers are rejected") {
    ArchSpec bad = mlp(4, {0, 3});
    CHECK_THROWS(build_network(bad, 1, 1.0));
    ArchSpec bad2 = mlp(0, {3});
    CHECK_THROWS(build_network(bad2, 1, 1.0));
}

TEST_CASE("predict: zero parameters give zero; sigmoid of zero gives one half") {
    const ArchSpec spec = mlp(4, {5});
    ParamVector pv = build_network(spec, 2, 1.0);
    std::fill(pv.values.begin(), pv.values.end(), 0.0);
    const Vec x{0.5, -1.0, 2.0, 0.25};
    CHECK(predict(spec, pv, x.data()) == 0.0);

    const ArchSpec sig = mlp(4, {5}, OutputAct::sigmoid);
    CHECK(predict(sig, pv, x.data()) == 0.5);
    CHECK(predict(sig, pv, x.data(), true) == 0.0);
}

TEST_CASE("predict matches the independent straight-line evaluator") {
    Rng rng(31);
    std::vector<ArchSpec> specs = {mlp(6, {9, 4}), mlp(3, {}), mlp(5, {8}, OutputAct::sigmoid)};
    ArchSpec quad;
    quad.input_dim = 4;
    quad.hidden_dims = {11};
    quad.hidden_activation = HiddenAct::quad;
    quad.quad_eps = 0.2;
    quad.final_layer_trainable = false;
    specs.push_back(quad);

    for (const auto& spec : specs) {
        const ParamVector pv = build_network(spec, 17, 1.0);
        for (int rep = 0; rep < 5; ++rep) {
            const Vec x = random_input(rng, spec.input_dim);
            CHECK(predict(spec, pv, x.data()) ==
                  doctest::Approx(naive_forward(spec, pv, x.data())).epsilon(1e-12));
        }
    }
}

TEST_CASE("single linear layer: gradient equals the input and is theta-independent") {
    const ArchSpec spec = mlp(3, {});
    ParamVector pv = build_network(spec, 5, 1.0);
    const Vec x{2.0, -3.0, 0.5};
    Vec g(pv.size());
    predict_grad(spec, pv, x.data(), g.data());
    CHECK(g == x);
    pv.values[0] += 10.0;
    pv.values[2] -= 4.0;
    predict_grad(spec, pv, x.data(), g.data());
    CHECK(g == x);
}

TEST_CASE("sigmoid head at g=0: post-activation gradient is a quarter of the pre one") {
    const ArchSpec spec = mlp(4, {6}, OutputAct::sigmoid);
    ParamVector pv = build_network(spec, 9, 1.0);
    // Zero the output layer so g(x) = 0 exactly.
    const auto& wo = pv.entry("w1");
    const auto& bo = pv.entry("b1");
    for (std::size_t k = 0; k < wo.rows * wo.cols; ++k) pv.values[wo.offset + k] = 0.0;
    pv.values[bo.offset] = 0.0;

    const Vec x{1.0, -0.5, 0.25, 2.0};
    Vec gpre(pv.size()), gpost(pv.size());
    predict_grad(spec, pv, x.data(), gpre.data(), GradHead::pre);
    predict_grad(spec, pv, x.data(), gpost.data(), GradHead::post);
    for (std::size_t k = 0; k < pv.size(); ++k)
        CHECK(gpost[k] == doctest::Approx(0.25 * gpre[k]).epsilon(1e-15));
}

TEST_CASE("predict_grad matches central finite differences on every architecture variant") {
    Rng rng(77);
    struct Case {
        ArchSpec spec;
        GradHead head;
    };
    std::vector<Case> cases;
    cases.push_back({mlp(5, {8, 6}), GradHead::pre});
    cases.push_back({mlp(5, {8}, OutputAct::sigmoid), GradHead::pre});
    cases.push_back({mlp(5, {8}, OutputAct::sigmoid), GradHead::post});
    ArchSpec quad;
    quad.input_dim = 6;
    quad.hidden_dims = {10};
    quad.hidden_activation = HiddenAct::quad;
    quad.quad_eps = 0.3;
    quad.final_layer_trainable = false;
    cases.push_back({quad, GradHead::pre});

    for (const auto& [spec, head] : cases) {
        const ParamVector pv = build_network(spec, 101, 1.0);
        const Vec x = random_input(rng, spec.input_dim);
        Vec g(pv.size()), fd;
        predict_grad(spec, pv, x.data(), g.data(), head);
        fd_grad(spec, pv, x.data(), head, fd);
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k < pv.size(); ++k) {
            num += (g[k] - fd[k]) * (g[k] - fd[k]);
            den += fd[k] * fd[k];
        }
        CHECK(std::sqrt(num) <= 1e-6 * (std::sqrt(den) + 1.0));
    }
}

TEST_CASE("batch_grad_matrix scales columns by 1/|B|") {
    Rng rng(13);
    const ArchSpec spec = mlp(4, {5});
    const ParamVector pv = build_network(spec, 21, 1.0);
    Mat X(6, 4);
    for (auto& v : X.d) v = rng.normal();

    const GradMatrix single = batch_grad_matrix(pv, {2}, X, spec);
    Vec g(pv.size());
    predict_grad(spec, pv, X.row(2), g.data());
    for (std::size_t k = 0; k < pv.size(); ++k)
        CHECK(single.rows(0, k) == doctest::Approx(g[k]).epsilon(1e-15));

    const GradMatrix full = batch_grad_matrix(pv, {0, 1, 2, 3, 4, 5}, X, spec);
    CHECK(full.batch_scale == doctest::Approx(1.0 / 6.0));
    // Columns sum to the mean gradient.
    for (std::size_t k = 0; k < pv.size(); ++k) {
        double s = 0.0, mean = 0.0;
        for (std::size_t j = 0; j < 6; ++j) {
            s += full.rows(j, k);
            predict_grad(spec, pv, X.row(j), g.data());
            mean += g[k] / 6.0;
        }
        CHECK(s == doctest::Approx(mean).epsilon(1e-12));
    }

    CHECK_THROWS(batch_grad_matrix(pv, {}, X, spec));
    CHECK_THROWS(batch_grad_matrix(pv, {1, 1}, X, spec));
    CHECK_THROWS(batch_grad_matrix(pv, {99}, X, spec));
}

TEST_CASE("loss_and_grad: squared loss examples and bce finite differences") {
    CHECK(loss_and_grad(1.5, 1.5, Loss::squared).loss == 0.0);
    CHECK(loss_and_grad(1.5, 1.5, Loss::squared).grad == 0.0);
    CHECK(loss_and_grad(2.0, 0.0, Loss::squared).loss == 2.0);
    CHECK(loss_and_grad(2.0, 0.0, Loss::squared).grad == 2.0);

    for (double pred : {0.2, 0.5, 0.9}) {
        for (double y : {0.0, 1.0}) {
            const double h = 1e-6;
            const double fd = (loss_and_grad(pred + h, y, Loss::bce).loss -
                               loss_and_grad(pred - h, y, Loss::bce).loss) /
                              (2.0 * h);
            CHECK(loss_and_grad(pred, y, Loss::bce).grad == doctest::Approx(fd).epsilon(1e-8));
        }
    }
    // Clamped at the boundary rather than throwing.
    CHECK(std::isfinite(loss_and_grad(0.0, 1.0, Loss::bce).loss));
    CHECK(std::isfinite(loss_and_grad(1.0, 0.0, Loss::bce).grad));
    CHECK_THROWS(loss_and_grad(1.5, 1.0, Loss::bce));
}

TEST_CASE("structured tangent features reproduce dense gradient inner products") {
    Rng rng(55);

    // Shallow ReLU with identity and sigmoid heads.
    for (auto out : {OutputAct::identity, OutputAct::sigmoid}) {
        const ArchSpec spec = mlp(5, {9}, out);
        const ParamVector pv = build_network(spec, 3, 1.0);
        Mat A(4, 5), B(6, 5);
        for (auto& v : A.d) v = rng.normal();
        for (auto& v : B.d) v = rng.normal();
        const GradHead head = out == OutputAct::sigmoid ? GradHead::post : GradHead::pre;

        TangentFeatures fa, fb, da, db;
        tangent_features(spec, pv, A, fa, head);
        tangent_features(spec, pv, B, fb, head);
        CHECK(fa.kind == FeatKind::shallow_relu);
        tangent_features_as(FeatKind::dense, spec, pv, A, da, head);
        tangent_features_as(FeatKind::dense, spec, pv, B, db, head);

        Mat G, K1, K2;
        input_gram(A, B, G);
        kernel_block(fa, fb, &G, K1);
        kernel_block(da, db, nullptr, K2);
        for (std::size_t i = 0; i < K1.d.size(); ++i)
            CHECK(K1.d[i] == doctest::Approx(K2.d[i]).epsilon(1e-11));
    }

    // Frozen quadratic net.
    ArchSpec quad;
    quad.input_dim = 4;
    quad.hidden_dims = {7};
    quad.hidden_activation = HiddenAct::quad;
    quad.quad_eps = 0.25;
    quad.final_layer_trainable = false;
    const ParamVector pv = build_network(quad, 5, 1.0);
    Mat A(3, 4), B(5, 4);
    for (auto& v : A.d) v = rng.normal();
    for (auto& v : B.d) v = rng.normal();
    TangentFeatures fa, fb, da, db;
    tangent_features(quad, pv, A, fa, GradHead::pre);
    tangent_features(quad, pv, B, fb, GradHead::pre);
    CHECK(fa.kind == FeatKind::frozen_quad);
    tangent_features_as(FeatKind::dense, quad, pv, A, da, GradHead::pre);
    tangent_features_as(FeatKind::dense, quad, pv, B, db, GradHead::pre);
    Mat G, K1, K2;
    input_gram(A, B, G);
    kernel_block(fa, fb, &G, K1);
    kernel_block(da, db, nullptr, K2);
    for (std::size_t i = 0; i < K1.d.size(); ++i)
        CHECK(K1.d[i] == doctest::Approx(K2.d[i]).epsilon(1e-11));
}

TEST_CASE("quad activation requires a frozen final layer") {
    ArchSpec bad;
    bad.input_dim = 3;
    bad.hidden_dims = {4};
    bad.hidden_activation = HiddenAct::quad;
    bad.final_layer_trainable = true;
    CHECK_THROWS(bad.validate());
}
