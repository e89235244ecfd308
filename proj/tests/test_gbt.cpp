#include <doctest.h>

#include <cmath>
#include <vector>

#include "tlens/gbt.hpp"
#include "tlens/rng.hpp"

using namespace tlens;

namespace {

Mat random_features(Rng& rng, std::size_t n, std::size_t d) {
    Mat X(n, d);
    for (auto& v : X.d) v = rng.normal();
    return X;
}

}  // namespace

TEST_CASE("a single depth-0 stage with unit rate predicts the label mean everywhere") {
    Rng rng(1);
    Mat X = random_features(rng, 8, 2);
    Vec y{1.0, 2.0, 3.0, 4.0, 1.5, 2.5, 0.5, 1.0};
    GbtConfig cfg;
    cfg.stages = 1;
    cfg.max_depth = 0;
    cfg.gamma = 1.0;
    cfg.mean_baseline = false;  // h0 = 0
    const TreeEnsemble ens = fit_gbt(X, y, cfg);
    double mean = 0.0;
    for (auto v : y) mean += v / static_cast<double>(y.size());
    const Vec probe{10.0, -3.0};
    CHECK(ens.predict(probe.data()) == doctest::Approx(mean).epsilon(1e-15));
}

TEST_CASE("zero shrinkage keeps the baseline prediction") {
    Rng rng(2);
    Mat X = random_features(rng, 10, 3);
    Vec y(10);
    for (auto& v : y) v = rng.normal();
    GbtConfig cfg;
    cfg.stages = 20;
    cfg.gamma = 0.0;
    const TreeEnsemble ens = fit_gbt(X, y, cfg);
    for (std::size_t i = 0; i < 10; ++i)
        CHECK(ens.predict(X.row(i)) == doctest::Approx(ens.h0));
}

TEST_CASE("training mse is non-increasing in the number of stages on a 1-D step task") {
    Mat X(20, 1);
    Vec y(20);
    for (std::size_t i = 0; i < 20; ++i) {
        X(i, 0) = static_cast<double>(i) / 19.0;
        y[i] = X(i, 0) > 0.45 ? 1.0 : 0.0;
    }
    GbtConfig cfg;
    cfg.stages = 50;
    cfg.max_depth = 1;
    cfg.gamma = 0.3;
    const TreeEnsemble ens = fit_gbt(X, y, cfg);

    // Prefix-ensemble oracle: evaluate with the first t stages only.
    double prev = 1e300;
    for (std::size_t t = 1; t <= ens.stages.size(); ++t) {
        double mse = 0.0;
        for (std::size_t i = 0; i < 20; ++i) {
            double f = ens.h0;
            for (std::size_t s = 0; s < t; ++s)
                f += ens.gamma * ens.stages[s].predict(X.row(i));
            mse += (f - y[i]) * (f - y[i]);
        }
        mse /= 20.0;
        CHECK(mse <= prev * (1.0 + 1e-12));
        prev = mse;
    }
}

TEST_CASE("tree kernel rows: single leaf and two-member leaf") {
    Mat X(4, 1);
    X(0, 0) = 0.0;
    X(1, 0) = 1.0;
    X(2, 0) = 2.0;
    X(3, 0) = 3.0;
    Vec y{0.0, 0.0, 1.0, 1.0};

    GbtConfig stump;
    stump.stages = 1;
    stump.max_depth = 0;
    const TreeEnsemble e1 = fit_gbt(X, y, stump);
    const KernelRowTree row = tree_kernel_row(e1, 0, X.row(1));
    const Vec dense = row.dense();
    for (auto v : dense) CHECK(v == doctest::Approx(0.25));
    CHECK(row.norm2() == doctest::Approx(0.5));

    GbtConfig depth1;
    depth1.stages = 1;
    depth1.max_depth = 1;
    const TreeEnsemble e2 = fit_gbt(X, y, depth1);
    const KernelRowTree row2 = tree_kernel_row(e2, 0, X.row(0));
    REQUIRE(row2.support.size() == 2);
    const Vec d2 = row2.dense();
    CHECK(d2[0] == doctest::Approx(0.5));
    CHECK(d2[1] == doctest::Approx(0.5));
    CHECK(d2[2] == 0.0);
    CHECK(d2[3] == 0.0);
    CHECK(row2.norm2() == doctest::Approx(1.0 / std::sqrt(2.0)));
}

TEST_CASE("kernel-form prediction equals the direct ensemble prediction") {
    Rng rng(3);
    Mat X = random_features(rng, 30, 4);
    Vec y(30);
    for (std::size_t i = 0; i < 30; ++i)
        y[i] = std::sin(X(i, 0)) + 0.5 * X(i, 1) + 0.1 * rng.normal();
    GbtConfig cfg;
    cfg.stages = 40;
    cfg.max_depth = 3;
    cfg.gamma = 0.2;
    const TreeEnsemble ens = fit_gbt(X, y, cfg);
    for (std::size_t i = 0; i < 30; ++i)
        CHECK(std::fabs(ens.kernel_form_predict(X.row(i)) - ens.predict(X.row(i))) <= 1e-10);
    for (int rep = 0; rep < 10; ++rep) {
        Vec probe(4);
        for (auto& v : probe) v = 2.0 * rng.normal();
        CHECK(std::fabs(ens.kernel_form_predict(probe.data()) - ens.predict(probe.data())) <=
              1e-10);
    }
}

TEST_CASE("tree kernel rows are stochastic with norms inside the analytic bounds") {
    Rng rng(4);
    const std::size_t n = 50;
    Mat X = random_features(rng, n, 3);
    Vec y(n);
    for (auto& v : y) v = rng.normal();
    GbtConfig cfg;
    cfg.stages = 25;
    cfg.max_depth = 3;
    cfg.gamma = 0.1;
    const TreeEnsemble ens = fit_gbt(X, y, cfg);

    auto check_row = [&](const double* x) {
        for (std::size_t t = 0; t < ens.stages.size(); ++t) {
            const KernelRowTree row = tree_kernel_row(ens, t, x);
            const Vec dense = row.dense();
            double sum = 0.0;
            for (auto v : dense) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
                sum += v;
            }
            CHECK(std::fabs(sum - 1.0) <= 1e-12);
            CHECK(row.norm2() >= 1.0 / std::sqrt(static_cast<double>(n)) - 1e-12);
            CHECK(row.norm2() <= 1.0 + 1e-12);
        }
    };
    for (std::size_t i = 0; i < n; i += 7) check_row(X.row(i));
    for (int rep = 0; rep < 5; ++rep) {
        Vec probe(3);
        for (auto& v : probe) v = 3.0 * rng.normal();
        check_row(probe.data());
    }
}

TEST_CASE("fitting is deterministic byte-for-byte through serialization") {
    Rng rng(5);
    Mat X = random_features(rng, 25, 3);
    Vec y(25);
    for (auto& v : y) v = rng.normal();
    GbtConfig cfg;
    cfg.stages = 15;
    const std::string a = to_json(fit_gbt(X, y, cfg));
    const std::string b = to_json(fit_gbt(X, y, cfg));
    CHECK(a == b);

    const TreeEnsemble back = ensemble_from_json(a);
    CHECK(to_json(back) == a);
    for (std::size_t i = 0; i < 25; ++i)
        CHECK(back.predict(X.row(i)) == fit_gbt(X, y, cfg).predict(X.row(i)));
}

TEST_CASE("constant features yield a stump instead of an error") {
    Mat X(5, 2, 1.0);
    Vec y{1.0, 2.0, 3.0, 4.0, 5.0};
    GbtConfig cfg;
    cfg.stages = 3;
    cfg.max_depth = 4;
    const TreeEnsemble ens = fit_gbt(X, y, cfg);
    for (const auto& t : ens.stages) CHECK(t.nodes.size() == 1);
}

TEST_CASE("kernel_norm_ratio is one when test equals train and errors on empty sets") {
    Mat norms(5, 7);
    Rng rng(6);
    for (auto& v : norms.d) v = std::fabs(rng.normal()) + 0.1;
    CHECK(kernel_norm_ratio(norms, norms) == doctest::Approx(1.0));
    Mat empty;
    CHECK_THROWS(kernel_norm_ratio(empty, norms));
}

TEST_CASE("relative_mse normalizes to one at p=0 and rejects a zero denominator") {
    CHECK(relative_mse(0.8, 0.5, 0.8, 0.5) == doctest::Approx(1.0));
    CHECK(relative_mse(1.4, 0.5, 0.8, 0.5) == doctest::Approx(3.0));
    CHECK_THROWS(relative_mse(1.0, 1.0, 0.7, 0.7));
}
