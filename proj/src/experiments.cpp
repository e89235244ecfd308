#include "tlens/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <numeric>
#include <set>
#include <stdexcept>

#include "tlens/gbt.hpp"
#include "tlens/kernels.hpp"
#include "tlens/lmc.hpp"
#include "tlens/rng.hpp"

namespace tlens {

namespace {

double now_ms() {
    using namespace std::chrono;
    return duration<double, std::milli>(steady_clock::now().time_since_epoch()).count();
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    std::uint64_t x = a;
    splitmix64(x);
    x ^= b * 0x9e3779b97f4a7c15ULL;
    splitmix64(x);
    x ^= c * 0xbf58476d1ce4e5b9ULL;
    return splitmix64(x);
}

std::string data_path(const std::string& p) {
    if (p.empty() || p.front() == '/') return p;
    if (const char* root = std::getenv("TLENS_DATA_DIR"))
        return std::string(root) + "/" + p;
    return p;
}

struct SeedStats {
    Vec values;
    double mean() const {
        double s = 0.0;
        for (auto v : values) s += v;
        return s / static_cast<double>(values.size());
    }
    double se() const {
        if (values.size() < 2) return 0.0;
        const double m = mean();
        double s = 0.0;
        for (auto v : values) s += (v - m) * (v - m);
        return std::sqrt(s / static_cast<double>(values.size() - 1) /
                         static_cast<double>(values.size()));
    }
};

}  // namespace

// ---------------------------------------------------------------------------
// TrainEngine
// ---------------------------------------------------------------------------

TrainEngine::TrainEngine(RunSpec spec, const Dataset& train, const Dataset& test)
    : spec_(std::move(spec)), train_(train), test_(test) {}

nlohmann::json TrainEngine::arch_json() const {
    const ArchSpec& a = spec_.arch;
    nlohmann::json j;
    j["input_dim"] = a.input_dim;
    j["hidden"] = a.hidden_dims;
    j["activation"] = a.hidden_activation == HiddenAct::relu ? "relu" : "quad";
    j["quad_eps"] = a.quad_eps;
    j["output"] = a.output_activation == OutputAct::identity ? "identity" : "sigmoid";
    j["final_trainable"] = a.final_layer_trainable;
    return j;
}

void TrainEngine::init_fresh() {
    spec_.arch.validate();
    spec_.optim.validate();
    const std::size_t n = train_.X.rows;
    if (n == 0) throw std::invalid_argument("engine: empty training set");
    if (spec_.arch.input_dim != train_.X.cols)
        throw std::invalid_argument("engine: input_dim does not match the dataset");

    params_ = build_network(spec_.arch, spec_.init_seed, spec_.init_scale);
    optim_ = OptimState{};
    step_ = 0;
    stopped_early_ = false;
    best_train_loss_ = 1e300;
    epochs_since_improve_ = 0;
    knorm_log_.clear();
    snapshots_.clear();
    wall_start_ms_ = now_ms();

    if (spec_.arch.output_activation == OutputAct::identity) spec_.head = GradHead::pre;

    feat_kind_ = feature_kind(spec_.arch);
    kernel_mode_ = spec_.optim.kind == OptimKind::sgd && feat_kind_ != FeatKind::dense &&
                   !spec_.track_lin;

    const std::size_t m = std::min(spec_.test_subset, test_.X.rows);
    test_tracked_.assign(m, test_.X.cols);
    test_tracked_y_.assign(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        std::copy(test_.X.row(i), test_.X.row(i) + test_.X.cols, test_tracked_.row(i));
        test_tracked_y_[i] = test_.y[i];
    }

    const bool need_train_traces =
        spec_.track_train || spec_.smoother_on || spec_.telescoped_residuals;
    if (spec_.smoother_on && !need_train_traces)
        throw std::invalid_argument("engine: the smoother requires train tracking");
    spec_.track_train = need_train_traces;

    if (spec_.track_train)
        telescope_init(spec_.arch, params_, train_.X, train_traces_, spec_.track_lin,
                       spec_.head, !kernel_mode_);
    if (m > 0)
        telescope_init(spec_.arch, params_, test_tracked_, test_traces_, spec_.track_lin,
                       spec_.head, !kernel_mode_);

    if (spec_.smoother_on) {
        smoother_cfg_ = SmootherConfig{};
        smoother_cfg_.kind = spec_.optim.kind;
        smoother_cfg_.loss = spec_.loss;
        smoother_cfg_.beta1 = spec_.optim.beta1;
        smoother_cfg_.lambda = spec_.optim.lambda;
        smoother_cfg_.budget_doubles = spec_.smoother_budget;
        smoother_init(smoother_, smoother_cfg_, params_.size(), train_traces_.f_true,
                      m > 0 ? test_traces_.f_true : Vec{}, &params_.values);
    }

    if (kernel_mode_ || spec_.kernel_log_every > 0) {
        input_gram(train_.X, train_.X, gram_train_train_);
        if (m > 0) input_gram(test_tracked_, train_.X, gram_test_train_);
        if (!extra_eval_.empty()) input_gram(extra_eval_, train_.X, gram_extra_train_);
    }
    if (feat_kind_ == FeatKind::frozen_quad) {
        x_train_T_.assign(train_.X.cols, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < train_.X.cols; ++k) x_train_T_(k, i) = train_.X(i, k);
    }

    batch_rng_ = Rng::stream(spec_.batch_seed, "batches");
    perm_.resize(n);
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    perm_pos_ = 0;
    const std::size_t b =
        spec_.batch_size == 0 || spec_.batch_size >= n ? n : spec_.batch_size;
    batches_per_epoch_ = (n + b - 1) / b;

    if (!spec_.out_jsonl.empty()) jsonl_.emplace(spec_.out_jsonl, false);

    if (!spec_.snapshot_steps.empty() &&
        std::find(spec_.snapshot_steps.begin(), spec_.snapshot_steps.end(), std::size_t{0}) !=
            spec_.snapshot_steps.end())
        snapshots_[0] = RunSnapshot{params_.values, optim_, 0};
}

void TrainEngine::init_from_params(const Vec& params0) {
    init_fresh();
    if (params0.size() != params_.size())
        throw std::invalid_argument("engine: pretrained parameter size mismatch");
    params_.values = params0;
    // Re-derive everything that depends on the starting point.
    if (spec_.track_train)
        telescope_init(spec_.arch, params_, train_.X, train_traces_, spec_.track_lin,
                       spec_.head, !kernel_mode_);
    if (test_tracked_.rows > 0)
        telescope_init(spec_.arch, params_, test_tracked_, test_traces_, spec_.track_lin,
                       spec_.head, !kernel_mode_);
    if (spec_.smoother_on)
        smoother_init(smoother_, smoother_cfg_, params_.size(), train_traces_.f_true,
                      test_tracked_.rows > 0 ? test_traces_.f_true : Vec{}, &params_.values);
    if (snapshots_.count(0)) snapshots_[0] = RunSnapshot{params_.values, optim_, 0};
}

void TrainEngine::init_from_snapshot(const RunSnapshot& snap) {
    init_fresh();
    params_.values = snap.params;
    optim_ = snap.optim;
    step_ = snap.step;
}

void TrainEngine::init_from_checkpoint(const Checkpoint& ckpt) {
    // Keep the existing log: defer opening until after the fresh init (which
    // would otherwise truncate it), then reattach in append mode.
    const std::string jsonl_path = spec_.out_jsonl;
    spec_.out_jsonl.clear();
    init_fresh();
    spec_.out_jsonl = jsonl_path;
    if (ckpt.meta.at("arch") != arch_json())
        throw std::runtime_error("resume: checkpoint architecture does not match the config");

    params_.values = *ckpt.find("params");
    step_ = ckpt.meta.at("step").get<std::size_t>();
    optim_.t = ckpt.meta.at("optim_t").get<std::size_t>();
    if (const Vec* v = ckpt.find("optim_m")) optim_.m = *v;
    if (const Vec* v = ckpt.find("optim_v")) optim_.v = *v;
    if (const Vec* v = ckpt.find("optim_phi")) optim_.phi = *v;

    const auto rng_words = ckpt.meta.at("batch_rng").get<std::vector<std::uint64_t>>();
    std::array<std::uint64_t, 4> st;
    std::copy(rng_words.begin(), rng_words.end(), st.begin());
    batch_rng_.restore(st);
    perm_pos_ = ckpt.meta.at("perm_pos").get<std::size_t>();
    if (const Vec* v = ckpt.find("perm"))
        for (std::size_t i = 0; i < v->size(); ++i)
            perm_[i] = static_cast<std::size_t>((*v)[i]);
    best_train_loss_ = ckpt.meta.at("best_train_loss").get<double>();
    epochs_since_improve_ = ckpt.meta.at("epochs_since_improve").get<std::size_t>();

    auto restore_traces = [&](TraceSet& ts, const std::string& prefix) {
        if (const Vec* v = ckpt.find(prefix + "_tilde")) ts.f_tilde = *v;
        if (const Vec* v = ckpt.find(prefix + "_lin")) ts.f_lin = *v;
        for (std::size_t i = 0; i < ts.count(); ++i)
            ts.f_true[i] =
                predict(spec_.arch, params_, ts.inputs.row(i), ts.head == GradHead::pre);
        if (ts.dense)
            for (std::size_t i = 0; i < ts.count(); ++i)
                predict_grad(spec_.arch, params_, ts.inputs.row(i), ts.grad_prev.row(i),
                             ts.head);
    };
    if (spec_.track_train) restore_traces(train_traces_, "train");
    if (test_tracked_.rows > 0) restore_traces(test_traces_, "test");

    if (spec_.smoother_on) {
        smoother_.t = ckpt.meta.at("smoother_t").get<std::size_t>();
        smoother_.S.d = *ckpt.find("smoother_S");
        smoother_.c = *ckpt.find("smoother_c");
        if (const Vec* v = ckpt.find("smoother_S_test")) smoother_.S_test.d = *v;
        if (const Vec* v = ckpt.find("smoother_c_test")) smoother_.c_test = *v;
        if (const Vec* v = ckpt.find("smoother_UtS")) smoother_.Ut_S.d = *v;
        if (const Vec* v = ckpt.find("smoother_UtC")) smoother_.Ut_C = *v;
        if (const Vec* v = ckpt.find("smoother_DS")) smoother_.D_S.d = *v;
        if (const Vec* v = ckpt.find("smoother_DC")) smoother_.D_C = *v;
    }

    // Re-open the log in append mode so a resumed run continues the same file.
    if (!spec_.out_jsonl.empty()) jsonl_.emplace(spec_.out_jsonl, true);
}

Checkpoint TrainEngine::make_checkpoint() const {
    Checkpoint ck;
    ck.meta = spec_.ckpt_meta;
    ck.meta["arch"] = arch_json();
    ck.meta["step"] = step_;
    ck.meta["optim_t"] = optim_.t;
    ck.meta["init_seed"] = spec_.init_seed;
    ck.meta["batch_seed"] = spec_.batch_seed;
    const auto st = batch_rng_.state();
    ck.meta["batch_rng"] = std::vector<std::uint64_t>(st.begin(), st.end());
    ck.meta["perm_pos"] = perm_pos_;
    ck.meta["best_train_loss"] = best_train_loss_;
    ck.meta["epochs_since_improve"] = epochs_since_improve_;

    ck.add("params", params_.values);
    if (!optim_.m.empty()) ck.add("optim_m", optim_.m);
    if (!optim_.v.empty()) ck.add("optim_v", optim_.v);
    if (!optim_.phi.empty()) ck.add("optim_phi", optim_.phi);
    Vec perm_d(perm_.size());
    for (std::size_t i = 0; i < perm_.size(); ++i) perm_d[i] = static_cast<double>(perm_[i]);
    ck.add("perm", std::move(perm_d));

    if (spec_.track_train) {
        ck.add("train_tilde", train_traces_.f_tilde);
        if (spec_.track_lin) ck.add("train_lin", train_traces_.f_lin);
    }
    if (test_tracked_.rows > 0) {
        ck.add("test_tilde", test_traces_.f_tilde);
        if (spec_.track_lin) ck.add("test_lin", test_traces_.f_lin);
    }
    if (spec_.smoother_on) {
        ck.meta["smoother_t"] = smoother_.t;
        ck.add("smoother_S", smoother_.S.d);
        ck.add("smoother_c", smoother_.c);
        if (smoother_.m > 0) {
            ck.add("smoother_S_test", smoother_.S_test.d);
            ck.add("smoother_c_test", smoother_.c_test);
        }
        if (!smoother_.Ut_S.empty()) ck.add("smoother_UtS", smoother_.Ut_S.d);
        if (!smoother_.Ut_C.empty()) ck.add("smoother_UtC", smoother_.Ut_C);
        if (!smoother_.D_S.empty()) ck.add("smoother_DS", smoother_.D_S.d);
        if (!smoother_.D_C.empty()) ck.add("smoother_DC", smoother_.D_C);
    }
    return ck;
}

void TrainEngine::next_batch(std::vector<std::size_t>& batch) {
    const std::size_t n = train_.X.rows;
    const std::size_t b =
        spec_.batch_size == 0 || spec_.batch_size >= n ? n : spec_.batch_size;
    if (b == n) {
        batch.resize(n);
        std::iota(batch.begin(), batch.end(), std::size_t{0});
        return;
    }
    if (perm_pos_ == 0) batch_rng_.shuffle(perm_);
    const std::size_t take = std::min(b, n - perm_pos_);
    batch.assign(perm_.begin() + static_cast<std::ptrdiff_t>(perm_pos_),
                 perm_.begin() + static_cast<std::ptrdiff_t>(perm_pos_ + take));
    perm_pos_ += take;
    if (perm_pos_ >= n) perm_pos_ = 0;
}

double TrainEngine::smoother_drift() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < smoother_.n; ++i) {
        const double v = apply_smoother(smoother_.S.row(i), smoother_.n, smoother_.c[i],
                                        train_.y);
        worst = std::max(worst, std::fabs(v - train_traces_.f_tilde[i]));
    }
    for (std::size_t i = 0; i < smoother_.m; ++i) {
        const double v = apply_smoother(smoother_.S_test.row(i), smoother_.n,
                                        smoother_.c_test[i], train_.y);
        worst = std::max(worst, std::fabs(v - test_traces_.f_tilde[i]));
    }
    return worst;
}

void TrainEngine::log_kernel_norms() {
    // Raw, unmasked full-training-set kernel rows at theta_{t-1}.
    TangentFeatures ftr, fte, fex;
    tangent_features_as(feat_kind_, spec_.arch, params_, train_.X, ftr, spec_.head);
    Mat K;
    kernel_block(ftr, ftr, gram_train_train_.empty() ? nullptr : &gram_train_train_, K);
    double train_max = 0.0;
    for (std::size_t i = 0; i < K.rows; ++i)
        train_max = std::max(train_max, std::sqrt(kern::nrm2sq(K.row(i), K.cols)));

    KernelNormLog entry;
    entry.step = step_ + 1;
    entry.train_max = train_max;
    if (!extra_eval_.empty()) {
        tangent_features_as(feat_kind_, spec_.arch, params_, extra_eval_, fex, spec_.head);
        kernel_block(fex, ftr, gram_extra_train_.empty() ? nullptr : &gram_extra_train_, K);
        entry.extra_norms.resize(K.rows);
        for (std::size_t i = 0; i < K.rows; ++i)
            entry.extra_norms[i] = std::sqrt(kern::nrm2sq(K.row(i), K.cols));
    } else if (test_tracked_.rows > 0) {
        tangent_features_as(feat_kind_, spec_.arch, params_, test_tracked_, fte, spec_.head);
        kernel_block(fte, ftr, gram_test_train_.empty() ? nullptr : &gram_test_train_, K);
        entry.extra_norms.resize(K.rows);
        for (std::size_t i = 0; i < K.rows; ++i)
            entry.extra_norms[i] = std::sqrt(kern::nrm2sq(K.row(i), K.cols));
    }
    knorm_log_.push_back(std::move(entry));
}

void TrainEngine::one_step() {
    const std::size_t t = step_ + 1;
    const double gamma = spec_.optim.lr_at(t);
    const std::size_t n = train_.X.rows;
    const std::size_t p = params_.size();
    const std::size_t m = test_tracked_.rows;

    std::vector<std::size_t> batch;
    next_batch(batch);
    const std::size_t b = batch.size();
    const double bscale = 1.0 / static_cast<double>(b);

    Mat Xb(b, train_.X.cols);
    for (std::size_t j = 0; j < b; ++j)
        std::copy(train_.X.row(batch[j]), train_.X.row(batch[j]) + train_.X.cols, Xb.row(j));

    if (spec_.kernel_log_every > 0 && t % spec_.kernel_log_every == 0) log_kernel_norms();

    // Residual loss gradients at theta_{t-1}.
    Vec g_b(b);
    for (std::size_t j = 0; j < b; ++j) {
        double f;
        if (spec_.telescoped_residuals)
            f = train_traces_.f_tilde[batch[j]];
        else if (spec_.track_train)
            f = train_traces_.f_true[batch[j]];
        else
            f = predict(spec_.arch, params_, Xb.row(j), spec_.head == GradHead::pre);
        g_b[j] = loss_and_grad(f, train_.y[batch[j]], spec_.loss).grad;
    }

    // Features / gradients at theta_{t-1}, then the raw gradient T g.
    TangentFeatures feats_train, feats_test, feats_batch;
    Mat Gb_train, Gb_test;
    Mat T_scaled;
    Vec raw(p, 0.0);

    if (kernel_mode_) {
        tangent_features_as(feat_kind_, spec_.arch, params_, train_.X, feats_train,
                            spec_.head);
        if (m > 0)
            tangent_features_as(feat_kind_, spec_.arch, params_, test_tracked_, feats_test,
                                spec_.head);
        // Batch features are rows of the train features.
        feats_batch.kind = feats_train.kind;
        feats_batch.count = b;
        auto gather = [&](const Mat& src, Mat& dst) {
            if (src.empty()) return;
            dst.assign(b, src.cols);
            for (std::size_t j = 0; j < b; ++j)
                std::copy(src.row(batch[j]), src.row(batch[j]) + src.cols, dst.row(j));
        };
        gather(feats_train.h, feats_batch.h);
        gather(feats_train.u, feats_batch.u);
        gather(feats_train.a, feats_batch.a);
        if (!feats_train.out_scale.empty()) {
            feats_batch.out_scale.resize(b);
            for (std::size_t j = 0; j < b; ++j)
                feats_batch.out_scale[j] = feats_train.out_scale[batch[j]];
        }
        Gb_train.assign(n, b);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < b; ++j)
                Gb_train(i, j) = gram_train_train_(i, batch[j]);
        if (m > 0) {
            Gb_test.assign(m, b);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < b; ++j)
                    Gb_test(i, j) = gram_test_train_(i, batch[j]);
        }

        if (feat_kind_ == FeatKind::frozen_quad) {
            // raw = (1/b) sum_j g_j a_j (x) x_j without materializing p-rows.
            const std::size_t nh = spec_.arch.hidden_dims[0];
            Mat sa(nh, b);
            for (std::size_t j = 0; j < b; ++j) {
                const double* aj = feats_batch.a.row(j);
                const double w = bscale * g_b[j];
                for (std::size_t k = 0; k < nh; ++k) sa(k, j) = w * aj[k];
            }
            Mat xbT(train_.X.cols, b);
            for (std::size_t j = 0; j < b; ++j)
                for (std::size_t k = 0; k < train_.X.cols; ++k)
                    xbT(k, j) = Xb(j, k);
            kern::gemm_nt(sa.d.data(), b, xbT.d.data(), b, raw.data(), train_.X.cols, nh,
                          train_.X.cols, b);
        } else {
            Vec g(p);
            for (std::size_t j = 0; j < b; ++j) {
                predict_grad(spec_.arch, params_, Xb.row(j), g.data(), spec_.head);
                kern::axpy(bscale * g_b[j], g.data(), raw.data(), p);
            }
        }
    } else if (spec_.smoother_on) {
        T_scaled.assign(b, p);
        for (std::size_t j = 0; j < b; ++j) {
            predict_grad(spec_.arch, params_, Xb.row(j), T_scaled.row(j), spec_.head);
            kern::scal(bscale, T_scaled.row(j), p);
        }
        for (std::size_t j = 0; j < b; ++j)
            kern::axpy(g_b[j], T_scaled.row(j), raw.data(), p);
    } else {
        // No smoother consumer for T: stream each batch gradient through a
        // cache-resident scratch row instead of materializing b x p.
        Vec scratch(p);
        for (std::size_t j = 0; j < b; ++j) {
            predict_grad(spec_.arch, params_, Xb.row(j), scratch.data(), spec_.head);
            kern::axpy(bscale * g_b[j], scratch.data(), raw.data(), p);
        }
    }

    Vec delta = optim_step(optim_, spec_.optim, raw, params_);

    Mat K_train, K_test;
    if (kernel_mode_) {
        kernel_block(feats_train, feats_batch, &Gb_train, K_train);
        kern::scal(bscale, K_train.d.data(), K_train.d.size());
        if (m > 0) {
            kernel_block(feats_test, feats_batch, &Gb_test, K_test);
            kern::scal(bscale, K_test.d.data(), K_test.d.size());
        }
    }

    if (spec_.smoother_on) {
        SmootherStepInputs in;
        in.gamma = gamma;
        in.batch = &batch;
        if (kernel_mode_) {
            in.K_train = &K_train;
            if (m > 0) in.K_test = &K_test;
        } else {
            in.T_rows = &T_scaled;
            in.R_train = &train_traces_.grad_prev;
            if (m > 0) in.R_test = &test_traces_.grad_prev;
            if (spec_.optim.kind == OptimKind::adamw) in.phi = &optim_.phi;
        }
        smoother_step(smoother_, smoother_cfg_, in);
    }

    kern::axpy(1.0, delta.data(), params_.values.data(), p);

    if (kernel_mode_) {
        Vec d_tr(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            d_tr[i] = -gamma * kern::dot(K_train.row(i), g_b.data(), b);
        telescope_step_kernelized(train_traces_, d_tr, spec_.arch, params_);
        if (m > 0) {
            Vec d_te(m, 0.0);
            for (std::size_t i = 0; i < m; ++i)
                d_te[i] = -gamma * kern::dot(K_test.row(i), g_b.data(), b);
            telescope_step_kernelized(test_traces_, d_te, spec_.arch, params_);
        }
    } else {
        if (spec_.track_train) telescope_step(train_traces_, delta, spec_.arch, params_);
        if (m > 0) telescope_step(test_traces_, delta, spec_.arch, params_);
    }

    step_ = t;

    if (spec_.smoother_on && spec_.invariant_tol > 0.0) {
        const double drift = smoother_drift();
        if (drift > spec_.invariant_tol)
            throw std::runtime_error("smoother master invariant violated: |S y + c - f~| = " +
                                     fmt_double(drift) + " at step " + std::to_string(t));
    }

    if (!spec_.snapshot_steps.empty() &&
        std::find(spec_.snapshot_steps.begin(), spec_.snapshot_steps.end(), t) !=
            spec_.snapshot_steps.end())
        snapshots_[t] = RunSnapshot{params_.values, optim_, t};

    log_metrics(false);
    maybe_checkpoint();

    // Early stopping, evaluated at epoch boundaries.
    if (perm_pos_ == 0 && spec_.track_train &&
        (spec_.stop_at_interpolation || spec_.stop_patience_epochs > 0)) {
        double loss = 0.0;
        double err = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            loss += loss_and_grad(train_traces_.f_true[i], train_.y[i], spec_.loss).loss;
            if ((train_traces_.f_true[i] > 0.5 ? 1.0 : 0.0) != train_.y[i]) err += 1.0;
        }
        loss /= static_cast<double>(n);
        err /= static_cast<double>(n);
        if (spec_.stop_at_interpolation && err == 0.0) stopped_early_ = true;
        if (spec_.stop_patience_epochs > 0) {
            if (loss < best_train_loss_ - spec_.stop_loss_improve) {
                best_train_loss_ = loss;
                epochs_since_improve_ = 0;
            } else if (++epochs_since_improve_ >= spec_.stop_patience_epochs) {
                stopped_early_ = true;
            }
        }
        if (stopped_early_) log_metrics(true);
    }
}

void TrainEngine::log_metrics(bool force) {
    const std::size_t t = step_;
    if (!force && !(t % spec_.log_every == 0 || t == spec_.steps)) return;

    nlohmann::json rec;
    rec["step"] = t;
    rec["gamma"] = t > 0 ? spec_.optim.lr_at(t) : spec_.optim.lr_at(1);

    auto fill_split = [&](const char* prefix, const Vec& f, const Vec& y) {
        double loss = 0.0, mse = 0.0, err = 0.0;
        const std::size_t n = f.size();
        for (std::size_t i = 0; i < n; ++i) {
            loss += loss_and_grad(f[i], y[i], spec_.loss).loss;
            const double r = y[i] - f[i];
            mse += r * r;
            if ((f[i] > 0.5 ? 1.0 : 0.0) != y[i]) err += 1.0;
        }
        rec[std::string(prefix) + "_loss"] = loss / static_cast<double>(n);
        rec[std::string(prefix) + "_mse"] = mse / static_cast<double>(n);
        rec[std::string(prefix) + "_err"] = err / static_cast<double>(n);
    };
    if (spec_.track_train) {
        fill_split("train", train_traces_.f_true, train_.y);
    }
    if (test_tracked_.rows > 0) {
        fill_split("test", test_traces_.f_true, test_tracked_y_);
        const ApproxError ae = approx_error(test_traces_);
        rec["mean_abs_tilde"] = ae.mean_abs_tilde;
        if (spec_.track_lin) rec["mean_abs_lin"] = ae.mean_abs_lin;
    }
    if (spec_.smoother_on) {
        rec["p_train"] = effective_params(smoother_.S, smoother_.n);
        if (smoother_.m > 0) rec["p_test"] = effective_params(smoother_.S_test, smoother_.n);
        rec["smoother_drift"] = smoother_drift();
    }
    rec["wall_ms"] = now_ms() - wall_start_ms_;
    last_record_ = rec;
    if (jsonl_) jsonl_->write(rec);
}

void TrainEngine::maybe_checkpoint() {
    if (spec_.ckpt_prefix.empty()) return;
    if (std::find(spec_.checkpoint_steps.begin(), spec_.checkpoint_steps.end(), step_) ==
        spec_.checkpoint_steps.end())
        return;
    write_checkpoint(spec_.ckpt_prefix + "_step" + std::to_string(step_) + ".ckpt",
                     make_checkpoint());
}

void TrainEngine::run() {
    if (step_ == 0) log_metrics(true);
    while (step_ < spec_.steps && !stopped_early_) one_step();
    if (last_record_.value("step", std::size_t{0}) != step_) log_metrics(true);
}

void TrainEngine::run_steps(std::size_t count) {
    const std::size_t target = std::min(spec_.steps, step_ + count);
    while (step_ < target && !stopped_early_) one_step();
}

// ---------------------------------------------------------------------------
// Config helpers
// ---------------------------------------------------------------------------

ArchSpec arch_from_config(const ExperimentConfig& cfg) {
    ArchSpec a;
    a.hidden_dims = cfg.hidden;
    a.hidden_activation = cfg.activation == "quad" ? HiddenAct::quad : HiddenAct::relu;
    a.quad_eps = cfg.quad_eps;
    a.output_activation = cfg.output == "sigmoid" ? OutputAct::sigmoid : OutputAct::identity;
    a.final_layer_trainable = cfg.final_trainable;
    a.output_dim = 1;
    return a;  // input_dim filled once the data is known
}

OptimConfig optim_from_config(const ExperimentConfig& cfg) {
    OptimConfig o;
    if (cfg.optimizer == "sgd") o.kind = OptimKind::sgd;
    else if (cfg.optimizer == "momentum") o.kind = OptimKind::momentum;
    else if (cfg.optimizer == "weight_decay") o.kind = OptimKind::weight_decay;
    else o.kind = OptimKind::adamw;
    o.gamma = cfg.gamma;
    o.beta1 = cfg.beta1;
    o.beta2 = cfg.beta2;
    o.lambda = cfg.lambda;
    o.eps = cfg.eps;
    o.warmup_steps = cfg.warmup_steps;
    o.decay_steps = cfg.decay_steps;
    o.decay_factor = cfg.decay_factor;
    return o;
}

BinaryTask build_classification_data(const ExperimentConfig& cfg, std::uint64_t seed) {
    BinaryTask task;
    if (cfg.data_source == "synth-images") {
        task = synth_images(cfg.class_a, cfg.class_b, cfg.n_train, cfg.n_test, seed);
    } else if (cfg.data_source == "synth-mnist1d") {
        task = synth_mnist1d(cfg.n_train, cfg.n_test, seed);
    } else if (cfg.data_source == "idx") {
        const RawImages raw =
            load_idx(data_path(cfg.images_path), data_path(cfg.labels_path));
        task = make_binary_task(raw, cfg.class_a, cfg.class_b, cfg.n_train, cfg.n_test,
                                cfg.down_h, cfg.down_w, seed);
    } else {
        throw std::invalid_argument("not a classification data source: " + cfg.data_source);
    }
    if (cfg.label_noise > 0.0) add_label_noise(task.train, cfg.label_noise, seed);
    return task;
}

namespace {

GradHead head_from_config(const ExperimentConfig& cfg) {
    if (cfg.head == "pre") return GradHead::pre;
    if (cfg.head == "post") return GradHead::post;
    // auto: identity heads are unaffected; sigmoid runs track the
    // pre-activation unless the smoother needs post-space linearity.
    if (cfg.output == "sigmoid" && !cfg.smoother) return GradHead::pre;
    return GradHead::post;
}

RunSpec runspec_from_config(const ExperimentConfig& cfg, std::uint64_t seed,
                            std::size_t n_train) {
    RunSpec rs;
    rs.arch = arch_from_config(cfg);
    rs.optim = optim_from_config(cfg);
    rs.loss = cfg.loss == "bce" ? Loss::bce : Loss::squared;
    const std::size_t bpe =
        cfg.batch_size == 0 ? 1 : (n_train + cfg.batch_size - 1) / cfg.batch_size;
    rs.steps = cfg.steps > 0 ? cfg.steps : cfg.epochs * bpe;
    rs.batch_size = cfg.batch_size;
    rs.init_seed = seed;
    rs.batch_seed = seed;
    rs.init_scale = cfg.init_scale;
    rs.test_subset = cfg.test_subset;
    rs.track_train = cfg.track_train;
    rs.track_lin = cfg.track_lin;
    rs.smoother_on = cfg.smoother;
    rs.smoother_budget = cfg.smoother_budget;
    rs.telescoped_residuals = cfg.residuals == "telescoped";
    rs.invariant_tol = cfg.invariant_tol;
    rs.kernel_log_every = cfg.kernel_log_every;
    rs.head = head_from_config(cfg);
    rs.log_every = cfg.log_every;
    rs.checkpoint_steps = cfg.checkpoint_steps;
    rs.stop_at_interpolation = cfg.stop_at_interpolation;
    rs.stop_loss_improve = cfg.stop_loss_improve;
    rs.stop_patience_epochs = cfg.stop_patience_epochs;
    return rs;
}

void write_run_manifest(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["experiment"] = cfg.name;
    j["fingerprint"] = cfg.fingerprint();
    j["data"] = {{"source", cfg.data_source},
                 {"seeds", cfg.seeds},
                 {"n_train", cfg.n_train},
                 {"n_test", cfg.n_test},
                 {"label_noise", cfg.label_noise},
                 {"transforms", cfg.log_columns}};
    std::ofstream out(cfg.output_dir + "/manifest.json");
    out << j.dump(2) << '\n';
}

// ------------------------------ approx-error ------------------------------

void run_approx_error(const ExperimentConfig& cfg) {
    std::vector<double> gammas = cfg.gammas.empty() ? std::vector<double>{cfg.gamma}
                                                    : cfg.gammas;
    // (gamma index, step) -> per-seed values
    std::map<std::pair<std::size_t, std::size_t>, std::pair<SeedStats, SeedStats>> table;
    std::map<std::pair<std::size_t, std::size_t>, SeedStats> err_table;

    for (std::uint64_t seed : cfg.seeds) {
        BinaryTask task = build_classification_data(cfg, seed);
        for (std::size_t gi = 0; gi < gammas.size(); ++gi) {
            ExperimentConfig c = cfg;
            c.gamma = gammas[gi];
            RunSpec rs = runspec_from_config(c, seed, task.train.X.rows);
            rs.arch.input_dim = task.train.X.cols;
            rs.track_lin = true;
            rs.out_jsonl = cfg.output_dir + "/run_g" + std::to_string(gi) + "_seed" +
                           std::to_string(seed) + ".jsonl";
            rs.ckpt_prefix = cfg.output_dir + "/run_g" + std::to_string(gi) + "_seed" +
                             std::to_string(seed);
            rs.ckpt_meta = {{"experiment", cfg.name}, {"seed", seed}, {"gamma_index", gi}};
            TrainEngine eng(rs, task.train, task.test);
            eng.init_fresh();
            eng.run();

            // Re-read the log to collect the per-step series for the summary.
            std::stringstream ss(read_text_file(rs.out_jsonl));
            std::string line;
            while (std::getline(ss, line)) {
                if (line.empty()) continue;
                const auto rec = nlohmann::json::parse(line);
                if (!rec.contains("mean_abs_tilde")) continue;
                const auto key = std::make_pair(gi, rec.at("step").get<std::size_t>());
                table[key].first.values.push_back(rec.at("mean_abs_tilde").get<double>());
                table[key].second.values.push_back(rec.at("mean_abs_lin").get<double>());
                err_table[key].values.push_back(rec.at("test_err").get<double>());
            }
        }
    }

    CsvWriter csv(cfg.output_dir + "/summary.csv",
                  {"gamma", "step", "mae_tilde_mean", "mae_tilde_se", "mae_lin_mean",
                   "mae_lin_se", "test_err_mean", "test_err_se"});
    for (const auto& [key, stats] : table) {
        const auto& errs = err_table.at(key);
        csv.row({CsvWriter::cell(gammas[key.first]), std::to_string(key.second),
                 CsvWriter::cell(stats.first.mean()), CsvWriter::cell(stats.first.se()),
                 CsvWriter::cell(stats.second.mean()), CsvWriter::cell(stats.second.se()),
                 CsvWriter::cell(errs.mean()), CsvWriter::cell(errs.se())});
    }
}

// ------------------------------ double-descent -----------------------------

void run_double_descent(const ExperimentConfig& cfg) {
    const std::vector<std::string> metrics = {"train_mse", "test_mse", "train_err",
                                              "test_err", "p_train", "p_test"};
    std::map<std::size_t, std::map<std::string, SeedStats>> table;

    for (std::uint64_t seed : cfg.seeds) {
        BinaryTask task = build_classification_data(cfg, seed);
        for (std::size_t w : cfg.width_sweep) {
            ExperimentConfig c = cfg;
            c.hidden = {w};
            RunSpec rs = runspec_from_config(c, seed, task.train.X.rows);
            rs.arch.input_dim = task.train.X.cols;
            rs.out_jsonl = cfg.output_dir + "/run_w" + std::to_string(w) + "_seed" +
                           std::to_string(seed) + ".jsonl";
            rs.ckpt_prefix = cfg.output_dir + "/run_w" + std::to_string(w) + "_seed" +
                             std::to_string(seed);
            rs.ckpt_meta = {{"experiment", cfg.name}, {"seed", seed}, {"width", w}};
            TrainEngine eng(rs, task.train, task.test);
            eng.init_fresh();
            eng.run();
            const auto& rec = eng.last_record();
            for (const auto& mkey : metrics)
                if (rec.contains(mkey))
                    table[w][mkey].values.push_back(rec.at(mkey).get<double>());
        }
    }

    std::vector<std::string> header = {"width"};
    for (const auto& mkey : metrics) {
        header.push_back(mkey + "_mean");
        header.push_back(mkey + "_se");
    }
    CsvWriter csv(cfg.output_dir + "/summary.csv", header);
    for (const auto& [w, row] : table) {
        std::vector<std::string> cells = {std::to_string(w)};
        for (const auto& mkey : metrics) {
            const auto it = row.find(mkey);
            if (it == row.end()) {
                cells.push_back("");
                cells.push_back("");
            } else {
                cells.push_back(CsvWriter::cell(it->second.mean()));
                cells.push_back(CsvWriter::cell(it->second.se()));
            }
        }
        csv.row(cells);
    }
}

// -------------------------------- grokking --------------------------------

void run_grokking(const ExperimentConfig& cfg) {
    const std::vector<std::string> metrics = {"train_mse", "test_mse", "p_train", "p_test"};
    std::map<std::size_t, std::map<std::string, SeedStats>> table;

    for (std::uint64_t seed : cfg.seeds) {
        if (cfg.data_source != "polynomial")
            throw std::invalid_argument("grokking expects the polynomial data source");
        PolynomialTask task = polynomial_task(cfg.poly_d, cfg.n_train, cfg.n_test, seed);
        RunSpec rs = runspec_from_config(cfg, seed, task.train.X.rows);
        rs.arch.input_dim = task.train.X.cols;
        rs.out_jsonl = cfg.output_dir + "/run_seed" + std::to_string(seed) + ".jsonl";
        rs.ckpt_prefix = cfg.output_dir + "/run_seed" + std::to_string(seed);
        rs.ckpt_meta = {{"experiment", cfg.name}, {"seed", seed}};
        TrainEngine eng(rs, task.train, task.test);
        eng.init_fresh();
        eng.run();

        std::stringstream ss(read_text_file(rs.out_jsonl));
        std::string line;
        while (std::getline(ss, line)) {
            if (line.empty()) continue;
            const auto rec = nlohmann::json::parse(line);
            const std::size_t step = rec.at("step").get<std::size_t>();
            for (const auto& mkey : metrics)
                if (rec.contains(mkey))
                    table[step][mkey].values.push_back(rec.at(mkey).get<double>());
        }
    }

    std::vector<std::string> header = {"step"};
    for (const auto& mkey : metrics) {
        header.push_back(mkey + "_mean");
        header.push_back(mkey + "_se");
    }
    CsvWriter csv(cfg.output_dir + "/summary.csv", header);
    for (const auto& [step, row] : table) {
        std::vector<std::string> cells = {std::to_string(step)};
        for (const auto& mkey : metrics) {
            const auto it = row.find(mkey);
            if (it == row.end()) {
                cells.push_back("");
                cells.push_back("");
            } else {
                cells.push_back(CsvWriter::cell(it->second.mean()));
                cells.push_back(CsvWriter::cell(it->second.se()));
            }
        }
        csv.row(cells);
    }
}

// ------------------------------- gbt-compare ------------------------------

struct MixtureSelection {
    std::vector<std::size_t> pool_rows;  // indices into the candidate pool
};

void run_gbt_compare(const ExperimentConfig& cfg) {
    std::map<std::size_t, std::map<std::string, SeedStats>> table;  // by mixture index

    for (std::uint64_t seed : cfg.seeds) {
        // Data: train plus a candidate pool split into irregular / regular.
        Dataset train, pool;
        if (cfg.data_source == "synth-tabular") {
            const std::size_t pool_n = cfg.pool_size > 0 ? cfg.pool_size : 4 * cfg.n_train;
            TabularTask task = synth_heavy_tailed(cfg.n_train, pool_n, seed);
            train = std::move(task.train);
            pool = std::move(task.test_pool);
        } else if (cfg.data_source == "csv") {
            TabularTransforms tf;
            tf.log_columns = cfg.log_columns;
            TabularData td = load_csv_tabular(data_path(cfg.csv_path), cfg.target_column, tf);
            std::ofstream(cfg.output_dir + "/data_manifest_seed" + std::to_string(seed) +
                          ".json")
                << td.manifest.to_json() << '\n';
            std::vector<std::size_t> idx(td.data.X.rows);
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            Rng rng = Rng::stream(seed, "csv.split");
            rng.shuffle(idx);
            if (td.data.X.rows <= cfg.n_train)
                throw std::invalid_argument("gbt-compare: csv too small for n_train");
            auto take = [&](Dataset& ds, std::size_t from, std::size_t count) {
                ds.X.assign(count, td.data.X.cols);
                ds.y.assign(count, 0.0);
                for (std::size_t i = 0; i < count; ++i) {
                    std::copy(td.data.X.row(idx[from + i]),
                              td.data.X.row(idx[from + i]) + td.data.X.cols, ds.X.row(i));
                    ds.y[i] = td.data.y[idx[from + i]];
                }
            };
            take(train, 0, cfg.n_train);
            take(pool, cfg.n_train, td.data.X.rows - cfg.n_train);
        } else {
            throw std::invalid_argument("gbt-compare expects a tabular data source");
        }

        // Standardize features by train statistics.
        const std::size_t d = train.X.cols;
        for (std::size_t j = 0; j < d; ++j) {
            double mean = 0.0;
            for (std::size_t i = 0; i < train.X.rows; ++i) mean += train.X(i, j);
            mean /= static_cast<double>(train.X.rows);
            double var = 0.0;
            for (std::size_t i = 0; i < train.X.rows; ++i) {
                const double z = train.X(i, j) - mean;
                var += z * z;
            }
            var /= static_cast<double>(train.X.rows - 1);
            const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
            for (std::size_t i = 0; i < train.X.rows; ++i)
                train.X(i, j) = (train.X(i, j) - mean) / sd;
            for (std::size_t i = 0; i < pool.X.rows; ++i)
                pool.X(i, j) = (pool.X(i, j) - mean) / sd;
        }

        const auto rank = pca_irregularity_rank(pool.X);
        const std::size_t k_irr =
            static_cast<std::size_t>(cfg.irregular_frac * static_cast<double>(pool.X.rows));
        std::vector<std::size_t> irregular(rank.begin(),
                                           rank.begin() + static_cast<std::ptrdiff_t>(k_irr));
        std::vector<std::size_t> regular(rank.begin() + static_cast<std::ptrdiff_t>(k_irr),
                                         rank.end());

        // Mixture test sets as index selections over the pool.
        std::vector<MixtureSelection> mixtures;
        for (std::size_t pi = 0; pi < cfg.mixture_props.size(); ++pi) {
            const double p = cfg.mixture_props[pi];
            const std::size_t ki =
                static_cast<std::size_t>(p * static_cast<double>(cfg.mixture_size));
            if (ki > irregular.size() || cfg.mixture_size - ki > regular.size())
                throw std::invalid_argument("gbt-compare: insufficient pool for mixtures");
            std::vector<std::size_t> ir = irregular, rg = regular;
            Rng rng_i = Rng::stream(seed, "mixsel.irregular", pi);
            Rng rng_r = Rng::stream(seed, "mixsel.regular", pi);
            rng_i.shuffle(ir);
            rng_r.shuffle(rg);
            MixtureSelection sel;
            sel.pool_rows.assign(ir.begin(), ir.begin() + static_cast<std::ptrdiff_t>(ki));
            sel.pool_rows.insert(sel.pool_rows.end(), rg.begin(),
                                 rg.begin() + static_cast<std::ptrdiff_t>(cfg.mixture_size - ki));
            mixtures.push_back(std::move(sel));
        }

        // Neural network run with kernel-norm logging over the whole pool.
        Dataset test_for_engine;
        {
            const std::size_t mt = std::min<std::size_t>(cfg.test_subset, regular.size());
            test_for_engine.X.assign(mt, d);
            test_for_engine.y.assign(mt, 0.0);
            for (std::size_t i = 0; i < mt; ++i) {
                std::copy(pool.X.row(regular[i]), pool.X.row(regular[i]) + d,
                          test_for_engine.X.row(i));
                test_for_engine.y[i] = pool.y[regular[i]];
            }
        }
        RunSpec rs = runspec_from_config(cfg, seed, train.X.rows);
        rs.arch.input_dim = d;
        rs.smoother_on = false;
        rs.track_lin = false;
        rs.out_jsonl = cfg.output_dir + "/nn_seed" + std::to_string(seed) + ".jsonl";
        rs.ckpt_meta = {{"experiment", cfg.name}, {"seed", seed}};
        if (rs.kernel_log_every == 0) rs.kernel_log_every = 25;
        TrainEngine eng(rs, train, test_for_engine);
        eng.set_extra_eval(pool.X);
        eng.init_fresh();
        eng.run();

        // GBT fit + serialization.
        GbtConfig gc;
        gc.stages = cfg.gbt_stages;
        gc.max_depth = cfg.gbt_depth;
        gc.gamma = cfg.gbt_gamma;
        const TreeEnsemble ens = fit_gbt(train.X, train.y, gc);
        std::ofstream(cfg.output_dir + "/gbt_seed" + std::to_string(seed) + ".json")
            << to_json(ens) << '\n';

        // Kernel-norm ratios.
        const auto& klog = eng.kernel_norm_log();
        if (klog.empty()) throw std::runtime_error("gbt-compare: no kernel norms logged");

        // Tree-kernel norms per stage for pool and train rows.
        const std::size_t T = ens.stages.size();
        Mat gbt_pool_norms(T, pool.X.rows), gbt_train_norms(T, train.X.rows);
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t i = 0; i < pool.X.rows; ++i)
                gbt_pool_norms(t, i) = tree_kernel_row(ens, t, pool.X.row(i)).norm2();
            for (std::size_t i = 0; i < train.X.rows; ++i)
                gbt_train_norms(t, i) = tree_kernel_row(ens, t, train.X.row(i)).norm2();
        }

        for (std::size_t pi = 0; pi < mixtures.size(); ++pi) {
            const auto& sel = mixtures[pi].pool_rows;
            // NN ratio via the engine's logged norms.
            double nn_num = 0.0, nn_den = 0.0;
            for (const auto& entry : klog) {
                double mx = 0.0;
                for (auto r : sel) mx = std::max(mx, entry.extra_norms[r]);
                nn_num += mx;
                nn_den += entry.train_max;
            }
            const double nn_ratio = nn_num / nn_den;

            Mat test_norms(T, sel.size());
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t i = 0; i < sel.size(); ++i)
                    test_norms(t, i) = gbt_pool_norms(t, sel[i]);
            const double gbt_ratio = kernel_norm_ratio(test_norms, gbt_train_norms);

            double nn_mse = 0.0, gbt_mse = 0.0;
            for (auto r : sel) {
                const double f_nn = predict(rs.arch, eng.params(), pool.X.row(r));
                const double f_gb = ens.predict(pool.X.row(r));
                nn_mse += (f_nn - pool.y[r]) * (f_nn - pool.y[r]);
                gbt_mse += (f_gb - pool.y[r]) * (f_gb - pool.y[r]);
            }
            nn_mse /= static_cast<double>(sel.size());
            gbt_mse /= static_cast<double>(sel.size());

            table[pi]["nn_mse"].values.push_back(nn_mse);
            table[pi]["gbt_mse"].values.push_back(gbt_mse);
            table[pi]["nn_ratio"].values.push_back(nn_ratio);
            table[pi]["gbt_ratio"].values.push_back(gbt_ratio);
        }
        for (std::size_t pi = 0; pi < mixtures.size(); ++pi) {
            const double rel = relative_mse(
                table[pi]["nn_mse"].values.back(), table[pi]["gbt_mse"].values.back(),
                table[0]["nn_mse"].values.back(), table[0]["gbt_mse"].values.back());
            table[pi]["rel_mse"].values.push_back(rel);
        }
    }

    const std::vector<std::string> metrics = {"nn_mse", "gbt_mse", "rel_mse", "nn_ratio",
                                              "gbt_ratio"};
    std::vector<std::string> header = {"p"};
    for (const auto& mkey : metrics) {
        header.push_back(mkey + "_mean");
        header.push_back(mkey + "_se");
    }
    CsvWriter csv(cfg.output_dir + "/summary.csv", header);
    for (const auto& [pi, row] : table) {
        std::vector<std::string> cells = {CsvWriter::cell(cfg.mixture_props[pi])};
        for (const auto& mkey : metrics) {
            const auto& st = row.at(mkey);
            cells.push_back(CsvWriter::cell(st.mean()));
            cells.push_back(CsvWriter::cell(st.se()));
        }
        csv.row(cells);
    }
}

// ----------------------------------- lmc ----------------------------------

void run_lmc(const ExperimentConfig& cfg) {
    std::map<std::size_t, std::map<std::string, SeedStats>> table;  // by spawn step

    CsvWriter barrier_csv(cfg.output_dir + "/barrier.csv",
                          {"seed", "spawn_step", "alpha", "loss_lmc", "loss_avg", "acc_lmc",
                           "acc_avg"});
    CsvWriter drift_csv(cfg.output_dir + "/grad_drift.csv",
                        {"seed", "spawn_step", "layer", "drift"});

    for (std::uint64_t seed : cfg.seeds) {
        BinaryTask task = build_classification_data(cfg, seed);
        const std::size_t n = task.train.X.rows;
        RunSpec base = runspec_from_config(cfg, seed, n);
        base.arch.input_dim = task.train.X.cols;
        base.track_train = false;
        base.test_subset = 0;
        base.smoother_on = false;
        const std::size_t bpe =
            cfg.batch_size == 0 ? 1 : (n + cfg.batch_size - 1) / cfg.batch_size;
        const std::size_t horizon = cfg.drift_horizon > 0 ? cfg.drift_horizon : bpe;

        std::set<std::size_t> snaps;
        for (auto t : cfg.spawn_steps) {
            snaps.insert(std::min(t, base.steps));
            snaps.insert(std::min(t + horizon, base.steps));
        }
        snaps.insert(base.steps);
        base.snapshot_steps.assign(snaps.begin(), snaps.end());
        base.out_jsonl = cfg.output_dir + "/base_seed" + std::to_string(seed) + ".jsonl";
        base.log_every = std::max<std::size_t>(base.steps / 50, 1);

        TrainEngine eng(base, task.train, task.test);
        if (!cfg.init_checkpoint.empty()) {
            const Checkpoint ck = read_checkpoint(cfg.init_checkpoint);
            eng.init_from_params(*ck.find("params"));
        } else {
            eng.init_fresh();
        }
        eng.run();

        Mat eval_X(std::min(cfg.eval_subset, task.test.X.rows), task.test.X.cols);
        for (std::size_t i = 0; i < eval_X.rows; ++i)
            std::copy(task.test.X.row(i), task.test.X.row(i) + task.test.X.cols,
                      eval_X.row(i));

        for (auto t_spawn : cfg.spawn_steps) {
            const std::size_t t0 = std::min(t_spawn, base.steps);
            const std::size_t t1 = std::min(t_spawn + horizon, base.steps);
            const RunSnapshot& s0 = eng.snapshots().at(t0);
            const RunSnapshot& s1 = eng.snapshots().at(t1);

            ParamVector p0 = eng.params();
            p0.values = s0.params;
            ParamVector p1 = eng.params();
            p1.values = s1.params;
            const auto drift = grad_drift_by_layer(base.arch, p0, p1, eval_X);
            for (const auto& ld : drift) {
                drift_csv.row({std::to_string(seed), std::to_string(t0), ld.layer,
                               CsvWriter::cell(ld.drift)});
                table[t0]["drift_" + ld.layer].values.push_back(ld.drift);
            }

            auto train_child = [&](std::uint64_t child_seed) {
                RunSpec child = base;
                child.snapshot_steps.clear();
                child.out_jsonl.clear();
                child.batch_seed = mix_seed(seed, t0, child_seed);
                TrainEngine ce(child, task.train, task.test);
                ce.init_from_snapshot(s0);
                ce.run();
                return ce.params();
            };
            const ParamVector theta_a = train_child(cfg.child_seed_a);
            const ParamVector theta_b = train_child(cfg.child_seed_b);

            const BarrierReport rep = barrier_scan(base.arch, theta_a, theta_b,
                                                   cfg.alpha_grid, task.test.X, task.test.y,
                                                   base.loss);
            for (const auto& row : rep.rows)
                barrier_csv.row({std::to_string(seed), std::to_string(t0),
                                 CsvWriter::cell(row.alpha), CsvWriter::cell(row.loss_lmc),
                                 CsvWriter::cell(row.loss_avg), CsvWriter::cell(row.acc_lmc),
                                 CsvWriter::cell(row.acc_avg)});
            table[t0]["barrier"].values.push_back(rep.barrier);
            table[t0]["acc_gap"].values.push_back(rep.acc_gap);
        }
    }

    std::set<std::string> keys;
    for (const auto& [t, row] : table)
        for (const auto& [k, v] : row) keys.insert(k);
    std::vector<std::string> header = {"spawn_step"};
    for (const auto& k : keys) {
        header.push_back(k + "_mean");
        header.push_back(k + "_se");
    }
    CsvWriter csv(cfg.output_dir + "/summary.csv", header);
    for (const auto& [t, row] : table) {
        std::vector<std::string> cells = {std::to_string(t)};
        for (const auto& k : keys) {
            const auto it = row.find(k);
            if (it == row.end()) {
                cells.push_back("");
                cells.push_back("");
            } else {
                cells.push_back(CsvWriter::cell(it->second.mean()));
                cells.push_back(CsvWriter::cell(it->second.se()));
            }
        }
        csv.row(cells);
    }
}

}  // namespace

void run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    ensure_dir(cfg.output_dir);
    write_run_manifest(cfg);
    if (cfg.name == "approx-error") run_approx_error(cfg);
    else if (cfg.name == "double-descent") run_double_descent(cfg);
    else if (cfg.name == "grokking") run_grokking(cfg);
    else if (cfg.name == "gbt-compare") run_gbt_compare(cfg);
    else run_lmc(cfg);
}

void resume_experiment(const std::string& ckpt_path, const ExperimentConfig& cfg) {
    cfg.validate();
    const Checkpoint ck = read_checkpoint(ckpt_path);
    const std::string exp = ck.meta.at("experiment").get<std::string>();
    if (exp != cfg.name)
        throw std::runtime_error("resume: checkpoint belongs to experiment '" + exp + "'");
    const std::uint64_t seed = ck.meta.at("seed").get<std::uint64_t>();

    if (cfg.name == "approx-error") {
        BinaryTask task = build_classification_data(cfg, seed);
        const std::size_t gi = ck.meta.at("gamma_index").get<std::size_t>();
        std::vector<double> gammas = cfg.gammas.empty() ? std::vector<double>{cfg.gamma}
                                                        : cfg.gammas;
        ExperimentConfig c = cfg;
        c.gamma = gammas.at(gi);
        RunSpec rs = runspec_from_config(c, seed, task.train.X.rows);
        rs.arch.input_dim = task.train.X.cols;
        rs.track_lin = true;
        rs.out_jsonl = cfg.output_dir + "/run_g" + std::to_string(gi) + "_seed" +
                       std::to_string(seed) + ".jsonl";
        rs.ckpt_prefix = cfg.output_dir + "/run_g" + std::to_string(gi) + "_seed" +
                         std::to_string(seed);
        rs.ckpt_meta = ck.meta;
        TrainEngine eng(rs, task.train, task.test);
        eng.init_from_checkpoint(ck);
        eng.run();
    } else if (cfg.name == "double-descent") {
        BinaryTask task = build_classification_data(cfg, seed);
        const std::size_t w = ck.meta.at("width").get<std::size_t>();
        ExperimentConfig c = cfg;
        c.hidden = {w};
        RunSpec rs = runspec_from_config(c, seed, task.train.X.rows);
        rs.arch.input_dim = task.train.X.cols;
        rs.out_jsonl = cfg.output_dir + "/run_w" + std::to_string(w) + "_seed" +
                       std::to_string(seed) + ".jsonl";
        rs.ckpt_prefix = cfg.output_dir + "/run_w" + std::to_string(w) + "_seed" +
                         std::to_string(seed);
        rs.ckpt_meta = ck.meta;
        TrainEngine eng(rs, task.train, task.test);
        eng.init_from_checkpoint(ck);
        eng.run();
    } else if (cfg.name == "grokking") {
        PolynomialTask task = polynomial_task(cfg.poly_d, cfg.n_train, cfg.n_test, seed);
        RunSpec rs = runspec_from_config(cfg, seed, task.train.X.rows);
        rs.arch.input_dim = task.train.X.cols;
        rs.out_jsonl = cfg.output_dir + "/run_seed" + std::to_string(seed) + ".jsonl";
        rs.ckpt_prefix = cfg.output_dir + "/run_seed" + std::to_string(seed);
        rs.ckpt_meta = ck.meta;
        TrainEngine eng(rs, task.train, task.test);
        eng.init_from_checkpoint(ck);
        eng.run();
    } else {
        throw std::runtime_error("resume: experiment '" + cfg.name +
                                 "' does not produce resumable checkpoints");
    }
}

void emit_gnuplot(const ExperimentConfig& cfg) {
    ensure_dir(cfg.output_dir);
    const std::string path = cfg.output_dir + "/plot_" + cfg.name + ".gp";
    std::ofstream out(path);
    out << "set datafile separator ','\nset key autotitle columnhead\nset grid\n";
    if (cfg.name == "approx-error") {
        out << "set logscale y\nset xlabel 'step'\nset ylabel 'mean |f - approx|'\n"
            << "plot 'summary.csv' using 2:3 with lines title 'telescoped', \\\n"
            << "     'summary.csv' using 2:5 with lines title 'linearized at init'\n";
    } else if (cfg.name == "double-descent") {
        out << "set logscale x\nset xlabel 'hidden units'\n"
            << "plot 'summary.csv' using 1:8 with linespoints title 'test err', \\\n"
            << "     'summary.csv' using 1:10 with linespoints title 'p_train', \\\n"
            << "     'summary.csv' using 1:12 with linespoints title 'p_test'\n";
    } else if (cfg.name == "grokking") {
        out << "set logscale xy\nset xlabel 'step'\n"
            << "plot 'summary.csv' using 1:2 with lines title 'train mse', \\\n"
            << "     'summary.csv' using 1:4 with lines title 'test mse', \\\n"
            << "     'summary.csv' using 1:6 with lines title 'p_train', \\\n"
            << "     'summary.csv' using 1:8 with lines title 'p_test'\n";
    } else if (cfg.name == "gbt-compare") {
        out << "set xlabel 'irregular proportion p'\n"
            << "plot 'summary.csv' using 1:6 with linespoints title 'relative mse', \\\n"
            << "     'summary.csv' using 1:8 with linespoints title 'nn kernel ratio', \\\n"
            << "     'summary.csv' using 1:10 with linespoints title 'gbt kernel ratio'\n";
    } else {
        out << "set xlabel 'spawn step'\n"
            << "plot 'summary.csv' using 1:4 with linespoints title 'barrier'\n";
    }
}

}  // namespace tlens
