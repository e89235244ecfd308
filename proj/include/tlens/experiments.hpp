#pragma once
// Config-driven experiment runner: builds datasets, trains networks while
// maintaining the telescoped/linearized accumulators and the smoother
// decomposition, and writes JSONL metric logs plus cross-seed CSV summaries.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tlens/config.hpp"
#include "tlens/data.hpp"
#include "tlens/io.hpp"
#include "tlens/net.hpp"
#include "tlens/rng.hpp"
#include "tlens/optim.hpp"
#include "tlens/smoother.hpp"
#include "tlens/telescope.hpp"

namespace tlens {

struct RunSpec {
    ArchSpec arch;
    OptimConfig optim;
    Loss loss = Loss::squared;
    std::size_t steps = 0;
    std::size_t batch_size = 0;  // 0 = full batch
    std::uint64_t init_seed = 1;
    std::uint64_t batch_seed = 1;
    double init_scale = 1.0;

    std::size_t test_subset = 500;
    bool track_train = true;
    bool track_lin = false;
    bool smoother_on = false;
    std::size_t smoother_budget = 200000000;
    bool telescoped_residuals = false;
    double invariant_tol = 0.0;
    std::size_t kernel_log_every = 0;
    GradHead head = GradHead::pre;

    std::size_t log_every = 10;
    std::vector<std::size_t> checkpoint_steps;
    std::vector<std::size_t> snapshot_steps;  // in-memory (params + optimizer)
    std::string out_jsonl;                    // empty disables logging
    std::string ckpt_prefix;
    nlohmann::json ckpt_meta;  // run identity embedded in checkpoints

    bool stop_at_interpolation = false;
    double stop_loss_improve = 0.0;
    std::size_t stop_patience_epochs = 0;
};

struct RunSnapshot {
    Vec params;
    OptimState optim;
    std::size_t step = 0;
};

class TrainEngine {
public:
    TrainEngine(RunSpec spec, const Dataset& train, const Dataset& test);

    void init_fresh();
    void init_from_params(const Vec& params0);  // pretrained start
    void init_from_snapshot(const RunSnapshot& snap);
    void init_from_checkpoint(const Checkpoint& ckpt);

    void run();           // up to spec.steps (or early stop)
    void run_steps(std::size_t count);

    Checkpoint make_checkpoint() const;

    const RunSpec& spec() const { return spec_; }
    const ParamVector& params() const { return params_; }
    const OptimState& optim_state() const { return optim_; }
    const TraceSet& train_traces() const { return train_traces_; }
    const TraceSet& test_traces() const { return test_traces_; }
    const SmootherState& smoother() const { return smoother_; }
    std::size_t step() const { return step_; }
    bool stopped_early() const { return stopped_early_; }
    const nlohmann::json& last_record() const { return last_record_; }
    const std::map<std::size_t, RunSnapshot>& snapshots() const { return snapshots_; }

    // (step, max train kernel row norm, extra-set row norms) per kernel-log step
    struct KernelNormLog {
        std::size_t step;
        double train_max;
        Vec extra_norms;
    };
    const std::vector<KernelNormLog>& kernel_norm_log() const { return knorm_log_; }
    void set_extra_eval(const Mat& X) { extra_eval_ = X; }

private:
    void one_step();
    void log_metrics(bool force);
    void log_kernel_norms();
    void next_batch(std::vector<std::size_t>& batch);
    void maybe_checkpoint();
    double smoother_drift() const;
    nlohmann::json arch_json() const;

    RunSpec spec_;
    Dataset train_, test_;
    Mat test_tracked_;  // first test_subset rows of test_.X
    Vec test_tracked_y_;

    ParamVector params_;
    OptimState optim_;
    TraceSet train_traces_, test_traces_;
    SmootherState smoother_;
    SmootherConfig smoother_cfg_;

    bool kernel_mode_ = false;
    FeatKind feat_kind_ = FeatKind::dense;
    Mat gram_train_train_, gram_test_train_, gram_extra_train_;
    Mat x_train_T_;  // transposed train inputs (structured raw-grad path)
    Mat extra_eval_;

    Rng batch_rng_;
    std::vector<std::size_t> perm_;
    std::size_t perm_pos_ = 0;
    std::size_t batches_per_epoch_ = 1;

    std::size_t step_ = 0;
    bool stopped_early_ = false;
    double best_train_loss_ = 1e300;
    std::size_t epochs_since_improve_ = 0;

    std::optional<JsonlWriter> jsonl_;
    nlohmann::json last_record_;
    std::vector<KernelNormLog> knorm_log_;
    std::map<std::size_t, RunSnapshot> snapshots_;
    double wall_start_ms_ = 0.0;
};

// Experiment entry points.
void run_experiment(const ExperimentConfig& cfg);
void resume_experiment(const std::string& ckpt_path, const ExperimentConfig& cfg);
void emit_gnuplot(const ExperimentConfig& cfg);

// Shared helpers (also used by the acceptance suite).
ArchSpec arch_from_config(const ExperimentConfig& cfg);
OptimConfig optim_from_config(const ExperimentConfig& cfg);
BinaryTask build_classification_data(const ExperimentConfig& cfg, std::uint64_t seed);

}  // namespace tlens
