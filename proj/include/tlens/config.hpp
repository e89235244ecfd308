#pragma once
// Experiment configuration: a flat sectioned key-value file, schema-validated
// before any compute. Unknown keys are rejected.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace tlens {

struct ExperimentConfig {
    // [experiment]
    std::string name;  // approx-error | double-descent | grokking | gbt-compare | lmc
    std::string output_dir;
    std::vector<std::uint64_t> seeds{1};
    std::size_t steps = 0;   // optimizer steps; 0 means use epochs
    std::size_t epochs = 0;
    std::size_t log_every = 10;
    std::vector<std::size_t> checkpoint_steps;

    // [data]
    std::string data_source = "synth-images";
    std::size_t n_train = 0, n_test = 0;
    unsigned class_a = 0, class_b = 1;
    double label_noise = 0.0;
    std::size_t down_h = 8, down_w = 8;
    std::string images_path, labels_path, csv_path, target_column;
    std::vector<std::string> log_columns;
    std::size_t poly_d = 100;
    std::size_t pool_size = 0;
    double irregular_frac = 0.10;
    std::vector<double> mixture_props{0.0, 0.1, 0.25, 0.5};
    std::size_t mixture_size = 1000;

    // [arch]
    std::vector<std::size_t> hidden;
    std::string activation = "relu";
    double quad_eps = 0.0;
    std::string output = "identity";
    bool final_trainable = true;
    double init_scale = 1.0;
    std::vector<std::size_t> width_sweep;

    // [optim]
    std::string optimizer = "sgd";
    std::string loss = "squared";
    double gamma = 0.01;
    std::vector<double> gammas;  // approx-error sweep; empty = just gamma
    double beta1 = 0.9, beta2 = 0.999, lambda = 0.0, eps = 1e-8;
    std::size_t warmup_steps = 0;
    std::vector<std::size_t> decay_steps;
    double decay_factor = 1.0;
    std::size_t batch_size = 0;  // 0 = full batch

    // [tracking]
    std::size_t test_subset = 500;
    bool track_train = true;
    bool track_lin = false;
    bool smoother = false;
    std::size_t smoother_budget = 200000000;
    std::string residuals = "network";  // network | telescoped
    double invariant_tol = 0.0;         // 0 disables the runtime guard
    std::size_t kernel_log_every = 0;   // 0 disables kernel-norm logging
    std::string head = "auto";          // auto | pre | post
    bool stop_at_interpolation = false;
    double stop_loss_improve = 0.0;
    std::size_t stop_patience_epochs = 0;

    // [gbt]
    std::size_t gbt_stages = 200;
    std::size_t gbt_depth = 3;
    double gbt_gamma = 0.1;

    // [lmc]
    std::vector<std::size_t> spawn_steps;
    std::size_t alpha_grid = 30;
    std::size_t drift_horizon = 0;  // 0 = one epoch of batches
    std::size_t eval_subset = 256;
    std::uint64_t child_seed_a = 101, child_seed_b = 202;
    std::string init_checkpoint;

    static ExperimentConfig load(const std::string& path);
    static ExperimentConfig parse(const std::string& text);
    void validate() const;
    std::string fingerprint() const;  // canonical form, hashed into run manifests
};

// Raw sectioned key-value parse (exposed for tests).
std::map<std::string, std::map<std::string, std::string>> parse_kv_sections(
    const std::string& text);

}  // namespace tlens
