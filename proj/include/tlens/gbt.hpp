#pragma once
// Gradient-boosted regression trees (squared loss) with explicit tree-kernel
// extraction. Stage t fits the current negative loss gradients with an
// axis-aligned regression tree whose leaves predict the mean of their members;
// a leaf therefore acts as the kernel row
//   K_t(x, x_i) = 1{leaf(x) = leaf(x_i)} / n_leaf(x).

#include <cstdint>
#include <string>
#include <vector>

#include "tlens/mat.hpp"

namespace tlens {

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
    std::vector<std::uint32_t> members;  // leaf only: training indices
};

struct Tree {
    std::vector<TreeNode> nodes;
    int route(const double* x) const;
    double predict(const double* x) const { return nodes[route(x)].value; }
};

struct GbtConfig {
    std::size_t stages = 200;
    std::size_t max_depth = 3;
    double gamma = 0.1;
    bool mean_baseline = true;  // h0 = mean(y); otherwise h0 = 0
};

struct TreeEnsemble {
    double h0 = 0.0;
    double gamma = 0.0;
    std::size_t n_train = 0;
    std::vector<Tree> stages;
    std::vector<Vec> stage_grads;  // g_it = f_{t-1}(x_i) - y_i per stage

    double predict(const double* x) const;
    // h0 - gamma * sum_t sum_i K_t(x, x_i) g_it; must equal predict() exactly.
    double kernel_form_predict(const double* x) const;
};

TreeEnsemble fit_gbt(const Mat& X, const Vec& y, const GbtConfig& cfg);

struct KernelRowTree {
    std::vector<std::uint32_t> support;  // leaf members
    double weight = 0.0;                 // 1 / n_leaf
    std::size_t n = 0;

    double norm2() const;  // = 1/sqrt(|support|)
    Vec dense() const;
};

KernelRowTree tree_kernel_row(const TreeEnsemble& ens, std::size_t stage, const double* x);

// (1/T) sum_t max_j ||k_t(test_j)|| divided by the train analogue. Rows of the
// inputs are per-logged-step row norms.
double kernel_norm_ratio(const Mat& test_norms, const Mat& train_norms);

// (mse_nn_p - mse_gbt_p) / (mse_nn_0 - mse_gbt_0); the denominator must be
// nonzero.
double relative_mse(double nn_mse_p, double gbt_mse_p, double nn_mse_0, double gbt_mse_0);

std::string to_json(const TreeEnsemble& ens);
TreeEnsemble ensemble_from_json(const std::string& text);

}  // namespace tlens
