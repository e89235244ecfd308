#include "tlens/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace tlens {

int Tree::route(const double* x) const {
    int id = 0;
    while (nodes[id].feature >= 0)
        id = x[nodes[id].feature] <= nodes[id].threshold ? nodes[id].left : nodes[id].right;
    return id;
}

double TreeEnsemble::predict(const double* x) const {
    double f = h0;
    for (const auto& t : stages) f += gamma * t.predict(x);
    return f;
}

double TreeEnsemble::kernel_form_predict(const double* x) const {
    double f = h0;
    for (std::size_t t = 0; t < stages.size(); ++t) {
        const TreeNode& leaf = stages[t].nodes[stages[t].route(x)];
        double s = 0.0;
        for (auto i : leaf.members) s += stage_grads[t][i];
        f -= gamma * s / static_cast<double>(leaf.members.size());
    }
    return f;
}

namespace {

struct SplitChoice {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

// Exact greedy variance reduction over sorted thresholds; ties resolved toward
// the lowest feature index then the lowest threshold (the scan visits
// candidates in exactly that order and only a strictly larger gain wins).
SplitChoice best_split(const Mat& X, const Vec& target, const std::vector<std::uint32_t>& members) {
    SplitChoice best;
    const std::size_t nm = members.size();
    if (nm < 2) return best;

    double total = 0.0, total_sq = 0.0;
    for (auto i : members) {
        total += target[i];
        total_sq += target[i] * target[i];
    }
    const double parent_sse = total_sq - total * total / static_cast<double>(nm);

    std::vector<std::uint32_t> order(members);
    for (std::size_t f = 0; f < X.cols; ++f) {
        std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
            return X(a, f) < X(b, f);
        });
        double left = 0.0, left_sq = 0.0;
        for (std::size_t k = 0; k + 1 < nm; ++k) {
            const double v = target[order[k]];
            left += v;
            left_sq += v * v;
            const double xv = X(order[k], f);
            const double xn = X(order[k + 1], f);
            if (xn <= xv) continue;  // no threshold between equal values
            const double nl = static_cast<double>(k + 1);
            const double nr = static_cast<double>(nm - k - 1);
            const double right = total - left;
            const double right_sq = total_sq - left_sq;
            const double sse = (left_sq - left * left / nl) + (right_sq - right * right / nr);
            const double gain = parent_sse - sse;
            if (gain > best.gain) {
                best.found = true;
                best.feature = static_cast<int>(f);
                best.threshold = 0.5 * (xv + xn);
                best.gain = gain;
            }
        }
    }
    return best;
}

void grow(Tree& tree, int node, const Mat& X, const Vec& target,
          std::vector<std::uint32_t> members, std::size_t depth, std::size_t max_depth) {
    double mean = 0.0;
    for (auto i : members) mean += target[i];
    mean /= static_cast<double>(members.size());

    SplitChoice sp;
    if (depth < max_depth) sp = best_split(X, target, members);
    if (!sp.found) {
        tree.nodes[node].feature = -1;
        tree.nodes[node].value = mean;
        tree.nodes[node].members = std::move(members);
        return;
    }

    std::vector<std::uint32_t> lm, rm;
    for (auto i : members)
        (X(i, sp.feature) <= sp.threshold ? lm : rm).push_back(i);

    tree.nodes[node].feature = sp.feature;
    tree.nodes[node].threshold = sp.threshold;
    const int li = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    const int ri = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes[node].left = li;
    tree.nodes[node].right = ri;
    grow(tree, li, X, target, std::move(lm), depth + 1, max_depth);
    grow(tree, ri, X, target, std::move(rm), depth + 1, max_depth);
}

}  // namespace

TreeEnsemble fit_gbt(const Mat& X, const Vec& y, const GbtConfig& cfg) {
    const std::size_t n = X.rows;
    if (n < 2) throw std::invalid_argument("fit_gbt: need at least two training examples");
    if (cfg.stages < 1) throw std::invalid_argument("fit_gbt: need at least one stage");
    if (y.size() != n) throw std::invalid_argument("fit_gbt: label count mismatch");

    TreeEnsemble ens;
    ens.gamma = cfg.gamma;
    ens.n_train = n;
    ens.h0 = 0.0;
    if (cfg.mean_baseline) {
        for (auto v : y) ens.h0 += v;
        ens.h0 /= static_cast<double>(n);
    }

    Vec f(n, ens.h0);
    Vec target(n);
    std::vector<std::uint32_t> all(n);
    std::iota(all.begin(), all.end(), 0u);

    for (std::size_t t = 0; t < cfg.stages; ++t) {
        Vec g(n);
        for (std::size_t i = 0; i < n; ++i) {
            g[i] = f[i] - y[i];  // d/df of 0.5 (y - f)^2
            target[i] = -g[i];
        }
        ens.stage_grads.push_back(g);

        Tree tree;
        tree.nodes.emplace_back();
        grow(tree, 0, X, target, all, 0, cfg.max_depth);
        for (std::size_t i = 0; i < n; ++i) f[i] += cfg.gamma * tree.predict(X.row(i));
        ens.stages.push_back(std::move(tree));
    }
    return ens;
}

double KernelRowTree::norm2() const {
    return std::sqrt(static_cast<double>(support.size())) * weight;
}

Vec KernelRowTree::dense() const {
    Vec row(n, 0.0);
    for (auto i : support) row[i] = weight;
    return row;
}

KernelRowTree tree_kernel_row(const TreeEnsemble& ens, std::size_t stage, const double* x) {
    if (stage >= ens.stages.size()) throw std::out_of_range("tree_kernel_row: no such stage");
    const Tree& tree = ens.stages[stage];
    const TreeNode& leaf = tree.nodes[tree.route(x)];
    KernelRowTree row;
    row.support = leaf.members;
    row.weight = 1.0 / static_cast<double>(leaf.members.size());
    row.n = ens.n_train;
    return row;
}

double kernel_norm_ratio(const Mat& test_norms, const Mat& train_norms) {
    if (test_norms.rows == 0 || train_norms.rows == 0 || test_norms.cols == 0 ||
        train_norms.cols == 0)
        throw std::invalid_argument("kernel_norm_ratio: empty index set");
    if (test_norms.rows != train_norms.rows)
        throw std::invalid_argument("kernel_norm_ratio: step counts differ");
    double num = 0.0, den = 0.0;
    for (std::size_t t = 0; t < test_norms.rows; ++t) {
        num += *std::max_element(test_norms.row(t), test_norms.row(t) + test_norms.cols);
        den += *std::max_element(train_norms.row(t), train_norms.row(t) + train_norms.cols);
    }
    return num / den;
}

double relative_mse(double nn_mse_p, double gbt_mse_p, double nn_mse_0, double gbt_mse_0) {
    const double den = nn_mse_0 - gbt_mse_0;
    if (den == 0.0)
        throw std::invalid_argument("relative_mse: undefined normalization (p=0 baseline tie)");
    return (nn_mse_p - gbt_mse_p) / den;
}

std::string to_json(const TreeEnsemble& ens) {
    nlohmann::json j;
    j["h0"] = ens.h0;
    j["gamma"] = ens.gamma;
    j["n_train"] = ens.n_train;
    auto& stages = j["stages"] = nlohmann::json::array();
    for (const auto& t : ens.stages) {
        nlohmann::json jt = nlohmann::json::array();
        for (const auto& nd : t.nodes) {
            nlohmann::json jn;
            jn["feature"] = nd.feature;
            if (nd.feature >= 0) {
                jn["threshold"] = nd.threshold;
                jn["left"] = nd.left;
                jn["right"] = nd.right;
            } else {
                jn["value"] = nd.value;
                jn["members"] = nd.members;
            }
            jt.push_back(jn);
        }
        stages.push_back(jt);
    }
    auto& grads = j["stage_grads"] = nlohmann::json::array();
    for (const auto& g : ens.stage_grads) grads.push_back(g);
    return j.dump();
}

TreeEnsemble ensemble_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    TreeEnsemble ens;
    ens.h0 = j.at("h0").get<double>();
    ens.gamma = j.at("gamma").get<double>();
    ens.n_train = j.at("n_train").get<std::size_t>();
    for (const auto& jt : j.at("stages")) {
        Tree t;
        for (const auto& jn : jt) {
            TreeNode nd;
            nd.feature = jn.at("feature").get<int>();
            if (nd.feature >= 0) {
                nd.threshold = jn.at("threshold").get<double>();
                nd.left = jn.at("left").get<int>();
                nd.right = jn.at("right").get<int>();
            } else {
                nd.value = jn.at("value").get<double>();
                nd.members = jn.at("members").get<std::vector<std::uint32_t>>();
            }
            t.nodes.push_back(std::move(nd));
        }
        ens.stages.push_back(std::move(t));
    }
    for (const auto& g : j.at("stage_grads")) ens.stage_grads.push_back(g.get<Vec>());
    return ens;
}

}  // namespace tlens
