#pragma once
// Fully-connected network engine: deterministic init, forward evaluation and
// exact per-example parameter gradients via explicit backprop.
//
// Three architecture families are supported:
//   * standard MLPs (ReLU hidden layers with biases, trainable affine head,
//     optionally a sigmoid on the scalar output),
//   * the pure linear map f(x) = Wx (hidden_dims empty, no bias), and
//   * the frozen-head quadratic net f(x) = (1/n_h) sum_j phi(w_j . x) with
//     phi(h) = h + (eps/2) h^2, no biases, output weights fixed at 1/n_h.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tlens/mat.hpp"

namespace tlens {

enum class HiddenAct { relu, quad };
enum class OutputAct { identity, sigmoid };
enum class Loss { squared, bce };

// Which output the gradient/kernel machinery differentiates: the pre-activation
// g(x) or the post-activation sigmoid(g(x)). Irrelevant for identity heads.
enum class GradHead { pre, post };

struct ArchSpec {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden_dims;
    std::size_t output_dim = 1;
    HiddenAct hidden_activation = HiddenAct::relu;
    double quad_eps = 0.0;
    OutputAct output_activation = OutputAct::identity;
    bool final_layer_trainable = true;

    void validate() const;
    bool is_linear_map() const { return hidden_dims.empty(); }
    bool is_frozen_quad() const {
        return hidden_activation == HiddenAct::quad && !final_layer_trainable;
    }
    std::size_t param_count() const;
};

struct LayoutEntry {
    std::string name;  // "w0", "b0", "w1", ...
    std::size_t rows = 0, cols = 0;  // biases: rows x 1
    std::size_t offset = 0;
};

struct ParamVector {
    Vec values;
    std::vector<LayoutEntry> layout;

    std::size_t size() const { return values.size(); }
    const LayoutEntry& entry(const std::string& name) const;
};

// Deterministic constructor. ReLU/linear weights are Kaiming-uniform fan-in
// scaled, biases zero; the frozen quadratic net draws standard normals. The
// whole vector is then multiplied by init_scale.
ParamVector build_network(const ArchSpec& spec, std::uint64_t seed, double init_scale);

struct FwdCache {
    std::vector<Vec> act;  // act[0] = x, then post-activation per hidden layer
    std::vector<Vec> pre;  // pre-activation per hidden layer
    double out_pre = 0.0;
    double out_post = 0.0;
};

void forward(const ArchSpec& spec, const ParamVector& params, const double* x, FwdCache& c);
double predict(const ArchSpec& spec, const ParamVector& params, const double* x,
               bool pre_activation = false);

// Exact reverse-mode gradient of the scalar output w.r.t. every parameter.
void predict_grad(const ArchSpec& spec, const ParamVector& params, const double* x,
                  double* grad /* size p */, GradHead head = GradHead::post);

struct GradMatrix {
    // Row j holds batch_scale * grad at example indices[j]; semantically these
    // are the nonzero columns of the p x n batch-gradient matrix.
    Mat rows;
    std::vector<std::size_t> indices;
    double batch_scale = 0.0;
};

GradMatrix batch_grad_matrix(const ParamVector& params, const std::vector<std::size_t>& batch,
                             const Mat& X, const ArchSpec& spec, GradHead head = GradHead::post);

// (loss value, d loss / d prediction)
struct LossGrad {
    double loss;
    double grad;
};
LossGrad loss_and_grad(double pred, double y, Loss loss);

// ---------------------------------------------------------------------------
// Tangent features: per-example data from which pairwise gradient inner
// products can be formed. The dense kind stores the whole gradient row; the
// structured kinds exploit the factorized gradients of shallow-ReLU and
// frozen-quadratic nets and need the raw input Gram from the caller. All
// kinds are equivalence-tested against the dense reference.
// ---------------------------------------------------------------------------

enum class FeatKind { dense, shallow_relu, frozen_quad };

struct TangentFeatures {
    FeatKind kind = FeatKind::dense;
    std::size_t count = 0;
    Mat dense;      // count x p
    Mat h;          // shallow_relu: post-activation hidden rows
    Mat u;          // shallow_relu: u_j = v_j * 1[pre_j > 0]
    Mat a;          // frozen_quad: a_j = phi'(pre_j) / n_h
    Vec out_scale;  // per-row multiplier (sigmoid' for post-head), else empty
};

// Picks the cheapest exact representation for this architecture.
FeatKind feature_kind(const ArchSpec& spec);

// Builds features for every row of X (callers gather the inputs they want).
void tangent_features(const ArchSpec& spec, const ParamVector& params, const Mat& X,
                      TangentFeatures& out, GradHead head = GradHead::post);
void tangent_features_as(FeatKind kind, const ArchSpec& spec, const ParamVector& params,
                         const Mat& X, TangentFeatures& out, GradHead head = GradHead::post);

// K[i][j] = grad(rowsF i) . grad(colsF j); input_gram (rows x cols raw input
// dot products) required for the structured kinds.
void kernel_block(const TangentFeatures& rowsF, const TangentFeatures& colsF,
                  const Mat* input_gram, Mat& K);

// Raw input Gram helper: G[i][j] = A row i . B row j.
void input_gram(const Mat& A, const Mat& B, Mat& G);

}  // namespace tlens
