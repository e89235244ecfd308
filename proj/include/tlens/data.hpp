#pragma once
// Dataset ingestion, preprocessing, corruption and synthetic task generation.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tlens/mat.hpp"

namespace tlens {

struct Dataset {
    Mat X;
    Vec y;
    std::string provenance;
};

// ---------------------------------------------------------------------------
// IDX (big-endian magic 0x00000803 images / 0x00000801 labels)
// ---------------------------------------------------------------------------

struct RawImages {
    std::size_t count = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> pixels;  // count * height * width
    std::vector<std::uint8_t> labels;  // count
};

RawImages load_idx(const std::string& images_path, const std::string& labels_path);

// Area-weighted average-pool resize of one image (exact block pooling when the
// sizes divide); output scaled to [0,1].
void downsample_image(const std::uint8_t* src, std::size_t sh, std::size_t sw, double* dst,
                      std::size_t dh, std::size_t dw);

struct BinaryTask {
    Dataset train;
    Dataset test;
};

BinaryTask make_binary_task(const RawImages& raw, unsigned class_a, unsigned class_b,
                            std::size_t n_train, std::size_t n_test, std::size_t down_h,
                            std::size_t down_w, std::uint64_t seed);

// Flips exactly floor(rate * n) labels of the given (training) split, chosen
// uniformly without replacement.
void add_label_noise(Dataset& ds, double rate, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic tasks
// ---------------------------------------------------------------------------

struct PolynomialTask {
    Dataset train;
    Dataset test;
    Vec beta;  // unit norm
};

// x ~ N(0, I/d), y = 0.5 (beta . x)^2.
PolynomialTask polynomial_task(std::size_t d, std::size_t n_train, std::size_t n_test,
                               std::uint64_t seed);

// Two-class 1-D sequence task (d=40) with template shapes, per-sample shift,
// amplitude jitter, correlated bumps and white noise.
BinaryTask synth_mnist1d(std::size_t n_train, std::size_t n_test, std::uint64_t seed);

// 8x8 two-class image task; class ids 0..3 carry distinct blob patterns so a
// disjoint pair can serve as a pretraining task.
BinaryTask synth_images(unsigned class_a, unsigned class_b, std::size_t n_train,
                        std::size_t n_test, std::uint64_t seed);

// Heavy-tailed tabular regression (d=10): correlated lognormal-scaled inputs
// and a piecewise outcome with interactions.
struct TabularTask {
    Dataset train;
    Dataset test_pool;  // large pool to split into regular / irregular
};
TabularTask synth_heavy_tailed(std::size_t n_train, std::size_t n_pool, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Irregularity machinery (PCA-based)
// ---------------------------------------------------------------------------

// Indices sorted descending by |PC1 score - median(PC1 scores)| on standardized
// features; ties broken by index.
std::vector<std::size_t> pca_irregularity_rank(const Mat& X);

// floor(p * size) rows from the irregular pool + remainder from the regular
// pool, deterministic per seed.
Dataset build_mixture_testset(const Dataset& regular, const Dataset& irregular, double p,
                              std::size_t size, std::uint64_t seed);

// ---------------------------------------------------------------------------
// CSV tabular loader
// ---------------------------------------------------------------------------

struct TabularTransforms {
    std::vector<std::string> log_columns;  // natural log applied before scaling
    bool standardize_features = true;
    bool rescale_target = true;
};

struct TabularManifest {
    std::vector<std::string> feature_names;
    std::string target_name;
    std::vector<std::string> log_columns;
    Vec feature_mean, feature_sd;
    double target_mean = 0.0, target_sd = 1.0;
    std::string to_json() const;
};

struct TabularData {
    Dataset data;
    TabularManifest manifest;
};

TabularData load_csv_tabular(const std::string& path, const std::string& target_column,
                             const TabularTransforms& tf);

// Leading eigenpair of a symmetric matrix by cyclic Jacobi (exact, d small).
void sym_eig_leading(const Mat& A, double& value, Vec& vector);

void check_finite(const Dataset& ds);

}  // namespace tlens
