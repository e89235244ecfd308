#include "tlens/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "tlens/rng.hpp"

namespace tlens {

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error("idx: truncated " + what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

double gauss_bump(double t, double mu, double sigma) {
    const double z = (t - mu) / sigma;
    return std::exp(-0.5 * z * z);
}

}  // namespace

RawImages load_idx(const std::string& images_path, const std::string& labels_path) {
    RawImages raw;
    {
        std::ifstream in(images_path, std::ios::binary);
        if (!in) throw std::runtime_error("idx: cannot open " + images_path);
        if (read_be32(in, "image magic") != 0x00000803u)
            throw std::runtime_error("idx: bad image magic in " + images_path);
        raw.count = read_be32(in, "image count");
        raw.height = read_be32(in, "image rows");
        raw.width = read_be32(in, "image cols");
        raw.pixels.resize(raw.count * raw.height * raw.width);
        if (!in.read(reinterpret_cast<char*>(raw.pixels.data()),
                     static_cast<std::streamsize>(raw.pixels.size())))
            throw std::runtime_error("idx: truncated image payload in " + images_path);
    }
    {
        std::ifstream in(labels_path, std::ios::binary);
        if (!in) throw std::runtime_error("idx: cannot open " + labels_path);
        if (read_be32(in, "label magic") != 0x00000801u)
            throw std::runtime_error("idx: bad label magic in " + labels_path);
        const std::uint32_t n = read_be32(in, "label count");
        if (n != raw.count)
            throw std::runtime_error("idx: label count does not match image count");
        raw.labels.resize(n);
        if (!in.read(reinterpret_cast<char*>(raw.labels.data()),
                     static_cast<std::streamsize>(n)))
            throw std::runtime_error("idx: truncated label payload in " + labels_path);
    }
    return raw;
}

void downsample_image(const std::uint8_t* src, std::size_t sh, std::size_t sw, double* dst,
                      std::size_t dh, std::size_t dw) {
    const double ry = static_cast<double>(sh) / static_cast<double>(dh);
    const double rx = static_cast<double>(sw) / static_cast<double>(dw);
    for (std::size_t i = 0; i < dh; ++i) {
        const double y0 = i * ry, y1 = (i + 1) * ry;
        for (std::size_t j = 0; j < dw; ++j) {
            const double x0 = j * rx, x1 = (j + 1) * rx;
            double acc = 0.0;
            for (std::size_t sy = static_cast<std::size_t>(y0); sy < sh && sy < y1; ++sy) {
                const double hy = std::min(y1, double(sy + 1)) - std::max(y0, double(sy));
                if (hy <= 0.0) continue;
                for (std::size_t sx = static_cast<std::size_t>(x0); sx < sw && sx < x1; ++sx) {
                    const double hx = std::min(x1, double(sx + 1)) - std::max(x0, double(sx));
                    if (hx <= 0.0) continue;
                    acc += hy * hx * src[sy * sw + sx];
                }
            }
            dst[i * dw + j] = acc / (ry * rx) / 255.0;
        }
    }
}

BinaryTask make_binary_task(const RawImages& raw, unsigned class_a, unsigned class_b,
                            std::size_t n_train, std::size_t n_test, std::size_t down_h,
                            std::size_t down_w, std::uint64_t seed) {
    std::vector<std::size_t> pool_a, pool_b;
    for (std::size_t i = 0; i < raw.count; ++i) {
        if (raw.labels[i] == class_a) pool_a.push_back(i);
        if (raw.labels[i] == class_b) pool_b.push_back(i);
    }
    if (pool_a.empty() || pool_b.empty())
        throw std::runtime_error("make_binary_task: requested class not present");

    Rng rng_a = Rng::stream(seed, "binary_task.a");
    Rng rng_b = Rng::stream(seed, "binary_task.b");
    rng_a.shuffle(pool_a);
    rng_b.shuffle(pool_b);

    const std::size_t total = n_train + n_test;
    std::size_t ia = 0, ib = 0;
    const std::size_t d = down_h * down_w;
    auto take = [&](Dataset& ds, std::size_t n, const char* tag) {
        ds.X.assign(n, d);
        ds.y.assign(n, 0.0);
        for (std::size_t k = 0; k < n; ++k) {
            const bool use_a = (k % 2 == 0);
            std::size_t src;
            if (use_a) {
                if (ia >= pool_a.size())
                    throw std::runtime_error("make_binary_task: insufficient examples");
                src = pool_a[ia++];
            } else {
                if (ib >= pool_b.size())
                    throw std::runtime_error("make_binary_task: insufficient examples");
                src = pool_b[ib++];
            }
            downsample_image(raw.pixels.data() + src * raw.height * raw.width, raw.height,
                             raw.width, ds.X.row(k), down_h, down_w);
            ds.y[k] = use_a ? 0.0 : 1.0;
        }
        ds.provenance = tag;
    };

    (void)total;
    BinaryTask task;
    take(task.train, n_train, "idx-train");
    take(task.test, n_test, "idx-test");
    check_finite(task.train);
    check_finite(task.test);
    return task;
}

void add_label_noise(Dataset& ds, double rate, std::uint64_t seed) {
    if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("label noise rate outside [0,1]");
    const std::size_t n = ds.y.size();
    const std::size_t flips = static_cast<std::size_t>(rate * static_cast<double>(n));
    if (flips == 0) return;
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng = Rng::stream(seed, "label_noise");
    for (std::size_t i = 0; i < flips; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(idx[i], idx[j]);
    }
    for (std::size_t i = 0; i < flips; ++i) ds.y[idx[i]] = 1.0 - ds.y[idx[i]];
}

PolynomialTask polynomial_task(std::size_t d, std::size_t n_train, std::size_t n_test,
                               std::uint64_t seed) {
    if (d < 1) throw std::invalid_argument("polynomial_task: d must be >= 1");
    PolynomialTask task;
    Rng rng_beta = Rng::stream(seed, "poly.beta");
    task.beta.resize(d);
    double norm = 0.0;
    for (auto& b : task.beta) {
        b = rng_beta.normal();
        norm += b * b;
    }
    norm = std::sqrt(norm);
    for (auto& b : task.beta) b /= norm;

    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    auto fill = [&](Dataset& ds, std::size_t n, const char* tag, Rng& rng) {
        ds.X.assign(n, d);
        ds.y.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double* x = ds.X.row(i);
            double ip = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                x[k] = sd * rng.normal();
                ip += task.beta[k] * x[k];
            }
            ds.y[i] = 0.5 * ip * ip;
        }
        ds.provenance = tag;
    };
    Rng rng_tr = Rng::stream(seed, "poly.train");
    Rng rng_te = Rng::stream(seed, "poly.test");
    fill(task.train, n_train, "polynomial-train", rng_tr);
    fill(task.test, n_test, "polynomial-test", rng_te);
    return task;
}

BinaryTask synth_mnist1d(std::size_t n_train, std::size_t n_test, std::uint64_t seed) {
    constexpr std::size_t d = 40;
    // Overlapping class templates under heavy per-sample distortion (shift,
    // stretch, amplitude jitter, correlated bumps, white noise), so that small
    // networks underfit, mid-capacity ones can contort onto corrupted labels
    // and only wide ones interpolate smoothly.
    auto tmpl = [](unsigned cls, double t) {
        if (cls == 0)
            return gauss_bump(t, 0.25, 0.07) + 0.8 * gauss_bump(t, 0.55, 0.09) -
                   0.6 * gauss_bump(t, 0.80, 0.08);
        return 0.9 * gauss_bump(t, 0.32, 0.08) + 0.85 * gauss_bump(t, 0.62, 0.07) -
               0.5 * gauss_bump(t, 0.06, 0.06);
    };
    auto fill = [&](Dataset& ds, std::size_t n, const char* tag, Rng& rng) {
        ds.X.assign(n, d);
        ds.y.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const unsigned cls = i % 2;
            const double shift = 0.3 * rng.uniform() - 0.15;
            const double stretch = 0.85 + 0.35 * rng.uniform();
            const double amp = 0.7 + 0.6 * rng.uniform();
            double bc[3], bw[3], ba[3];
            for (int r = 0; r < 3; ++r) {
                bc[r] = rng.uniform();
                bw[r] = 0.04 + 0.06 * rng.uniform();
                ba[r] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.15 + 0.35 * rng.uniform());
            }
            double* x = ds.X.row(i);
            for (std::size_t k = 0; k < d; ++k) {
                const double t = static_cast<double>(k) / static_cast<double>(d - 1);
                const double warped = (t - 0.5) / stretch + 0.5 - shift;
                double v = amp * tmpl(cls, warped);
                for (int r = 0; r < 3; ++r) v += ba[r] * gauss_bump(t, bc[r], bw[r]);
                v += 0.12 * rng.normal();
                x[k] = v;
            }
            ds.y[i] = static_cast<double>(cls);
        }
        ds.provenance = tag;
    };
    BinaryTask task;
    Rng rng_tr = Rng::stream(seed, "mnist1d.train");
    Rng rng_te = Rng::stream(seed, "mnist1d.test");
    fill(task.train, n_train, "synth-mnist1d-train", rng_tr);
    fill(task.test, n_test, "synth-mnist1d-test", rng_te);
    return task;
}

namespace {

void render_image_class(unsigned cls, Rng& rng, double* x) {
    struct Blob {
        double cy, cx, amp, sigma;
    };
    std::vector<Blob> blobs;
    switch (cls) {
        case 0:
            blobs = {{2.0, 2.0, 1.0, 1.0}, {5.0, 5.0, 0.9, 1.1}};
            break;
        case 1:
            blobs = {{2.0, 5.0, 1.0, 1.0}, {5.0, 2.0, 0.9, 1.1}};
            break;
        case 2:
            blobs = {{3.5, 3.5, 1.0, 1.6}};
            break;
        default:
            blobs = {{1.0, 3.5, 0.9, 0.8}, {6.0, 3.5, 0.9, 0.8}};
            break;
    }
    const double dy = 1.2 * rng.uniform() - 0.6;
    const double dx = 1.2 * rng.uniform() - 0.6;
    const double amp = 0.8 + 0.4 * rng.uniform();
    for (std::size_t iy = 0; iy < 8; ++iy) {
        for (std::size_t ix = 0; ix < 8; ++ix) {
            double v = 0.0;
            for (const auto& b : blobs) {
                const double r2 = (iy - b.cy - dy) * (iy - b.cy - dy) +
                                  (ix - b.cx - dx) * (ix - b.cx - dx);
                v += amp * b.amp * std::exp(-r2 / (2.0 * b.sigma * b.sigma));
            }
            v += 0.08 * rng.normal();
            x[iy * 8 + ix] = std::clamp(v, 0.0, 1.0);
        }
    }
}

}  // namespace

BinaryTask synth_images(unsigned class_a, unsigned class_b, std::size_t n_train,
                        std::size_t n_test, std::uint64_t seed) {
    auto fill = [&](Dataset& ds, std::size_t n, const char* tag, Rng& rng) {
        ds.X.assign(n, 64);
        ds.y.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const bool use_a = (i % 2 == 0);
            render_image_class(use_a ? class_a : class_b, rng, ds.X.row(i));
            ds.y[i] = use_a ? 0.0 : 1.0;
        }
        ds.provenance = tag;
    };
    BinaryTask task;
    Rng rng_tr = Rng::stream(seed, "images.train");
    Rng rng_te = Rng::stream(seed, "images.test");
    fill(task.train, n_train, "synth-images-train", rng_tr);
    fill(task.test, n_test, "synth-images-test", rng_te);
    return task;
}

TabularTask synth_heavy_tailed(std::size_t n_train, std::size_t n_pool, std::uint64_t seed) {
    constexpr std::size_t d = 10;
    auto outcome = [](const double* x) {
        double y = 0.0;
        y += 2.0 * (x[0] > 0.5 ? 1.0 : 0.0);
        y += 1.5 * ((x[1] <= -0.3 && x[2] > 0.0) ? 1.0 : 0.0);
        y += std::copysign(std::min(std::fabs(x[3]), 2.0), x[3]);
        y += 0.8 * std::tanh(x[4] + x[5]);
        y += 0.6 * (x[6] * x[7] > 0.8 ? 1.0 : 0.0);
        return y;
    };
    auto fill = [&](Dataset& ds, std::size_t n, const char* tag, Rng& rng) {
        ds.X.assign(n, d);
        ds.y.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double* x = ds.X.row(i);
            const double common = rng.normal();
            const double scale = std::exp(0.5 * rng.normal());  // shared heavy tail
            for (std::size_t k = 0; k < d; ++k)
                x[k] = scale * (0.4 * common + std::sqrt(1.0 - 0.16) * rng.normal());
            ds.y[i] = outcome(x) + 0.1 * rng.normal();
        }
        ds.provenance = tag;
    };
    TabularTask task;
    Rng rng_tr = Rng::stream(seed, "tabular.train");
    Rng rng_po = Rng::stream(seed, "tabular.pool");
    fill(task.train, n_train, "synth-tabular-train", rng_tr);
    fill(task.test_pool, n_pool, "synth-tabular-pool", rng_po);
    return task;
}

void sym_eig_leading(const Mat& A, double& value, Vec& vector) {
    const std::size_t d = A.rows;
    Mat M = A;
    Mat V(d, d);
    for (std::size_t i = 0; i < d; ++i) V(i, i) = 1.0;

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) off += M(p, q) * M(p, q);
        if (off < 1e-26) break;
        for (std::size_t p = 0; p < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                if (M(p, q) == 0.0) continue;
                const double theta = (M(q, q) - M(p, p)) / (2.0 * M(p, q));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < d; ++k) {
                    const double mkp = M(k, p), mkq = M(k, q);
                    M(k, p) = c * mkp - s * mkq;
                    M(k, q) = s * mkp + c * mkq;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double mpk = M(p, k), mqk = M(q, k);
                    M(p, k) = c * mpk - s * mqk;
                    M(q, k) = s * mpk + c * mqk;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double vkp = V(k, p), vkq = V(k, q);
                    V(k, p) = c * vkp - s * vkq;
                    V(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < d; ++i)
        if (M(i, i) > M(best, best)) best = i;
    value = M(best, best);
    vector.resize(d);
    for (std::size_t k = 0; k < d; ++k) vector[k] = V(k, best);
}

std::vector<std::size_t> pca_irregularity_rank(const Mat& X) {
    const std::size_t n = X.rows, d = X.cols;
    if (n < 2) throw std::invalid_argument("pca_irregularity_rank: need at least two rows");

    Mat Z = X;
    bool any_variance = false;
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += Z(i, j);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            Z(i, j) -= mean;
            var += Z(i, j) * Z(i, j);
        }
        var /= static_cast<double>(n - 1);
        if (var > 0.0) {
            any_variance = true;
            const double sd = std::sqrt(var);
            for (std::size_t i = 0; i < n; ++i) Z(i, j) /= sd;
        }
    }
    if (!any_variance)
        throw std::invalid_argument("pca_irregularity_rank: zero-variance data");

    Mat cov(d, d);
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = a; b < d; ++b) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += Z(i, a) * Z(i, b);
            cov(a, b) = cov(b, a) = s / static_cast<double>(n - 1);
        }

    double lambda;
    Vec pc1;
    sym_eig_leading(cov, lambda, pc1);

    Vec score(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) score[i] += Z(i, j) * pc1[j];

    Vec sorted = score;
    std::sort(sorted.begin(), sorted.end());
    const double median = (n % 2 == 1)
                              ? sorted[n / 2]
                              : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double da = std::fabs(score[a] - median);
        const double db = std::fabs(score[b] - median);
        if (da != db) return da > db;
        return a < b;
    });
    return order;
}

Dataset build_mixture_testset(const Dataset& regular, const Dataset& irregular, double p,
                              std::size_t size, std::uint64_t seed) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("mixture: p outside [0,1]");
    const std::size_t k = static_cast<std::size_t>(p * static_cast<double>(size));
    const std::size_t r = size - k;
    if (k > irregular.X.rows || r > regular.X.rows)
        throw std::invalid_argument("mixture: insufficient pool");

    std::vector<std::size_t> ir(irregular.X.rows), rg(regular.X.rows);
    std::iota(ir.begin(), ir.end(), std::size_t{0});
    std::iota(rg.begin(), rg.end(), std::size_t{0});
    Rng rng_i = Rng::stream(seed, "mixture.irregular");
    Rng rng_r = Rng::stream(seed, "mixture.regular");
    rng_i.shuffle(ir);
    rng_r.shuffle(rg);

    Dataset out;
    const std::size_t d = regular.X.cols;
    out.X.assign(size, d);
    out.y.assign(size, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        std::copy(irregular.X.row(ir[i]), irregular.X.row(ir[i]) + d, out.X.row(i));
        out.y[i] = irregular.y[ir[i]];
    }
    for (std::size_t i = 0; i < r; ++i) {
        std::copy(regular.X.row(rg[i]), regular.X.row(rg[i]) + d, out.X.row(k + i));
        out.y[k + i] = regular.y[rg[i]];
    }
    out.provenance = "mixture";
    return out;
}

std::string TabularManifest::to_json() const {
    nlohmann::json j;
    j["feature_names"] = feature_names;
    j["target_name"] = target_name;
    j["log_columns"] = log_columns;
    j["feature_mean"] = feature_mean;
    j["feature_sd"] = feature_sd;
    j["target_mean"] = target_mean;
    j["target_sd"] = target_sd;
    return j.dump();
}

TabularData load_csv_tabular(const std::string& path, const std::string& target_column,
                             const TabularTransforms& tf) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("csv: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<std::string> headers;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) headers.push_back(cell);
    }
    std::ptrdiff_t target = -1;
    for (std::size_t i = 0; i < headers.size(); ++i)
        if (headers[i] == target_column) target = static_cast<std::ptrdiff_t>(i);
    if (target < 0) throw std::runtime_error("csv: missing target column " + target_column);

    std::vector<Vec> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        Vec row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            double v = 0.0;
            const char* b = cell.data();
            const char* e = b + cell.size();
            auto res = std::from_chars(b, e, v);
            if (res.ec != std::errc() || res.ptr != e)
                throw std::runtime_error("csv: non-numeric cell '" + cell + "'");
            row.push_back(v);
        }
        if (row.size() != headers.size())
            throw std::runtime_error("csv: ragged row");
        rows.push_back(std::move(row));
    }
    const std::size_t n = rows.size();
    if (n == 0) throw std::runtime_error("csv: no data rows");
    const std::size_t d = headers.size() - 1;

    TabularData out;
    out.data.X.assign(n, d);
    out.data.y.assign(n, 0.0);
    out.manifest.target_name = target_column;
    out.manifest.log_columns = tf.log_columns;
    for (std::size_t j = 0, col = 0; j < headers.size(); ++j)
        if (static_cast<std::ptrdiff_t>(j) != target) {
            out.manifest.feature_names.push_back(headers[j]);
            (void)col;
        }

    auto wants_log = [&](const std::string& name) {
        return std::find(tf.log_columns.begin(), tf.log_columns.end(), name) !=
               tf.log_columns.end();
    };

    for (std::size_t i = 0; i < n; ++i) {
        std::size_t col = 0;
        for (std::size_t j = 0; j < headers.size(); ++j) {
            double v = rows[i][j];
            if (wants_log(headers[j])) {
                if (v <= 0.0)
                    throw std::runtime_error("csv: log transform of non-positive value");
                v = std::log(v);
            }
            if (static_cast<std::ptrdiff_t>(j) == target)
                out.data.y[i] = v;
            else
                out.data.X(i, col++) = v;
        }
    }

    out.manifest.feature_mean.assign(d, 0.0);
    out.manifest.feature_sd.assign(d, 1.0);
    if (tf.standardize_features) {
        for (std::size_t j = 0; j < d; ++j) {
            double mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) mean += out.data.X(i, j);
            mean /= static_cast<double>(n);
            double var = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                out.data.X(i, j) -= mean;
                var += out.data.X(i, j) * out.data.X(i, j);
            }
            var /= static_cast<double>(n > 1 ? n - 1 : 1);
            const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
            for (std::size_t i = 0; i < n; ++i) out.data.X(i, j) /= sd;
            out.manifest.feature_mean[j] = mean;
            out.manifest.feature_sd[j] = sd;
        }
    }
    if (tf.rescale_target) {
        double mean = 0.0;
        for (auto v : out.data.y) mean += v;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (auto& v : out.data.y) {
            v -= mean;
            var += v * v;
        }
        var /= static_cast<double>(n > 1 ? n - 1 : 1);
        const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
        for (auto& v : out.data.y) v /= sd;
        out.manifest.target_mean = mean;
        out.manifest.target_sd = sd;
    }
    out.data.provenance = "csv:" + path;
    check_finite(out.data);
    return out;
}

void check_finite(const Dataset& ds) {
    for (double v : ds.X.d)
        if (!std::isfinite(v)) throw std::runtime_error("dataset contains non-finite input");
    for (double v : ds.y)
        if (!std::isfinite(v)) throw std::runtime_error("dataset contains non-finite target");
}

}  // namespace tlens
