#pragma once
// Row-major dense matrix over std::vector<double>. Deliberately minimal; all
// heavy arithmetic goes through tlens::kern.

#include <cstddef>
#include <vector>

namespace tlens {

using Vec = std::vector<double>;

struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec d;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), d(r * c, fill) {}

    void assign(std::size_t r, std::size_t c, double fill = 0.0) {
        rows = r;
        cols = c;
        d.assign(r * c, fill);
    }
    void zero() { d.assign(d.size(), 0.0); }

    double* row(std::size_t i) { return d.data() + i * cols; }
    const double* row(std::size_t i) const { return d.data() + i * cols; }
    double& operator()(std::size_t i, std::size_t j) { return d[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return d[i * cols + j]; }
    bool empty() const { return d.empty(); }
};

}  // namespace tlens
