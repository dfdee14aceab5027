// Minimal dense tensor for 1D signal batches: shape (n, c, l) row-major.
#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace dualpath {

struct Tensor {
    int n = 0;  // batch
    int c = 0;  // channels
    int l = 0;  // sequence length
    std::vector<double> v;

    Tensor() = default;
    Tensor(int n_, int c_, int l_) : n(n_), c(c_), l(l_), v(static_cast<std::size_t>(n_) * c_ * l_, 0.0) {}

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.n, t.c, t.l); }

    std::size_t size() const { return v.size(); }
    bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && l == o.l; }

    double* data() { return v.data(); }
    const double* data() const { return v.data(); }

    double& at(int i, int j, int k) {
        assert(i < n && j < c && k < l);
        return v[(static_cast<std::size_t>(i) * c + j) * l + k];
    }
    double at(int i, int j, int k) const {
        assert(i < n && j < c && k < l);
        return v[(static_cast<std::size_t>(i) * c + j) * l + k];
    }

    // pointer to the start of row (i, j)
    double* row(int i, int j) { return v.data() + (static_cast<std::size_t>(i) * c + j) * l; }
    const double* row(int i, int j) const { return v.data() + (static_cast<std::size_t>(i) * c + j) * l; }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }
};

}  // namespace dualpath
