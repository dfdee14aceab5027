#include "dualpath/kernels.hpp"

#include <cassert>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dualpath::kernels {

namespace {
thread_local bool g_parallel = true;

// valid output range of t such that 0 <= t*stride + base < li
inline void t_range(int base, int stride, int li, int lo, int& t0, int& t1) {
    t0 = base >= 0 ? 0 : (-base + stride - 1) / stride;
    t1 = base < li ? std::min(lo, (li - 1 - base) / stride + 1) : 0;
    if (t1 < t0) t1 = t0;
}

// one output row of conv1d: y[i][oc][:] for fixed (i, oc); accumulation
// order is fixed (ic, k, t), shared by the serial and OpenMP variants
inline void conv1d_row(const Tensor& x, const double* w_oc, double bias,
                       int k, int stride, int pad, int i, double* out, int lo) {
    const int ci = x.c;
    const int li = x.l;
    for (int t = 0; t < lo; ++t) out[t] = bias;
    for (int ic = 0; ic < ci; ++ic) {
        const double* xr = x.row(i, ic);
        const double* wr = w_oc + static_cast<std::size_t>(ic) * k;
        for (int kk = 0; kk < k; ++kk) {
            const double wv = wr[kk];
            const int base = kk - pad;
            int t0, t1;
            t_range(base, stride, li, lo, t0, t1);
            const double* xs = xr + base;
            if (stride == 1) {
                for (int t = t0; t < t1; ++t) out[t] += wv * xs[t];
            } else {
                for (int t = t0; t < t1; ++t) out[t] += wv * xs[static_cast<std::ptrdiff_t>(t) * stride];
            }
        }
    }
}

// one input-gradient row of conv1d: dx[i][ic][:] (scatter within the row)
inline void conv1d_dx_row(const Tensor& dy, const std::vector<double>& w,
                          int ci, int k, int stride, int pad, int i, int ic,
                          double* out, int li) {
    const int co = dy.c;
    const int lo = dy.l;
    for (int j = 0; j < li; ++j) out[j] = 0.0;
    for (int oc = 0; oc < co; ++oc) {
        const double* dyr = dy.row(i, oc);
        const double* wr = w.data() + (static_cast<std::size_t>(oc) * ci + ic) * k;
        for (int kk = 0; kk < k; ++kk) {
            const double wv = wr[kk];
            const int base = kk - pad;
            int t0, t1;
            t_range(base, stride, li, lo, t0, t1);
            double* os = out + base;
            if (stride == 1) {
                for (int t = t0; t < t1; ++t) os[t] += wv * dyr[t];
            } else {
                for (int t = t0; t < t1; ++t) os[static_cast<std::ptrdiff_t>(t) * stride] += wv * dyr[t];
            }
        }
    }
}

// weight/bias gradient contribution for one output channel
inline void conv1d_dw_oc(const Tensor& x, const Tensor& dy, int k, int stride, int pad,
                         int oc, double* dw_oc, double& db_oc) {
    const int ci = x.c;
    const int li = x.l;
    const int lo = dy.l;
    for (int i = 0; i < x.n; ++i) {
        const double* dyr = dy.row(i, oc);
        for (int ic = 0; ic < ci; ++ic) {
            const double* xr = x.row(i, ic);
            double* dwr = dw_oc + static_cast<std::size_t>(ic) * k;
            for (int kk = 0; kk < k; ++kk) {
                const int base = kk - pad;
                int t0, t1;
                t_range(base, stride, li, lo, t0, t1);
                const double* xs = xr + base;
                double acc = 0.0;
                if (stride == 1) {
                    for (int t = t0; t < t1; ++t) acc += dyr[t] * xs[t];
                } else {
                    for (int t = t0; t < t1; ++t) acc += dyr[t] * xs[static_cast<std::ptrdiff_t>(t) * stride];
                }
                dwr[kk] += acc;
            }
        }
        double acc = 0.0;
        for (int t = 0; t < lo; ++t) acc += dyr[t];
        db_oc += acc;
    }
}

// transposed conv output row: y[i][oc][:] (scatter within the row)
inline void convt1d_row(const Tensor& x, const std::vector<double>& w, double bias,
                        int co, int k, int stride, int pad, int i, int oc,
                        double* out, int lo) {
    const int ci = x.c;
    const int li = x.l;
    for (int t = 0; t < lo; ++t) out[t] = bias;
    for (int ic = 0; ic < ci; ++ic) {
        const double* xr = x.row(i, ic);
        const double* wr = w.data() + (static_cast<std::size_t>(ic) * co + oc) * k;
        for (int kk = 0; kk < k; ++kk) {
            const double wv = wr[kk];
            const int base = kk - pad;  // out index = j*stride + base for input j
            int j0, j1;
            t_range(base, stride, lo, li, j0, j1);
            double* os = out + base;
            if (stride == 1) {
                for (int j = j0; j < j1; ++j) os[j] += wv * xr[j];
            } else {
                for (int j = j0; j < j1; ++j) os[static_cast<std::ptrdiff_t>(j) * stride] += wv * xr[j];
            }
        }
    }
}

// transposed conv input gradient: a plain convolution of dy with w
inline void convt1d_dx_row(const Tensor& dy, const std::vector<double>& w,
                           int k, int stride, int pad, int i, int ic, int co,
                           double* out, int li) {
    const int lo = dy.l;
    for (int j = 0; j < li; ++j) out[j] = 0.0;
    for (int oc = 0; oc < co; ++oc) {
        const double* dyr = dy.row(i, oc);
        const double* wr = w.data() + (static_cast<std::size_t>(ic) * co + oc) * k;
        for (int kk = 0; kk < k; ++kk) {
            const double wv = wr[kk];
            const int base = kk - pad;
            int j0, j1;
            t_range(base, stride, lo, li, j0, j1);
            const double* ds = dyr + base;
            if (stride == 1) {
                for (int j = j0; j < j1; ++j) out[j] += wv * ds[j];
            } else {
                for (int j = j0; j < j1; ++j) out[j] += wv * ds[static_cast<std::ptrdiff_t>(j) * stride];
            }
        }
    }
}

inline void convt1d_dw_ic(const Tensor& x, const Tensor& dy, int k, int stride, int pad,
                          int ic, int co, double* dw_ic) {
    const int li = x.l;
    const int lo = dy.l;
    for (int i = 0; i < x.n; ++i) {
        const double* xr = x.row(i, ic);
        for (int oc = 0; oc < co; ++oc) {
            const double* dyr = dy.row(i, oc);
            double* dwr = dw_ic + static_cast<std::size_t>(oc) * k;
            for (int kk = 0; kk < k; ++kk) {
                const int base = kk - pad;
                int j0, j1;
                t_range(base, stride, lo, li, j0, j1);
                const double* ds = dyr + base;
                double acc = 0.0;
                if (stride == 1) {
                    for (int j = j0; j < j1; ++j) acc += xr[j] * ds[j];
                } else {
                    for (int j = j0; j < j1; ++j) acc += xr[j] * ds[static_cast<std::ptrdiff_t>(j) * stride];
                }
                dwr[kk] += acc;
            }
        }
    }
}

inline void instnorm_row(const Tensor& x, const std::vector<double>& gamma, const std::vector<double>& beta,
                         double eps, int i, int ch, Tensor& y, Tensor& xhat, std::vector<double>& istd) {
    const int l = x.l;
    const double* xr = x.row(i, ch);
    double mean = 0.0;
    for (int t = 0; t < l; ++t) mean += xr[t];
    mean /= l;
    double var = 0.0;
    for (int t = 0; t < l; ++t) {
        const double d = xr[t] - mean;
        var += d * d;
    }
    var /= l;
    const double is = 1.0 / std::sqrt(var + eps);
    istd[static_cast<std::size_t>(i) * x.c + ch] = is;
    double* xh = xhat.row(i, ch);
    double* yr = y.row(i, ch);
    for (int t = 0; t < l; ++t) {
        xh[t] = (xr[t] - mean) * is;
        yr[t] = gamma[ch] * xh[t] + beta[ch];
    }
}

inline void instnorm_dx_row(const Tensor& dy, const std::vector<double>& gamma, const Tensor& xhat,
                            const std::vector<double>& istd, int i, int ch, Tensor& dx) {
    const int l = dy.l;
    const double* dyr = dy.row(i, ch);
    const double* xh = xhat.row(i, ch);
    const double is = istd[static_cast<std::size_t>(i) * dy.c + ch];
    double sum_dxh = 0.0, sum_dxh_xh = 0.0;
    for (int t = 0; t < l; ++t) {
        const double dxh = dyr[t] * gamma[ch];
        sum_dxh += dxh;
        sum_dxh_xh += dxh * xh[t];
    }
    const double m1 = sum_dxh / l;
    const double m2 = sum_dxh_xh / l;
    double* dxr = dx.row(i, ch);
    for (int t = 0; t < l; ++t) {
        const double dxh = dyr[t] * gamma[ch];
        dxr[t] = is * (dxh - m1 - xh[t] * m2);
    }
}

}  // namespace

void set_parallel(bool on) { g_parallel = on; }
bool parallel_enabled() { return g_parallel; }

// ---------------------------------------------------------------------------
// conv1d
// ---------------------------------------------------------------------------
void conv1d_fwd_serial(const Tensor& x, const std::vector<double>& w, const std::vector<double>& b,
                       int co, int k, int stride, int pad, Tensor& y) {
    const int lo = conv_out_len(x.l, k, stride, pad);
    assert(y.n == x.n && y.c == co && y.l == lo);
    for (int i = 0; i < x.n; ++i)
        for (int oc = 0; oc < co; ++oc)
            conv1d_row(x, w.data() + static_cast<std::size_t>(oc) * x.c * k, b[oc],
                       k, stride, pad, i, y.row(i, oc), lo);
}

void conv1d_fwd_omp(const Tensor& x, const std::vector<double>& w, const std::vector<double>& b,
                    int co, int k, int stride, int pad, Tensor& y) {
    const int lo = conv_out_len(x.l, k, stride, pad);
    assert(y.n == x.n && y.c == co && y.l == lo);
    const int rows = x.n * co;
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) {
        const int i = r / co;
        const int oc = r % co;
        conv1d_row(x, w.data() + static_cast<std::size_t>(oc) * x.c * k, b[oc],
                   k, stride, pad, i, y.row(i, oc), lo);
    }
}

void conv1d_fwd(const Tensor& x, const std::vector<double>& w, const std::vector<double>& b,
                int co, int k, int stride, int pad, Tensor& y) {
    if (g_parallel) conv1d_fwd_omp(x, w, b, co, k, stride, pad, y);
    else conv1d_fwd_serial(x, w, b, co, k, stride, pad, y);
}

void conv1d_bwd_input_serial(const Tensor& dy, const std::vector<double>& w,
                             int ci, int k, int stride, int pad, Tensor& dx) {
    assert(dx.c == ci && dx.n == dy.n);
    for (int i = 0; i < dy.n; ++i)
        for (int ic = 0; ic < ci; ++ic)
            conv1d_dx_row(dy, w, ci, k, stride, pad, i, ic, dx.row(i, ic), dx.l);
}

void conv1d_bwd_input_omp(const Tensor& dy, const std::vector<double>& w,
                          int ci, int k, int stride, int pad, Tensor& dx) {
    assert(dx.c == ci && dx.n == dy.n);
    const int rows = dy.n * ci;
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) {
        const int i = r / ci;
        const int ic = r % ci;
        conv1d_dx_row(dy, w, ci, k, stride, pad, i, ic, dx.row(i, ic), dx.l);
    }
}

void conv1d_bwd_input(const Tensor& dy, const std::vector<double>& w,
                      int ci, int k, int stride, int pad, Tensor& dx) {
    if (g_parallel) conv1d_bwd_input_omp(dy, w, ci, k, stride, pad, dx);
    else conv1d_bwd_input_serial(dy, w, ci, k, stride, pad, dx);
}

void conv1d_bwd_params_serial(const Tensor& x, const Tensor& dy, int k, int stride, int pad,
                              std::vector<double>& dw, std::vector<double>& db) {
    const int co = dy.c;
    for (int oc = 0; oc < co; ++oc)
        conv1d_dw_oc(x, dy, k, stride, pad, oc, dw.data() + static_cast<std::size_t>(oc) * x.c * k, db[oc]);
}

void conv1d_bwd_params_omp(const Tensor& x, const Tensor& dy, int k, int stride, int pad,
                           std::vector<double>& dw, std::vector<double>& db) {
    const int co = dy.c;
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < co; ++oc)
        conv1d_dw_oc(x, dy, k, stride, pad, oc, dw.data() + static_cast<std::size_t>(oc) * x.c * k, db[oc]);
}

void conv1d_bwd_params(const Tensor& x, const Tensor& dy, int k, int stride, int pad,
                       std::vector<double>& dw, std::vector<double>& db) {
    if (g_parallel) conv1d_bwd_params_omp(x, dy, k, stride, pad, dw, db);
    else conv1d_bwd_params_serial(x, dy, k, stride, pad, dw, db);
}

// ---------------------------------------------------------------------------
// transposed conv1d
// ---------------------------------------------------------------------------
void convt1d_fwd_serial(const Tensor& x, const std::vector<double>& w, const std::vector<double>& b,
                        int co, int k, int stride, int pad, Tensor& y) {
    const int lo = convt_out_len(x.l, k, stride, pad);
    assert(y.n == x.n && y.c == co && y.l == lo);
    for (int i = 0; i < x.n; ++i)
        for (int oc = 0; oc < co; ++oc)
            convt1d_row(x, w, b[oc], co, k, stride, pad, i, oc, y.row(i, oc), lo);
}

void convt1d_fwd_omp(const Tensor& x, const std::vector<double>& w, const std::vector<double>& b,
                     int co, int k, int stride, int pad, Tensor& y) {
    const int lo = convt_out_len(x.l, k, stride, pad);
    assert(y.n == x.n && y.c == co && y.l == lo);
    const int rows = x.n * co;
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) {
        const int i = r / co;
        const int oc = r % co;
        convt1d_row(x, w, b[oc], co, k, stride, pad, i, oc, y.row(i, oc), lo);
    }
}

void convt1d_fwd(const Tensor& x, const std::vector<double>& w, const std::vector<double>& b,
                 int co, int k, int stride, int pad, Tensor& y) {
    if (g_parallel) convt1d_fwd_omp(x, w, b, co, k, stride, pad, y);
    else convt1d_fwd_serial(x, w, b, co, k, stride, pad, y);
}

void convt1d_bwd_input_serial(const Tensor& dy, const std::vector<double>& w,
                              int ci, int k, int stride, int pad, Tensor& dx) {
    assert(dx.c == ci);
    for (int i = 0; i < dy.n; ++i)
        for (int ic = 0; ic < ci; ++ic)
            convt1d_dx_row(dy, w, k, stride, pad, i, ic, dy.c, dx.row(i, ic), dx.l);
}

void convt1d_bwd_input_omp(const Tensor& dy, const std::vector<double>& w,
                           int ci, int k, int stride, int pad, Tensor& dx) {
    assert(dx.c == ci);
    const int rows = dy.n * ci;
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) {
        const int i = r / ci;
        const int ic = r % ci;
        convt1d_dx_row(dy, w, k, stride, pad, i, ic, dy.c, dx.row(i, ic), dx.l);
    }
}

void convt1d_bwd_input(const Tensor& dy, const std::vector<double>& w,
                       int ci, int k, int stride, int pad, Tensor& dx) {
    if (g_parallel) convt1d_bwd_input_omp(dy, w, ci, k, stride, pad, dx);
    else convt1d_bwd_input_serial(dy, w, ci, k, stride, pad, dx);
}

void convt1d_bwd_params_serial(const Tensor& x, const Tensor& dy, int k, int stride, int pad,
                               std::vector<double>& dw, std::vector<double>& db) {
    const int co = dy.c;
    for (int ic = 0; ic < x.c; ++ic)
        convt1d_dw_ic(x, dy, k, stride, pad, ic, co, dw.data() + static_cast<std::size_t>(ic) * co * k);
    for (int oc = 0; oc < co; ++oc) {
        double acc = db[oc];
        for (int i = 0; i < dy.n; ++i) {
            const double* dyr = dy.row(i, oc);
            double s = 0.0;
            for (int t = 0; t < dy.l; ++t) s += dyr[t];
            acc += s;
        }
        db[oc] = acc;
    }
}

void convt1d_bwd_params_omp(const Tensor& x, const Tensor& dy, int k, int stride, int pad,
                            std::vector<double>& dw, std::vector<double>& db) {
    const int co = dy.c;
#pragma omp parallel for schedule(static)
    for (int ic = 0; ic < x.c; ++ic)
        convt1d_dw_ic(x, dy, k, stride, pad, ic, co, dw.data() + static_cast<std::size_t>(ic) * co * k);
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < co; ++oc) {
        double acc = db[oc];
        for (int i = 0; i < dy.n; ++i) {
            const double* dyr = dy.row(i, oc);
            double s = 0.0;
            for (int t = 0; t < dy.l; ++t) s += dyr[t];
            acc += s;
        }
        db[oc] = acc;
    }
}

void convt1d_bwd_params(const Tensor& x, const Tensor& dy, int k, int stride, int pad,
                        std::vector<double>& dw, std::vector<double>& db) {
    if (g_parallel) convt1d_bwd_params_omp(x, dy, k, stride, pad, dw, db);
    else convt1d_bwd_params_serial(x, dy, k, stride, pad, dw, db);
}

// ---------------------------------------------------------------------------
// instance norm
// ---------------------------------------------------------------------------
void instnorm_fwd_serial(const Tensor& x, const std::vector<double>& gamma, const std::vector<double>& beta,
                         double eps, Tensor& y, Tensor& xhat, std::vector<double>& istd) {
    for (int i = 0; i < x.n; ++i)
        for (int ch = 0; ch < x.c; ++ch)
            instnorm_row(x, gamma, beta, eps, i, ch, y, xhat, istd);
}

void instnorm_fwd_omp(const Tensor& x, const std::vector<double>& gamma, const std::vector<double>& beta,
                      double eps, Tensor& y, Tensor& xhat, std::vector<double>& istd) {
    const int rows = x.n * x.c;
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r)
        instnorm_row(x, gamma, beta, eps, r / x.c, r % x.c, y, xhat, istd);
}

void instnorm_fwd(const Tensor& x, const std::vector<double>& gamma, const std::vector<double>& beta,
                  double eps, Tensor& y, Tensor& xhat, std::vector<double>& istd) {
    if (g_parallel) instnorm_fwd_omp(x, gamma, beta, eps, y, xhat, istd);
    else instnorm_fwd_serial(x, gamma, beta, eps, y, xhat, istd);
}

void instnorm_bwd_serial(const Tensor& dy, const std::vector<double>& gamma, const Tensor& xhat,
                         const std::vector<double>& istd, Tensor& dx,
                         std::vector<double>& dgamma, std::vector<double>& dbeta) {
    for (int i = 0; i < dy.n; ++i)
        for (int ch = 0; ch < dy.c; ++ch)
            instnorm_dx_row(dy, gamma, xhat, istd, i, ch, dx);
    for (int ch = 0; ch < dy.c; ++ch) {
        double dg = dgamma[ch], dbv = dbeta[ch];
        for (int i = 0; i < dy.n; ++i) {
            const double* dyr = dy.row(i, ch);
            const double* xh = xhat.row(i, ch);
            for (int t = 0; t < dy.l; ++t) {
                dg += dyr[t] * xh[t];
                dbv += dyr[t];
            }
        }
        dgamma[ch] = dg;
        dbeta[ch] = dbv;
    }
}

void instnorm_bwd_omp(const Tensor& dy, const std::vector<double>& gamma, const Tensor& xhat,
                      const std::vector<double>& istd, Tensor& dx,
                      std::vector<double>& dgamma, std::vector<double>& dbeta) {
    const int rows = dy.n * dy.c;
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r)
        instnorm_dx_row(dy, gamma, xhat, istd, r / dy.c, r % dy.c, dx);
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < dy.c; ++ch) {
        double dg = dgamma[ch], dbv = dbeta[ch];
        for (int i = 0; i < dy.n; ++i) {
            const double* dyr = dy.row(i, ch);
            const double* xh = xhat.row(i, ch);
            for (int t = 0; t < dy.l; ++t) {
                dg += dyr[t] * xh[t];
                dbv += dyr[t];
            }
        }
        dgamma[ch] = dg;
        dbeta[ch] = dbv;
    }
}

void instnorm_bwd(const Tensor& dy, const std::vector<double>& gamma, const Tensor& xhat,
                  const std::vector<double>& istd, Tensor& dx,
                  std::vector<double>& dgamma, std::vector<double>& dbeta) {
    if (g_parallel) instnorm_bwd_omp(dy, gamma, xhat, istd, dx, dgamma, dbeta);
    else instnorm_bwd_serial(dy, gamma, xhat, istd, dx, dgamma, dbeta);
}

// ---------------------------------------------------------------------------
// pointwise / small ops
// ---------------------------------------------------------------------------
void relu_fwd(const Tensor& x, Tensor& y) {
    const std::size_t sz = x.size();
#pragma omp parallel for schedule(static) if (g_parallel)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sz); ++i)
        y.v[i] = x.v[i] > 0.0 ? x.v[i] : 0.0;
}

void relu_bwd(const Tensor& dy, const Tensor& x, Tensor& dx) {
    const std::size_t sz = x.size();
#pragma omp parallel for schedule(static) if (g_parallel)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sz); ++i)
        dx.v[i] = x.v[i] > 0.0 ? dy.v[i] : 0.0;
}

void upsample2_fwd(const Tensor& x, Tensor& y) {
    assert(y.l == 2 * x.l && y.n == x.n && y.c == x.c);
    const int rows = x.n * x.c;
#pragma omp parallel for schedule(static) if (g_parallel)
    for (int r = 0; r < rows; ++r) {
        const double* xr = x.v.data() + static_cast<std::size_t>(r) * x.l;
        double* yr = y.v.data() + static_cast<std::size_t>(r) * y.l;
        for (int t = 0; t < x.l; ++t) {
            yr[2 * t] = xr[t];
            yr[2 * t + 1] = xr[t];
        }
    }
}

void upsample2_bwd(const Tensor& dy, Tensor& dx) {
    assert(dy.l == 2 * dx.l);
    const int rows = dx.n * dx.c;
#pragma omp parallel for schedule(static) if (g_parallel)
    for (int r = 0; r < rows; ++r) {
        const double* dyr = dy.v.data() + static_cast<std::size_t>(r) * dy.l;
        double* dxr = dx.v.data() + static_cast<std::size_t>(r) * dx.l;
        for (int t = 0; t < dx.l; ++t) dxr[t] = dyr[2 * t] + dyr[2 * t + 1];
    }
}

void gap_fwd(const Tensor& x, Tensor& y) {
    assert(y.n == x.n && y.c == x.c && y.l == 1);
    const int rows = x.n * x.c;
#pragma omp parallel for schedule(static) if (g_parallel)
    for (int r = 0; r < rows; ++r) {
        const double* xr = x.v.data() + static_cast<std::size_t>(r) * x.l;
        double s = 0.0;
        for (int t = 0; t < x.l; ++t) s += xr[t];
        y.v[r] = s / x.l;
    }
}

void gap_bwd(const Tensor& dy, int l, Tensor& dx) {
    assert(dx.l == l && dy.l == 1);
    const int rows = dx.n * dx.c;
#pragma omp parallel for schedule(static) if (g_parallel)
    for (int r = 0; r < rows; ++r) {
        const double g = dy.v[r] / l;
        double* dxr = dx.v.data() + static_cast<std::size_t>(r) * l;
        for (int t = 0; t < l; ++t) dxr[t] = g;
    }
}

// ---------------------------------------------------------------------------
// linear
// ---------------------------------------------------------------------------
void linear_fwd_serial(const Tensor& x, const std::vector<double>& w, const std::vector<double>& b,
                       int o, Tensor& y) {
    const int d = x.c;
    assert(x.l == 1 && y.c == o);
    for (int i = 0; i < x.n; ++i) {
        const double* xr = x.v.data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < o; ++j) {
            const double* wr = w.data() + static_cast<std::size_t>(j) * d;
            double acc = b[j];
            for (int t = 0; t < d; ++t) acc += wr[t] * xr[t];
            y.v[static_cast<std::size_t>(i) * o + j] = acc;
        }
    }
}

void linear_fwd_omp(const Tensor& x, const std::vector<double>& w, const std::vector<double>& b,
                    int o, Tensor& y) {
    const int d = x.c;
    assert(x.l == 1 && y.c == o);
    const int rows = x.n * o;
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) {
        const int i = r / o;
        const int j = r % o;
        const double* xr = x.v.data() + static_cast<std::size_t>(i) * d;
        const double* wr = w.data() + static_cast<std::size_t>(j) * d;
        double acc = b[j];
        for (int t = 0; t < d; ++t) acc += wr[t] * xr[t];
        y.v[static_cast<std::size_t>(i) * o + j] = acc;
    }
}

void linear_fwd(const Tensor& x, const std::vector<double>& w, const std::vector<double>& b,
                int o, Tensor& y) {
    if (g_parallel) linear_fwd_omp(x, w, b, o, y);
    else linear_fwd_serial(x, w, b, o, y);
}

void linear_bwd(const Tensor& x, const Tensor& dy, const std::vector<double>& w,
                Tensor& dx, std::vector<double>& dw, std::vector<double>& db) {
    const int d = x.c;
    const int o = dy.c;
#pragma omp parallel for schedule(static) if (g_parallel)
    for (int i = 0; i < x.n; ++i) {
        const double* dyr = dy.v.data() + static_cast<std::size_t>(i) * o;
        double* dxr = dx.v.data() + static_cast<std::size_t>(i) * d;
        for (int t = 0; t < d; ++t) {
            double acc = 0.0;
            for (int j = 0; j < o; ++j) acc += dyr[j] * w[static_cast<std::size_t>(j) * d + t];
            dxr[t] = acc;
        }
    }
#pragma omp parallel for schedule(static) if (g_parallel)
    for (int j = 0; j < o; ++j) {
        double* dwr = dw.data() + static_cast<std::size_t>(j) * d;
        double dbv = db[j];
        for (int i = 0; i < x.n; ++i) {
            const double g = dy.v[static_cast<std::size_t>(i) * o + j];
            const double* xr = x.v.data() + static_cast<std::size_t>(i) * d;
            for (int t = 0; t < d; ++t) dwr[t] += g * xr[t];
            dbv += g;
        }
        db[j] = dbv;
    }
}

// ---------------------------------------------------------------------------
// optimizer
// ---------------------------------------------------------------------------
void adam_step(std::vector<double>& w, const std::vector<double>& g,
               std::vector<double>& m, std::vector<double>& v,
               double lr, double beta1, double beta2, double eps, std::int64_t t) {
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    const std::size_t sz = w.size();
#pragma omp parallel for schedule(static) if (g_parallel)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sz); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        const double mh = m[i] / bc1;
        const double vh = v[i] / bc2;
        w[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------
double sumsq_diff_batch(const Tensor& a, const Tensor& b, std::vector<double>* per_item) {
    assert(a.same_shape(b));
    const std::size_t item = static_cast<std::size_t>(a.c) * a.l;
    std::vector<double> sums(a.n, 0.0);
#pragma omp parallel for schedule(static) if (g_parallel)
    for (int i = 0; i < a.n; ++i) {
        const double* pa = a.v.data() + i * item;
        const double* pb = b.v.data() + i * item;
        double s = 0.0;
        for (std::size_t t = 0; t < item; ++t) {
            const double d = pa[t] - pb[t];
            s += d * d;
        }
        sums[i] = s;
    }
    double total = 0.0;
    for (int i = 0; i < a.n; ++i) total += sums[i];  // fixed reduction order
    if (per_item) *per_item = std::move(sums);
    return total;
}

}  // namespace dualpath::kernels
