// Data-parallel compute kernels for 1D convolutional networks.
//
// Every kernel has a serial reference implementation (*_serial) and an
// OpenMP variant (*_omp). The OpenMP variants are written in gather form:
// each output element is produced by exactly one thread using the same
// inner-loop order as the reference, so the two are bitwise identical and
// results do not depend on the thread count. Dispatching front-ends pick a
// variant from a thread-local switch (sweep workers force serial kernels
// and parallelize across sweep points instead).
#pragma once

#include "dualpath/tensor.hpp"

#include <cstdint>
#include <vector>

namespace dualpath::kernels {

void set_parallel(bool on);
bool parallel_enabled();

// shape helper: out length of a strided conv
inline int conv_out_len(int li, int k, int stride, int pad) { return (li + 2 * pad - k) / stride + 1; }
// out length of a transposed conv
inline int convt_out_len(int li, int k, int stride, int pad) { return (li - 1) * stride - 2 * pad + k; }

// ---- conv1d: w laid out (co, ci, k); x (n, ci, li); y (n, co, lo) ----
void conv1d_fwd_serial(const Tensor& x, const std::vector<double>& w, const std::vector<double>& b,
                       int co, int k, int stride, int pad, Tensor& y);
void conv1d_fwd_omp(const Tensor& x, const std::vector<double>& w, const std::vector<double>& b,
                    int co, int k, int stride, int pad, Tensor& y);
void conv1d_fwd(const Tensor& x, const std::vector<double>& w, const std::vector<double>& b,
                int co, int k, int stride, int pad, Tensor& y);

void conv1d_bwd_input_serial(const Tensor& dy, const std::vector<double>& w,
                             int ci, int k, int stride, int pad, Tensor& dx);
void conv1d_bwd_input_omp(const Tensor& dy, const std::vector<double>& w,
                          int ci, int k, int stride, int pad, Tensor& dx);
void conv1d_bwd_input(const Tensor& dy, const std::vector<double>& w,
                      int ci, int k, int stride, int pad, Tensor& dx);

// accumulates into dw/db
void conv1d_bwd_params_serial(const Tensor& x, const Tensor& dy, int k, int stride, int pad,
                              std::vector<double>& dw, std::vector<double>& db);
void conv1d_bwd_params_omp(const Tensor& x, const Tensor& dy, int k, int stride, int pad,
                           std::vector<double>& dw, std::vector<double>& db);
void conv1d_bwd_params(const Tensor& x, const Tensor& dy, int k, int stride, int pad,
                       std::vector<double>& dw, std::vector<double>& db);

// ---- transposed conv1d: w laid out (ci, co, k); x (n, ci, li); y (n, co, lo) ----
void convt1d_fwd_serial(const Tensor& x, const std::vector<double>& w, const std::vector<double>& b,
                        int co, int k, int stride, int pad, Tensor& y);
void convt1d_fwd_omp(const Tensor& x, const std::vector<double>& w, const std::vector<double>& b,
                     int co, int k, int stride, int pad, Tensor& y);
void convt1d_fwd(const Tensor& x, const std::vector<double>& w, const std::vector<double>& b,
                 int co, int k, int stride, int pad, Tensor& y);

void convt1d_bwd_input_serial(const Tensor& dy, const std::vector<double>& w,
                              int ci, int k, int stride, int pad, Tensor& dx);
void convt1d_bwd_input_omp(const Tensor& dy, const std::vector<double>& w,
                           int ci, int k, int stride, int pad, Tensor& dx);
void convt1d_bwd_input(const Tensor& dy, const std::vector<double>& w,
                       int ci, int k, int stride, int pad, Tensor& dx);

void convt1d_bwd_params_serial(const Tensor& x, const Tensor& dy, int k, int stride, int pad,
                               std::vector<double>& dw, std::vector<double>& db);
void convt1d_bwd_params_omp(const Tensor& x, const Tensor& dy, int k, int stride, int pad,
                            std::vector<double>& dw, std::vector<double>& db);
void convt1d_bwd_params(const Tensor& x, const Tensor& dy, int k, int stride, int pad,
                        std::vector<double>& dw, std::vector<double>& db);

// ---- instance normalization over the temporal axis, per (sample, channel) ----
void instnorm_fwd_serial(const Tensor& x, const std::vector<double>& gamma, const std::vector<double>& beta,
                         double eps, Tensor& y, Tensor& xhat, std::vector<double>& istd);
void instnorm_fwd_omp(const Tensor& x, const std::vector<double>& gamma, const std::vector<double>& beta,
                      double eps, Tensor& y, Tensor& xhat, std::vector<double>& istd);
void instnorm_fwd(const Tensor& x, const std::vector<double>& gamma, const std::vector<double>& beta,
                  double eps, Tensor& y, Tensor& xhat, std::vector<double>& istd);

void instnorm_bwd_serial(const Tensor& dy, const std::vector<double>& gamma, const Tensor& xhat,
                         const std::vector<double>& istd, Tensor& dx,
                         std::vector<double>& dgamma, std::vector<double>& dbeta);
void instnorm_bwd_omp(const Tensor& dy, const std::vector<double>& gamma, const Tensor& xhat,
                      const std::vector<double>& istd, Tensor& dx,
                      std::vector<double>& dgamma, std::vector<double>& dbeta);
void instnorm_bwd(const Tensor& dy, const std::vector<double>& gamma, const Tensor& xhat,
                  const std::vector<double>& istd, Tensor& dx,
                  std::vector<double>& dgamma, std::vector<double>& dbeta);

// ---- pointwise / small ops (order-independent per element) ----
void relu_fwd(const Tensor& x, Tensor& y);
void relu_bwd(const Tensor& dy, const Tensor& x, Tensor& dx);

void upsample2_fwd(const Tensor& x, Tensor& y);   // nearest neighbor, l -> 2l
void upsample2_bwd(const Tensor& dy, Tensor& dx);

void gap_fwd(const Tensor& x, Tensor& y);         // (n,c,l) -> (n,c,1), mean over l
void gap_bwd(const Tensor& dy, int l, Tensor& dx);

// ---- linear: x (n,d) as Tensor(n,d,1); w (o,d); y (n,o,1) ----
void linear_fwd_serial(const Tensor& x, const std::vector<double>& w, const std::vector<double>& b,
                       int o, Tensor& y);
void linear_fwd_omp(const Tensor& x, const std::vector<double>& w, const std::vector<double>& b,
                    int o, Tensor& y);
void linear_fwd(const Tensor& x, const std::vector<double>& w, const std::vector<double>& b,
                int o, Tensor& y);
void linear_bwd(const Tensor& x, const Tensor& dy, const std::vector<double>& w,
                Tensor& dx, std::vector<double>& dw, std::vector<double>& db);

// ---- optimizer ----
void adam_step(std::vector<double>& w, const std::vector<double>& g,
               std::vector<double>& m, std::vector<double>& v,
               double lr, double beta1, double beta2, double eps, std::int64_t t);

// ---- reductions ----
// per-item sum over (c*l) of (a-b)^2, reduced over items in index order
double sumsq_diff_batch(const Tensor& a, const Tensor& b, std::vector<double>* per_item = nullptr);

}  // namespace dualpath::kernels
