#include "dualpath/losses.hpp"

#include "dualpath/kernels.hpp"

namespace dualpath::losses {

namespace {
void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) throw InputError(std::string(what) + ": shape mismatch");
    if (a.n == 0) throw InputError(std::string(what) + ": empty batch");
}
}  // namespace

double recon_loss(const Tensor& x, const Tensor& xhat) {
    require_same_shape(x, xhat, "recon_loss");
    return kernels::sumsq_diff_batch(x, xhat) / x.n;
}

Tensor recon_loss_grad(const Tensor& x, const Tensor& xhat) {
    require_same_shape(x, xhat, "recon_loss_grad");
    Tensor g(x.n, x.c, x.l);
    const double scale = 2.0 / x.n;
    for (std::size_t i = 0; i < g.size(); ++i) g.v[i] = scale * (xhat.v[i] - x.v[i]);
    return g;
}

double distortion_loss(const Tensor& s_ecg, const Tensor& s_ecg_hat) {
    require_same_shape(s_ecg, s_ecg_hat, "distortion_loss");
    return kernels::sumsq_diff_batch(s_ecg, s_ecg_hat) / s_ecg.n;
}

Tensor distortion_loss_grad(const Tensor& s_ecg, const Tensor& s_ecg_hat) {
    return recon_loss_grad(s_ecg, s_ecg_hat);
}

double perceptual_loss(const Tensor& f, const Tensor& fhat) {
    require_same_shape(f, fhat, "perceptual_loss");
    return kernels::sumsq_diff_batch(f, fhat) / f.n;
}

Tensor perceptual_loss_grad(const Tensor& f, const Tensor& fhat) {
    return recon_loss_grad(f, fhat);
}

double perceptual_loss_multilayer(const std::vector<Tensor>& f, const std::vector<Tensor>& fhat) {
    if (f.size() != fhat.size()) throw InputError("perceptual_loss_multilayer: layer count mismatch");
    double total = 0.0;
    for (std::size_t s = 0; s < f.size(); ++s) total += perceptual_loss(f[s], fhat[s]);
    return total;
}

double composite_loss(double l_d, double l_p, const LossWeights& w) {
    w.validate();
    if (l_d < 0.0 || l_p < 0.0) throw InputError("composite_loss: negative loss input");
    return w.lambda_d * l_d + w.lambda_p * l_p;
}

}  // namespace dualpath::losses
