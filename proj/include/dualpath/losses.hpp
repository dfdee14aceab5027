// Training objectives: reconstruction, distortion, perceptual and their
// weighted composite. Reduction semantics are fixed: squared L2 over all
// per-item entries (time x channels), mean over the batch only. Reporting
// metrics with per-timestep means live in the sweep module instead.
#pragma once

#include "dualpath/common.hpp"
#include "dualpath/tensor.hpp"

#include <vector>

namespace dualpath::losses {

struct LossWeights {
    double lambda_d = 1.0;
    double lambda_p = 0.0;

    void validate() const {
        if (lambda_d < 0.0 || lambda_p < 0.0) throw ConfigError("loss weights must be nonnegative");
        if (lambda_d == 0.0 && lambda_p == 0.0) throw ConfigError("loss weights must not both be zero");
    }
};

// (1/n) sum_i ||x_i - xhat_i||_2^2, the norm summed over all c*l entries
double recon_loss(const Tensor& x, const Tensor& xhat);
// gradient wrt xhat: (2/n)(xhat - x)
Tensor recon_loss_grad(const Tensor& x, const Tensor& xhat);

// identical contract to recon_loss, applied to (s_ecg, s_ecg_hat)
double distortion_loss(const Tensor& s_ecg, const Tensor& s_ecg_hat);
Tensor distortion_loss_grad(const Tensor& s_ecg, const Tensor& s_ecg_hat);

// same formula over discriminator feature maps
double perceptual_loss(const Tensor& f, const Tensor& fhat);
Tensor perceptual_loss_grad(const Tensor& f, const Tensor& fhat);

// multi-layer variant: sum over layers of the single-layer loss
double perceptual_loss_multilayer(const std::vector<Tensor>& f, const std::vector<Tensor>& fhat);

// lambda_d * L_d + lambda_p * L_p; rejects negative loss inputs
double composite_loss(double l_d, double l_p, const LossWeights& w);

}  // namespace dualpath::losses
