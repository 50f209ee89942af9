#pragma once

#include <cstdint>
#include <vector>

#include "steerbo/rng.hpp"
#include "steerbo/tensor.hpp"

namespace steerbo {

// All convolutions are cross-correlations (no kernel flip), the usual deep
// learning convention. Backward functions accumulate parameter gradients
// into the parameter tensors' grad buffers (allocated on demand) and return
// the gradient with respect to the input, so batch items can be processed
// one after another with summed parameter gradients.

// x: (C,H,W); w: (OC,C,KH,KW); b: (OC) or empty for no bias.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, size_t stride,
              size_t pad);
Tensor conv2d_backward(const Tensor& x, Tensor& w, Tensor& b, const Tensor& gout,
                       size_t stride, size_t pad);

// x: (C,T,H,W); w: (OC,C,KT,KH,KW); b: (OC) or empty. Padding per axis.
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, size_t stride,
              size_t pad_t, size_t pad_h, size_t pad_w);
Tensor conv3d_backward(const Tensor& x, Tensor& w, Tensor& b, const Tensor& gout,
                       size_t stride, size_t pad_t, size_t pad_h, size_t pad_w);

// Window max with stride equal to the window; trailing remainder truncated.
// Ties route the subgradient to the first position in row-major order.
Tensor maxpool2d(const Tensor& x, size_t wh, size_t ww);
Tensor maxpool2d_backward(const Tensor& x, const Tensor& gout, size_t wh, size_t ww);
Tensor maxpool3d(const Tensor& x, size_t wt, size_t wh, size_t ww);
Tensor maxpool3d_backward(const Tensor& x, const Tensor& gout, size_t wt, size_t wh,
                          size_t ww);

// x: any shape, treated flat of length IN; W: (OUT,IN); b: (OUT).
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor dense_backward(const Tensor& x, Tensor& w, Tensor& b, const Tensor& gout);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& gout);

// Inverted dropout: in train mode each element is zeroed with probability
// `rate` and survivors are scaled by 1/(1-rate); eval mode is the identity.
// The applied mask (all ones when inactive) is written to `mask`.
Tensor dropout(const Tensor& x, double rate, bool train, Rng& rng, Tensor& mask);
Tensor dropout_backward(const Tensor& mask, const Tensor& gout);

// Per-channel batch normalization over a batch of same-shaped samples;
// `axis` selects the channel dimension within each sample's shape.
struct BatchNormState {
    Tensor gamma, beta; // (C), initialized to 1 / 0
    std::vector<double> running_mean, running_var;
    double eps = 1e-5;
    double momentum = 0.9;

    void init(size_t channels);
    size_t channels() const { return gamma.size(); }
};

struct BatchNormCache {
    std::vector<double> mean, inv_std;
    Batch xhat;
    size_t axis = 0;
    size_t per_channel = 0; // reduced positions per channel across the batch
};

Batch batchnorm(const Batch& x, size_t axis, BatchNormState& st, bool train,
                BatchNormCache* cache);
Batch batchnorm_backward(const Batch& gout, BatchNormState& st,
                         const BatchNormCache& cache);

// Mean over every element of every sample of the squared difference.
double mse_loss(const Batch& pred, const Batch& target);
Batch mse_grad(const Batch& pred, const Batch& target);

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    uint64_t t = 0;
    std::vector<std::vector<double>> m, v;

    void init(const std::vector<Tensor*>& params);
};

// One Adam update with bias correction, reading each parameter's grad.
// Throws NumericError on non-finite gradients.
void adam_step(const std::vector<Tensor*>& params, AdamState& st);

// Uniform Glorot initialization on [-sqrt(6/(fan_in+fan_out)), +...].
void glorot_uniform(Tensor& w, size_t fan_in, size_t fan_out, Rng& rng);

} // namespace steerbo
