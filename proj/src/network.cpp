#include "steerbo/network.hpp"

#include <algorithm>
#include <cmath>

#include "steerbo/errors.hpp"
#include "steerbo/simd.hpp"

namespace steerbo {

nlohmann::json Layer::describe() const { return {{"kind", kind()}}; }

Batch AffineScaleLayer::forward(const Batch& x, bool) {
    Batch y(x.size());
    for (size_t s = 0; s < x.size(); ++s) {
        y[s] = Tensor(x[s].shape);
        for (size_t i = 0; i < x[s].size(); ++i)
            y[s].data[i] = scale_ * x[s].data[i] + shift_;
    }
    return y;
}

Batch AffineScaleLayer::backward(const Batch& gout) {
    Batch gx(gout.size());
    for (size_t s = 0; s < gout.size(); ++s) {
        gx[s] = Tensor(gout[s].shape);
        for (size_t i = 0; i < gout[s].size(); ++i) gx[s].data[i] = scale_ * gout[s].data[i];
    }
    return gx;
}

nlohmann::json AffineScaleLayer::describe() const {
    return {{"kind", kind()}, {"scale", scale_}, {"shift", shift_}};
}

Conv2DLayer::Conv2DLayer(size_t in_channels, size_t out_channels, size_t kh, size_t kw,
                         size_t stride, size_t pad, Rng& rng)
    : w_({out_channels, in_channels, kh, kw}), b_({out_channels}), stride_(stride),
      pad_(pad) {
    glorot_uniform(w_, in_channels * kh * kw, out_channels * kh * kw, rng);
}

Batch Conv2DLayer::forward(const Batch& x, bool) {
    x_ = x;
    Batch y(x.size());
    for (size_t s = 0; s < x.size(); ++s) y[s] = conv2d(x[s], w_, b_, stride_, pad_);
    return y;
}

Batch Conv2DLayer::backward(const Batch& gout) {
    Batch gx(gout.size());
    for (size_t s = 0; s < gout.size(); ++s)
        gx[s] = conv2d_backward(x_[s], w_, b_, gout[s], stride_, pad_);
    return gx;
}

std::vector<std::pair<std::string, Tensor*>> Conv2DLayer::named_params() {
    return {{"w", &w_}, {"b", &b_}};
}

nlohmann::json Conv2DLayer::describe() const {
    return {{"kind", kind()},
            {"out_channels", w_.dim(0)},
            {"in_channels", w_.dim(1)},
            {"kernel", {w_.dim(2), w_.dim(3)}},
            {"stride", stride_},
            {"pad", pad_}};
}

Conv3DLayer::Conv3DLayer(size_t in_channels, size_t out_channels, size_t kt, size_t kh,
                         size_t kw, size_t pad_t, size_t pad_h, size_t pad_w, Rng& rng)
    : w_({out_channels, in_channels, kt, kh, kw}), b_({out_channels}), pad_t_(pad_t),
      pad_h_(pad_h), pad_w_(pad_w) {
    glorot_uniform(w_, in_channels * kt * kh * kw, out_channels * kt * kh * kw, rng);
}

Batch Conv3DLayer::forward(const Batch& x, bool) {
    x_ = x;
    Batch y(x.size());
    for (size_t s = 0; s < x.size(); ++s)
        y[s] = conv3d(x[s], w_, b_, 1, pad_t_, pad_h_, pad_w_);
    return y;
}

Batch Conv3DLayer::backward(const Batch& gout) {
    Batch gx(gout.size());
    for (size_t s = 0; s < gout.size(); ++s)
        gx[s] = conv3d_backward(x_[s], w_, b_, gout[s], 1, pad_t_, pad_h_, pad_w_);
    return gx;
}

std::vector<std::pair<std::string, Tensor*>> Conv3DLayer::named_params() {
    return {{"w", &w_}, {"b", &b_}};
}

nlohmann::json Conv3DLayer::describe() const {
    return {{"kind", kind()},
            {"out_channels", w_.dim(0)},
            {"in_channels", w_.dim(1)},
            {"kernel", {w_.dim(2), w_.dim(3), w_.dim(4)}},
            {"pad", {pad_t_, pad_h_, pad_w_}}};
}

ConvLSTMLayer::ConvLSTMLayer(size_t in_channels, size_t hidden_channels, size_t kernel,
                             size_t height, size_t width, bool return_sequence,
                             Rng& rng)
    : p_(ConvLSTMParams::create(in_channels, hidden_channels, kernel, kernel, height,
                                width)),
      return_sequence_(return_sequence) {
    p_.init(rng);
}

Batch ConvLSTMLayer::forward(const Batch& x, bool) {
    caches_.assign(x.size(), {});
    Batch y(x.size());
    for (size_t s = 0; s < x.size(); ++s)
        y[s] = convlstm_layer(x[s], p_, return_sequence_, &caches_[s]);
    return y;
}

Batch ConvLSTMLayer::backward(const Batch& gout) {
    Batch gx(gout.size());
    for (size_t s = 0; s < gout.size(); ++s)
        gx[s] = convlstm_layer_backward(caches_[s], p_, gout[s], return_sequence_);
    return gx;
}

std::vector<std::pair<std::string, Tensor*>> ConvLSTMLayer::named_params() {
    return {{"W_xi", &p_.W_xi}, {"W_hi", &p_.W_hi}, {"W_ci", &p_.W_ci},
            {"W_xf", &p_.W_xf}, {"W_hf", &p_.W_hf}, {"W_cf", &p_.W_cf},
            {"W_xc", &p_.W_xc}, {"W_hc", &p_.W_hc}, {"W_xo", &p_.W_xo},
            {"W_ho", &p_.W_ho}, {"W_co", &p_.W_co}, {"b_i", &p_.b_i},
            {"b_f", &p_.b_f},   {"b_c", &p_.b_c},   {"b_o", &p_.b_o}};
}

nlohmann::json ConvLSTMLayer::describe() const {
    return {{"kind", kind()},
            {"in_channels", p_.in_channels},
            {"hidden_channels", p_.hidden_channels},
            {"kernel", {p_.kh, p_.kw}},
            {"spatial", {p_.height, p_.width}},
            {"return_sequence", return_sequence_}};
}

BatchNormLayer::BatchNormLayer(size_t channels, size_t axis) : axis_(axis) {
    st_.init(channels);
}

Batch BatchNormLayer::forward(const Batch& x, bool train) {
    trained_forward_ = train;
    return batchnorm(x, axis_, st_, train, train ? &cache_ : nullptr);
}

Batch BatchNormLayer::backward(const Batch& gout) {
    if (!trained_forward_)
        throw ConfigError("batchnorm backward requires a train-mode forward");
    return batchnorm_backward(gout, st_, cache_);
}

std::vector<std::pair<std::string, Tensor*>> BatchNormLayer::named_params() {
    return {{"gamma", &st_.gamma}, {"beta", &st_.beta}};
}

nlohmann::json BatchNormLayer::describe() const {
    return {{"kind", kind()}, {"channels", st_.channels()}, {"axis", axis_}};
}

Batch MaxPool2DLayer::forward(const Batch& x, bool) {
    x_ = x;
    Batch y(x.size());
    for (size_t s = 0; s < x.size(); ++s) y[s] = maxpool2d(x[s], wh_, ww_);
    return y;
}

Batch MaxPool2DLayer::backward(const Batch& gout) {
    Batch gx(gout.size());
    for (size_t s = 0; s < gout.size(); ++s)
        gx[s] = maxpool2d_backward(x_[s], gout[s], wh_, ww_);
    return gx;
}

nlohmann::json MaxPool2DLayer::describe() const {
    return {{"kind", kind()}, {"window", {wh_, ww_}}};
}

Batch MaxPool3DLayer::forward(const Batch& x, bool) {
    x_ = x;
    Batch y(x.size());
    for (size_t s = 0; s < x.size(); ++s) y[s] = maxpool3d(x[s], wt_, wh_, ww_);
    return y;
}

Batch MaxPool3DLayer::backward(const Batch& gout) {
    Batch gx(gout.size());
    for (size_t s = 0; s < gout.size(); ++s)
        gx[s] = maxpool3d_backward(x_[s], gout[s], wt_, wh_, ww_);
    return gx;
}

nlohmann::json MaxPool3DLayer::describe() const {
    return {{"kind", kind()}, {"window", {wt_, wh_, ww_}}};
}

namespace {

Tensor permute_tc(const Tensor& x) {
    if (x.rank() != 4) throw ConfigError("permute expects (T,C,H,W), got " + shape_str(x.shape));
    const size_t T = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    Tensor y({C, T, x.dim(2), x.dim(3)});
    for (size_t t = 0; t < T; ++t)
        for (size_t c = 0; c < C; ++c) {
            const double* src = x.ptr() + (t * C + c) * HW;
            std::copy(src, src + HW, y.ptr() + (c * T + t) * HW);
        }
    return y;
}

Tensor permute_ct(const Tensor& x) {
    const size_t C = x.dim(0), T = x.dim(1), HW = x.dim(2) * x.dim(3);
    Tensor y({T, C, x.dim(2), x.dim(3)});
    for (size_t c = 0; c < C; ++c)
        for (size_t t = 0; t < T; ++t) {
            const double* src = x.ptr() + (c * T + t) * HW;
            std::copy(src, src + HW, y.ptr() + (t * C + c) * HW);
        }
    return y;
}

} // namespace

Batch LastFrameLayer::forward(const Batch& x, bool) {
    Batch y(x.size());
    for (size_t s = 0; s < x.size(); ++s) {
        const Tensor& t = x[s];
        if (t.rank() == 3) {
            passthrough_ = true;
            y[s] = t;
            continue;
        }
        if (t.rank() != 4)
            throw ConfigError("last_frame expects (T,C,H,W) or (C,H,W), got " +
                              shape_str(t.shape));
        passthrough_ = false;
        in_shape_ = t.shape;
        const size_t per = t.dim(1) * t.dim(2) * t.dim(3);
        y[s] = Tensor({t.dim(1), t.dim(2), t.dim(3)});
        const double* src = t.ptr() + (t.dim(0) - 1) * per;
        std::copy(src, src + per, y[s].ptr());
    }
    return y;
}

Batch LastFrameLayer::backward(const Batch& gout) {
    Batch gx(gout.size());
    for (size_t s = 0; s < gout.size(); ++s) {
        if (passthrough_) {
            gx[s] = gout[s];
            continue;
        }
        gx[s] = Tensor(in_shape_);
        const size_t per = gout[s].size();
        std::copy(gout[s].ptr(), gout[s].ptr() + per,
                  gx[s].ptr() + (in_shape_[0] - 1) * per);
    }
    return gx;
}

Batch PermuteTCLayer::forward(const Batch& x, bool) {
    if (!x.empty()) in_shape_ = x[0].shape;
    Batch y(x.size());
    for (size_t s = 0; s < x.size(); ++s) y[s] = permute_tc(x[s]);
    return y;
}

Batch PermuteTCLayer::backward(const Batch& gout) {
    Batch gx(gout.size());
    for (size_t s = 0; s < gout.size(); ++s) gx[s] = permute_ct(gout[s]);
    return gx;
}

Batch FlattenLayer::forward(const Batch& x, bool) {
    if (!x.empty()) in_shape_ = x[0].shape;
    Batch y(x.size());
    for (size_t s = 0; s < x.size(); ++s) {
        y[s] = Tensor({x[s].size()});
        y[s].data = x[s].data;
    }
    return y;
}

Batch FlattenLayer::backward(const Batch& gout) {
    Batch gx(gout.size());
    for (size_t s = 0; s < gout.size(); ++s) {
        gx[s] = Tensor(in_shape_);
        gx[s].data = gout[s].data;
    }
    return gx;
}

DenseLayer::DenseLayer(size_t in, size_t out, Rng& rng) : w_({out, in}), b_({out}) {
    glorot_uniform(w_, in, out, rng);
}

Batch DenseLayer::forward(const Batch& x, bool) {
    x_ = x;
    Batch y(x.size());
    for (size_t s = 0; s < x.size(); ++s) y[s] = dense(x[s], w_, b_);
    return y;
}

Batch DenseLayer::backward(const Batch& gout) {
    Batch gx(gout.size());
    for (size_t s = 0; s < gout.size(); ++s)
        gx[s] = dense_backward(x_[s], w_, b_, gout[s]);
    return gx;
}

std::vector<std::pair<std::string, Tensor*>> DenseLayer::named_params() {
    return {{"w", &w_}, {"b", &b_}};
}

nlohmann::json DenseLayer::describe() const {
    return {{"kind", kind()}, {"in", w_.dim(1)}, {"out", w_.dim(0)}};
}

Batch ReluLayer::forward(const Batch& x, bool) {
    x_ = x;
    Batch y(x.size());
    for (size_t s = 0; s < x.size(); ++s) y[s] = relu(x[s]);
    return y;
}

Batch ReluLayer::backward(const Batch& gout) {
    Batch gx(gout.size());
    for (size_t s = 0; s < gout.size(); ++s) gx[s] = relu_backward(x_[s], gout[s]);
    return gx;
}

DropoutLayer::DropoutLayer(double rate, uint64_t seed) : rate_(rate), rng_(seed) {
    if (rate < 0.0 || rate >= 1.0)
        throw ConfigError("dropout rate must lie in [0,1), got " + std::to_string(rate));
}

Batch DropoutLayer::forward(const Batch& x, bool train) {
    Batch y(x.size());
    if (frozen_) {
        if (masks_.size() != x.size())
            throw ConfigError("frozen dropout has no mask for this batch");
        for (size_t s = 0; s < x.size(); ++s) {
            y[s] = Tensor(x[s].shape);
            simd::kernels().hadamard(x[s].ptr(), masks_[s].ptr(), y[s].ptr(), x[s].size());
        }
        return y;
    }
    masks_.assign(x.size(), Tensor{});
    for (size_t s = 0; s < x.size(); ++s)
        y[s] = dropout(x[s], rate_, train, rng_, masks_[s]);
    return y;
}

Batch DropoutLayer::backward(const Batch& gout) {
    Batch gx(gout.size());
    for (size_t s = 0; s < gout.size(); ++s)
        gx[s] = dropout_backward(masks_[s], gout[s]);
    return gx;
}

nlohmann::json DropoutLayer::describe() const {
    return {{"kind", kind()}, {"rate", rate_}};
}

void Network::add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

Batch Network::forward(const Batch& x, bool train) {
    Batch cur = x;
    for (auto& l : layers_) cur = l->forward(cur, train);
    return cur;
}

Batch Network::backward(const Batch& gout) {
    Batch cur = gout;
    for (size_t i = layers_.size(); i-- > 0;) cur = layers_[i]->backward(cur);
    return cur;
}

std::vector<Tensor*> Network::params() {
    std::vector<Tensor*> out;
    for (auto& l : layers_)
        for (auto& [name, t] : l->named_params()) out.push_back(t);
    return out;
}

std::vector<std::pair<std::string, Tensor*>> Network::named_params() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (size_t i = 0; i < layers_.size(); ++i)
        for (auto& [name, t] : layers_[i]->named_params())
            out.emplace_back("layer" + std::to_string(i) + "." + name, t);
    return out;
}

size_t Network::param_count() {
    size_t n = 0;
    for (Tensor* t : params()) n += t->size();
    return n;
}

void Network::zero_grad() {
    for (Tensor* t : params()) {
        t->ensure_grad();
        t->zero_grad();
    }
}

void Network::set_dropout_frozen(bool frozen) {
    for (auto& l : layers_)
        if (auto* d = dynamic_cast<DropoutLayer*>(l.get())) d->set_frozen(frozen);
}

nlohmann::json Network::manifest() const {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : layers_) layers.push_back(l->describe());
    return {{"layers", layers}};
}

GradCheckReport grad_check(Network& net, const Batch& x, const Batch& target,
                           double h) {
    // materialize dropout masks, then hold them fixed across the probes
    net.forward(x, true);
    net.set_dropout_frozen(true);

    net.zero_grad();
    Batch out = net.forward(x, true);
    net.backward(mse_grad(out, target));

    GradCheckReport rep;
    for (auto& [name, t] : net.named_params()) {
        for (size_t i = 0; i < t->size(); ++i) {
            double saved = t->data[i];
            t->data[i] = saved + h;
            double up = mse_loss(net.forward(x, true), target);
            t->data[i] = saved - h;
            double dn = mse_loss(net.forward(x, true), target);
            t->data[i] = saved;
            double numeric = (up - dn) / (2 * h);
            double analytic = t->grad[i];
            // The floor absorbs finite-difference cancellation noise on
            // gradients that are structurally zero (for example a bias
            // feeding straight into batch normalization, which removes any
            // per-channel shift).
            double rel = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), 1e-6});
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_param = name + "[" + std::to_string(i) + "]";
            }
            ++rep.elements_checked;
        }
    }
    net.set_dropout_frozen(false);
    return rep;
}

} // namespace steerbo
