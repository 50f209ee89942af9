#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "steerbo/convlstm.hpp"
#include "steerbo/nn_ops.hpp"
#include "steerbo/rng.hpp"
#include "steerbo/tensor.hpp"

namespace steerbo {

// A layer processes a batch of per-sample tensors and caches whatever its
// backward pass needs. Training is strictly forward-then-backward on the
// same batch, so a single cache slot per layer suffices.
class Layer {
  public:
    virtual ~Layer() = default;
    virtual Batch forward(const Batch& x, bool train) = 0;
    virtual Batch backward(const Batch& gout) = 0;
    virtual std::vector<std::pair<std::string, Tensor*>> named_params() { return {}; }
    virtual std::string kind() const = 0;
    virtual nlohmann::json describe() const;
};

// Fixed elementwise y = scale*x + shift (the "normalization layer";
// identity when data was already scaled upstream).
class AffineScaleLayer : public Layer {
  public:
    AffineScaleLayer(double scale, double shift) : scale_(scale), shift_(shift) {}
    Batch forward(const Batch& x, bool train) override;
    Batch backward(const Batch& gout) override;
    std::string kind() const override { return "affine_scale"; }
    nlohmann::json describe() const override;

  private:
    double scale_, shift_;
};

class Conv2DLayer : public Layer {
  public:
    Conv2DLayer(size_t in_channels, size_t out_channels, size_t kh, size_t kw,
                size_t stride, size_t pad, Rng& rng);
    Batch forward(const Batch& x, bool train) override;
    Batch backward(const Batch& gout) override;
    std::vector<std::pair<std::string, Tensor*>> named_params() override;
    std::string kind() const override { return "conv2d"; }
    nlohmann::json describe() const override;

  private:
    Tensor w_, b_;
    size_t stride_, pad_;
    Batch x_;
};

class Conv3DLayer : public Layer {
  public:
    Conv3DLayer(size_t in_channels, size_t out_channels, size_t kt, size_t kh,
                size_t kw, size_t pad_t, size_t pad_h, size_t pad_w, Rng& rng);
    Batch forward(const Batch& x, bool train) override;
    Batch backward(const Batch& gout) override;
    std::vector<std::pair<std::string, Tensor*>> named_params() override;
    std::string kind() const override { return "conv3d"; }
    nlohmann::json describe() const override;

  private:
    Tensor w_, b_;
    size_t pad_t_, pad_h_, pad_w_;
    Batch x_;
};

class ConvLSTMLayer : public Layer {
  public:
    ConvLSTMLayer(size_t in_channels, size_t hidden_channels, size_t kernel,
                  size_t height, size_t width, bool return_sequence, Rng& rng);
    Batch forward(const Batch& x, bool train) override;
    Batch backward(const Batch& gout) override;
    std::vector<std::pair<std::string, Tensor*>> named_params() override;
    std::string kind() const override { return "convlstm"; }
    nlohmann::json describe() const override;

  private:
    ConvLSTMParams p_;
    bool return_sequence_;
    std::vector<std::vector<ConvLSTMCellCache>> caches_;
};

class BatchNormLayer : public Layer {
  public:
    BatchNormLayer(size_t channels, size_t axis);
    Batch forward(const Batch& x, bool train) override;
    Batch backward(const Batch& gout) override;
    std::vector<std::pair<std::string, Tensor*>> named_params() override;
    std::string kind() const override { return "batchnorm"; }
    nlohmann::json describe() const override;
    BatchNormState& state() { return st_; }

  private:
    size_t axis_;
    BatchNormState st_;
    BatchNormCache cache_;
    bool trained_forward_ = false;
};

class MaxPool2DLayer : public Layer {
  public:
    MaxPool2DLayer(size_t wh, size_t ww) : wh_(wh), ww_(ww) {}
    Batch forward(const Batch& x, bool train) override;
    Batch backward(const Batch& gout) override;
    std::string kind() const override { return "maxpool2d"; }
    nlohmann::json describe() const override;

  private:
    size_t wh_, ww_;
    Batch x_;
};

class MaxPool3DLayer : public Layer {
  public:
    MaxPool3DLayer(size_t wt, size_t wh, size_t ww) : wt_(wt), wh_(wh), ww_(ww) {}
    Batch forward(const Batch& x, bool train) override;
    Batch backward(const Batch& gout) override;
    std::string kind() const override { return "maxpool3d"; }
    nlohmann::json describe() const override;

  private:
    size_t wt_, wh_, ww_;
    Batch x_;
};

// Selects the temporally last frame of a (T,C,H,W) sample, yielding
// (C,H,W); single-frame (C,H,W) inputs pass through unchanged. Lets the
// single-frame comparison stacks consume the same stacked samples as the
// sequence model.
class LastFrameLayer : public Layer {
  public:
    Batch forward(const Batch& x, bool train) override;
    Batch backward(const Batch& gout) override;
    std::string kind() const override { return "last_frame"; }

  private:
    std::vector<size_t> in_shape_;
    bool passthrough_ = false;
};

// (T,C,H,W) -> (C,T,H,W); bridges sequence layers into conv3d layout.
class PermuteTCLayer : public Layer {
  public:
    Batch forward(const Batch& x, bool train) override;
    Batch backward(const Batch& gout) override;
    std::string kind() const override { return "permute_tc"; }

  private:
    std::vector<size_t> in_shape_;
};

class FlattenLayer : public Layer {
  public:
    Batch forward(const Batch& x, bool train) override;
    Batch backward(const Batch& gout) override;
    std::string kind() const override { return "flatten"; }

  private:
    std::vector<size_t> in_shape_;
};

class DenseLayer : public Layer {
  public:
    DenseLayer(size_t in, size_t out, Rng& rng);
    Batch forward(const Batch& x, bool train) override;
    Batch backward(const Batch& gout) override;
    std::vector<std::pair<std::string, Tensor*>> named_params() override;
    std::string kind() const override { return "dense"; }
    nlohmann::json describe() const override;

  private:
    Tensor w_, b_;
    Batch x_;
};

class ReluLayer : public Layer {
  public:
    Batch forward(const Batch& x, bool train) override;
    Batch backward(const Batch& gout) override;
    std::string kind() const override { return "relu"; }

  private:
    Batch x_;
};

class DropoutLayer : public Layer {
  public:
    DropoutLayer(double rate, uint64_t seed);
    Batch forward(const Batch& x, bool train) override;
    Batch backward(const Batch& gout) override;
    std::string kind() const override { return "dropout"; }
    nlohmann::json describe() const override;

    // When frozen, forward reuses the masks of the previous train-mode
    // forward; gradient checking differentiates through a fixed mask.
    void set_frozen(bool frozen) { frozen_ = frozen; }
    double rate() const { return rate_; }

  private:
    double rate_;
    Rng rng_;
    bool frozen_ = false;
    Batch masks_;
};

class Network {
  public:
    void add(std::unique_ptr<Layer> layer);
    Batch forward(const Batch& x, bool train);
    Batch backward(const Batch& gout);

    size_t layer_count() const { return layers_.size(); }
    Layer& layer(size_t i) { return *layers_[i]; }
    const Layer& layer(size_t i) const { return *layers_[i]; }

    // Parameter names are "layer<i>.<local>", in fixed manifest order.
    std::vector<Tensor*> params();
    std::vector<std::pair<std::string, Tensor*>> named_params();
    size_t param_count();
    void zero_grad();
    void set_dropout_frozen(bool frozen);

    nlohmann::json manifest() const;

  private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    size_t elements_checked = 0;
};

// Central finite differences on every parameter element against the
// analytic gradients of an MSE loss; relative error uses denominator
// max(|analytic|, |numeric|, 1e-6). Runs in train mode with dropout masks
// frozen across the probing forwards.
GradCheckReport grad_check(Network& net, const Batch& x, const Batch& target,
                           double h = 1e-5);

} // namespace steerbo
