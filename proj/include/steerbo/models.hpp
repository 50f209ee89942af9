#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "steerbo/data_pipeline.hpp"
#include "steerbo/network.hpp"
#include "steerbo/search_space.hpp"

namespace steerbo {

// Architecture and training hyperparameters of the sequence model. The
// tuned fields (feature maps, fc width, dropout, learning rate) are the
// search dimensions of the optimizer; shape and normalization fields are
// fixed by the data pipeline feeding the network.
struct STLSTMConfig {
    std::array<size_t, 4> convlstm_maps{16, 16, 16, 16};
    size_t conv3d_maps = 3;
    size_t fc_neurons = 50;
    double dropout_rate = 0.25;
    double learning_rate = 0.001;

    size_t convlstm_kernel = 3; // square, odd (same padding)
    size_t conv3d_kernel = 3;   // cubic, odd (same padding)

    // input sample shape (frames, channels, height, width)
    size_t frames = 3, channels = 1, height = 66, width = 200;

    // normalization layer y = scale*x + shift; identity for pipeline data
    // already scaled to [-1, 1], (1/127.5, -1) for raw 8-bit pixels
    double norm_scale = 1.0;
    double norm_shift = 0.0;

    void validate() const; // throws ConfigError
};

// Fills the tuned fields from a search-space configuration (names
// convlstm1_maps..convlstm4_maps, conv3d_maps, fc_neurons, dropout,
// learning_rate); everything else keeps its defaults.
STLSTMConfig stlstm_from_configuration(const Configuration& cfg);

// normalization -> 4x(ConvLSTM + batch-norm) -> 3d conv + relu ->
// 2x2x2 max-pool -> flatten -> dense(fc) + relu -> dropout -> dense(1).
// Weight initialization is Glorot, deterministic in the seed.
Network build_stlstm(const STLSTMConfig& cfg, uint64_t seed);

// Single-frame comparison stacks (they take the last frame of a stacked
// sample, or a bare (C,H,W) image). Channel widths follow the declared
// defaults; both end in a linear scalar output.
Network build_pilotnet(size_t channels, size_t height, size_t width, uint64_t seed);
Network build_jnet(size_t channels, size_t height, size_t width, uint64_t seed);

struct TrainOptions {
    double lr = 0.001;
    size_t epochs = 15;
    size_t batch_size = 50;
    size_t patience = 5;
    uint64_t seed = 0;
};

struct TrainReport {
    // eval-mode MSE curves including the epoch-0 evaluation, so both have
    // length epochs_run + 1
    std::vector<double> train_curve;
    std::vector<double> val_curve;
    size_t epochs_run = 0;
    bool early_stopped = false;
    bool diverged = false;
    double best_val_mse = 0.0;
    size_t best_epoch = 0;
    std::string weights_digest;
};

// Mini-batch Adam on the mean-squared-error loss with a seeded shuffle per
// epoch, early stopping on the validation MSE, and a divergence halt on
// non-finite losses. A trailing batch of one sample is merged into the
// previous batch (batch normalization needs at least two samples).
TrainReport train(Network& net, const DatasetSplit& split, const TrainOptions& opt);

// Eval-mode batch forward; one scalar prediction per sample.
std::vector<double> predict_angles(Network& net, const std::vector<Sample>& samples);

// Eval-mode MSE of the network's predictions against the sample labels.
double dataset_mse(Network& net, const std::vector<Sample>& samples);

// FNV-1a digest over parameter names and raw values in manifest order.
std::string weights_digest(Network& net);

// Weight serialization in the flat binary container format; loading
// requires the container's arrays to match the network's parameter
// manifest exactly (names and shapes).
void save_weights(const std::string& path, Network& net);
void load_weights(const std::string& path, Network& net);

} // namespace steerbo
