#pragma once

#include <vector>

#include "steerbo/nn_ops.hpp"
#include "steerbo/tensor.hpp"

namespace steerbo {

// Convolutional LSTM cell parameters. The three gates take peephole
// Hadamard terms from the previous cell state, so the peephole weights are
// shaped exactly like the cell state (hidden, H, W). Gate convolutions are
// same-padded (odd kernels) so spatial extents stay fixed across time.
struct ConvLSTMParams {
    size_t in_channels = 0, hidden_channels = 0;
    size_t kh = 3, kw = 3;
    size_t height = 0, width = 0;

    Tensor W_xi, W_hi, W_ci;
    Tensor W_xf, W_hf, W_cf;
    Tensor W_xc, W_hc;
    Tensor W_xo, W_ho, W_co;
    Tensor b_i, b_f, b_c, b_o;

    static ConvLSTMParams create(size_t in_channels, size_t hidden_channels,
                                 size_t kh, size_t kw, size_t height, size_t width);

    // Convolution weights get Glorot init; peepholes and biases start at zero.
    void init(Rng& rng);

    // Fixed manifest order, used for gradients, Adam and serialization.
    std::vector<Tensor*> params();
    std::vector<const Tensor*> params() const;
};

// Everything the backward pass needs from one forward step.
struct ConvLSTMCellCache {
    Tensor x, h_prev, c_prev;
    Tensor i, f, g, o; // post-activation gates (g is the tanh candidate)
    Tensor c_t;
};

// One step of the cell. h_t and c_t are outputs; when `cache` is non-null
// the intermediates are stored for convlstm_cell_backward.
void convlstm_cell(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                   const ConvLSTMParams& p, Tensor& h_t, Tensor& c_t,
                   ConvLSTMCellCache* cache);

// Backward through one step. gh/gc_in are dLoss/dh_t and dLoss/dc_t (the
// latter from future steps; pass zeros at the last step). Parameter
// gradients accumulate into p's grad buffers; input-side gradients are
// written (not accumulated) to gx, gh_prev, gc_prev.
void convlstm_cell_backward(const ConvLSTMCellCache& cache, ConvLSTMParams& p,
                            const Tensor& gh, const Tensor& gc_in, Tensor& gx,
                            Tensor& gh_prev, Tensor& gc_prev);

// Unrolls the cell over a (T, C, H, W) sequence from zero initial state.
// return_sequence: (T, hidden, H, W) of all hidden states; otherwise the
// final (hidden, H, W) state.
Tensor convlstm_layer(const Tensor& x_seq, const ConvLSTMParams& p,
                      bool return_sequence,
                      std::vector<ConvLSTMCellCache>* caches);

// Backward through the unrolled sequence; gout matches the forward output
// shape. Returns the gradient with respect to the input sequence.
Tensor convlstm_layer_backward(const std::vector<ConvLSTMCellCache>& caches,
                               ConvLSTMParams& p, const Tensor& gout,
                               bool return_sequence);

} // namespace steerbo
