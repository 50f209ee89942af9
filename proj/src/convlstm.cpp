#include "steerbo/convlstm.hpp"

#include <cmath>

#include "steerbo/errors.hpp"
#include "steerbo/simd.hpp"

namespace steerbo {

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

void apply_sigmoid(Tensor& t) {
    for (double& v : t.data) v = sigmoid(v);
}

void apply_tanh(Tensor& t) {
    for (double& v : t.data) v = std::tanh(v);
}

} // namespace

ConvLSTMParams ConvLSTMParams::create(size_t in_channels, size_t hidden_channels,
                                      size_t kh, size_t kw, size_t height,
                                      size_t width) {
    if (kh % 2 == 0 || kw % 2 == 0)
        throw ConfigError("ConvLSTM kernels must be odd for same padding");
    if (in_channels == 0 || hidden_channels == 0 || height == 0 || width == 0)
        throw ConfigError("ConvLSTM dimensions must be positive");
    ConvLSTMParams p;
    p.in_channels = in_channels;
    p.hidden_channels = hidden_channels;
    p.kh = kh;
    p.kw = kw;
    p.height = height;
    p.width = width;

    auto xw = [&] { return Tensor({hidden_channels, in_channels, kh, kw}); };
    auto hw = [&] { return Tensor({hidden_channels, hidden_channels, kh, kw}); };
    auto cw = [&] { return Tensor({hidden_channels, height, width}); };
    auto bias = [&] { return Tensor({hidden_channels}); };

    p.W_xi = xw(); p.W_hi = hw(); p.W_ci = cw();
    p.W_xf = xw(); p.W_hf = hw(); p.W_cf = cw();
    p.W_xc = xw(); p.W_hc = hw();
    p.W_xo = xw(); p.W_ho = hw(); p.W_co = cw();
    p.b_i = bias(); p.b_f = bias(); p.b_c = bias(); p.b_o = bias();
    return p;
}

void ConvLSTMParams::init(Rng& rng) {
    size_t fan_x_in = in_channels * kh * kw;
    size_t fan_h_in = hidden_channels * kh * kw;
    size_t fan_out = hidden_channels * kh * kw;
    glorot_uniform(W_xi, fan_x_in, fan_out, rng);
    glorot_uniform(W_hi, fan_h_in, fan_out, rng);
    glorot_uniform(W_xf, fan_x_in, fan_out, rng);
    glorot_uniform(W_hf, fan_h_in, fan_out, rng);
    glorot_uniform(W_xc, fan_x_in, fan_out, rng);
    glorot_uniform(W_hc, fan_h_in, fan_out, rng);
    glorot_uniform(W_xo, fan_x_in, fan_out, rng);
    glorot_uniform(W_ho, fan_h_in, fan_out, rng);
    // peepholes and biases stay zero
}

std::vector<Tensor*> ConvLSTMParams::params() {
    return {&W_xi, &W_hi, &W_ci, &W_xf, &W_hf, &W_cf, &W_xc, &W_hc,
            &W_xo, &W_ho, &W_co, &b_i, &b_f, &b_c, &b_o};
}

std::vector<const Tensor*> ConvLSTMParams::params() const {
    return {&W_xi, &W_hi, &W_ci, &W_xf, &W_hf, &W_cf, &W_xc, &W_hc,
            &W_xo, &W_ho, &W_co, &b_i, &b_f, &b_c, &b_o};
}

void convlstm_cell(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                   const ConvLSTMParams& p, Tensor& h_t, Tensor& c_t,
                   ConvLSTMCellCache* cache) {
    require_shape(x, {p.in_channels, p.height, p.width}, "ConvLSTM input");
    const std::vector<size_t> state_shape{p.hidden_channels, p.height, p.width};
    require_shape(h_prev, state_shape, "ConvLSTM hidden state");
    require_shape(c_prev, state_shape, "ConvLSTM cell state");

    const size_t pad_h = (p.kh - 1) / 2, pad_w = (p.kw - 1) / 2;
    // conv2d takes one symmetric pad, so same padding needs a square kernel
    if (pad_h != pad_w)
        throw ConfigError("ConvLSTM requires square kernels (same padding on both axes)");
    const size_t pad = pad_h;
    const size_t n = Tensor::count(state_shape);
    const simd::KernelTable& kt = simd::kernels();

    auto gate_pre = [&](const Tensor& wx, const Tensor& wh, const Tensor* wc,
                        const Tensor& b) {
        Tensor pre = conv2d(x, wx, b, 1, pad);
        Tensor hpart = conv2d(h_prev, wh, Tensor{}, 1, pad);
        kt.add(pre.ptr(), hpart.ptr(), pre.ptr(), n);
        if (wc) kt.hadamard_add(wc->ptr(), c_prev.ptr(), pre.ptr(), n);
        return pre;
    };

    Tensor i = gate_pre(p.W_xi, p.W_hi, &p.W_ci, p.b_i);
    apply_sigmoid(i);
    Tensor f = gate_pre(p.W_xf, p.W_hf, &p.W_cf, p.b_f);
    apply_sigmoid(f);
    Tensor g = gate_pre(p.W_xc, p.W_hc, nullptr, p.b_c);
    apply_tanh(g);

    c_t = Tensor(state_shape);
    for (size_t k = 0; k < n; ++k)
        c_t.data[k] = f.data[k] * c_prev.data[k] + i.data[k] * g.data[k];

    Tensor o = gate_pre(p.W_xo, p.W_ho, &p.W_co, p.b_o);
    apply_sigmoid(o);

    h_t = Tensor(state_shape);
    for (size_t k = 0; k < n; ++k) h_t.data[k] = o.data[k] * std::tanh(c_t.data[k]);

    if (cache) {
        cache->x = x;
        cache->h_prev = h_prev;
        cache->c_prev = c_prev;
        cache->i = std::move(i);
        cache->f = std::move(f);
        cache->g = std::move(g);
        cache->o = std::move(o);
        cache->c_t = c_t;
    }
}

void convlstm_cell_backward(const ConvLSTMCellCache& cache, ConvLSTMParams& p,
                            const Tensor& gh, const Tensor& gc_in, Tensor& gx,
                            Tensor& gh_prev, Tensor& gc_prev) {
    const std::vector<size_t> state_shape{p.hidden_channels, p.height, p.width};
    require_shape(gh, state_shape, "ConvLSTM dLoss/dh");
    require_shape(gc_in, state_shape, "ConvLSTM dLoss/dc");
    const size_t n = Tensor::count(state_shape);
    const size_t pad = (p.kh - 1) / 2;

    const Tensor& i = cache.i;
    const Tensor& f = cache.f;
    const Tensor& g = cache.g;
    const Tensor& o = cache.o;

    // h_t = o * tanh(c_t)
    Tensor go_pre(state_shape), gc(state_shape);
    for (size_t k = 0; k < n; ++k) {
        double th = std::tanh(cache.c_t.data[k]);
        go_pre.data[k] = gh.data[k] * th * o.data[k] * (1.0 - o.data[k]);
        gc.data[k] = gc_in.data[k] + gh.data[k] * o.data[k] * (1.0 - th * th);
    }

    // c_t = f*c_prev + i*g
    Tensor gi_pre(state_shape), gf_pre(state_shape), gg_pre(state_shape);
    for (size_t k = 0; k < n; ++k) {
        gi_pre.data[k] = gc.data[k] * g.data[k] * i.data[k] * (1.0 - i.data[k]);
        gf_pre.data[k] = gc.data[k] * cache.c_prev.data[k] * f.data[k] * (1.0 - f.data[k]);
        gg_pre.data[k] = gc.data[k] * i.data[k] * (1.0 - g.data[k] * g.data[k]);
    }

    // peephole terms: every gate read c_prev
    p.W_ci.ensure_grad();
    p.W_cf.ensure_grad();
    p.W_co.ensure_grad();
    gc_prev = Tensor(state_shape);
    for (size_t k = 0; k < n; ++k) {
        p.W_ci.grad[k] += gi_pre.data[k] * cache.c_prev.data[k];
        p.W_cf.grad[k] += gf_pre.data[k] * cache.c_prev.data[k];
        p.W_co.grad[k] += go_pre.data[k] * cache.c_prev.data[k];
        gc_prev.data[k] = gc.data[k] * f.data[k] + gi_pre.data[k] * p.W_ci.data[k] +
                          gf_pre.data[k] * p.W_cf.data[k] +
                          go_pre.data[k] * p.W_co.data[k];
    }

    gx = Tensor(cache.x.shape);
    gh_prev = Tensor(state_shape);
    const simd::KernelTable& kt = simd::kernels();
    auto backprop_gate = [&](const Tensor& pre_grad, Tensor& wx, Tensor& wh, Tensor& b) {
        Tensor gxi = conv2d_backward(cache.x, wx, b, pre_grad, 1, pad);
        kt.add(gx.ptr(), gxi.ptr(), gx.ptr(), gx.size());
        Tensor nob; // hidden path carries no bias of its own
        Tensor ghi = conv2d_backward(cache.h_prev, wh, nob, pre_grad, 1, pad);
        kt.add(gh_prev.ptr(), ghi.ptr(), gh_prev.ptr(), n);
    };
    backprop_gate(gi_pre, p.W_xi, p.W_hi, p.b_i);
    backprop_gate(gf_pre, p.W_xf, p.W_hf, p.b_f);
    backprop_gate(gg_pre, p.W_xc, p.W_hc, p.b_c);
    backprop_gate(go_pre, p.W_xo, p.W_ho, p.b_o);
}

Tensor convlstm_layer(const Tensor& x_seq, const ConvLSTMParams& p,
                      bool return_sequence,
                      std::vector<ConvLSTMCellCache>* caches) {
    if (x_seq.rank() != 4)
        throw ConfigError("ConvLSTM sequence must be (T,C,H,W), got " + shape_str(x_seq.shape));
    const size_t T = x_seq.dim(0);
    if (T == 0) throw ConfigError("ConvLSTM sequence has zero steps");
    const std::vector<size_t> in_shape{p.in_channels, p.height, p.width};
    const std::vector<size_t> state_shape{p.hidden_channels, p.height, p.width};
    const size_t in_n = Tensor::count(in_shape);
    const size_t st_n = Tensor::count(state_shape);

    if (caches) caches->assign(T, {});
    Tensor h(state_shape), c(state_shape);
    Tensor out = return_sequence ? Tensor({T, p.hidden_channels, p.height, p.width})
                                 : Tensor(state_shape);
    for (size_t t = 0; t < T; ++t) {
        Tensor xt(in_shape);
        std::copy(x_seq.ptr() + t * in_n, x_seq.ptr() + (t + 1) * in_n, xt.ptr());
        Tensor h_new, c_new;
        convlstm_cell(xt, h, c, p, h_new, c_new, caches ? &(*caches)[t] : nullptr);
        h = std::move(h_new);
        c = std::move(c_new);
        if (return_sequence)
            std::copy(h.ptr(), h.ptr() + st_n, out.ptr() + t * st_n);
    }
    if (!return_sequence) out = std::move(h);
    return out;
}

Tensor convlstm_layer_backward(const std::vector<ConvLSTMCellCache>& caches,
                               ConvLSTMParams& p, const Tensor& gout,
                               bool return_sequence) {
    const size_t T = caches.size();
    if (T == 0) throw ConfigError("ConvLSTM backward without cached steps");
    const std::vector<size_t> state_shape{p.hidden_channels, p.height, p.width};
    const size_t st_n = Tensor::count(state_shape);
    const size_t in_n = p.in_channels * p.height * p.width;

    if (return_sequence)
        require_shape(gout, {T, p.hidden_channels, p.height, p.width},
                      "ConvLSTM sequence upstream gradient");
    else
        require_shape(gout, state_shape, "ConvLSTM upstream gradient");

    Tensor gx_seq({T, p.in_channels, p.height, p.width});
    Tensor gh(state_shape), gc(state_shape);
    if (!return_sequence) gh = gout;
    for (size_t t = T; t-- > 0;) {
        if (return_sequence) {
            const double* src = gout.ptr() + t * st_n;
            for (size_t k = 0; k < st_n; ++k) gh.data[k] += src[k];
        }
        Tensor gx, gh_prev, gc_prev;
        convlstm_cell_backward(caches[t], p, gh, gc, gx, gh_prev, gc_prev);
        std::copy(gx.ptr(), gx.ptr() + in_n, gx_seq.ptr() + t * in_n);
        gh = std::move(gh_prev);
        gc = std::move(gc_prev);
    }
    return gx_seq;
}

} // namespace steerbo
