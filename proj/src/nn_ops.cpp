#include "steerbo/nn_ops.hpp"

#include <algorithm>
#include <cmath>

#include "steerbo/errors.hpp"
#include "steerbo/simd.hpp"

namespace steerbo {

namespace {

size_t out_extent(size_t in, size_t pad, size_t k, size_t stride, const char* what) {
    if (in + 2 * pad < k)
        throw ConfigError(std::string(what) + ": kernel extent " + std::to_string(k) +
                          " exceeds padded input " + std::to_string(in + 2 * pad));
    return (in + 2 * pad - k) / stride + 1;
}

// Zero-padded copy of one (H,W) plane into dst with row stride PW.
void pad_plane(const double* src, size_t h, size_t w, double* dst, size_t pad,
               size_t pw) {
    for (size_t r = 0; r < h; ++r) {
        double* drow = dst + (r + pad) * pw + pad;
        const double* srow = src + r * w;
        std::copy(srow, srow + w, drow);
    }
}

void check_conv2d_shapes(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.rank() != 3) throw ConfigError("conv2d input must be (C,H,W), got " + shape_str(x.shape));
    if (w.rank() != 4) throw ConfigError("conv2d weight must be (OC,C,KH,KW), got " + shape_str(w.shape));
    if (w.dim(1) != x.dim(0))
        throw ConfigError("conv2d channel mismatch: weight expects " + std::to_string(w.dim(1)) +
                          ", input has " + std::to_string(x.dim(0)));
    if (!b.data.empty() && b.size() != w.dim(0))
        throw ConfigError("conv2d bias length " + std::to_string(b.size()) +
                          " does not match " + std::to_string(w.dim(0)) + " output channels");
}

void check_conv3d_shapes(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.rank() != 4) throw ConfigError("conv3d input must be (C,T,H,W), got " + shape_str(x.shape));
    if (w.rank() != 5) throw ConfigError("conv3d weight must be (OC,C,KT,KH,KW), got " + shape_str(w.shape));
    if (w.dim(1) != x.dim(0))
        throw ConfigError("conv3d channel mismatch: weight expects " + std::to_string(w.dim(1)) +
                          ", input has " + std::to_string(x.dim(0)));
    if (!b.data.empty() && b.size() != w.dim(0))
        throw ConfigError("conv3d bias length " + std::to_string(b.size()) +
                          " does not match " + std::to_string(w.dim(0)) + " output channels");
}

} // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, size_t stride,
              size_t pad) {
    check_conv2d_shapes(x, w, b);
    if (stride == 0) throw ConfigError("conv2d stride must be positive");
    const size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const size_t OC = w.dim(0), KH = w.dim(2), KW = w.dim(3);
    const size_t OH = out_extent(H, pad, KH, stride, "conv2d");
    const size_t OW = out_extent(W, pad, KW, stride, "conv2d");
    const size_t PH = H + 2 * pad, PW = W + 2 * pad;

    Tensor xp({C, PH, PW});
    for (size_t c = 0; c < C; ++c)
        pad_plane(x.ptr() + c * H * W, H, W, xp.ptr() + c * PH * PW, pad, PW);

    const simd::KernelTable& kt = simd::kernels();
    Tensor y({OC, OH, OW});
    for (size_t oc = 0; oc < OC; ++oc) {
        double* yplane = y.ptr() + oc * OH * OW;
        if (!b.data.empty()) std::fill(yplane, yplane + OH * OW, b.data[oc]);
        for (size_t c = 0; c < C; ++c) {
            const double* xplane = xp.ptr() + c * PH * PW;
            const double* wbase = w.ptr() + (oc * C + c) * KH * KW;
            for (size_t kh = 0; kh < KH; ++kh) {
                for (size_t oh = 0; oh < OH; ++oh) {
                    const double* xrow = xplane + (oh * stride + kh) * PW;
                    double* yrow = yplane + oh * OW;
                    if (stride == 1) {
                        for (size_t kw = 0; kw < KW; ++kw)
                            kt.axpy(wbase[kh * KW + kw], xrow + kw, yrow, OW);
                    } else {
                        for (size_t kw = 0; kw < KW; ++kw) {
                            double wv = wbase[kh * KW + kw];
                            for (size_t ow = 0; ow < OW; ++ow)
                                yrow[ow] += wv * xrow[ow * stride + kw];
                        }
                    }
                }
            }
        }
    }
    return y;
}

Tensor conv2d_backward(const Tensor& x, Tensor& w, Tensor& b, const Tensor& gout,
                       size_t stride, size_t pad) {
    check_conv2d_shapes(x, w, b);
    const size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const size_t OC = w.dim(0), KH = w.dim(2), KW = w.dim(3);
    const size_t OH = out_extent(H, pad, KH, stride, "conv2d");
    const size_t OW = out_extent(W, pad, KW, stride, "conv2d");
    require_shape(gout, {OC, OH, OW}, "conv2d upstream gradient");
    const size_t PH = H + 2 * pad, PW = W + 2 * pad;

    Tensor xp({C, PH, PW});
    for (size_t c = 0; c < C; ++c)
        pad_plane(x.ptr() + c * H * W, H, W, xp.ptr() + c * PH * PW, pad, PW);

    w.ensure_grad();
    if (!b.data.empty()) b.ensure_grad();
    Tensor gxp({C, PH, PW});

    const simd::KernelTable& kt = simd::kernels();
    for (size_t oc = 0; oc < OC; ++oc) {
        const double* gplane = gout.ptr() + oc * OH * OW;
        if (!b.data.empty()) b.grad[oc] += kt.sum(gplane, OH * OW);
        for (size_t c = 0; c < C; ++c) {
            const double* xplane = xp.ptr() + c * PH * PW;
            double* gxplane = gxp.ptr() + c * PH * PW;
            double* gwbase = w.gptr() + (oc * C + c) * KH * KW;
            const double* wbase = w.ptr() + (oc * C + c) * KH * KW;
            for (size_t kh = 0; kh < KH; ++kh) {
                for (size_t oh = 0; oh < OH; ++oh) {
                    const double* grow = gplane + oh * OW;
                    const double* xrow = xplane + (oh * stride + kh) * PW;
                    double* gxrow = gxplane + (oh * stride + kh) * PW;
                    if (stride == 1) {
                        for (size_t kw = 0; kw < KW; ++kw) {
                            gwbase[kh * KW + kw] += kt.dot(grow, xrow + kw, OW);
                            kt.axpy(wbase[kh * KW + kw], grow, gxrow + kw, OW);
                        }
                    } else {
                        for (size_t kw = 0; kw < KW; ++kw) {
                            double wv = wbase[kh * KW + kw];
                            double acc = 0.0;
                            for (size_t ow = 0; ow < OW; ++ow) {
                                acc += grow[ow] * xrow[ow * stride + kw];
                                gxrow[ow * stride + kw] += wv * grow[ow];
                            }
                            gwbase[kh * KW + kw] += acc;
                        }
                    }
                }
            }
        }
    }

    Tensor gx({C, H, W});
    for (size_t c = 0; c < C; ++c)
        for (size_t r = 0; r < H; ++r) {
            const double* src = gxp.ptr() + c * PH * PW + (r + pad) * PW + pad;
            std::copy(src, src + W, gx.ptr() + c * H * W + r * W);
        }
    return gx;
}

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, size_t stride,
              size_t pad_t, size_t pad_h, size_t pad_w) {
    check_conv3d_shapes(x, w, b);
    if (stride == 0) throw ConfigError("conv3d stride must be positive");
    const size_t C = x.dim(0), T = x.dim(1), H = x.dim(2), W = x.dim(3);
    const size_t OC = w.dim(0), KT = w.dim(2), KH = w.dim(3), KW = w.dim(4);
    const size_t OT = out_extent(T, pad_t, KT, stride, "conv3d");
    const size_t OH = out_extent(H, pad_h, KH, stride, "conv3d");
    const size_t OW = out_extent(W, pad_w, KW, stride, "conv3d");
    const size_t PT = T + 2 * pad_t, PH = H + 2 * pad_h, PW = W + 2 * pad_w;

    Tensor xp({C, PT, PH, PW});
    for (size_t c = 0; c < C; ++c)
        for (size_t t = 0; t < T; ++t)
            pad_plane(x.ptr() + (c * T + t) * H * W, H, W,
                      xp.ptr() + (c * PT + t + pad_t) * PH * PW, pad_h, PW);

    const simd::KernelTable& kt = simd::kernels();
    Tensor y({OC, OT, OH, OW});
    for (size_t oc = 0; oc < OC; ++oc) {
        double* yvol = y.ptr() + oc * OT * OH * OW;
        if (!b.data.empty()) std::fill(yvol, yvol + OT * OH * OW, b.data[oc]);
        for (size_t c = 0; c < C; ++c) {
            const double* wbase = w.ptr() + (oc * C + c) * KT * KH * KW;
            for (size_t ktt = 0; ktt < KT; ++ktt) {
                for (size_t ot = 0; ot < OT; ++ot) {
                    const double* xplane = xp.ptr() + (c * PT + ot * stride + ktt) * PH * PW;
                    double* yplane = yvol + ot * OH * OW;
                    for (size_t kh = 0; kh < KH; ++kh) {
                        for (size_t oh = 0; oh < OH; ++oh) {
                            const double* xrow = xplane + (oh * stride + kh) * PW;
                            double* yrow = yplane + oh * OW;
                            const double* wrow = wbase + (ktt * KH + kh) * KW;
                            if (stride == 1) {
                                for (size_t kw = 0; kw < KW; ++kw)
                                    kt.axpy(wrow[kw], xrow + kw, yrow, OW);
                            } else {
                                for (size_t kw = 0; kw < KW; ++kw) {
                                    double wv = wrow[kw];
                                    for (size_t ow = 0; ow < OW; ++ow)
                                        yrow[ow] += wv * xrow[ow * stride + kw];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return y;
}

Tensor conv3d_backward(const Tensor& x, Tensor& w, Tensor& b, const Tensor& gout,
                       size_t stride, size_t pad_t, size_t pad_h, size_t pad_w) {
    check_conv3d_shapes(x, w, b);
    const size_t C = x.dim(0), T = x.dim(1), H = x.dim(2), W = x.dim(3);
    const size_t OC = w.dim(0), KT = w.dim(2), KH = w.dim(3), KW = w.dim(4);
    const size_t OT = out_extent(T, pad_t, KT, stride, "conv3d");
    const size_t OH = out_extent(H, pad_h, KH, stride, "conv3d");
    const size_t OW = out_extent(W, pad_w, KW, stride, "conv3d");
    require_shape(gout, {OC, OT, OH, OW}, "conv3d upstream gradient");
    const size_t PT = T + 2 * pad_t, PH = H + 2 * pad_h, PW = W + 2 * pad_w;

    Tensor xp({C, PT, PH, PW});
    for (size_t c = 0; c < C; ++c)
        for (size_t t = 0; t < T; ++t)
            pad_plane(x.ptr() + (c * T + t) * H * W, H, W,
                      xp.ptr() + (c * PT + t + pad_t) * PH * PW, pad_h, PW);

    w.ensure_grad();
    if (!b.data.empty()) b.ensure_grad();
    Tensor gxp({C, PT, PH, PW});

    const simd::KernelTable& kt = simd::kernels();
    for (size_t oc = 0; oc < OC; ++oc) {
        const double* gvol = gout.ptr() + oc * OT * OH * OW;
        if (!b.data.empty()) b.grad[oc] += kt.sum(gvol, OT * OH * OW);
        for (size_t c = 0; c < C; ++c) {
            const double* wbase = w.ptr() + (oc * C + c) * KT * KH * KW;
            double* gwbase = w.gptr() + (oc * C + c) * KT * KH * KW;
            for (size_t ktt = 0; ktt < KT; ++ktt) {
                for (size_t ot = 0; ot < OT; ++ot) {
                    const double* xplane = xp.ptr() + (c * PT + ot * stride + ktt) * PH * PW;
                    double* gxplane = gxp.ptr() + (c * PT + ot * stride + ktt) * PH * PW;
                    const double* gplane = gvol + ot * OH * OW;
                    for (size_t kh = 0; kh < KH; ++kh) {
                        for (size_t oh = 0; oh < OH; ++oh) {
                            const double* grow = gplane + oh * OW;
                            const double* xrow = xplane + (oh * stride + kh) * PW;
                            double* gxrow = gxplane + (oh * stride + kh) * PW;
                            const double* wrow = wbase + (ktt * KH + kh) * KW;
                            double* gwrow = gwbase + (ktt * KH + kh) * KW;
                            if (stride == 1) {
                                for (size_t kw = 0; kw < KW; ++kw) {
                                    gwrow[kw] += kt.dot(grow, xrow + kw, OW);
                                    kt.axpy(wrow[kw], grow, gxrow + kw, OW);
                                }
                            } else {
                                for (size_t kw = 0; kw < KW; ++kw) {
                                    double wv = wrow[kw];
                                    double acc = 0.0;
                                    for (size_t ow = 0; ow < OW; ++ow) {
                                        acc += grow[ow] * xrow[ow * stride + kw];
                                        gxrow[ow * stride + kw] += wv * grow[ow];
                                    }
                                    gwrow[kw] += acc;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    Tensor gx({C, T, H, W});
    for (size_t c = 0; c < C; ++c)
        for (size_t t = 0; t < T; ++t)
            for (size_t r = 0; r < H; ++r) {
                const double* src =
                    gxp.ptr() + (c * PT + t + pad_t) * PH * PW + (r + pad_h) * PW + pad_w;
                std::copy(src, src + W, gx.ptr() + (c * T + t) * H * W + r * W);
            }
    return gx;
}

namespace {

void check_pool(size_t extent, size_t window, const char* what) {
    if (window == 0) throw ConfigError(std::string(what) + ": zero pool window");
    if (extent < window)
        throw ConfigError(std::string(what) + ": pool window " + std::to_string(window) +
                          " exceeds extent " + std::to_string(extent));
}

} // namespace

Tensor maxpool2d(const Tensor& x, size_t wh, size_t ww) {
    if (x.rank() != 3) throw ConfigError("maxpool2d input must be (C,H,W), got " + shape_str(x.shape));
    const size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    check_pool(H, wh, "maxpool2d");
    check_pool(W, ww, "maxpool2d");
    const size_t OH = H / wh, OW = W / ww;
    Tensor y({C, OH, OW});
    for (size_t c = 0; c < C; ++c) {
        const double* xp = x.ptr() + c * H * W;
        double* yp = y.ptr() + c * OH * OW;
        for (size_t oh = 0; oh < OH; ++oh)
            for (size_t ow = 0; ow < OW; ++ow) {
                double best = xp[(oh * wh) * W + ow * ww];
                for (size_t r = 0; r < wh; ++r)
                    for (size_t s = 0; s < ww; ++s)
                        best = std::max(best, xp[(oh * wh + r) * W + ow * ww + s]);
                yp[oh * OW + ow] = best;
            }
    }
    return y;
}

Tensor maxpool2d_backward(const Tensor& x, const Tensor& gout, size_t wh, size_t ww) {
    const size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const size_t OH = H / wh, OW = W / ww;
    require_shape(gout, {C, OH, OW}, "maxpool2d upstream gradient");
    Tensor gx({C, H, W});
    for (size_t c = 0; c < C; ++c) {
        const double* xp = x.ptr() + c * H * W;
        double* gp = gx.ptr() + c * H * W;
        const double* gop = gout.ptr() + c * OH * OW;
        for (size_t oh = 0; oh < OH; ++oh)
            for (size_t ow = 0; ow < OW; ++ow) {
                size_t arg = (oh * wh) * W + ow * ww;
                double best = xp[arg];
                for (size_t r = 0; r < wh; ++r)
                    for (size_t s = 0; s < ww; ++s) {
                        size_t i = (oh * wh + r) * W + ow * ww + s;
                        if (xp[i] > best) { // strict: ties keep the first
                            best = xp[i];
                            arg = i;
                        }
                    }
                gp[arg] += gop[oh * OW + ow];
            }
    }
    return gx;
}

Tensor maxpool3d(const Tensor& x, size_t wt, size_t wh, size_t ww) {
    if (x.rank() != 4) throw ConfigError("maxpool3d input must be (C,T,H,W), got " + shape_str(x.shape));
    const size_t C = x.dim(0), T = x.dim(1), H = x.dim(2), W = x.dim(3);
    check_pool(T, wt, "maxpool3d");
    check_pool(H, wh, "maxpool3d");
    check_pool(W, ww, "maxpool3d");
    const size_t OT = T / wt, OH = H / wh, OW = W / ww;
    Tensor y({C, OT, OH, OW});
    for (size_t c = 0; c < C; ++c) {
        const double* xp = x.ptr() + c * T * H * W;
        double* yp = y.ptr() + c * OT * OH * OW;
        for (size_t ot = 0; ot < OT; ++ot)
            for (size_t oh = 0; oh < OH; ++oh)
                for (size_t ow = 0; ow < OW; ++ow) {
                    double best = xp[(ot * wt) * H * W + (oh * wh) * W + ow * ww];
                    for (size_t q = 0; q < wt; ++q)
                        for (size_t r = 0; r < wh; ++r)
                            for (size_t s = 0; s < ww; ++s)
                                best = std::max(
                                    best,
                                    xp[(ot * wt + q) * H * W + (oh * wh + r) * W + ow * ww + s]);
                    yp[(ot * OH + oh) * OW + ow] = best;
                }
    }
    return y;
}

Tensor maxpool3d_backward(const Tensor& x, const Tensor& gout, size_t wt, size_t wh,
                          size_t ww) {
    const size_t C = x.dim(0), T = x.dim(1), H = x.dim(2), W = x.dim(3);
    const size_t OT = T / wt, OH = H / wh, OW = W / ww;
    require_shape(gout, {C, OT, OH, OW}, "maxpool3d upstream gradient");
    Tensor gx({C, T, H, W});
    for (size_t c = 0; c < C; ++c) {
        const double* xp = x.ptr() + c * T * H * W;
        double* gp = gx.ptr() + c * T * H * W;
        const double* gop = gout.ptr() + c * OT * OH * OW;
        for (size_t ot = 0; ot < OT; ++ot)
            for (size_t oh = 0; oh < OH; ++oh)
                for (size_t ow = 0; ow < OW; ++ow) {
                    size_t arg = (ot * wt) * H * W + (oh * wh) * W + ow * ww;
                    double best = xp[arg];
                    for (size_t q = 0; q < wt; ++q)
                        for (size_t r = 0; r < wh; ++r)
                            for (size_t s = 0; s < ww; ++s) {
                                size_t i = (ot * wt + q) * H * W + (oh * wh + r) * W +
                                           ow * ww + s;
                                if (xp[i] > best) {
                                    best = xp[i];
                                    arg = i;
                                }
                            }
                    gp[arg] += gop[(ot * OH + oh) * OW + ow];
                }
    }
    return gx;
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (w.rank() != 2) throw ConfigError("dense weight must be (OUT,IN), got " + shape_str(w.shape));
    const size_t OUT = w.dim(0), IN = w.dim(1);
    if (x.size() != IN)
        throw ConfigError("dense input size " + std::to_string(x.size()) +
                          " does not match weight IN " + std::to_string(IN));
    if (!b.data.empty() && b.size() != OUT)
        throw ConfigError("dense bias length mismatch");
    const simd::KernelTable& kt = simd::kernels();
    Tensor y({OUT});
    for (size_t o = 0; o < OUT; ++o)
        y.data[o] = (b.data.empty() ? 0.0 : b.data[o]) + kt.dot(w.ptr() + o * IN, x.ptr(), IN);
    return y;
}

Tensor dense_backward(const Tensor& x, Tensor& w, Tensor& b, const Tensor& gout) {
    const size_t OUT = w.dim(0), IN = w.dim(1);
    if (gout.size() != OUT) throw ConfigError("dense upstream gradient length mismatch");
    w.ensure_grad();
    if (!b.data.empty()) b.ensure_grad();
    const simd::KernelTable& kt = simd::kernels();
    Tensor gx(x.shape);
    for (size_t o = 0; o < OUT; ++o) {
        double g = gout.data[o];
        kt.axpy(g, x.ptr(), w.gptr() + o * IN, IN);
        kt.axpy(g, w.ptr() + o * IN, gx.ptr(), IN);
        if (!b.data.empty()) b.grad[o] += g;
    }
    return gx;
}

Tensor relu(const Tensor& x) {
    Tensor y(x.shape);
    for (size_t i = 0; i < x.size(); ++i) y.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
    return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& gout) {
    if (!x.same_shape(gout)) throw ConfigError("relu upstream gradient shape mismatch");
    Tensor gx(x.shape);
    for (size_t i = 0; i < x.size(); ++i) gx.data[i] = x.data[i] > 0.0 ? gout.data[i] : 0.0;
    return gx;
}

Tensor dropout(const Tensor& x, double rate, bool train, Rng& rng, Tensor& mask) {
    if (rate < 0.0 || rate >= 1.0)
        throw ConfigError("dropout rate must lie in [0,1), got " + std::to_string(rate));
    mask = Tensor(x.shape);
    if (!train || rate == 0.0) {
        mask.fill(1.0);
        return x;
    }
    const double keep_scale = 1.0 / (1.0 - rate);
    Tensor y(x.shape);
    for (size_t i = 0; i < x.size(); ++i) {
        double m = (rng.uniform() >= rate) ? keep_scale : 0.0;
        mask.data[i] = m;
        y.data[i] = x.data[i] * m;
    }
    return y;
}

Tensor dropout_backward(const Tensor& mask, const Tensor& gout) {
    if (!mask.same_shape(gout)) throw ConfigError("dropout upstream gradient shape mismatch");
    Tensor gx(mask.shape);
    simd::kernels().hadamard(mask.ptr(), gout.ptr(), gx.ptr(), mask.size());
    return gx;
}

void BatchNormState::init(size_t c) {
    gamma = Tensor({c});
    gamma.fill(1.0);
    beta = Tensor({c});
    running_mean.assign(c, 0.0);
    running_var.assign(c, 1.0);
}

namespace {

// Iterates channel slices: for sample shape (d0,...,dk) with channel axis a,
// every element index decomposes as (outer, channel, inner).
struct ChannelView {
    size_t channels, outer, inner;
    ChannelView(const std::vector<size_t>& shape, size_t axis) {
        if (axis >= shape.size()) throw ConfigError("batchnorm channel axis out of range");
        channels = shape[axis];
        outer = 1;
        for (size_t i = 0; i < axis; ++i) outer *= shape[i];
        inner = 1;
        for (size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
    }
};

} // namespace

Batch batchnorm(const Batch& x, size_t axis, BatchNormState& st, bool train,
                BatchNormCache* cache) {
    if (x.empty()) throw ConfigError("batchnorm on an empty batch");
    if (train && x.size() < 2)
        throw ConfigError("batchnorm in train mode needs a batch of at least 2 samples");
    ChannelView v(x[0].shape, axis);
    if (v.channels != st.channels())
        throw ConfigError("batchnorm state has " + std::to_string(st.channels()) +
                          " channels, input has " + std::to_string(v.channels));
    for (const Tensor& t : x)
        if (!t.same_shape(x[0])) throw ConfigError("batchnorm batch samples differ in shape");

    const size_t per_channel = x.size() * v.outer * v.inner;
    std::vector<double> mean(v.channels, 0.0), var(v.channels, 0.0);
    if (train) {
        for (const Tensor& t : x)
            for (size_t o = 0; o < v.outer; ++o)
                for (size_t c = 0; c < v.channels; ++c) {
                    const double* p = t.ptr() + (o * v.channels + c) * v.inner;
                    mean[c] += simd::kernels().sum(p, v.inner);
                }
        for (size_t c = 0; c < v.channels; ++c) mean[c] /= static_cast<double>(per_channel);
        for (const Tensor& t : x)
            for (size_t o = 0; o < v.outer; ++o)
                for (size_t c = 0; c < v.channels; ++c) {
                    const double* p = t.ptr() + (o * v.channels + c) * v.inner;
                    for (size_t i = 0; i < v.inner; ++i) {
                        double d = p[i] - mean[c];
                        var[c] += d * d;
                    }
                }
        for (size_t c = 0; c < v.channels; ++c) var[c] /= static_cast<double>(per_channel);
        for (size_t c = 0; c < v.channels; ++c) {
            st.running_mean[c] = st.momentum * st.running_mean[c] + (1 - st.momentum) * mean[c];
            st.running_var[c] = st.momentum * st.running_var[c] + (1 - st.momentum) * var[c];
        }
    } else {
        mean = st.running_mean;
        var = st.running_var;
    }

    std::vector<double> inv_std(v.channels);
    for (size_t c = 0; c < v.channels; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + st.eps);

    Batch y(x.size());
    Batch xhat(cache ? x.size() : 0);
    for (size_t s = 0; s < x.size(); ++s) {
        y[s] = Tensor(x[s].shape);
        if (cache) xhat[s] = Tensor(x[s].shape);
        for (size_t o = 0; o < v.outer; ++o)
            for (size_t c = 0; c < v.channels; ++c) {
                const double* p = x[s].ptr() + (o * v.channels + c) * v.inner;
                double* q = y[s].ptr() + (o * v.channels + c) * v.inner;
                double* h = cache ? xhat[s].ptr() + (o * v.channels + c) * v.inner : nullptr;
                double g = st.gamma.data[c], bb = st.beta.data[c];
                for (size_t i = 0; i < v.inner; ++i) {
                    double xh = (p[i] - mean[c]) * inv_std[c];
                    if (h) h[i] = xh;
                    q[i] = g * xh + bb;
                }
            }
    }
    if (cache) {
        cache->mean = std::move(mean);
        cache->inv_std = std::move(inv_std);
        cache->xhat = std::move(xhat);
        cache->axis = axis;
        cache->per_channel = per_channel;
    }
    return y;
}

Batch batchnorm_backward(const Batch& gout, BatchNormState& st,
                         const BatchNormCache& cache) {
    if (gout.size() != cache.xhat.size())
        throw ConfigError("batchnorm backward batch size mismatch");
    ChannelView v(gout[0].shape, cache.axis);
    st.gamma.ensure_grad();
    st.beta.ensure_grad();

    const double n = static_cast<double>(cache.per_channel);
    // Two reductions per channel: sum of g and sum of g*xhat.
    std::vector<double> sum_g(v.channels, 0.0), sum_gx(v.channels, 0.0);
    for (size_t s = 0; s < gout.size(); ++s)
        for (size_t o = 0; o < v.outer; ++o)
            for (size_t c = 0; c < v.channels; ++c) {
                const double* g = gout[s].ptr() + (o * v.channels + c) * v.inner;
                const double* xh = cache.xhat[s].ptr() + (o * v.channels + c) * v.inner;
                sum_g[c] += simd::kernels().sum(g, v.inner);
                sum_gx[c] += simd::kernels().dot(g, xh, v.inner);
            }
    for (size_t c = 0; c < v.channels; ++c) {
        st.gamma.grad[c] += sum_gx[c];
        st.beta.grad[c] += sum_g[c];
    }

    Batch gx(gout.size());
    for (size_t s = 0; s < gout.size(); ++s) {
        gx[s] = Tensor(gout[s].shape);
        for (size_t o = 0; o < v.outer; ++o)
            for (size_t c = 0; c < v.channels; ++c) {
                const double* g = gout[s].ptr() + (o * v.channels + c) * v.inner;
                const double* xh = cache.xhat[s].ptr() + (o * v.channels + c) * v.inner;
                double* out = gx[s].ptr() + (o * v.channels + c) * v.inner;
                double k = st.gamma.data[c] * cache.inv_std[c];
                for (size_t i = 0; i < v.inner; ++i)
                    out[i] = k * (g[i] - sum_g[c] / n - xh[i] * sum_gx[c] / n);
            }
    }
    return gx;
}

double mse_loss(const Batch& pred, const Batch& target) {
    if (pred.size() != target.size() || pred.empty())
        throw ConfigError("mse_loss needs equally sized non-empty batches");
    double acc = 0.0;
    size_t n = 0;
    for (size_t s = 0; s < pred.size(); ++s) {
        if (!pred[s].same_shape(target[s])) throw ConfigError("mse_loss sample shape mismatch");
        acc += simd::kernels().sq_diff_sum(pred[s].ptr(), target[s].ptr(), pred[s].size());
        n += pred[s].size();
    }
    return acc / static_cast<double>(n);
}

Batch mse_grad(const Batch& pred, const Batch& target) {
    if (pred.size() != target.size() || pred.empty())
        throw ConfigError("mse_grad needs equally sized non-empty batches");
    size_t n = 0;
    for (const Tensor& t : pred) n += t.size();
    Batch g(pred.size());
    const double scale = 2.0 / static_cast<double>(n);
    for (size_t s = 0; s < pred.size(); ++s) {
        g[s] = Tensor(pred[s].shape);
        for (size_t i = 0; i < pred[s].size(); ++i)
            g[s].data[i] = scale * (pred[s].data[i] - target[s].data[i]);
    }
    return g;
}

void AdamState::init(const std::vector<Tensor*>& params) {
    t = 0;
    m.assign(params.size(), {});
    v.assign(params.size(), {});
    for (size_t i = 0; i < params.size(); ++i) {
        m[i].assign(params[i]->size(), 0.0);
        v[i].assign(params[i]->size(), 0.0);
    }
}

void adam_step(const std::vector<Tensor*>& params, AdamState& st) {
    if (params.size() != st.m.size())
        throw ConfigError("adam state does not match the parameter list");
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        if (p.grad.size() != p.size()) throw ConfigError("adam_step on a parameter without grad");
        for (double g : p.grad)
            if (!std::isfinite(g)) throw NumericError("non-finite gradient in adam_step");
    }
    st.t += 1;
    const double c1 = 1.0 / (1.0 - std::pow(st.beta1, static_cast<double>(st.t)));
    const double c2 = 1.0 / (1.0 - std::pow(st.beta2, static_cast<double>(st.t)));
    const simd::KernelTable& kt = simd::kernels();
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        kt.adam_update(p.ptr(), st.m[i].data(), st.v[i].data(), p.gptr(), p.size(), st.lr,
                       st.beta1, st.beta2, st.eps, c1, c2);
    }
}

void glorot_uniform(Tensor& w, size_t fan_in, size_t fan_out, Rng& rng) {
    if (fan_in + fan_out == 0) throw ConfigError("glorot_uniform with zero fans");
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& x : w.data) x = rng.uniform(-limit, limit);
}

} // namespace steerbo
