#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "semidrd/core/graph.hpp"

namespace semidrd {
namespace ops {

namespace detail {

/// Unfold one image plane (C,H,W) into a (K x P) row-major patch matrix,
/// K = C*kh*kw, P = Hout*Wout. Out-of-bounds taps are zero. Each (k, oh)
/// pair is one contiguous run: zero the out-of-range edges, copy the rest.
template <class T>
void im2col(const T* x, int64_t C, int64_t H, int64_t W, int kh, int kw, int pad, int dil,
            int64_t Hout, int64_t Wout, T* cols) {
    int64_t k = 0;
    for (int64_t ci = 0; ci < C; ++ci) {
        const T* xc = x + ci * H * W;
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj, ++k) {
                T* dst = cols + k * Hout * Wout;
                const int64_t off_w = static_cast<int64_t>(kj) * dil - pad;
                // valid ow range: 0 <= ow + off_w < W
                const int64_t w_lo = std::max<int64_t>(0, -off_w);
                const int64_t w_hi = std::min<int64_t>(Wout, W - off_w);
                for (int64_t oh = 0; oh < Hout; ++oh, dst += Wout) {
                    const int64_t ih = oh - pad + static_cast<int64_t>(ki) * dil;
                    if (ih < 0 || ih >= H || w_lo >= w_hi) {
                        std::fill_n(dst, Wout, T(0));
                        continue;
                    }
                    if (w_lo > 0) std::fill_n(dst, w_lo, T(0));
                    std::copy_n(xc + ih * W + w_lo + off_w, w_hi - w_lo, dst + w_lo);
                    if (w_hi < Wout) std::fill_n(dst + w_hi, Wout - w_hi, T(0));
                }
            }
        }
    }
}

/// Adjoint of im2col: accumulate patch-matrix gradients back into the plane.
template <class T>
void col2im_add(const T* cols, int64_t C, int64_t H, int64_t W, int kh, int kw, int pad, int dil,
                int64_t Hout, int64_t Wout, T* dx) {
    int64_t k = 0;
    for (int64_t ci = 0; ci < C; ++ci) {
        T* xc = dx + ci * H * W;
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj, ++k) {
                const T* src = cols + k * Hout * Wout;
                const int64_t off_w = static_cast<int64_t>(kj) * dil - pad;
                const int64_t w_lo = std::max<int64_t>(0, -off_w);
                const int64_t w_hi = std::min<int64_t>(Wout, W - off_w);
                for (int64_t oh = 0; oh < Hout; ++oh, src += Wout) {
                    const int64_t ih = oh - pad + static_cast<int64_t>(ki) * dil;
                    if (ih < 0 || ih >= H || w_lo >= w_hi) continue;
                    T* row = xc + ih * W + off_w;
                    for (int64_t ow = w_lo; ow < w_hi; ++ow) row[ow] += src[ow];
                }
            }
        }
    }
}

template <class T>
std::vector<T>& scratch() {
    static thread_local std::vector<T> buf;
    return buf;
}

}  // namespace detail

template <class T>
using Val = typename Graph<T>::Value;

/// 2-D convolution, stride 1, zero padding, optional dilation.
/// w: (Cout,Cin,kh,kw), b: (1,Cout,1,1). Computed as im2col + GEMM.
template <class T>
Val<T> conv2d(Graph<T>& g, Val<T> x, Val<T> w, Val<T> b, int pad, int dil = 1) {
    using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    const Tensor<T>& xt = x.val();
    const Tensor<T>& wt = w.val();
    const int64_t N = xt.n(), Cin = xt.c(), H = xt.h(), W = xt.w();
    const int64_t Cout = wt.n();
    const int kh = static_cast<int>(wt.h()), kw = static_cast<int>(wt.w());
    if (wt.c() != Cin)
        throw std::invalid_argument("conv2d: input has " + std::to_string(Cin) + " channels, kernel expects " +
                                    std::to_string(wt.c()));
    if (b.val().c() != Cout) throw std::invalid_argument("conv2d: bias/kernel channel mismatch");
    const int64_t Hout = H + 2 * pad - static_cast<int64_t>(dil) * (kh - 1);
    const int64_t Wout = W + 2 * pad - static_cast<int64_t>(dil) * (kw - 1);
    if (Hout < 1 || Wout < 1) throw std::invalid_argument("conv2d: kernel does not fit input " + shape_str(xt));

    const int64_t K = Cin * kh * kw;
    const int64_t P = Hout * Wout;
    Tensor<T> y(N, Cout, Hout, Wout);

    std::vector<T>& buf = detail::scratch<T>();
    buf.resize(static_cast<size_t>(K * P));
    Eigen::Map<const MatRM> Wm(wt.data.data(), Cout, K);
    for (int64_t n = 0; n < N; ++n) {
        detail::im2col(xt.plane(n), Cin, H, W, kh, kw, pad, dil, Hout, Wout, buf.data());
        Eigen::Map<const MatRM> cols(buf.data(), K, P);
        Eigen::Map<MatRM> Ym(y.plane(n), Cout, P);
        Ym.noalias() = Wm * cols;
        const T* bias = b.val().data.data();
        T* yp = y.plane(n);
        for (int64_t c = 0; c < Cout; ++c)
            for (int64_t p = 0; p < P; ++p) yp[c * P + p] += bias[c];
    }

    const bool needs = x.needs_grad() || w.needs_grad() || b.needs_grad();
    const int xid = x.id, wid = w.id, bid = b.id;
    Val<T> out = g.push(std::move(y), needs, {});
    if (needs) {
        const int oid = out.id;
        g.node(oid).backward = [=](Graph<T>& gr) {
            const Tensor<T>& dy = gr.node(oid).grad;
            const Tensor<T>& xv = gr.node(xid).value;
            const Tensor<T>& wv = gr.node(wid).value;
            Eigen::Map<const MatRM> Wm2(wv.data.data(), Cout, K);
            std::vector<T>& cbuf = detail::scratch<T>();
            cbuf.resize(static_cast<size_t>(K * P));
            std::vector<T> dcols;
            const bool need_x = gr.node(xid).needs_grad;
            const bool need_w = gr.node(wid).needs_grad;
            const bool need_b = gr.node(bid).needs_grad;
            if (need_x) dcols.resize(static_cast<size_t>(K * P));
            for (int64_t n = 0; n < N; ++n) {
                Eigen::Map<const MatRM> dYm(dy.plane(n), Cout, P);
                if (need_w) {
                    detail::im2col(xv.plane(n), Cin, H, W, kh, kw, pad, dil, Hout, Wout, cbuf.data());
                    Eigen::Map<const MatRM> cols(cbuf.data(), K, P);
                    Eigen::Map<MatRM> dWm(gr.grad_buf(wid).data.data(), Cout, K);
                    dWm.noalias() += dYm * cols.transpose();
                }
                if (need_b) {
                    T* db = gr.grad_buf(bid).data.data();
                    const T* dyp = dy.plane(n);
                    for (int64_t c = 0; c < Cout; ++c) {
                        double s = 0;
                        for (int64_t p = 0; p < P; ++p) s += static_cast<double>(dyp[c * P + p]);
                        db[c] += static_cast<T>(s);
                    }
                }
                if (need_x) {
                    Eigen::Map<MatRM> dC(dcols.data(), K, P);
                    dC.noalias() = Wm2.transpose() * dYm;
                    detail::col2im_add(dcols.data(), Cin, H, W, kh, kw, pad, dil, Hout, Wout,
                                       gr.grad_buf(xid).data.data() + n * Cin * H * W);
                }
            }
        };
    }
    return out;
}

template <class T>
Val<T> add(Graph<T>& g, Val<T> a, Val<T> b) {
    check_same_shape(a.val(), b.val(), "add");
    Tensor<T> y = a.val();
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += b.val().data[i];
    const bool needs = a.needs_grad() || b.needs_grad();
    Val<T> out = g.push(std::move(y), needs, {});
    if (needs) {
        const int oid = out.id, aid = a.id, bid = b.id;
        g.node(oid).backward = [=](Graph<T>& gr) {
            const Tensor<T>& dy = gr.node(oid).grad;
            for (int pid : {aid, bid}) {
                if (!gr.node(pid).needs_grad) continue;
                Tensor<T>& dp = gr.grad_buf(pid);
                for (size_t i = 0; i < dp.data.size(); ++i) dp.data[i] += dy.data[i];
            }
        };
    }
    return out;
}

template <class T>
Val<T> sub(Graph<T>& g, Val<T> a, Val<T> b) {
    check_same_shape(a.val(), b.val(), "sub");
    Tensor<T> y = a.val();
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] -= b.val().data[i];
    const bool needs = a.needs_grad() || b.needs_grad();
    Val<T> out = g.push(std::move(y), needs, {});
    if (needs) {
        const int oid = out.id, aid = a.id, bid = b.id;
        g.node(oid).backward = [=](Graph<T>& gr) {
            const Tensor<T>& dy = gr.node(oid).grad;
            if (gr.node(aid).needs_grad) {
                Tensor<T>& da = gr.grad_buf(aid);
                for (size_t i = 0; i < da.data.size(); ++i) da.data[i] += dy.data[i];
            }
            if (gr.node(bid).needs_grad) {
                Tensor<T>& db = gr.grad_buf(bid);
                for (size_t i = 0; i < db.data.size(); ++i) db.data[i] -= dy.data[i];
            }
        };
    }
    return out;
}

/// y = k*x + c (elementwise, k and c scalars).
template <class T>
Val<T> affine(Graph<T>& g, Val<T> x, T k, T c) {
    Tensor<T> y = x.val();
    for (T& v : y.data) v = k * v + c;
    const bool needs = x.needs_grad();
    Val<T> out = g.push(std::move(y), needs, {});
    if (needs) {
        const int oid = out.id, xid = x.id;
        g.node(oid).backward = [=](Graph<T>& gr) {
            const Tensor<T>& dy = gr.node(oid).grad;
            Tensor<T>& dx = gr.grad_buf(xid);
            for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += k * dy.data[i];
        };
    }
    return out;
}

template <class T>
Val<T> mul(Graph<T>& g, Val<T> a, Val<T> b) {
    check_same_shape(a.val(), b.val(), "mul");
    Tensor<T> y = a.val();
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] *= b.val().data[i];
    const bool needs = a.needs_grad() || b.needs_grad();
    Val<T> out = g.push(std::move(y), needs, {});
    if (needs) {
        const int oid = out.id, aid = a.id, bid = b.id;
        g.node(oid).backward = [=](Graph<T>& gr) {
            const Tensor<T>& dy = gr.node(oid).grad;
            if (gr.node(aid).needs_grad) {
                Tensor<T>& da = gr.grad_buf(aid);
                const Tensor<T>& bv = gr.node(bid).value;
                for (size_t i = 0; i < da.data.size(); ++i) da.data[i] += dy.data[i] * bv.data[i];
            }
            if (gr.node(bid).needs_grad) {
                Tensor<T>& db = gr.grad_buf(bid);
                const Tensor<T>& av = gr.node(aid).value;
                for (size_t i = 0; i < db.data.size(); ++i) db.data[i] += dy.data[i] * av.data[i];
            }
        };
    }
    return out;
}

template <class T>
Val<T> div(Graph<T>& g, Val<T> a, Val<T> b) {
    check_same_shape(a.val(), b.val(), "div");
    Tensor<T> y = a.val();
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] /= b.val().data[i];
    const bool needs = a.needs_grad() || b.needs_grad();
    Val<T> out = g.push(std::move(y), needs, {});
    if (needs) {
        const int oid = out.id, aid = a.id, bid = b.id;
        g.node(oid).backward = [=](Graph<T>& gr) {
            const Tensor<T>& dy = gr.node(oid).grad;
            const Tensor<T>& av = gr.node(aid).value;
            const Tensor<T>& bv = gr.node(bid).value;
            if (gr.node(aid).needs_grad) {
                Tensor<T>& da = gr.grad_buf(aid);
                for (size_t i = 0; i < da.data.size(); ++i) da.data[i] += dy.data[i] / bv.data[i];
            }
            if (gr.node(bid).needs_grad) {
                Tensor<T>& db = gr.grad_buf(bid);
                for (size_t i = 0; i < db.data.size(); ++i)
                    db.data[i] -= dy.data[i] * av.data[i] / (bv.data[i] * bv.data[i]);
            }
        };
    }
    return out;
}

template <class T>
Val<T> relu(Graph<T>& g, Val<T> x) {
    Tensor<T> y = x.val();
    for (T& v : y.data) v = v > T(0) ? v : T(0);
    const bool needs = x.needs_grad();
    Val<T> out = g.push(std::move(y), needs, {});
    if (needs) {
        const int oid = out.id, xid = x.id;
        g.node(oid).backward = [=](Graph<T>& gr) {
            const Tensor<T>& dy = gr.node(oid).grad;
            const Tensor<T>& xv = gr.node(xid).value;
            Tensor<T>& dx = gr.grad_buf(xid);
            for (size_t i = 0; i < dx.data.size(); ++i)
                if (xv.data[i] > T(0)) dx.data[i] += dy.data[i];
        };
    }
    return out;
}

/// PReLU with one learnable slope per channel; a: (1,C,1,1).
template <class T>
Val<T> prelu(Graph<T>& g, Val<T> x, Val<T> a) {
    const Tensor<T>& xt = x.val();
    if (a.val().c() != xt.c()) throw std::invalid_argument("prelu: slope/channel mismatch");
    const int64_t N = xt.n(), C = xt.c(), HW = xt.h() * xt.w();
    Tensor<T> y = xt;
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const T s = a.val().data[static_cast<size_t>(c)];
            T* yp = y.plane(n) + c * HW;
            for (int64_t i = 0; i < HW; ++i)
                if (yp[i] < T(0)) yp[i] *= s;
        }
    const bool needs = x.needs_grad() || a.needs_grad();
    Val<T> out = g.push(std::move(y), needs, {});
    if (needs) {
        const int oid = out.id, xid = x.id, aid = a.id;
        g.node(oid).backward = [=](Graph<T>& gr) {
            const Tensor<T>& dy = gr.node(oid).grad;
            const Tensor<T>& xv = gr.node(xid).value;
            const Tensor<T>& av = gr.node(aid).value;
            const bool need_x = gr.node(xid).needs_grad;
            const bool need_a = gr.node(aid).needs_grad;
            for (int64_t n = 0; n < N; ++n)
                for (int64_t c = 0; c < C; ++c) {
                    const T s = av.data[static_cast<size_t>(c)];
                    const T* xp = xv.plane(n) + c * HW;
                    const T* dyp = dy.plane(n) + c * HW;
                    if (need_x) {
                        T* dxp = gr.grad_buf(xid).plane(n) + c * HW;
                        for (int64_t i = 0; i < HW; ++i) dxp[i] += dyp[i] * (xp[i] > T(0) ? T(1) : s);
                    }
                    if (need_a) {
                        double acc = 0;
                        for (int64_t i = 0; i < HW; ++i)
                            if (xp[i] < T(0)) acc += static_cast<double>(dyp[i]) * static_cast<double>(xp[i]);
                        gr.grad_buf(aid).data[static_cast<size_t>(c)] += static_cast<T>(acc);
                    }
                }
        };
    }
    return out;
}

template <class T>
Val<T> sigmoid(Graph<T>& g, Val<T> x) {
    Tensor<T> y = x.val();
    for (T& v : y.data) v = T(1) / (T(1) + std::exp(-v));
    const bool needs = x.needs_grad();
    Val<T> out = g.push(std::move(y), needs, {});
    if (needs) {
        const int oid = out.id, xid = x.id;
        g.node(oid).backward = [=](Graph<T>& gr) {
            const Tensor<T>& dy = gr.node(oid).grad;
            const Tensor<T>& yv = gr.node(oid).value;
            Tensor<T>& dx = gr.grad_buf(xid);
            for (size_t i = 0; i < dx.data.size(); ++i)
                dx.data[i] += dy.data[i] * yv.data[i] * (T(1) - yv.data[i]);
        };
    }
    return out;
}

/// Global average pool to (N,C,1,1).
template <class T>
Val<T> global_avg_pool(Graph<T>& g, Val<T> x) {
    const Tensor<T>& xt = x.val();
    const int64_t N = xt.n(), C = xt.c(), HW = xt.h() * xt.w();
    Tensor<T> y(N, C, 1, 1);
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const T* xp = xt.plane(n) + c * HW;
            double s = 0;
            for (int64_t i = 0; i < HW; ++i) s += static_cast<double>(xp[i]);
            y.at(n, c, 0, 0) = static_cast<T>(s / static_cast<double>(HW));
        }
    const bool needs = x.needs_grad();
    Val<T> out = g.push(std::move(y), needs, {});
    if (needs) {
        const int oid = out.id, xid = x.id;
        g.node(oid).backward = [=](Graph<T>& gr) {
            const Tensor<T>& dy = gr.node(oid).grad;
            Tensor<T>& dx = gr.grad_buf(xid);
            const T inv = T(1) / static_cast<T>(HW);
            for (int64_t n = 0; n < N; ++n)
                for (int64_t c = 0; c < C; ++c) {
                    const T gv = dy.at(n, c, 0, 0) * inv;
                    T* dxp = dx.plane(n) + c * HW;
                    for (int64_t i = 0; i < HW; ++i) dxp[i] += gv;
                }
        };
    }
    return out;
}

/// y[n,c,h,w] = x[n,c,h,w] * s[n,c,0,0] (per-channel gating).
template <class T>
Val<T> scale_channels(Graph<T>& g, Val<T> x, Val<T> s) {
    const Tensor<T>& xt = x.val();
    const Tensor<T>& st = s.val();
    if (st.n() != xt.n() || st.c() != xt.c() || st.h() != 1 || st.w() != 1)
        throw std::invalid_argument("scale_channels: gate must be (N,C,1,1)");
    const int64_t N = xt.n(), C = xt.c(), HW = xt.h() * xt.w();
    Tensor<T> y = xt;
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const T sv = st.at(n, c, 0, 0);
            T* yp = y.plane(n) + c * HW;
            for (int64_t i = 0; i < HW; ++i) yp[i] *= sv;
        }
    const bool needs = x.needs_grad() || s.needs_grad();
    Val<T> out = g.push(std::move(y), needs, {});
    if (needs) {
        const int oid = out.id, xid = x.id, sid = s.id;
        g.node(oid).backward = [=](Graph<T>& gr) {
            const Tensor<T>& dy = gr.node(oid).grad;
            const Tensor<T>& xv = gr.node(xid).value;
            const Tensor<T>& sv = gr.node(sid).value;
            for (int64_t n = 0; n < N; ++n)
                for (int64_t c = 0; c < C; ++c) {
                    const T* dyp = dy.plane(n) + c * HW;
                    if (gr.node(xid).needs_grad) {
                        const T g0 = sv.at(n, c, 0, 0);
                        T* dxp = gr.grad_buf(xid).plane(n) + c * HW;
                        for (int64_t i = 0; i < HW; ++i) dxp[i] += dyp[i] * g0;
                    }
                    if (gr.node(sid).needs_grad) {
                        const T* xp = xv.plane(n) + c * HW;
                        double acc = 0;
                        for (int64_t i = 0; i < HW; ++i)
                            acc += static_cast<double>(dyp[i]) * static_cast<double>(xp[i]);
                        gr.grad_buf(sid).at(n, c, 0, 0) += static_cast<T>(acc);
                    }
                }
        };
    }
    return out;
}

/// y[n,c,h,w] = gain[c] * x[n,c,h,w] + shift[c] (fixed per-channel affine).
template <class T>
Val<T> channel_affine(Graph<T>& g, Val<T> x, std::vector<T> gain, std::vector<T> shift) {
    const Tensor<T>& xt = x.val();
    const int64_t N = xt.n(), C = xt.c(), HW = xt.h() * xt.w();
    if (static_cast<int64_t>(gain.size()) != C || static_cast<int64_t>(shift.size()) != C)
        throw std::invalid_argument("channel_affine: coefficient/channel mismatch");
    Tensor<T> y = xt;
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            T* yp = y.plane(n) + c * HW;
            const T k = gain[static_cast<size_t>(c)], b = shift[static_cast<size_t>(c)];
            for (int64_t i = 0; i < HW; ++i) yp[i] = k * yp[i] + b;
        }
    const bool needs = x.needs_grad();
    Val<T> out = g.push(std::move(y), needs, {});
    if (needs) {
        const int oid = out.id, xid = x.id;
        g.node(oid).backward = [=, gain = std::move(gain)](Graph<T>& gr) {
            const Tensor<T>& dy = gr.node(oid).grad;
            Tensor<T>& dx = gr.grad_buf(xid);
            for (int64_t n = 0; n < N; ++n)
                for (int64_t c = 0; c < C; ++c) {
                    const T k = gain[static_cast<size_t>(c)];
                    T* dxp = dx.plane(n) + c * HW;
                    const T* dyp = dy.plane(n) + c * HW;
                    for (int64_t i = 0; i < HW; ++i) dxp[i] += k * dyp[i];
                }
        };
    }
    return out;
}

/// 2x2 max pooling, stride 2, floor semantics (trailing odd row/col dropped).
template <class T>
Val<T> maxpool2(Graph<T>& g, Val<T> x) {
    const Tensor<T>& xt = x.val();
    const int64_t N = xt.n(), C = xt.c(), H = xt.h(), W = xt.w();
    const int64_t Ho = H / 2, Wo = W / 2;
    if (Ho < 1 || Wo < 1) throw std::invalid_argument("maxpool2: input too small " + shape_str(xt));
    Tensor<T> y(N, C, Ho, Wo);
    std::vector<int64_t> arg(static_cast<size_t>(N * C * Ho * Wo));
    int64_t k = 0;
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const T* xp = xt.plane(n) + c * H * W;
            for (int64_t oh = 0; oh < Ho; ++oh)
                for (int64_t ow = 0; ow < Wo; ++ow) {
                    int64_t best = (2 * oh) * W + 2 * ow;
                    for (int di = 0; di < 2; ++di)
                        for (int dj = 0; dj < 2; ++dj) {
                            const int64_t idx = (2 * oh + di) * W + 2 * ow + dj;
                            if (xp[idx] > xp[best]) best = idx;
                        }
                    y.at(n, c, oh, ow) = xp[best];
                    arg[static_cast<size_t>(k++)] = best;
                }
        }
    const bool needs = x.needs_grad();
    Val<T> out = g.push(std::move(y), needs, {});
    if (needs) {
        const int oid = out.id, xid = x.id;
        g.node(oid).backward = [=, arg = std::move(arg)](Graph<T>& gr) {
            const Tensor<T>& dy = gr.node(oid).grad;
            Tensor<T>& dx = gr.grad_buf(xid);
            int64_t k2 = 0;
            for (int64_t n = 0; n < N; ++n)
                for (int64_t c = 0; c < C; ++c) {
                    T* dxp = dx.plane(n) + c * H * W;
                    const T* dyp = dy.plane(n) + c * Ho * Wo;
                    for (int64_t i = 0; i < Ho * Wo; ++i) dxp[arg[static_cast<size_t>(k2++)]] += dyp[i];
                }
        };
    }
    return out;
}

template <class T>
Val<T> concat_channels(Graph<T>& g, const std::vector<Val<T>>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_channels: empty input list");
    const int64_t N = xs[0].val().n(), H = xs[0].val().h(), W = xs[0].val().w();
    int64_t Ctot = 0;
    bool needs = false;
    for (const auto& v : xs) {
        if (v.val().n() != N || v.val().h() != H || v.val().w() != W)
            throw std::invalid_argument("concat_channels: spatial/batch mismatch");
        Ctot += v.val().c();
        needs = needs || v.needs_grad();
    }
    Tensor<T> y(N, Ctot, H, W);
    const int64_t HW = H * W;
    for (int64_t n = 0; n < N; ++n) {
        int64_t off = 0;
        for (const auto& v : xs) {
            const int64_t Ci = v.val().c();
            std::copy_n(v.val().plane(n), Ci * HW, y.plane(n) + off * HW);
            off += Ci;
        }
    }
    std::vector<int> ids;
    std::vector<int64_t> cs;
    for (const auto& v : xs) {
        ids.push_back(v.id);
        cs.push_back(v.val().c());
    }
    Val<T> out = g.push(std::move(y), needs, {});
    if (needs) {
        const int oid = out.id;
        g.node(oid).backward = [=, ids = std::move(ids), cs = std::move(cs)](Graph<T>& gr) {
            const Tensor<T>& dy = gr.node(oid).grad;
            for (int64_t n = 0; n < N; ++n) {
                int64_t off = 0;
                for (size_t i = 0; i < ids.size(); ++i) {
                    if (gr.node(ids[i]).needs_grad) {
                        T* dst = gr.grad_buf(ids[i]).plane(n);
                        const T* src = dy.plane(n) + off * HW;
                        for (int64_t k2 = 0; k2 < cs[i] * HW; ++k2) dst[k2] += src[k2];
                    }
                    off += cs[i];
                }
            }
        };
    }
    return out;
}

/// Extract batch item `idx` as a (1,C,H,W) view-copy.
template <class T>
Val<T> slice_batch(Graph<T>& g, Val<T> x, int64_t idx) {
    const Tensor<T>& xt = x.val();
    if (idx < 0 || idx >= xt.n()) throw std::invalid_argument("slice_batch: index out of range");
    const int64_t C = xt.c(), H = xt.h(), W = xt.w();
    Tensor<T> y(1, C, H, W);
    std::copy_n(xt.plane(idx), C * H * W, y.data.data());
    const bool needs = x.needs_grad();
    Val<T> out = g.push(std::move(y), needs, {});
    if (needs) {
        const int oid = out.id, xid = x.id;
        g.node(oid).backward = [=](Graph<T>& gr) {
            const Tensor<T>& dy = gr.node(oid).grad;
            T* dst = gr.grad_buf(xid).plane(idx);
            for (int64_t i = 0; i < C * H * W; ++i) dst[i] += dy.data[static_cast<size_t>(i)];
        };
    }
    return out;
}

/// Mean absolute difference over all elements. The L1 subgradient at zero is
/// taken as 0.
template <class T>
Val<T> l1_mean(Graph<T>& g, Val<T> a, Val<T> b) {
    check_same_shape(a.val(), b.val(), "l1_mean");
    const int64_t n = a.val().numel();
    double s = 0;
    for (int64_t i = 0; i < n; ++i)
        s += std::abs(static_cast<double>(a.val().data[static_cast<size_t>(i)]) -
                      static_cast<double>(b.val().data[static_cast<size_t>(i)]));
    Tensor<T> y = Tensor<T>::scalar(static_cast<T>(s / static_cast<double>(n)));
    const bool needs = a.needs_grad() || b.needs_grad();
    Val<T> out = g.push(std::move(y), needs, {});
    if (needs) {
        const int oid = out.id, aid = a.id, bid = b.id;
        g.node(oid).backward = [=](Graph<T>& gr) {
            const T gv = gr.node(oid).grad.data[0] / static_cast<T>(n);
            const Tensor<T>& av = gr.node(aid).value;
            const Tensor<T>& bv = gr.node(bid).value;
            for (int64_t i = 0; i < n; ++i) {
                const T d = av.data[static_cast<size_t>(i)] - bv.data[static_cast<size_t>(i)];
                const T sgn = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
                if (gr.node(aid).needs_grad) gr.grad_buf(aid).data[static_cast<size_t>(i)] += gv * sgn;
                if (gr.node(bid).needs_grad) gr.grad_buf(bid).data[static_cast<size_t>(i)] -= gv * sgn;
            }
        };
    }
    return out;
}

/// Squared L2 distance, summed over all elements (no normalization).
template <class T>
Val<T> sq_l2_sum(Graph<T>& g, Val<T> a, Val<T> b) {
    check_same_shape(a.val(), b.val(), "sq_l2_sum");
    const int64_t n = a.val().numel();
    double s = 0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(a.val().data[static_cast<size_t>(i)]) -
                         static_cast<double>(b.val().data[static_cast<size_t>(i)]);
        s += d * d;
    }
    Tensor<T> y = Tensor<T>::scalar(static_cast<T>(s));
    const bool needs = a.needs_grad() || b.needs_grad();
    Val<T> out = g.push(std::move(y), needs, {});
    if (needs) {
        const int oid = out.id, aid = a.id, bid = b.id;
        g.node(oid).backward = [=](Graph<T>& gr) {
            const T gv = gr.node(oid).grad.data[0];
            const Tensor<T>& av = gr.node(aid).value;
            const Tensor<T>& bv = gr.node(bid).value;
            for (int64_t i = 0; i < n; ++i) {
                const T d = av.data[static_cast<size_t>(i)] - bv.data[static_cast<size_t>(i)];
                if (gr.node(aid).needs_grad) gr.grad_buf(aid).data[static_cast<size_t>(i)] += gv * T(2) * d;
                if (gr.node(bid).needs_grad) gr.grad_buf(bid).data[static_cast<size_t>(i)] -= gv * T(2) * d;
            }
        };
    }
    return out;
}

/// Batch normalization over (N,H,W) per channel, using batch statistics.
/// Returns the normalized output plus the batch mean/variance so the owning
/// layer can fold them into its running averages.
template <class T>
struct BnResult {
    Val<T> y;
    std::vector<double> mean;
    std::vector<double> var;  // biased
};

template <class T>
BnResult<T> batchnorm_train(Graph<T>& g, Val<T> x, Val<T> gamma, Val<T> beta, T eps) {
    const Tensor<T>& xt = x.val();
    const int64_t N = xt.n(), C = xt.c(), HW = xt.h() * xt.w();
    if (gamma.val().c() != C || beta.val().c() != C)
        throw std::invalid_argument("batchnorm: scale/shift channel mismatch");
    const int64_t S = N * HW;
    std::vector<double> mean(static_cast<size_t>(C), 0.0), var(static_cast<size_t>(C), 0.0);
    for (int64_t c = 0; c < C; ++c) {
        double s = 0;
        for (int64_t n = 0; n < N; ++n) {
            const T* xp = xt.plane(n) + c * HW;
            for (int64_t i = 0; i < HW; ++i) s += static_cast<double>(xp[i]);
        }
        mean[static_cast<size_t>(c)] = s / static_cast<double>(S);
        double v = 0;
        for (int64_t n = 0; n < N; ++n) {
            const T* xp = xt.plane(n) + c * HW;
            for (int64_t i = 0; i < HW; ++i) {
                const double d = static_cast<double>(xp[i]) - mean[static_cast<size_t>(c)];
                v += d * d;
            }
        }
        var[static_cast<size_t>(c)] = v / static_cast<double>(S);
    }
    Tensor<T> xhat(N, C, xt.h(), xt.w());
    Tensor<T> y(N, C, xt.h(), xt.w());
    std::vector<T> ivar(static_cast<size_t>(C));
    for (int64_t c = 0; c < C; ++c) {
        ivar[static_cast<size_t>(c)] =
            static_cast<T>(1.0 / std::sqrt(var[static_cast<size_t>(c)] + static_cast<double>(eps)));
        const T m = static_cast<T>(mean[static_cast<size_t>(c)]);
        const T iv = ivar[static_cast<size_t>(c)];
        const T gm = gamma.val().data[static_cast<size_t>(c)];
        const T bt = beta.val().data[static_cast<size_t>(c)];
        for (int64_t n = 0; n < N; ++n) {
            const T* xp = xt.plane(n) + c * HW;
            T* hp = xhat.plane(n) + c * HW;
            T* yp = y.plane(n) + c * HW;
            for (int64_t i = 0; i < HW; ++i) {
                hp[i] = (xp[i] - m) * iv;
                yp[i] = gm * hp[i] + bt;
            }
        }
    }
    const bool needs = x.needs_grad() || gamma.needs_grad() || beta.needs_grad();
    Val<T> out = g.push(std::move(y), needs, {});
    if (needs) {
        const int oid = out.id, xid = x.id, gid = gamma.id, bid = beta.id;
        g.node(oid).backward = [=, xhat = std::move(xhat), ivar = std::move(ivar)](Graph<T>& gr) {
            const Tensor<T>& dy = gr.node(oid).grad;
            const Tensor<T>& gv = gr.node(gid).value;
            for (int64_t c = 0; c < C; ++c) {
                double sum_dy = 0, sum_dy_xhat = 0;
                for (int64_t n = 0; n < N; ++n) {
                    const T* dyp = dy.plane(n) + c * HW;
                    const T* hp = xhat.plane(n) + c * HW;
                    for (int64_t i = 0; i < HW; ++i) {
                        sum_dy += static_cast<double>(dyp[i]);
                        sum_dy_xhat += static_cast<double>(dyp[i]) * static_cast<double>(hp[i]);
                    }
                }
                if (gr.node(gid).needs_grad)
                    gr.grad_buf(gid).data[static_cast<size_t>(c)] += static_cast<T>(sum_dy_xhat);
                if (gr.node(bid).needs_grad) gr.grad_buf(bid).data[static_cast<size_t>(c)] += static_cast<T>(sum_dy);
                if (gr.node(xid).needs_grad) {
                    const T k = gv.data[static_cast<size_t>(c)] * ivar[static_cast<size_t>(c)];
                    const T mdy = static_cast<T>(sum_dy / static_cast<double>(S));
                    const T mdyh = static_cast<T>(sum_dy_xhat / static_cast<double>(S));
                    for (int64_t n = 0; n < N; ++n) {
                        const T* dyp = dy.plane(n) + c * HW;
                        const T* hp = xhat.plane(n) + c * HW;
                        T* dxp = gr.grad_buf(xid).plane(n) + c * HW;
                        for (int64_t i = 0; i < HW; ++i) dxp[i] += k * (dyp[i] - mdy - hp[i] * mdyh);
                    }
                }
            }
        };
    }
    return BnResult<T>{out, std::move(mean), std::move(var)};
}

/// Batch normalization with fixed (running) statistics, for inference.
template <class T>
Val<T> batchnorm_eval(Graph<T>& g, Val<T> x, Val<T> gamma, Val<T> beta, const std::vector<double>& rmean,
                      const std::vector<double>& rvar, T eps) {
    const Tensor<T>& xt = x.val();
    const int64_t N = xt.n(), C = xt.c(), HW = xt.h() * xt.w();
    if (static_cast<int64_t>(rmean.size()) != C || static_cast<int64_t>(rvar.size()) != C)
        throw std::invalid_argument("batchnorm_eval: running stats channel mismatch");
    Tensor<T> y(N, C, xt.h(), xt.w());
    std::vector<T> scale(static_cast<size_t>(C)), shift(static_cast<size_t>(C));
    for (int64_t c = 0; c < C; ++c) {
        const double iv = 1.0 / std::sqrt(rvar[static_cast<size_t>(c)] + static_cast<double>(eps));
        const T gm = gamma.val().data[static_cast<size_t>(c)];
        scale[static_cast<size_t>(c)] = static_cast<T>(static_cast<double>(gm) * iv);
        shift[static_cast<size_t>(c)] = static_cast<T>(static_cast<double>(beta.val().data[static_cast<size_t>(c)]) -
                                                       static_cast<double>(gm) * iv * rmean[static_cast<size_t>(c)]);
    }
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const T* xp = xt.plane(n) + c * HW;
            T* yp = y.plane(n) + c * HW;
            for (int64_t i = 0; i < HW; ++i) yp[i] = scale[static_cast<size_t>(c)] * xp[i] + shift[static_cast<size_t>(c)];
        }
    const bool needs = x.needs_grad();
    Val<T> out = g.push(std::move(y), needs, {});
    if (needs) {
        const int oid = out.id, xid = x.id;
        g.node(oid).backward = [=, scale = std::move(scale)](Graph<T>& gr) {
            const Tensor<T>& dy = gr.node(oid).grad;
            Tensor<T>& dx = gr.grad_buf(xid);
            for (int64_t n = 0; n < N; ++n)
                for (int64_t c = 0; c < C; ++c) {
                    const T* dyp = dy.plane(n) + c * HW;
                    T* dxp = dx.plane(n) + c * HW;
                    for (int64_t i = 0; i < HW; ++i) dxp[i] += dyp[i] * scale[static_cast<size_t>(c)];
                }
        };
    }
    return out;
}

template <class T>
Val<T> detach(Graph<T>& g, Val<T> x) {
    return g.constant(x.val());
}

template <class T>
Val<T> sum(Graph<T>& g, const std::vector<Val<T>>& xs) {
    if (xs.empty()) throw std::invalid_argument("sum: empty list");
    Val<T> acc = xs[0];
    for (size_t i = 1; i < xs.size(); ++i) acc = add(g, acc, xs[i]);
    return acc;
}

}  // namespace ops
}  // namespace semidrd
