#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "dda/autodiff.hpp"
#include "dda/tensor.hpp"

// Differentiable free functions over tape Vars. Each op appends one node;
// backward closures read values back off the tape and only cache what the
// tape does not hold (im2col buffers, normalization statistics, warp masks).

namespace dda {

template <class T>
Var<T> make_scalar(Tape<T>& tape, T x) {
    return tape.leaf(Tensor<T>::scalar(x));
}

template <class T>
T scalar_of(Var<T> v) {
    if (v.value().size() != 1) throw ShapeError("scalar_of: not a scalar " + v.shape().str());
    return v.value().v[0];
}

// ---------------------------------------------------------------------------
// elementwise

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
    Tape<T>* t = a.tape;
    require_same_shape(t->val(a.id).shape, t->val(b.id).shape, "add");
    Tensor<T> out = t->val(a.id);
    out.v += t->val(b.id).v;
    return t->make(std::move(out), {a, b}, [t, a = a.id, b = b.id](int self) {
        const auto& g = t->grad(self).v;
        t->add_grad(a, g);
        t->add_grad(b, g);
    });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
    Tape<T>* t = a.tape;
    require_same_shape(t->val(a.id).shape, t->val(b.id).shape, "sub");
    Tensor<T> out = t->val(a.id);
    out.v -= t->val(b.id).v;
    return t->make(std::move(out), {a, b}, [t, a = a.id, b = b.id](int self) {
        const auto& g = t->grad(self).v;
        t->add_grad(a, g);
        t->add_grad(b, -g);
    });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
    Tape<T>* t = a.tape;
    require_same_shape(t->val(a.id).shape, t->val(b.id).shape, "mul");
    Tensor<T> out = t->val(a.id);
    out.v *= t->val(b.id).v;
    return t->make(std::move(out), {a, b}, [t, a = a.id, b = b.id](int self) {
        const auto& g = t->grad(self).v;
        t->add_grad(a, g * t->val(b).v);
        t->add_grad(b, g * t->val(a).v);
    });
}

template <class T>
Var<T> div_(Var<T> a, Var<T> b) {
    Tape<T>* t = a.tape;
    require_same_shape(t->val(a.id).shape, t->val(b.id).shape, "div");
    Tensor<T> out = t->val(a.id);
    out.v /= t->val(b.id).v;
    return t->make(std::move(out), {a, b}, [t, a = a.id, b = b.id](int self) {
        const auto& g = t->grad(self).v;
        t->add_grad(a, g / t->val(b).v);
        t->add_grad(b, -g * t->val(self).v / t->val(b).v);
    });
}

/// scale * x + shift
template <class T>
Var<T> affine(Var<T> x, T scale, T shift) {
    Tape<T>* t = x.tape;
    Tensor<T> out = t->val(x.id);
    out.v = out.v * scale + shift;
    return t->make(std::move(out), {x}, [t, x = x.id, scale](int self) {
        t->add_grad(x, t->grad(self).v * scale);
    });
}

template <class T>
Var<T> square(Var<T> x) {
    Tape<T>* t = x.tape;
    Tensor<T> out = t->val(x.id);
    out.v = out.v.square();
    return t->make(std::move(out), {x}, [t, x = x.id](int self) {
        t->add_grad(x, t->grad(self).v * T(2) * t->val(x).v);
    });
}

template <class T>
Var<T> abs_(Var<T> x) {
    Tape<T>* t = x.tape;
    Tensor<T> out = t->val(x.id);
    out.v = out.v.abs();
    return t->make(std::move(out), {x}, [t, x = x.id](int self) {
        t->add_grad(x, t->grad(self).v * t->val(x).v.sign());
    });
}

template <class T>
Var<T> relu(Var<T> x) {
    Tape<T>* t = x.tape;
    Tensor<T> out = t->val(x.id);
    out.v = out.v.max(T(0));
    return t->make(std::move(out), {x}, [t, x = x.id](int self) {
        t->add_grad(x, t->grad(self).v * (t->val(self).v > T(0)).template cast<T>());
    });
}

template <class T>
Var<T> leaky_relu(Var<T> x, T slope) {
    Tape<T>* t = x.tape;
    Tensor<T> out = t->val(x.id);
    out.v = out.v.max(out.v * slope);
    return t->make(std::move(out), {x}, [t, x = x.id, slope](int self) {
        const auto pos = (t->val(x).v > T(0)).template cast<T>();
        t->add_grad(x, t->grad(self).v * (pos + (T(1) - pos) * slope));
    });
}

template <class T>
Var<T> sigmoid(Var<T> x) {
    Tape<T>* t = x.tape;
    Tensor<T> out = t->val(x.id);
    out.v = T(1) / (T(1) + (-out.v).exp());
    return t->make(std::move(out), {x}, [t, x = x.id](int self) {
        const auto& y = t->val(self).v;
        t->add_grad(x, t->grad(self).v * y * (T(1) - y));
    });
}

/// Elementwise product with a fixed tensor.
template <class T>
Var<T> mul_const(Var<T> x, Tensor<T> k) {
    Tape<T>* t = x.tape;
    require_same_shape(t->val(x.id).shape, k.shape, "mul_const");
    Tensor<T> out = t->val(x.id);
    out.v *= k.v;
    return t->make(std::move(out), {x}, [t, x = x.id, k = std::move(k)](int self) {
        t->add_grad(x, t->grad(self).v * k.v);
    });
}

// ---------------------------------------------------------------------------
// reductions

template <class T>
Var<T> mean_all(Var<T> x) {
    Tape<T>* t = x.tape;
    const Tensor<T>& X = t->val(x.id);
    const Index n = X.size();
    Tensor<T> out = Tensor<T>::scalar(X.v.sum() / T(n));
    return t->make(std::move(out), {x}, [t, x = x.id, n](int self) {
        const T g = t->grad(self).v[0];
        t->add_grad(x, ArrayX<T>::Constant(n, g / T(n)));
    });
}

/// Per-(n,c) spatial mean -> [n,c,1,1].
template <class T>
Var<T> mean_spatial(Var<T> x) {
    Tape<T>* t = x.tape;
    const Tensor<T>& X = t->val(x.id);
    const Shape s = X.shape;
    Tensor<T> out(Shape{s.n, s.c, 1, 1});
    for (Index n = 0; n < s.n; ++n)
        for (Index c = 0; c < s.c; ++c) out.at(n, c, 0, 0) = X.plane(n, c).mean();
    return t->make(std::move(out), {x}, [t, x = x.id, s](int self) {
        if (!t->requires_grad(x)) return;
        const Tensor<T>& g = t->grad(self);
        Tensor<T>& gx = t->grad(x);
        const T inv = T(1) / T(s.plane());
        for (Index n = 0; n < s.n; ++n)
            for (Index c = 0; c < s.c; ++c) gx.plane(n, c) += g.at(n, c, 0, 0) * inv;
    });
}

/// Mean of x over elements where mask is nonzero. The mask has either one
/// channel (broadcast across x's channels) or x's channel count.
/// Throws when the mask selects nothing.
template <class T>
Var<T> masked_mean(Var<T> x, Tensor<T> mask) {
    Tape<T>* t = x.tape;
    const Tensor<T>& X = t->val(x.id);
    const Shape s = X.shape;
    const bool bcast = mask.shape.c == 1;
    if (!(mask.shape.n == s.n && mask.shape.h == s.h && mask.shape.w == s.w &&
          (bcast || mask.shape.c == s.c)))
        throw ShapeError("masked_mean: mask " + mask.shape.str() + " vs x " + s.str());
    T num = 0, den = 0;
    for (Index n = 0; n < s.n; ++n)
        for (Index c = 0; c < s.c; ++c) {
            auto m = mask.plane(n, bcast ? 0 : c);
            num += (X.plane(n, c) * m).sum();
            den += m.sum();
        }
    if (den <= T(0)) throw Error("masked_mean: empty mask");
    Tensor<T> out = Tensor<T>::scalar(num / den);
    return t->make(std::move(out), {x},
                   [t, x = x.id, s, bcast, den, mask = std::move(mask)](int self) {
                       if (!t->requires_grad(x)) return;
                       const T g = t->grad(self).v[0] / den;
                       Tensor<T>& gx = t->grad(x);
                       for (Index n = 0; n < s.n; ++n)
                           for (Index c = 0; c < s.c; ++c)
                               gx.plane(n, c) += g * mask.plane(n, bcast ? 0 : c);
                   });
}

// ---------------------------------------------------------------------------
// structure

template <class T>
Var<T> concat_c(Var<T> a, Var<T> b) {
    Tape<T>* t = a.tape;
    const Tensor<T>& A = t->val(a.id);
    const Tensor<T>& B = t->val(b.id);
    if (!(A.shape.n == B.shape.n && A.shape.h == B.shape.h && A.shape.w == B.shape.w))
        throw ShapeError("concat_c: " + A.shape.str() + " vs " + B.shape.str());
    const Index ca = A.shape.c, cb = B.shape.c;
    Tensor<T> out(Shape{A.shape.n, ca + cb, A.shape.h, A.shape.w});
    for (Index n = 0; n < A.shape.n; ++n) {
        for (Index c = 0; c < ca; ++c) out.plane(n, c) = A.plane(n, c);
        for (Index c = 0; c < cb; ++c) out.plane(n, ca + c) = B.plane(n, c);
    }
    return t->make(std::move(out), {a, b}, [t, a = a.id, b = b.id, ca, cb](int self) {
        const Tensor<T>& g = t->grad(self);
        const Index n_imgs = g.shape.n;
        if (t->requires_grad(a)) {
            Tensor<T>& ga = t->grad(a);
            for (Index n = 0; n < n_imgs; ++n)
                for (Index c = 0; c < ca; ++c) ga.plane(n, c) += g.plane(n, c);
        }
        if (t->requires_grad(b)) {
            Tensor<T>& gb = t->grad(b);
            for (Index n = 0; n < n_imgs; ++n)
                for (Index c = 0; c < cb; ++c) gb.plane(n, c) += g.plane(n, ca + c);
        }
    });
}

template <class T>
Var<T> upsample_nearest2(Var<T> x) {
    Tape<T>* t = x.tape;
    const Tensor<T>& X = t->val(x.id);
    const Shape s = X.shape;
    Tensor<T> out(Shape{s.n, s.c, s.h * 2, s.w * 2});
    for (Index n = 0; n < s.n; ++n)
        for (Index c = 0; c < s.c; ++c)
            for (Index y = 0; y < s.h * 2; ++y)
                for (Index xq = 0; xq < s.w * 2; ++xq)
                    out.at(n, c, y, xq) = X.at(n, c, y / 2, xq / 2);
    return t->make(std::move(out), {x}, [t, x = x.id, s](int self) {
        if (!t->requires_grad(x)) return;
        const Tensor<T>& g = t->grad(self);
        Tensor<T>& gx = t->grad(x);
        for (Index n = 0; n < s.n; ++n)
            for (Index c = 0; c < s.c; ++c)
                for (Index y = 0; y < s.h * 2; ++y)
                    for (Index xq = 0; xq < s.w * 2; ++xq)
                        gx.at(n, c, y / 2, xq / 2) += g.at(n, c, y, xq);
    });
}

/// Horizontal forward difference: out[..,x] = in[..,x+1] - in[..,x], width w-1.
template <class T>
Var<T> dx_fwd(Var<T> x) {
    Tape<T>* t = x.tape;
    const Tensor<T>& X = t->val(x.id);
    const Shape s = X.shape;
    if (s.w < 2) throw ShapeError("dx_fwd: width < 2");
    Tensor<T> out(Shape{s.n, s.c, s.h, s.w - 1});
    for (Index n = 0; n < s.n; ++n)
        for (Index c = 0; c < s.c; ++c)
            for (Index y = 0; y < s.h; ++y)
                for (Index xq = 0; xq + 1 < s.w; ++xq)
                    out.at(n, c, y, xq) = X.at(n, c, y, xq + 1) - X.at(n, c, y, xq);
    return t->make(std::move(out), {x}, [t, x = x.id, s](int self) {
        if (!t->requires_grad(x)) return;
        const Tensor<T>& g = t->grad(self);
        Tensor<T>& gx = t->grad(x);
        for (Index n = 0; n < s.n; ++n)
            for (Index c = 0; c < s.c; ++c)
                for (Index y = 0; y < s.h; ++y)
                    for (Index xq = 0; xq + 1 < s.w; ++xq) {
                        const T gv = g.at(n, c, y, xq);
                        gx.at(n, c, y, xq + 1) += gv;
                        gx.at(n, c, y, xq) -= gv;
                    }
    });
}

/// Vertical forward difference: out[..,y,..] = in[..,y+1,..] - in[..,y,..].
template <class T>
Var<T> dy_fwd(Var<T> x) {
    Tape<T>* t = x.tape;
    const Tensor<T>& X = t->val(x.id);
    const Shape s = X.shape;
    if (s.h < 2) throw ShapeError("dy_fwd: height < 2");
    Tensor<T> out(Shape{s.n, s.c, s.h - 1, s.w});
    for (Index n = 0; n < s.n; ++n)
        for (Index c = 0; c < s.c; ++c)
            for (Index y = 0; y + 1 < s.h; ++y)
                for (Index xq = 0; xq < s.w; ++xq)
                    out.at(n, c, y, xq) = X.at(n, c, y + 1, xq) - X.at(n, c, y, xq);
    return t->make(std::move(out), {x}, [t, x = x.id, s](int self) {
        if (!t->requires_grad(x)) return;
        const Tensor<T>& g = t->grad(self);
        Tensor<T>& gx = t->grad(x);
        for (Index n = 0; n < s.n; ++n)
            for (Index c = 0; c < s.c; ++c)
                for (Index y = 0; y + 1 < s.h; ++y)
                    for (Index xq = 0; xq < s.w; ++xq) {
                        const T gv = g.at(n, c, y, xq);
                        gx.at(n, c, y + 1, xq) += gv;
                        gx.at(n, c, y, xq) -= gv;
                    }
    });
}

/// 3x3 uniform box mean over valid windows: out is [n,c,h-2,w-2].
template <class T>
Var<T> box3_valid(Var<T> x) {
    Tape<T>* t = x.tape;
    const Tensor<T>& X = t->val(x.id);
    const Shape s = X.shape;
    if (s.h < 3 || s.w < 3) throw ShapeError("box3_valid: input smaller than 3x3");
    Tensor<T> out(Shape{s.n, s.c, s.h - 2, s.w - 2});
    const T inv9 = T(1) / T(9);
    for (Index n = 0; n < s.n; ++n)
        for (Index c = 0; c < s.c; ++c)
            for (Index y = 0; y + 2 < s.h; ++y)
                for (Index xq = 0; xq + 2 < s.w; ++xq) {
                    T acc = 0;
                    for (Index dy = 0; dy < 3; ++dy)
                        for (Index dx = 0; dx < 3; ++dx) acc += X.at(n, c, y + dy, xq + dx);
                    out.at(n, c, y, xq) = acc * inv9;
                }
    return t->make(std::move(out), {x}, [t, x = x.id, s, inv9](int self) {
        if (!t->requires_grad(x)) return;
        const Tensor<T>& g = t->grad(self);
        Tensor<T>& gx = t->grad(x);
        for (Index n = 0; n < s.n; ++n)
            for (Index c = 0; c < s.c; ++c)
                for (Index y = 0; y + 2 < s.h; ++y)
                    for (Index xq = 0; xq + 2 < s.w; ++xq) {
                        const T gv = g.at(n, c, y, xq) * inv9;
                        for (Index dy = 0; dy < 3; ++dy)
                            for (Index dx = 0; dx < 3; ++dx) gx.at(n, c, y + dy, xq + dx) += gv;
                    }
    });
}

// ---------------------------------------------------------------------------
// gradient flow control

/// Identity forward; backward multiplies the incoming gradient by -lambda.
template <class T>
Var<T> gradient_reverse(Var<T> x, T lambda) {
    Tape<T>* t = x.tape;
    Tensor<T> out = t->val(x.id);
    return t->make(std::move(out), {x}, [t, x = x.id, lambda](int self) {
        t->add_grad(x, t->grad(self).v * (-lambda));
    });
}

/// Copy of x's value as a fresh constant leaf; gradients stop here.
template <class T>
Var<T> detach(Var<T> x) {
    return x.tape->leaf(x.value());
}

// ---------------------------------------------------------------------------
// convolution

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
void im2col(const Tensor<T>& X, Index img, Index k, Index stride, Index pad, Index ho, Index wo,
            RowMat<T>& col) {
    const Index cin = X.shape.c, h = X.shape.h, w = X.shape.w;
    col.resize(cin * k * k, ho * wo);
    for (Index ci = 0; ci < cin; ++ci)
        for (Index ky = 0; ky < k; ++ky)
            for (Index kx = 0; kx < k; ++kx) {
                const Index r = (ci * k + ky) * k + kx;
                T* dst = col.data() + r * ho * wo;
                for (Index oy = 0; oy < ho; ++oy) {
                    const Index iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) {
                        for (Index ox = 0; ox < wo; ++ox) dst[oy * wo + ox] = T(0);
                        continue;
                    }
                    const T* src = X.data() + X.offset(img, ci, iy, 0);
                    for (Index ox = 0; ox < wo; ++ox) {
                        const Index ix = ox * stride - pad + kx;
                        dst[oy * wo + ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
                    }
                }
            }
}

template <class T>
void col2im_add(const MatrixX<T>& dcol, Index img, Index k, Index stride, Index pad, Index ho,
                Index wo, Tensor<T>& gx) {
    const Index cin = gx.shape.c, h = gx.shape.h, w = gx.shape.w;
    for (Index ci = 0; ci < cin; ++ci)
        for (Index ky = 0; ky < k; ++ky)
            for (Index kx = 0; kx < k; ++kx) {
                const Index r = (ci * k + ky) * k + kx;
                for (Index oy = 0; oy < ho; ++oy) {
                    const Index iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    T* dst = gx.data() + gx.offset(img, ci, iy, 0);
                    for (Index ox = 0; ox < wo; ++ox) {
                        const Index ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) dst[ix] += dcol(r, oy * wo + ox);
                    }
                }
            }
}

} // namespace detail

/// 2D convolution, weight [cout, cin, k, k], bias [1, cout, 1, 1].
/// out = floor((in + 2*pad - k) / stride) + 1 per spatial dim.
template <class T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, int stride, int pad) {
    Tape<T>* t = x.tape;
    const Tensor<T>& X = t->val(x.id);
    const Tensor<T>& W = t->val(w.id);
    const Tensor<T>& B = t->val(b.id);
    const Index n = X.shape.n, cin = X.shape.c, h = X.shape.h, wd = X.shape.w;
    const Index cout = W.shape.n, k = W.shape.h;
    if (W.shape.c != cin)
        throw ShapeError("conv2d: weight expects " + std::to_string(W.shape.c) +
                         " input channels, got " + std::to_string(cin));
    if (W.shape.h != W.shape.w) throw ShapeError("conv2d: non-square kernel");
    if (B.shape.count() != cout) throw ShapeError("conv2d: bias size mismatch");
    const Index ho = (h + 2 * pad - k) / stride + 1;
    const Index wo = (wd + 2 * pad - k) / stride + 1;
    if (ho <= 0 || wo <= 0) throw ShapeError("conv2d: output would be empty");

    const Index r = cin * k * k;
    Eigen::Map<const MatrixX<T>> wm(W.data(), r, cout);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bias(B.data(), cout);

    const bool keep_cols = t->requires_grad(w.id);
    std::vector<detail::RowMat<T>> cols;
    if (keep_cols) cols.resize(n);

    Tensor<T> out(Shape{n, cout, ho, wo});
    detail::RowMat<T> scratch;
    for (Index img = 0; img < n; ++img) {
        detail::RowMat<T>& col = keep_cols ? cols[img] : scratch;
        detail::im2col(X, img, k, stride, pad, ho, wo, col);
        auto om = out.image(img);
        om.noalias() = col.transpose() * wm;
        om.rowwise() += bias.transpose();
    }

    return t->make(std::move(out), {x, w, b},
                   [t, x = x.id, w = w.id, b = b.id, cols = std::move(cols), n, cin, cout, k,
                    stride, pad, ho, wo, r](int self) {
                       const Tensor<T>& g = t->grad(self);
                       if (t->requires_grad(b)) {
                           Tensor<T>& gb = t->grad(b);
                           Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> gbv(gb.data(), cout);
                           for (Index img = 0; img < n; ++img)
                               gbv.noalias() += g.image(img).colwise().sum().transpose();
                       }
                       if (t->requires_grad(w)) {
                           Tensor<T>& gw = t->grad(w);
                           Eigen::Map<MatrixX<T>> gwm(gw.data(), r, cout);
                           for (Index img = 0; img < n; ++img)
                               gwm.noalias() += cols[img] * g.image(img);
                       }
                       if (t->requires_grad(x)) {
                           const Tensor<T>& W = t->val(w);
                           Eigen::Map<const MatrixX<T>> wm(W.data(), r, cout);
                           Tensor<T>& gx = t->grad(x);
                           MatrixX<T> dcol(r, ho * wo);
                           for (Index img = 0; img < n; ++img) {
                               dcol.noalias() = wm * g.image(img).transpose();
                               detail::col2im_add(dcol, img, k, stride, pad, ho, wo, gx);
                           }
                       }
                   });
}

// ---------------------------------------------------------------------------
// stereo warp

template <class T>
struct Warped {
    Var<T> image;
    Tensor<T> mask; // [n,1,h,w], 1 where the source sample was in bounds
};

/// Resample `right` with per-pixel disparity focal*baseline/depth:
/// out(x,y) = right(x - disparity, y), linearly interpolated. Out-of-bounds
/// samples produce 0 and a 0 mask entry. Throws on nonpositive depth.
template <class T>
Warped<T> inverse_warp(Var<T> right, Var<T> depth, T focal, T baseline) {
    Tape<T>* t = right.tape;
    const Tensor<T>& R = t->val(right.id);
    const Tensor<T>& D = t->val(depth.id);
    const Shape rs = R.shape, ds = D.shape;
    if (!(ds.n == rs.n && ds.h == rs.h && ds.w == rs.w && ds.c == 1))
        throw ShapeError("inverse_warp: depth " + ds.str() + " vs image " + rs.str());
    if ((D.v <= T(0)).any()) throw Error("inverse_warp: nonpositive depth");
    const T fb = focal * baseline;
    const Index n = rs.n, c = rs.c, h = rs.h, w = rs.w;

    // roundoff slack: samples within 1e-6 px left of the border clamp to 0
    const T border_slack = T(1e-6);

    Tensor<T> out(rs);
    Tensor<T> mask(Shape{n, 1, h, w});
    for (Index img = 0; img < n; ++img)
        for (Index y = 0; y < h; ++y)
            for (Index x = 0; x < w; ++x) {
                T sx = T(x) - fb / D.at(img, 0, y, x);
                if (sx < T(0)) {
                    if (sx < -border_slack) continue;
                    sx = T(0);
                }
                if (sx > T(w - 1)) continue;
                const Index x0 = Index(std::floor(double(sx)));
                const T frac = sx - T(x0);
                const Index x1 = std::min(x0 + 1, w - 1);
                mask.at(img, 0, y, x) = T(1);
                for (Index ch = 0; ch < c; ++ch)
                    out.at(img, ch, y, x) = (T(1) - frac) * R.at(img, ch, y, x0) +
                                            frac * R.at(img, ch, y, x1);
            }

    Tensor<T> mask_copy = mask;
    Var<T> image = t->make(
        std::move(out), {right, depth},
        [t, right = right.id, depth = depth.id, mask = std::move(mask_copy), fb, n, c, h,
         w](int self) {
            const Tensor<T>& g = t->grad(self);
            const Tensor<T>& R = t->val(right);
            const Tensor<T>& D = t->val(depth);
            const bool need_r = t->requires_grad(right);
            const bool need_d = t->requires_grad(depth);
            Tensor<T>* gr = need_r ? &t->grad(right) : nullptr;
            Tensor<T>* gd = need_d ? &t->grad(depth) : nullptr;
            for (Index img = 0; img < n; ++img)
                for (Index y = 0; y < h; ++y)
                    for (Index x = 0; x < w; ++x) {
                        if (mask.at(img, 0, y, x) == T(0)) continue;
                        const T d = D.at(img, 0, y, x);
                        const T sx = std::max(T(x) - fb / d, T(0));
                        const Index x0 = Index(std::floor(double(sx)));
                        const T frac = sx - T(x0);
                        const Index x1 = std::min(x0 + 1, w - 1);
                        T gd_acc = 0;
                        for (Index ch = 0; ch < c; ++ch) {
                            const T gv = g.at(img, ch, y, x);
                            if (need_r) {
                                gr->at(img, ch, y, x0) += (T(1) - frac) * gv;
                                gr->at(img, ch, y, x1) += frac * gv;
                            }
                            if (need_d)
                                gd_acc += gv * (R.at(img, ch, y, x1) - R.at(img, ch, y, x0));
                        }
                        // d sx / d depth = +fb/depth^2
                        if (need_d) gd->at(img, 0, y, x) += gd_acc * fb / (d * d);
                    }
        });
    return {image, std::move(mask)};
}

} // namespace dda
