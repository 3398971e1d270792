#pragma once

#include <algorithm>
#include <cmath>

#include "dda/tensor.hpp"

// Naive loop implementations used as independent oracles in tests. These must
// stay decoupled from the production op implementations.

namespace dda::testing {

template <class T>
Tensor<T> conv2d_ref(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride,
                     int pad) {
    const Index n = x.shape.n, cin = x.shape.c, h = x.shape.h, wd = x.shape.w;
    const Index cout = w.shape.n, k = w.shape.h;
    const Index ho = (h + 2 * pad - k) / stride + 1;
    const Index wo = (wd + 2 * pad - k) / stride + 1;
    Tensor<T> out(Shape{n, cout, ho, wo});
    for (Index img = 0; img < n; ++img)
        for (Index co = 0; co < cout; ++co)
            for (Index oy = 0; oy < ho; ++oy)
                for (Index ox = 0; ox < wo; ++ox) {
                    T acc = b.v[co];
                    for (Index ci = 0; ci < cin; ++ci)
                        for (Index ky = 0; ky < k; ++ky)
                            for (Index kx = 0; kx < k; ++kx) {
                                const Index iy = oy * stride - pad + ky;
                                const Index ix = ox * stride - pad + kx;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                                acc += x.at(img, ci, iy, ix) * w.at(co, ci, ky, kx);
                            }
                    out.at(img, co, oy, ox) = acc;
                }
    return out;
}

template <class T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (!(a.shape == b.shape)) return std::numeric_limits<double>::infinity();
    return double((a.v - b.v).abs().maxCoeff());
}

} // namespace dda::testing
