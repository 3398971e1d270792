#pragma once

#include <Eigen/Core>

#include <string>

#include "dda/errors.hpp"

namespace dda {

using Index = Eigen::Index;

template <class Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// NCHW extents of a feature map. Scalars are modelled as [1,1,1,1].
struct Shape {
    Index n = 0, c = 0, h = 0, w = 0;

    Index count() const { return n * c * h * w; }
    Index plane() const { return h * w; }
    bool operator==(const Shape&) const = default;

    std::string str() const {
        return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
               std::to_string(w) + "]";
    }
};

/// Dense NCHW tensor backed by a flat Eigen array. Element (n,c,y,x) lives at
/// ((n*C + c)*H + y)*W + x, so each (n,c) plane is contiguous.
template <class Scalar>
struct Tensor {
    Shape shape{};
    ArrayX<Scalar> v;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(s), v(ArrayX<Scalar>::Zero(s.count())) {}
    Tensor(Index n, Index c, Index h, Index w) : Tensor(Shape{n, c, h, w}) {}

    static Tensor zeros(Shape s) { return Tensor(s); }
    static Tensor full(Shape s, Scalar x) {
        Tensor t;
        t.shape = s;
        t.v = ArrayX<Scalar>::Constant(s.count(), x);
        return t;
    }
    static Tensor scalar(Scalar x) { return full(Shape{1, 1, 1, 1}, x); }

    Index size() const { return v.size(); }
    bool empty() const { return v.size() == 0; }

    Scalar* data() { return v.data(); }
    const Scalar* data() const { return v.data(); }

    Index offset(Index n, Index c, Index y, Index x) const {
        return ((n * shape.c + c) * shape.h + y) * shape.w + x;
    }
    Scalar& at(Index n, Index c, Index y, Index x) { return v[offset(n, c, y, x)]; }
    Scalar at(Index n, Index c, Index y, Index x) const { return v[offset(n, c, y, x)]; }

    /// Contiguous H*W view of one (n,c) plane.
    Eigen::Map<ArrayX<Scalar>> plane(Index n, Index c) {
        return {v.data() + offset(n, c, 0, 0), shape.plane()};
    }
    Eigen::Map<const ArrayX<Scalar>> plane(Index n, Index c) const {
        return {v.data() + offset(n, c, 0, 0), shape.plane()};
    }

    /// One image viewed as a [H*W, C] column-major matrix (column c = plane c).
    Eigen::Map<MatrixX<Scalar>> image(Index n) {
        return {v.data() + offset(n, 0, 0, 0), shape.plane(), shape.c};
    }
    Eigen::Map<const MatrixX<Scalar>> image(Index n) const {
        return {v.data() + offset(n, 0, 0, 0), shape.plane(), shape.c};
    }

    template <class Other>
    Tensor<Other> cast() const {
        Tensor<Other> t;
        t.shape = shape;
        t.v = v.template cast<Other>();
        return t;
    }
};

template <class Scalar>
void require_shape(const Tensor<Scalar>& t, const Shape& want, const char* what) {
    if (!(t.shape == want))
        throw ShapeError(std::string(what) + ": expected " + want.str() + ", got " + t.shape.str());
}

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
    if (!(a == b))
        throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
}

} // namespace dda
