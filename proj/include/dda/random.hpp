#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string_view>

#include "dda/tensor.hpp"

namespace dda {

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over the xor; decorrelates (seed, tag) pairs
    std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(gen_);
    }
    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(gen_);
    }
    Index index(Index n) { return std::uniform_int_distribution<Index>(0, n - 1)(gen_); }
    std::uint64_t next() { return gen_(); }

  private:
    std::mt19937_64 gen_;
};

template <class Scalar>
void fill_normal(Tensor<Scalar>& t, Rng& rng, double stddev) {
    for (Index i = 0; i < t.size(); ++i) t.v[i] = static_cast<Scalar>(rng.normal(0.0, stddev));
}

/// He-style init for a conv weight [cout, cin, k, k].
template <class Scalar>
void he_init(Tensor<Scalar>& w, Rng& rng) {
    const double fan_in = double(w.shape.c) * double(w.shape.h) * double(w.shape.w);
    fill_normal(w, rng, std::sqrt(2.0 / fan_in));
}

/// Rows of the flattened filter matrix made orthonormal (when cout <= cin*k*k),
/// then rescaled; used for the frozen feature extractor.
template <class Scalar>
void orthogonal_init(Tensor<Scalar>& w, Rng& rng, double gain = std::sqrt(2.0)) {
    const Index rows = w.shape.n;
    const Index cols = w.shape.c * w.shape.h * w.shape.w;
    MatrixX<double> m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
    if (rows <= cols) {
        Eigen::HouseholderQR<MatrixX<double>> qr(m.transpose());
        m = (qr.householderQ() * MatrixX<double>::Identity(cols, rows)).transpose();
    } else {
        m /= std::sqrt(double(cols));
    }
    m *= gain;
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) w.v[i * cols + j] = static_cast<Scalar>(m(i, j));
}

} // namespace dda
