#pragma once

#include <cmath>
#include <vector>

#include "dda/autodiff.hpp"
#include "dda/ops.hpp"
#include "dda/tensor.hpp"

namespace dda {

enum class Mode { train, eval };

/// N independent batch-normalization branches behind one layer. Each branch
/// owns its affine parameters and running statistics and serves exactly one
/// routing key; a forward routed to branch b never touches any other branch.
template <class T>
struct SeparateBNState {
    struct Branch {
        Tensor<T> gamma, beta;               // [1,c,1,1]
        Tensor<T> running_mean, running_var; // [1,c,1,1]
    };

    Index channels = 0;
    T momentum = T(0.1);
    T k = T(1e-5); // variance stabilizer
    std::vector<Branch> branches;

    SeparateBNState() = default;
    SeparateBNState(Index channels_, int num_branches, T momentum_ = T(0.1), T k_ = T(1e-5))
        : channels(channels_), momentum(momentum_), k(k_) {
        if (num_branches < 1) throw ConfigError("SeparateBNState: num_branches < 1");
        const Shape s{1, channels, 1, 1};
        branches.resize(num_branches);
        for (auto& b : branches) {
            b.gamma = Tensor<T>::full(s, T(1));
            b.beta = Tensor<T>::zeros(s);
            b.running_mean = Tensor<T>::zeros(s);
            b.running_var = Tensor<T>::full(s, T(1));
        }
    }

    int num_branches() const { return int(branches.size()); }
};

/// Domain-routed batch normalization. Train mode normalizes by the batch
/// statistics of x (biased variance) and folds them into branch `branch`'s
/// running statistics by EMA; eval mode normalizes by that branch's stored
/// running statistics and is a pure function of (x, state).
template <class T>
Var<T> sbn_forward(Var<T> x, SeparateBNState<T>& state, int branch, Mode mode) {
    Tape<T>* t = x.tape;
    const Tensor<T>& X = t->val(x.id);
    const Shape s = X.shape;
    if (branch < 0 || branch >= state.num_branches())
        throw RoutingError("sbn_forward: branch " + std::to_string(branch) + " of " +
                           std::to_string(state.num_branches()));
    if (s.c != state.channels)
        throw ShapeError("sbn_forward: " + std::to_string(s.c) + " channels vs state " +
                         std::to_string(state.channels));
    if (mode == Mode::train && s.n < 2)
        throw DegenerateBatchError("sbn_forward: train mode needs batch >= 2");

    auto& br = state.branches[branch];
    Var<T> gamma = t->param(br.gamma);
    Var<T> beta = t->param(br.beta);

    const Index m = s.n * s.plane(); // elements per channel
    ArrayX<T> mu(s.c), inv(s.c);
    if (mode == Mode::train) {
        for (Index c = 0; c < s.c; ++c) {
            T sum = 0, sq = 0;
            for (Index n = 0; n < s.n; ++n) {
                auto p = X.plane(n, c);
                sum += p.sum();
                sq += p.square().sum();
            }
            const T mean = sum / T(m);
            const T var = sq / T(m) - mean * mean;
            mu[c] = mean;
            inv[c] = T(1) / std::sqrt(var + state.k);
            br.running_mean.v[c] = (T(1) - state.momentum) * br.running_mean.v[c] +
                                   state.momentum * mean;
            br.running_var.v[c] = (T(1) - state.momentum) * br.running_var.v[c] +
                                  state.momentum * var;
        }
    } else {
        for (Index c = 0; c < s.c; ++c) {
            mu[c] = br.running_mean.v[c];
            inv[c] = T(1) / std::sqrt(br.running_var.v[c] + state.k);
        }
    }

    const Tensor<T>& G = t->val(gamma.id);
    const Tensor<T>& B = t->val(beta.id);
    Tensor<T> out(s);
    for (Index n = 0; n < s.n; ++n)
        for (Index c = 0; c < s.c; ++c)
            out.plane(n, c) = (X.plane(n, c) - mu[c]) * (inv[c] * G.v[c]) + B.v[c];

    const bool train = mode == Mode::train;
    return t->make(
        std::move(out), {x, gamma, beta},
        [t, x = x.id, gamma = gamma.id, beta = beta.id, mu = std::move(mu),
         inv = std::move(inv), s, m, train](int self) {
            const Tensor<T>& g = t->grad(self);
            const Tensor<T>& X = t->val(x);
            const Tensor<T>& G = t->val(gamma);
            const bool need_x = t->requires_grad(x);
            ArrayX<T> plane_hat(s.plane());
            for (Index c = 0; c < s.c; ++c) {
                T sum_g = 0, sum_gx = 0;
                for (Index n = 0; n < s.n; ++n) {
                    auto gp = g.plane(n, c);
                    sum_g += gp.sum();
                    sum_gx += (gp * ((X.plane(n, c) - mu[c]) * inv[c])).sum();
                }
                if (t->requires_grad(beta)) t->grad(beta).v[c] += sum_g;
                if (t->requires_grad(gamma)) t->grad(gamma).v[c] += sum_gx;
                if (!need_x) continue;
                Tensor<T>& gx = t->grad(x);
                const T scale = G.v[c] * inv[c];
                if (train) {
                    const T mg = sum_g / T(m), mgx = sum_gx / T(m);
                    for (Index n = 0; n < s.n; ++n) {
                        plane_hat = (X.plane(n, c) - mu[c]) * inv[c];
                        gx.plane(n, c) += scale * (g.plane(n, c) - mg - plane_hat * mgx);
                    }
                } else {
                    for (Index n = 0; n < s.n; ++n) gx.plane(n, c) += scale * g.plane(n, c);
                }
            }
        });
}

} // namespace dda
