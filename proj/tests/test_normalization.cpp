#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dda/normalization.hpp"
#include "support/gradcheck.hpp"
#include "support/reference_ops.hpp"

using namespace dda;
using dda::testing::random_tensor;

namespace {

template <class T>
Tensor<T> forward_once(const Tensor<T>& x, SeparateBNState<T>& state, int branch, Mode mode) {
    Tape<T> tape;
    return sbn_forward(tape.leaf(x), state, branch, mode).value();
}

template <class T>
bool branches_equal(const typename SeparateBNState<T>::Branch& a,
                    const typename SeparateBNState<T>::Branch& b) {
    return (a.gamma.v == b.gamma.v).all() && (a.beta.v == b.beta.v).all() &&
           (a.running_mean.v == b.running_mean.v).all() &&
           (a.running_var.v == b.running_var.v).all();
}

} // namespace

TEST_CASE("fresh state: gamma 1, beta 0, mean 0, var 1") {
    SeparateBNState<double> st(4, 3);
    for (auto& br : st.branches) {
        CHECK((br.gamma.v == 1.0).all());
        CHECK((br.beta.v == 0.0).all());
        CHECK((br.running_mean.v == 0.0).all());
        CHECK((br.running_var.v == 1.0).all());
    }
}

TEST_CASE("identity on standardized input with k near 0") {
    SeparateBNState<double> st(3, 2, 0.1, 1e-12);
    Tensor<double> x = random_tensor({4, 3, 5, 5}, 7);
    // standardize per channel over (n,h,w)
    const Index m = 4 * 25;
    for (Index c = 0; c < 3; ++c) {
        double sum = 0, sq = 0;
        for (Index n = 0; n < 4; ++n) {
            sum += x.plane(n, c).sum();
            sq += x.plane(n, c).square().sum();
        }
        const double mean = sum / m, sd = std::sqrt(sq / m - mean * mean);
        for (Index n = 0; n < 4; ++n) x.plane(n, c) = (x.plane(n, c) - mean) / sd;
    }
    auto out = forward_once(x, st, 0, Mode::train);
    CHECK(dda::testing::max_abs_diff(out, x) < 1e-5);
}

TEST_CASE("hand case: batch {1,3}, gamma 2, beta 1") {
    SeparateBNState<double> st(1, 1, 0.1, 1e-5);
    st.branches[0].gamma.v[0] = 2.0;
    st.branches[0].beta.v[0] = 1.0;
    Tensor<double> x(2, 1, 1, 1);
    x.v[0] = 1.0;
    x.v[1] = 3.0;
    auto out = forward_once(x, st, 0, Mode::train);
    // batch mean 2, biased var 1
    CHECK(out.v[0] == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(out.v[1] == doctest::Approx(3.0).epsilon(1e-4));
    CHECK(st.branches[0].running_mean.v[0] == doctest::Approx(0.9 * 0.0 + 0.1 * 2.0));
    CHECK(st.branches[0].running_var.v[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 1.0));
}

TEST_CASE("routing to branch 0 leaves branch 1 bit-identical") {
    SeparateBNState<float> st(3, 2);
    const auto before = st.branches[1];
    Tensor<float> x = random_tensor({2, 3, 4, 4}, 9).cast<float>();
    forward_once(x, st, 0, Mode::train);
    forward_once(x, st, 0, Mode::train);
    CHECK(branches_equal<float>(st.branches[1], before));
    CHECK((st.branches[1].running_mean.v == 0.0f).all());
    CHECK((st.branches[1].running_var.v == 1.0f).all());
    // branch 0 did move
    CHECK_FALSE((st.branches[0].running_mean.v == 0.0f).all());
}

TEST_CASE("randomized routing: off-route branches never move") {
    SeparateBNState<float> st(2, 3);
    Rng rng(123);
    for (int it = 0; it < 50; ++it) {
        const int route = int(rng.index(3));
        std::vector<typename SeparateBNState<float>::Branch> snap;
        for (int b = 0; b < 3; ++b) snap.push_back(st.branches[b]);
        Tensor<float> x(2, 2, 3, 3);
        for (Index i = 0; i < x.size(); ++i) x.v[i] = float(rng.normal());
        forward_once(x, st, route, Mode::train);
        for (int b = 0; b < 3; ++b) {
            if (b == route) continue;
            CHECK(branches_equal<float>(st.branches[b], snap[b]));
        }
    }
}

TEST_CASE("train output statistics: mean beta, std |gamma| (large variance)") {
    SeparateBNState<double> st(2, 1, 0.1, 1e-5);
    st.branches[0].gamma.v[0] = -1.7;
    st.branches[0].gamma.v[1] = 0.6;
    st.branches[0].beta.v[0] = 0.3;
    st.branches[0].beta.v[1] = -2.0;
    Tensor<double> x = random_tensor({4, 2, 6, 6}, 31, -40.0, 40.0); // sigma^2 >> k
    auto out = forward_once(x, st, 0, Mode::train);
    const Index m = 4 * 36;
    for (Index c = 0; c < 2; ++c) {
        double sum = 0, sq = 0;
        for (Index n = 0; n < 4; ++n) {
            sum += out.plane(n, c).sum();
            sq += out.plane(n, c).square().sum();
        }
        const double mean = sum / m, sd = std::sqrt(sq / m - mean * mean);
        CHECK(mean == doctest::Approx(st.branches[0].beta.v[c]).epsilon(1e-4));
        CHECK(sd == doctest::Approx(std::abs(st.branches[0].gamma.v[c])).epsilon(1e-4));
    }
}

TEST_CASE("eval mode is a pure function of (x, state)") {
    SeparateBNState<double> st(3, 2);
    Tensor<double> warmup = random_tensor({4, 3, 4, 4}, 41);
    forward_once(warmup, st, 1, Mode::train);
    const auto snap_mean = st.branches[1].running_mean.v.eval();
    const auto snap_var = st.branches[1].running_var.v.eval();
    Tensor<double> x = random_tensor({2, 3, 4, 4}, 42);
    auto a = forward_once(x, st, 1, Mode::eval);
    auto b = forward_once(x, st, 1, Mode::eval);
    CHECK((a.v == b.v).all());
    CHECK((st.branches[1].running_mean.v == snap_mean).all());
    CHECK((st.branches[1].running_var.v == snap_var).all());
}

TEST_CASE("errors: bad branch, channel mismatch, degenerate batch") {
    SeparateBNState<double> st(3, 2);
    Tensor<double> x = random_tensor({2, 3, 2, 2}, 50);
    {
        Tape<double> tape;
        CHECK_THROWS_AS(sbn_forward(tape.leaf(x), st, 2, Mode::train), RoutingError);
    }
    {
        Tape<double> tape;
        Tensor<double> bad = random_tensor({2, 4, 2, 2}, 51);
        CHECK_THROWS_AS(sbn_forward(tape.leaf(bad), st, 0, Mode::train), ShapeError);
    }
    {
        Tape<double> tape;
        Tensor<double> one = random_tensor({1, 3, 2, 2}, 52);
        CHECK_THROWS_AS(sbn_forward(tape.leaf(one), st, 0, Mode::train), DegenerateBatchError);
        // eval mode accepts batch of 1
        CHECK_NOTHROW(sbn_forward(tape.leaf(one), st, 0, Mode::eval));
    }
}

TEST_CASE("gradients vs central differences (x, gamma, beta), train and eval") {
    const Shape xs{2, 3, 4, 4};
    Tensor<double> x0 = random_tensor(xs, 61);
    Tensor<double> g0 = random_tensor({1, 3, 1, 1}, 62, 0.5, 1.5);
    Tensor<double> b0 = random_tensor({1, 3, 1, 1}, 63, -0.5, 0.5);
    Tensor<double> probe = random_tensor(xs, 64); // fixed linear readout

    for (Mode mode : {Mode::train, Mode::eval}) {
        SeparateBNState<double> proto(3, 2);
        // seed running stats away from the trivial (0,1)
        proto.branches[0].running_mean.v.setConstant(0.3);
        proto.branches[0].running_var.v.setConstant(2.0);

        auto eval_loss = [&](const Tensor<double>& x, const Tensor<double>& g,
                             const Tensor<double>& b, Tape<double>& tape,
                             SeparateBNState<double>& st, bool want_grad) {
            st.branches[0].gamma = g;
            st.branches[0].beta = b;
            Var<double> vx = tape.leaf(x, want_grad);
            return mean_all(mul_const(sbn_forward(vx, st, 0, mode), probe));
        };

        // analytic
        Tape<double> tape;
        SeparateBNState<double> st = proto;
        Var<double> vx = tape.leaf(x0, true);
        st.branches[0].gamma = g0;
        st.branches[0].beta = b0;
        Var<double> loss = mean_all(mul_const(sbn_forward(vx, st, 0, mode), probe));
        tape.backward(loss);
        Tensor<double> gx = tape.grad(vx.id);
        const Tensor<double>* gg = tape.grad_for(&st.branches[0].gamma);
        const Tensor<double>* gb = tape.grad_for(&st.branches[0].beta);
        REQUIRE(gg != nullptr);
        REQUIRE(gb != nullptr);

        const double h = 1e-6;
        double max_rel = 0;
        auto probe_one = [&](Tensor<double>& target, Index i, double analytic) {
            const double orig = target.v[i];
            auto run = [&](double v) {
                target.v[i] = v;
                Tape<double> tp;
                SeparateBNState<double> stc = proto;
                return scalar_of(eval_loss(x0, g0, b0, tp, stc, false));
            };
            const double lp = run(orig + h), lm = run(orig - h);
            target.v[i] = orig;
            const double num = (lp - lm) / (2 * h);
            max_rel = std::max(max_rel, std::abs(analytic - num) /
                                            std::max({1.0, std::abs(analytic), std::abs(num)}));
        };
        for (Index i = 0; i < x0.size(); ++i) probe_one(x0, i, gx.v[i]);
        for (Index i = 0; i < g0.size(); ++i) probe_one(g0, i, gg->v[i]);
        for (Index i = 0; i < b0.size(); ++i) probe_one(b0, i, gb->v[i]);
        CHECK(max_rel < 1e-4);
    }
}
