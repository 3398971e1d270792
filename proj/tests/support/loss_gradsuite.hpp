#pragma once

#include <string>
#include <vector>

#include "dda/losses.hpp"
#include "support/gradcheck.hpp"

// Finite-difference verification of every objective term, shared between the
// unit tests and the acceptance suite. Inputs are 4x4 or smaller except for
// the perceptual terms, whose extractor contract requires 16x16 images.

namespace dda::testing {

struct GradSuiteEntry {
    std::string name;
    double max_rel_err = 0.0;
};

inline std::vector<GradSuiteEntry> run_loss_gradient_suite() {
    std::vector<GradSuiteEntry> out;
    LossWeights<double> w;

    NetConfig tiny;
    tiny.discriminator_channels = {4, 4};
    tiny.leaky_slope = 0.2;

    {
        Tensor<double> mask(Shape{1, 1, 4, 4});
        Rng rng(1);
        for (Index i = 0; i < mask.size(); ++i) mask.v[i] = rng.uniform(0, 1) < 0.7 ? 1.0 : 0.0;
        auto r = gradcheck({random_tensor({1, 1, 4, 4}, 2, 1.0, 3.0),
                            random_tensor({1, 1, 4, 4}, 3, 1.0, 3.0)},
                           [&](Tape<double>&, const std::vector<Var<double>>& v) {
                               return depth_l1(v[0], v[1], mask);
                           });
        out.push_back({"depth_l1", r.max_rel_err});
    }
    {
        Tensor<double> image = random_tensor({1, 3, 4, 4}, 4, 0.0, 1.0);
        auto r = gradcheck({random_tensor({1, 1, 4, 4}, 5, 1.0, 3.0)},
                           [&](Tape<double>&, const std::vector<Var<double>>& v) {
                               return smoothness_loss(v[0], image);
                           });
        out.push_back({"smoothness_loss", r.max_rel_err});
    }
    {
        auto r = gradcheck({random_tensor({1, 2, 4, 4}, 6, 0.05, 0.95),
                            random_tensor({1, 2, 4, 4}, 7, 0.05, 0.95)},
                           [&](Tape<double>&, const std::vector<Var<double>>& v) {
                               return ssim(v[0], v[1]);
                           });
        out.push_back({"ssim", r.max_rel_err});
    }
    {
        Tensor<double> mask = Tensor<double>::full({1, 1, 4, 4}, 1.0);
        mask.at(0, 0, 0, 0) = 0.0;
        auto r = gradcheck({random_tensor({1, 3, 4, 4}, 8, 0.05, 0.95),
                            random_tensor({1, 3, 4, 4}, 9, 0.05, 0.95)},
                           [&](Tape<double>&, const std::vector<Var<double>>& v) {
                               return geometry_loss(v[0], v[1], mask, w);
                           });
        out.push_back({"geometry_loss", r.max_rel_err});
    }
    {
        // the full self-supervision pathway: warp from predicted depth, then
        // photometric consistency
        Tensor<double> right = random_tensor({1, 3, 3, 6}, 10, 0.05, 0.95);
        Tensor<double> target = random_tensor({1, 3, 3, 6}, 11, 0.05, 0.95);
        const double focal = 4.0, baseline = 0.5; // disparities near 1px
        auto r = gradcheck({random_tensor({1, 1, 3, 6}, 12, 1.5, 2.5)},
                           [&](Tape<double>& t, const std::vector<Var<double>>& v) {
                               auto wres = inverse_warp(t.leaf(right), v[0], focal, baseline);
                               return geometry_loss(t.leaf(target), wres.image, wres.mask, w);
                           },
                           1e-6);
        out.push_back({"geometry_loss(inverse_warp(depth))", r.max_rel_err});
    }
    {
        auto r = gradcheck({random_tensor({1, 1, 3, 3}, 13), random_tensor({1, 1, 3, 3}, 14)},
                           [&](Tape<double>&, const std::vector<Var<double>>& v) {
                               return lsgan_disc_loss(v[0], v[1]);
                           });
        out.push_back({"lsgan_disc_loss", r.max_rel_err});
    }
    {
        // the encoder path is gradient-reversed by construction: its tape
        // gradient must equal -lambda times the finite-difference gradient
        Discriminator<double> disc(3, tiny, 99);
        const double lambda = 0.8;
        std::vector<Tensor<double>> zs{random_tensor({1, 3, 4, 4}, 15),
                                       random_tensor({1, 3, 4, 4}, 16)};
        auto build = [&](Tape<double>&, const std::vector<Var<double>>& v) {
            return alignment_loss(v[0], v[1], disc, w, lambda).encoder_loss;
        };
        std::vector<Tensor<double>> analytic;
        {
            Tape<double> tape;
            std::vector<Var<double>> vars{tape.leaf(zs[0], true), tape.leaf(zs[1], true)};
            tape.backward(build(tape, vars));
            analytic.push_back(tape.grad(vars[0].id));
            analytic.push_back(tape.grad(vars[1].id));
        }
        auto value = [&](const std::vector<Tensor<double>>& ins) {
            Tape<double> tape;
            std::vector<Var<double>> vars{tape.leaf(ins[0]), tape.leaf(ins[1])};
            return build(tape, vars).value().v[0];
        };
        const double h = 1e-5;
        double worst = 0;
        for (std::size_t i = 0; i < zs.size(); ++i)
            for (Index j = 0; j < zs[i].size(); ++j) {
                const double orig = zs[i].v[j];
                zs[i].v[j] = orig + h;
                const double lp = value(zs);
                zs[i].v[j] = orig - h;
                const double lm = value(zs);
                zs[i].v[j] = orig;
                const double want = -lambda * (lp - lm) / (2 * h);
                const double got = analytic[i].v[j];
                worst = std::max(worst, std::abs(want - got) /
                                            std::max({1.0, std::abs(want), std::abs(got)}));
            }
        out.push_back({"alignment_loss(encoder, GRL-scaled FD)", worst});
    }
    {
        PerceptualExtractor<double> ex({2, 2, 2, 2, 2}, 31);
        Discriminator<double> disc(3, tiny, 32);
        Tensor<double> content = random_tensor({1, 3, 16, 16}, 33, 0.0, 1.0);
        Tensor<double> style = random_tensor({1, 3, 16, 16}, 34, 0.0, 1.0);
        auto r = gradcheck({random_tensor({1, 3, 16, 16}, 35, 0.0, 1.0)},
                           [&](Tape<double>& t, const std::vector<Var<double>>& v) {
                               return translation_loss(ex, t.leaf(content), t.leaf(style), v[0],
                                                       disc, w);
                           });
        out.push_back({"translation_loss", r.max_rel_err});
    }
    {
        PerceptualExtractor<double> ex({2, 2, 2, 2, 2}, 41);
        Tensor<double> img = random_tensor({1, 3, 16, 16}, 42, 0.0, 1.0);
        auto r = gradcheck({random_tensor({1, 3, 16, 16}, 43, 0.0, 1.0)},
                           [&](Tape<double>& t, const std::vector<Var<double>>& v) {
                               return reconstruction_loss(ex, t.leaf(img), v[0], w);
                           });
        out.push_back({"reconstruction_loss", r.max_rel_err});
    }
    {
        auto r = gradcheck(
            {random_tensor({1, 1, 1, 1}, 51, 0.1, 2.0), random_tensor({1, 1, 1, 1}, 52, 0.1, 2.0),
             random_tensor({1, 1, 1, 1}, 53, 0.1, 2.0), random_tensor({1, 1, 1, 1}, 54, 0.1, 2.0),
             random_tensor({1, 1, 1, 1}, 55, 0.1, 2.0)},
            [&](Tape<double>& t, const std::vector<Var<double>>& v) {
                LossParts<double> p;
                p.de_s = v[0];
                p.geo = v[1];
                p.sm = v[2];
                p.recon_s = v[3];
                p.trans_s2t = v[4];
                return total_loss(t, p, w);
            });
        out.push_back({"total_loss", r.max_rel_err});
    }
    return out;
}

} // namespace dda::testing
