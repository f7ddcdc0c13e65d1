// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0
//
// Forward noising, classifier-free guidance and the deterministic DDIM
// sampler. The sampler only sees an epsilon-prediction callback so any
// model (or an analytic oracle) can drive it.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mvdiff/latent_stack.hpp"
#include "mvdiff/tensor.hpp"

namespace mvd {

struct NoiseSchedule {
    int steps = 1000;                // T
    std::vector<double> alpha_bar;   // size T + 1, alpha_bar[0] = 1

    // beta_t linear from beta_start to beta_end over t = 1..T.
    static NoiseSchedule linear(int steps = 1000, double beta_start = 1e-4, double beta_end = 0.02);
    // sqrt(beta_t) linear between sqrt(beta_start) and sqrt(beta_end); the
    // latent-diffusion default.
    static NoiseSchedule scaled_linear(int steps = 1000, double beta_start = 0.00085, double beta_end = 0.012);
    // "linear" or "scaled-linear" with default endpoints.
    static NoiseSchedule named(const std::string& name, int steps = 1000);

    double abar(int t) const;  // throws DomainError outside [0, T]
};

// sqrt(abar_t) z0 + sqrt(1 - abar_t) eps
Tensor add_noise(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched);
LatentStack add_noise(const LatentStack& z0, int t, const LatentStack& eps, const NoiseSchedule& sched);

// (z_t - sqrt(1 - abar_t) eps) / sqrt(abar_t)
Tensor predict_x0(const Tensor& z_t, int t, const Tensor& eps, const NoiseSchedule& sched);

// eps_u + s (eps_c - eps_u); s = 1 returns eps_c and s = 0 returns eps_u
// unchanged.
Tensor guided_epsilon(const Tensor& eps_uncond, const Tensor& eps_cond, double guidance);

// Descending timesteps T, ..., T/steps (rounded) of a uniform sub-schedule.
std::vector<int> ddim_timesteps(int train_steps, int sample_steps);

// One eta = 0 update from t to t_prev (t_prev = 0 yields the x0 estimate).
Tensor ddim_step(const Tensor& z_t, const Tensor& eps, int t, int t_prev, const NoiseSchedule& sched,
                 bool clip_x0 = false);

// eps(z_t, t, conditional)
using EpsFn = std::function<Tensor(const Tensor& z_t, int t, bool conditional)>;

struct DdimOptions {
    int steps = 50;
    double guidance = 7.5;
    bool clip_x0 = true;
};

Tensor ddim_sample_from(const EpsFn& eps, Tensor z_start, const NoiseSchedule& sched, const DdimOptions& opt);
// Draws z_T from N(0, I) with `seed`.
Tensor ddim_sample(const EpsFn& eps, const Shape& shape, const NoiseSchedule& sched, const DdimOptions& opt,
                   std::uint64_t seed);

Tensor standard_normal(const Shape& shape, std::uint64_t seed);

}  // namespace mvd
