// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "mvdiff/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "mvdiff/errors.hpp"

namespace mvd {

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
    if (steps < 1) throw DomainError("NoiseSchedule: need at least one step");
    if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end)) {
        throw DomainError("NoiseSchedule: betas must satisfy 0 < start <= end < 1");
    }
    NoiseSchedule s;
    s.steps = steps;
    s.alpha_bar.resize(static_cast<std::size_t>(steps) + 1);
    s.alpha_bar[0] = 1.0;
    for (int t = 1; t <= steps; ++t) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(steps - 1);
        const double beta = beta_start + (beta_end - beta_start) * frac;
        s.alpha_bar[static_cast<std::size_t>(t)] = s.alpha_bar[static_cast<std::size_t>(t) - 1] * (1.0 - beta);
    }
    return s;
}

NoiseSchedule NoiseSchedule::scaled_linear(int steps, double beta_start, double beta_end) {
    if (steps < 1) throw DomainError("NoiseSchedule: need at least one step");
    if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end)) {
        throw DomainError("NoiseSchedule: betas must satisfy 0 < start <= end < 1");
    }
    NoiseSchedule s;
    s.steps = steps;
    s.alpha_bar.resize(static_cast<std::size_t>(steps) + 1);
    s.alpha_bar[0] = 1.0;
    const double r0 = std::sqrt(beta_start), r1 = std::sqrt(beta_end);
    for (int t = 1; t <= steps; ++t) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(steps - 1);
        const double root = r0 + (r1 - r0) * frac;
        s.alpha_bar[static_cast<std::size_t>(t)] = s.alpha_bar[static_cast<std::size_t>(t) - 1] * (1.0 - root * root);
    }
    return s;
}

NoiseSchedule NoiseSchedule::named(const std::string& name, int steps) {
    if (name == "linear") return linear(steps);
    if (name == "scaled-linear") return scaled_linear(steps);
    throw DomainError("unknown noise schedule '" + name + "' (expected linear or scaled-linear)");
}

double NoiseSchedule::abar(int t) const {
    if (t < 0 || t > steps) {
        throw DomainError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(steps) + "]");
    }
    return alpha_bar[static_cast<std::size_t>(t)];
}

Tensor add_noise(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched) {
    if (z0.shape() != eps.shape()) throw DimensionError("add_noise: z0 and eps shapes differ");
    const double ab = sched.abar(t);
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    Tensor out(z0.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * z0[i] + b * eps[i];
    return out;
}

LatentStack add_noise(const LatentStack& z0, int t, const LatentStack& eps, const NoiseSchedule& sched) {
    return LatentStack(add_noise(z0.features, t, eps.features, sched), z0.ring);
}

Tensor predict_x0(const Tensor& z_t, int t, const Tensor& eps, const NoiseSchedule& sched) {
    if (z_t.shape() != eps.shape()) throw DimensionError("predict_x0: shapes differ");
    const double ab = sched.abar(t);
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    Tensor out(z_t.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (z_t[i] - b * eps[i]) / a;
    return out;
}

Tensor guided_epsilon(const Tensor& eps_uncond, const Tensor& eps_cond, double guidance) {
    if (eps_uncond.shape() != eps_cond.shape()) throw DimensionError("guided_epsilon: shapes differ");
    if (!(guidance >= 0.0)) throw DomainError("guidance scale must be >= 0");
    if (guidance == 1.0) return eps_cond;
    if (guidance == 0.0) return eps_uncond;
    Tensor out(eps_cond.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = eps_uncond[i] + guidance * (eps_cond[i] - eps_uncond[i]);
    return out;
}

std::vector<int> ddim_timesteps(int train_steps, int sample_steps) {
    if (sample_steps < 1) throw DomainError("DDIM needs at least one step");
    if (sample_steps > train_steps) throw DomainError("DDIM steps exceed training steps");
    std::vector<int> ts;
    ts.reserve(static_cast<std::size_t>(sample_steps));
    for (int i = sample_steps; i >= 1; --i) {
        ts.push_back(static_cast<int>(std::lround(static_cast<double>(i) * train_steps / sample_steps)));
    }
    return ts;
}

Tensor ddim_step(const Tensor& z_t, const Tensor& eps, int t, int t_prev, const NoiseSchedule& sched, bool clip_x0) {
    if (t_prev >= t) throw DomainError("ddim_step: t_prev must be below t");
    Tensor x0 = predict_x0(z_t, t, eps, sched);
    const Tensor* e = &eps;
    Tensor eps_clipped;
    if (clip_x0) {
        const double ab = sched.abar(t);
        const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
        for (auto& v : x0.data()) v = std::clamp(v, -1.0, 1.0);
        eps_clipped = Tensor(z_t.shape());
        for (std::size_t i = 0; i < x0.size(); ++i) eps_clipped[i] = (z_t[i] - a * x0[i]) / b;
        e = &eps_clipped;
    }
    const double ap = sched.abar(t_prev);
    const double a = std::sqrt(ap), b = std::sqrt(1.0 - ap);
    if (t_prev == 0) return x0;
    Tensor out(z_t.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * (*e)[i];
    return out;
}

Tensor ddim_sample_from(const EpsFn& eps, Tensor z, const NoiseSchedule& sched, const DdimOptions& opt) {
    const auto ts = ddim_timesteps(sched.steps, opt.steps);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const int t = ts[i];
        const int t_prev = i + 1 < ts.size() ? ts[i + 1] : 0;
        Tensor e;
        if (opt.guidance == 1.0) {
            e = eps(z, t, true);
        } else if (opt.guidance == 0.0) {
            e = eps(z, t, false);
        } else {
            e = guided_epsilon(eps(z, t, false), eps(z, t, true), opt.guidance);
        }
        if (!e.all_finite()) throw NumericError("DDIM: non-finite epsilon at t = " + std::to_string(t));
        z = ddim_step(z, e, t, t_prev, sched, opt.clip_x0);
    }
    return z;
}

Tensor standard_normal(const Shape& shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Tensor t(shape);
    for (auto& v : t.data()) v = n(rng);
    return t;
}

Tensor ddim_sample(const EpsFn& eps, const Shape& shape, const NoiseSchedule& sched, const DdimOptions& opt,
                   std::uint64_t seed) {
    return ddim_sample_from(eps, standard_normal(shape, seed), sched, opt);
}

}  // namespace mvd
