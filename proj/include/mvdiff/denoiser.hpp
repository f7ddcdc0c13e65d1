// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0
//
// Toy multiview epsilon-prediction network on [f, C_lat, H, W] latents.
//
//   stem      3x3 conv + learned position embedding
//   emb       time sinusoid MLP + camera MLP, one vector per view
//   block     resblock(emb) -> text cross-attention -> adjacent ->
//             trajectory -> rapid glance -> score-weighted pooled attention,
//             each with a residual; mode_2d skips the four cross-view stages
//   head      3x3 conv back to C_lat
//
// Parameters live in a name -> Tensor map so checkpoints and gradient checks
// can address them individually.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>

#include "json.hpp"

#include "mvdiff/attention.hpp"
#include "mvdiff/autograd.hpp"
#include "mvdiff/diffusion.hpp"
#include "mvdiff/ssm_scan.hpp"
#include "mvdiff/text_encoder.hpp"
#include "mvdiff/view_geometry.hpp"

namespace mvd {

struct ModuleFlags {
    bool aa = true;
    bool dr = true;
    bool rg = true;
    bool air = true;

    // "aa", "aa+dr", "aa+dr+rg+air", "full", "none"
    static ModuleFlags parse(const std::string& spec);
    std::string label() const;
    friend bool operator==(const ModuleFlags&, const ModuleFlags&) = default;
};

struct ModelConfig {
    std::size_t channels = 32;
    std::size_t blocks = 1;
    int heads = 1;
    std::size_t latent_channels = 3;
    std::size_t latent_height = 8;
    std::size_t latent_width = 8;
    int views = 12;
    std::size_t text_dim = 16;
    std::size_t state_dim = 4;
    std::size_t score_hidden = 16;
    std::size_t camera_freqs = 4;
    AirConfig air{2, 4};
    ModuleFlags modules{};
    ScanStrategy scan = ScanStrategy::SpiralBidirectional;
    std::size_t scan_chunk = 64;
    double p_2d = 0.4;
    double p_drop = 0.1;
    double guidance = 7.5;
    std::string schedule = "scaled-linear";  // NoiseSchedule::named

    void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

using ParamMap = std::map<std::string, Tensor>;
using VarMap = std::map<std::string, Var>;

std::map<std::string, Shape> param_shapes(const ModelConfig& config);

struct Model {
    ModelConfig config;
    ParamMap params;

    static Model init(const ModelConfig& config, std::uint64_t seed);
    std::size_t parameter_count() const;
};

VarMap bind_params(Tape& tape, const ParamMap& params, bool trainable);

struct Conditioning {
    Tensor tokens;  // [T, E]
    Tensor pooled;  // [E]

    static Conditioning from(const TextEmbedding& e) { return {e.tokens, e.pooled}; }
};

// sin/cos of k * azimuth and k * elevation for k = 1..freqs -> [4 * freqs].
// Azimuth is reduced to [0, 360) first.
Tensor camera_features(double azimuth_deg, double elevation_deg, std::size_t freqs);
// Camera MLP output for one camera -> [C].
Tensor embed_camera(const Model& model, double azimuth_deg, double elevation_deg);
// Sinusoidal timestep features -> [dim].
Tensor timestep_features(int t, std::size_t dim);

namespace ag {

// z_t [f, C_lat, H, W] -> epsilon prediction of the same shape.
Var denoise(Tape& tape, const ModelConfig& config, const VarMap& params, Var z_t, int t, const Conditioning& cond,
            const ViewRing& ring, bool mode_2d);

}  // namespace ag

Tensor denoise(const Model& model, const Tensor& z_t, int t, const Conditioning& cond, const ViewRing& ring,
               bool mode_2d = false);

// ---------------------------------------------------------------------------
// Training.

struct TrainingExample {
    Tensor z0;  // [f, C_lat, H, W]
    ViewRing ring;
    Conditioning cond;
    Conditioning null_cond;
};

// Random choices of one training step, drawn in a fixed order: t, eps,
// 2D-degrade coin, text-dropout coin.
struct TrainingDraw {
    int t = 1;
    Tensor eps;
    bool mode_2d = false;
    bool drop_text = false;
};

TrainingDraw draw_training_sample(std::mt19937_64& rng, const Shape& shape, const NoiseSchedule& sched, double p_2d,
                                  double p_drop);

// Predictor: (tape, z_t, draw) -> epsilon estimate on the tape.
using Predictor = std::function<Var(Tape&, Var z_t, const TrainingDraw& draw)>;

// ||eps - predictor(z_t)||^2 averaged over elements.
Var diffusion_loss(Tape& tape, const Tensor& z0, const TrainingDraw& draw, const NoiseSchedule& sched,
                   const Predictor& predictor);

struct StepOutcome {
    double loss = 0.0;
    ParamMap grads;
    std::vector<TrainingDraw> draws;
};

// Averages `samples` independent draws. Throws NumericError on a non-finite
// loss.
StepOutcome training_step(const Model& model, const TrainingExample& ex, const NoiseSchedule& sched,
                          std::mt19937_64& rng, std::size_t samples = 1);

class AdamW {
public:
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;

    void step(ParamMap& params, const ParamMap& grads, double lr);
    long steps() const noexcept { return t_; }

    // First and second moments, for checkpointing.
    ParamMap& first_moment() { return m_; }
    ParamMap& second_moment() { return v_; }
    const ParamMap& first_moment() const { return m_; }
    const ParamMap& second_moment() const { return v_; }
    void set_steps(long t) { t_ = t; }

private:
    long t_ = 0;
    ParamMap m_, v_;
};

}  // namespace mvd
