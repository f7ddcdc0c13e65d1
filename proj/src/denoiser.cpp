// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "mvdiff/denoiser.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "mvdiff/errors.hpp"
#include "mvdiff/latent_stack.hpp"

namespace mvd {

// ---------------------------------------------------------------------------
// Flags and config.

ModuleFlags ModuleFlags::parse(const std::string& spec) {
    ModuleFlags f{false, false, false, false};
    if (spec == "none" || spec == "2d") return f;
    if (spec == "full") return ModuleFlags{};
    std::stringstream ss(spec);
    std::string part;
    bool any = false;
    while (std::getline(ss, part, '+')) {
        if (part == "aa") {
            f.aa = true;
        } else if (part == "dr") {
            f.dr = true;
        } else if (part == "rg") {
            f.rg = true;
        } else if (part == "air") {
            f.air = true;
        } else {
            throw DomainError("unknown module '" + part + "' in stack '" + spec + "' (expected aa, dr, rg, air)");
        }
        any = true;
    }
    if (!any) throw DomainError("empty module stack");
    return f;
}

std::string ModuleFlags::label() const {
    std::string s;
    auto add = [&s](bool on, const char* name) {
        if (!on) return;
        if (!s.empty()) s += "+";
        s += name;
    };
    add(aa, "aa");
    add(dr, "dr");
    add(rg, "rg");
    add(air, "air");
    return s.empty() ? "none" : s;
}

void ModelConfig::validate() const {
    if (channels == 0 || blocks == 0 || latent_channels == 0 || text_dim == 0 || state_dim == 0 ||
        score_hidden == 0 || camera_freqs == 0) {
        throw DomainError("ModelConfig: sizes must be >= 1");
    }
    if (heads < 1 || channels % static_cast<std::size_t>(heads) != 0) {
        throw DomainError("ModelConfig: heads must divide channels");
    }
    if (views < 1) throw DomainError("ModelConfig: need at least one view");
    if (!(p_2d >= 0.0 && p_2d <= 1.0) || !(p_drop >= 0.0 && p_drop <= 1.0)) {
        throw DomainError("ModelConfig: probabilities must lie in [0, 1]");
    }
    if (!(guidance >= 0.0)) throw DomainError("ModelConfig: guidance scale must be >= 0");
    if (scan_chunk == 0) throw DomainError("ModelConfig: scan chunk must be >= 1");
    if (schedule != "linear" && schedule != "scaled-linear") {
        throw DomainError("ModelConfig: unknown noise schedule '" + schedule + "'");
    }
    if (modules.air) air.validate(latent_height, latent_width);
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"channels", c.channels},
                       {"blocks", c.blocks},
                       {"heads", c.heads},
                       {"latent_channels", c.latent_channels},
                       {"latent_height", c.latent_height},
                       {"latent_width", c.latent_width},
                       {"views", c.views},
                       {"text_dim", c.text_dim},
                       {"state_dim", c.state_dim},
                       {"score_hidden", c.score_hidden},
                       {"camera_freqs", c.camera_freqs},
                       {"air_query_stride", c.air.query_stride},
                       {"air_kv_stride", c.air.kv_stride},
                       {"modules", c.modules.label()},
                       {"scan_strategy", to_string(c.scan)},
                       {"scan_chunk", c.scan_chunk},
                       {"p_2d", c.p_2d},
                       {"p_drop", c.p_drop},
                       {"guidance", c.guidance},
                       {"schedule", c.schedule}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    j.at("channels").get_to(c.channels);
    j.at("blocks").get_to(c.blocks);
    j.at("heads").get_to(c.heads);
    j.at("latent_channels").get_to(c.latent_channels);
    j.at("latent_height").get_to(c.latent_height);
    j.at("latent_width").get_to(c.latent_width);
    j.at("views").get_to(c.views);
    j.at("text_dim").get_to(c.text_dim);
    j.at("state_dim").get_to(c.state_dim);
    j.at("score_hidden").get_to(c.score_hidden);
    j.at("camera_freqs").get_to(c.camera_freqs);
    j.at("air_query_stride").get_to(c.air.query_stride);
    j.at("air_kv_stride").get_to(c.air.kv_stride);
    c.modules = ModuleFlags::parse(j.at("modules").get<std::string>());
    c.scan = parse_scan_strategy(j.at("scan_strategy").get<std::string>());
    j.at("scan_chunk").get_to(c.scan_chunk);
    j.at("p_2d").get_to(c.p_2d);
    j.at("p_drop").get_to(c.p_drop);
    j.at("guidance").get_to(c.guidance);
    j.at("schedule").get_to(c.schedule);
}

// ---------------------------------------------------------------------------
// Parameters.

namespace {

std::string block_prefix(std::size_t b) { return "block" + std::to_string(b) + "."; }

void fill_normal(Tensor& t, std::mt19937_64& rng, double std) {
    std::normal_distribution<double> n(0.0, std);
    for (auto& v : t.data()) v = n(rng);
}

double inv_sqrt(std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); }

}  // namespace

std::map<std::string, Shape> param_shapes(const ModelConfig& cfg) {
    const std::size_t c = cfg.channels, e = cfg.text_dim, lc = cfg.latent_channels, n = cfg.state_dim;
    std::map<std::string, Shape> s;
    s["stem.w"] = {9 * lc, c};
    s["stem.b"] = {c};
    s["pos"] = {cfg.latent_height * cfg.latent_width, c};
    s["time.w1"] = {c, c};
    s["time.b1"] = {c};
    s["time.w2"] = {c, c};
    s["time.b2"] = {c};
    s["cam.w1"] = {4 * cfg.camera_freqs, c};
    s["cam.b1"] = {c};
    s["cam.w2"] = {c, c};
    s["cam.b2"] = {c};
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        const std::string p = block_prefix(b);
        s[p + "res.w1"] = {9 * c, c};
        s[p + "res.b1"] = {c};
        s[p + "res.emb_w"] = {c, c};
        s[p + "res.emb_b"] = {c};
        s[p + "res.w2"] = {9 * c, c};
        s[p + "res.b2"] = {c};
        s[p + "xattn.wq"] = {c, c};
        s[p + "xattn.wk"] = {e, c};
        s[p + "xattn.wv"] = {e, c};
        s[p + "xattn.wo"] = {c, c};
        for (const char* op : {"aa", "dr", "air"}) {
            const bool on = (op[0] == 'a' && op[1] == 'a') ? cfg.modules.aa : (op[0] == 'd' ? cfg.modules.dr : cfg.modules.air);
            if (!on) continue;
            for (const char* w : {"wq", "wk", "wv", "wo"}) s[p + op + "." + w] = {c, c};
        }
        if (cfg.modules.air) {
            s[p + "score.w1"] = {c + e, cfg.score_hidden};
            s[p + "score.b1"] = {cfg.score_hidden};
            s[p + "score.w2"] = {cfg.score_hidden, 1};
            s[p + "score.b2"] = {1};
        }
        if (cfg.modules.rg) {
            s[p + "rg.a_log"] = {c, n};
            s[p + "rg.w_delta"] = {c, c};
            s[p + "rg.b_delta"] = {c};
            s[p + "rg.w_b"] = {c, n};
            s[p + "rg.w_c"] = {c, n};
        }
    }
    s["head.w"] = {9 * c, lc};
    s["head.b"] = {lc};
    return s;
}

Model Model::init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Model m;
    m.config = cfg;
    const auto shapes = param_shapes(cfg);
    for (const auto& [name, shape] : shapes) m.params.emplace(name, Tensor(shape));

    const std::size_t c = cfg.channels, e = cfg.text_dim, lc = cfg.latent_channels;
    std::mt19937_64 rng(seed);
    fill_normal(m.params["stem.w"], rng, inv_sqrt(9 * lc));
    fill_normal(m.params["pos"], rng, 0.1);
    fill_normal(m.params["time.w1"], rng, inv_sqrt(c));
    fill_normal(m.params["time.w2"], rng, inv_sqrt(c));
    fill_normal(m.params["cam.w1"], rng, inv_sqrt(4 * cfg.camera_freqs));
    fill_normal(m.params["cam.w2"], rng, inv_sqrt(c));
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        const std::string p = block_prefix(b);
        fill_normal(m.params[p + "res.w1"], rng, inv_sqrt(9 * c));
        fill_normal(m.params[p + "res.emb_w"], rng, inv_sqrt(c));
        fill_normal(m.params[p + "res.w2"], rng, 0.1 * inv_sqrt(9 * c));
        fill_normal(m.params[p + "xattn.wq"], rng, inv_sqrt(c));
        fill_normal(m.params[p + "xattn.wk"], rng, inv_sqrt(e));
        fill_normal(m.params[p + "xattn.wv"], rng, inv_sqrt(e));
        fill_normal(m.params[p + "xattn.wo"], rng, 0.1 * inv_sqrt(c));

        // The cross-view projections all start from one shared draw.
        AttentionParams shared = AttentionParams::random(c, rng, cfg.heads);
        for (auto& v : shared.wo.data()) v *= 0.1;
        for (const char* op : {"aa.", "dr.", "air."}) {
            if (!m.params.count(p + op + "wq")) continue;
            m.params[p + op + "wq"] = shared.wq;
            m.params[p + op + "wk"] = shared.wk;
            m.params[p + op + "wv"] = shared.wv;
            m.params[p + op + "wo"] = shared.wo;
        }
        if (cfg.modules.air) {
            ScoreMapper sm = ScoreMapper::random(c, e, cfg.score_hidden, rng);
            m.params[p + "score.w1"] = sm.w1;
            m.params[p + "score.b1"] = sm.b1;
            m.params[p + "score.w2"] = sm.w2;
            m.params[p + "score.b2"] = sm.b2;
        }
        if (cfg.modules.rg) {
            SsmParams sp = SsmParams::random(c, cfg.state_dim, rng);
            Tensor a_log(sp.a.shape());
            for (std::size_t i = 0; i < a_log.size(); ++i) a_log[i] = std::log(-sp.a[i]);
            for (auto& v : sp.w_c.data()) v *= 0.1;
            m.params[p + "rg.a_log"] = a_log;
            m.params[p + "rg.w_delta"] = sp.w_delta;
            m.params[p + "rg.b_delta"] = sp.b_delta;
            m.params[p + "rg.w_b"] = sp.w_b;
            m.params[p + "rg.w_c"] = sp.w_c;
        }
    }
    fill_normal(m.params["head.w"], rng, 0.1 * inv_sqrt(9 * c));
    return m;
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params) n += t.size();
    return n;
}

VarMap bind_params(Tape& tape, const ParamMap& params, bool trainable) {
    VarMap out;
    for (const auto& [name, t] : params) out.emplace(name, trainable ? tape.variable(t) : tape.constant(t));
    return out;
}

// ---------------------------------------------------------------------------
// Embeddings.

Tensor camera_features(double azimuth_deg, double elevation_deg, std::size_t freqs) {
    double az = std::fmod(azimuth_deg, 360.0);
    if (az < 0.0) az += 360.0;
    const double a = az * std::numbers::pi / 180.0;
    const double e = elevation_deg * std::numbers::pi / 180.0;
    Tensor f({4 * freqs});
    for (std::size_t k = 0; k < freqs; ++k) {
        const double m = static_cast<double>(k + 1);
        f[4 * k + 0] = std::sin(m * a);
        f[4 * k + 1] = std::cos(m * a);
        f[4 * k + 2] = std::sin(m * e);
        f[4 * k + 3] = std::cos(m * e);
    }
    return f;
}

Tensor timestep_features(int t, std::size_t dim) {
    Tensor f({dim});
    const std::size_t half = dim / 2;
    for (std::size_t k = 0; k < half; ++k) {
        const double w = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
        f[k] = std::sin(t * w);
        f[half + k] = std::cos(t * w);
    }
    return f;
}

namespace {

const Var& param(const VarMap& p, const std::string& name) {
    auto it = p.find(name);
    if (it == p.end()) throw DimensionError("denoiser: missing parameter '" + name + "'");
    return it->second;
}

Var mlp2(const VarMap& p, const std::string& prefix, Var x) {
    Var h = ag::silu(ag::add_bias(ag::matmul(x, param(p, prefix + ".w1")), param(p, prefix + ".b1")));
    return ag::add_bias(ag::matmul(h, param(p, prefix + ".w2")), param(p, prefix + ".b2"));
}

// tokens [f, H*W, Cin] -> patches [f, H*W, 9*Cin], zero padded.
IndexPtr im2col_index(std::size_t f, std::size_t h, std::size_t w, std::size_t cin) {
    const std::string key = "im2col/" + std::to_string(f) + "/" + std::to_string(h) + "/" + std::to_string(w) + "/" +
                            std::to_string(cin);
    return cached_index(key, [=] {
        IndexList idx(f * h * w * 9 * cin, -1);
        for (std::size_t v = 0; v < f; ++v)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    const std::size_t row = (v * h + y) * w + x;
                    for (std::size_t k = 0; k < 9; ++k) {
                        const long yy = static_cast<long>(y) + static_cast<long>(k / 3) - 1;
                        const long xx = static_cast<long>(x) + static_cast<long>(k % 3) - 1;
                        if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
                        const std::size_t src = (v * h + static_cast<std::size_t>(yy)) * w + static_cast<std::size_t>(xx);
                        for (std::size_t ch = 0; ch < cin; ++ch)
                            idx[(row * 9 + k) * cin + ch] = static_cast<std::int64_t>(src * cin + ch);
                    }
                }
        return idx;
    });
}

Var conv3x3(Var tokens, std::size_t h, std::size_t w, Var weight, Var bias) {
    const Shape& s = tokens.shape();
    Var patches = ag::gather(tokens, im2col_index(s[0], h, w, s[2]), {s[0], s[1], 9 * s[2]});
    return ag::add_bias(ag::matmul(patches, weight), bias);
}

// Row broadcast of x[n] (or [1, n]) to [rows, n].
Var repeat_vector(Var x, std::size_t rows) {
    const std::size_t n = x.value().size();
    auto idx = cached_index("repeat/" + std::to_string(rows) + "/" + std::to_string(n), [=] {
        IndexList out(rows * n);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j) out[r * n + j] = static_cast<std::int64_t>(j);
        return out;
    });
    return ag::gather(x, idx, {rows, n});
}

}  // namespace

Tensor embed_camera(const Model& model, double azimuth_deg, double elevation_deg) {
    Tape tape;
    VarMap p = bind_params(tape, model.params, false);
    const std::size_t freqs = model.config.camera_freqs;
    Var f = tape.constant(camera_features(azimuth_deg, elevation_deg, freqs).reshaped({1, 4 * freqs}));
    return mlp2(p, "cam", f).value().reshaped({model.config.channels});
}

namespace ag {

Var denoise(Tape& tape, const ModelConfig& cfg, const VarMap& p, Var z_t, int t, const Conditioning& cond,
            const ViewRing& ring, bool mode_2d) {
    const Shape& zs = z_t.shape();
    if (zs.size() != 4 || zs[1] != cfg.latent_channels || zs[2] != cfg.latent_height || zs[3] != cfg.latent_width) {
        throw DimensionError("denoise: latent " + shape_str(zs) + " does not match config");
    }
    const std::size_t f = zs[0], h = zs[2], w = zs[3], n = h * w, c = cfg.channels;
    if (static_cast<std::size_t>(ring.views) != f) {
        throw DimensionError("denoise: ring has " + std::to_string(ring.views) + " views, latent has " +
                             std::to_string(f));
    }
    if (cond.tokens.rank() != 2 || cond.tokens.dim(1) != cfg.text_dim || cond.pooled.shape() != Shape{cfg.text_dim}) {
        throw DimensionError("denoise: text embedding does not match text_dim " + std::to_string(cfg.text_dim));
    }
    const ViewRing latent_ring = ring.with_resolution(static_cast<int>(w), static_cast<int>(h));

    // Embeddings: one vector per view.
    Var temb = mlp2(p, "time", tape.constant(timestep_features(t, c).reshaped({1, c})));
    Tensor cam({f, 4 * cfg.camera_freqs});
    for (std::size_t v = 0; v < f; ++v) {
        const Tensor cf = camera_features(ring.azimuths_deg[v], ring.elevation_deg, cfg.camera_freqs);
        for (std::size_t k = 0; k < cf.size(); ++k) cam[v * cf.size() + k] = cf[k];
    }
    Var emb = ag::silu(ag::add(mlp2(p, "cam", tape.constant(cam)), repeat_vector(temb, f)));  // [f, C]

    Var x = conv3x3(to_tokens(z_t), h, w, param(p, "stem.w"), param(p, "stem.b"));  // [f, n, C]
    x = add(x, reshape(repeat_vector(param(p, "pos"), f), {f, n, c}));

    const Var text_tokens = tape.constant(cond.tokens);
    const Var text_pooled = tape.constant(cond.pooled);
    const std::size_t nt = cond.tokens.dim(0), e = cfg.text_dim;
    Var text_kv = reshape(repeat_vector(text_tokens, f), {f, nt, e});

    ScanOrder order;
    if (cfg.modules.rg && !mode_2d) order = ScanOrder::build(f, h, w, cfg.scan);
    ScanOptions scan_opt;
    scan_opt.chunk = cfg.scan_chunk;

    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        const std::string pre = "block" + std::to_string(b) + ".";
        auto attn = [&](const std::string& op) {
            return AttentionVars{param(p, pre + op + ".wq"), param(p, pre + op + ".wk"), param(p, pre + op + ".wv"),
                                 param(p, pre + op + ".wo"), cfg.heads};
        };

        // Residual block with embedding injection. Every sublayer reads a
        // per-token normalised copy of the stream and adds its output back.
        Var r = conv3x3(silu(layer_norm(x)), h, w, param(p, pre + "res.w1"), param(p, pre + "res.b1"));
        Var inj = add_bias(matmul(emb, param(p, pre + "res.emb_w")), param(p, pre + "res.emb_b"));
        r = add(r, broadcast_rows(inj, n));
        r = conv3x3(silu(r), h, w, param(p, pre + "res.w2"), param(p, pre + "res.b2"));
        x = add(x, r);

        x = add(x, multi_head_attention(layer_norm(x), text_kv, attn("xattn")));

        if (mode_2d) continue;
        if (cfg.modules.aa) x = add(x, adjacent_attention(layer_norm(x), attn("aa")));
        if (cfg.modules.dr) x = add(x, trajectory_attention(layer_norm(x), latent_ring, attn("dr")));
        if (cfg.modules.rg) {
            SsmVars s{scale(exp(param(p, pre + "rg.a_log")), -1.0), param(p, pre + "rg.w_delta"),
                      param(p, pre + "rg.b_delta"), param(p, pre + "rg.w_b"), param(p, pre + "rg.w_c")};
            const Var u = layer_norm(x);
            x = add(x, sub(rapid_glance(u, order, s, scan_opt), u));
        }
        if (cfg.modules.air) {
            ScoreMapperVars sm{param(p, pre + "score.w1"), param(p, pre + "score.b1"), param(p, pre + "score.w2"),
                               param(p, pre + "score.b2")};
            const Var u = layer_norm(x);
            Var scores = score_map(u, text_pooled, sm);
            x = add(x, air_attention(u, scores, cfg.air, attn("air"), h, w));
        }
    }

    Var out = conv3x3(silu(layer_norm(x)), h, w, param(p, "head.w"), param(p, "head.b"));  // [f, n, C_lat]
    return from_tokens(out, h, w);
}

}  // namespace ag

Tensor denoise(const Model& model, const Tensor& z_t, int t, const Conditioning& cond, const ViewRing& ring,
               bool mode_2d) {
    Tape tape;
    VarMap p = bind_params(tape, model.params, false);
    return ag::denoise(tape, model.config, p, tape.constant(z_t), t, cond, ring, mode_2d).value();
}

// ---------------------------------------------------------------------------
// Training.

TrainingDraw draw_training_sample(std::mt19937_64& rng, const Shape& shape, const NoiseSchedule& sched, double p_2d,
                                  double p_drop) {
    TrainingDraw d;
    std::uniform_int_distribution<int> ut(1, sched.steps);
    d.t = ut(rng);
    std::normal_distribution<double> nd(0.0, 1.0);
    d.eps = Tensor(shape);
    for (auto& v : d.eps.data()) v = nd(rng);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    d.mode_2d = u(rng) < p_2d;
    d.drop_text = u(rng) < p_drop;
    return d;
}

Var diffusion_loss(Tape& tape, const Tensor& z0, const TrainingDraw& draw, const NoiseSchedule& sched,
                   const Predictor& predictor) {
    Var z_t = tape.constant(add_noise(z0, draw.t, draw.eps, sched));
    Var pred = predictor(tape, z_t, draw);
    return ag::mse(pred, tape.constant(draw.eps));
}

StepOutcome training_step(const Model& model, const TrainingExample& ex, const NoiseSchedule& sched,
                          std::mt19937_64& rng, std::size_t samples) {
    if (samples == 0) throw DomainError("training_step: need at least one sample");
    Tape tape;
    VarMap p = bind_params(tape, model.params, true);
    StepOutcome out;
    Var total;
    for (std::size_t k = 0; k < samples; ++k) {
        TrainingDraw d = draw_training_sample(rng, ex.z0.shape(), sched, model.config.p_2d, model.config.p_drop);
        auto predictor = [&](Tape& tp, Var z_t, const TrainingDraw& dr) {
            return ag::denoise(tp, model.config, p, z_t, dr.t, dr.drop_text ? ex.null_cond : ex.cond, ex.ring,
                               dr.mode_2d);
        };
        Var l = diffusion_loss(tape, ex.z0, d, sched, predictor);
        total = k == 0 ? l : ag::add(total, l);
        out.draws.push_back(std::move(d));
    }
    if (samples > 1) total = ag::scale(total, 1.0 / static_cast<double>(samples));
    out.loss = total.value()[0];
    if (!std::isfinite(out.loss)) {
        std::string ts;
        for (const auto& d : out.draws) ts += " " + std::to_string(d.t);
        throw NumericError("training_step: non-finite loss (t =" + ts + ")");
    }
    tape.backward(total);
    for (const auto& [name, v] : p) out.grads.emplace(name, tape.grad(v));
    return out;
}

void AdamW::step(ParamMap& params, const ParamMap& grads, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (auto& [name, w] : params) {
        auto g = grads.find(name);
        if (g == grads.end()) continue;
        if (g->second.shape() != w.shape()) throw DimensionError("AdamW: gradient shape mismatch for " + name);
        Tensor& m = m_.try_emplace(name, w.shape()).first->second;
        Tensor& v = v_.try_emplace(name, w.shape()).first->second;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = g->second[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            const double mh = m[i] / c1, vh = v[i] / c2;
            w[i] -= lr * (mh / (std::sqrt(vh) + eps) + weight_decay * w[i]);
        }
    }
}

}  // namespace mvd
