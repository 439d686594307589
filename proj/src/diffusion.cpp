#include "ablate/diffusion.hpp"

#include <cmath>
#include <stdexcept>

#include "ablate/io.hpp"

namespace ablate {

using json = nlohmann::ordered_json;

// --- schedule ----------------------------------------------------------

NoiseSchedule make_schedule(int T, double beta_min, double beta_max) {
    if (T < 1) throw std::invalid_argument("make_schedule: T must be >= 1");
    if (!(beta_min > 0.0) || beta_min > beta_max || !(beta_max < 1.0))
        throw std::invalid_argument("make_schedule: need 0 < beta_min <= beta_max < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta.assign(static_cast<size_t>(T) + 1, 0.0);
    s.alpha_bar.assign(static_cast<size_t>(T) + 1, 1.0);
    for (int t = 1; t <= T; ++t) {
        double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / (T - 1);
        s.beta[static_cast<size_t>(t)] = beta_min + (beta_max - beta_min) * frac;
        s.alpha_bar[static_cast<size_t>(t)] =
            s.alpha_bar[static_cast<size_t>(t - 1)] * (1.0 - s.beta[static_cast<size_t>(t)]);
    }
    return s;
}

Point forward_noise(const Point& x0, int t, const Point& eps, const NoiseSchedule& s) {
    if (t < 0 || t > s.T) throw std::invalid_argument("forward_noise: t out of range");
    double ab = s.alpha_bar[static_cast<size_t>(t)];
    double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
    return {sa * x0[0] + sn * eps[0], sa * x0[1] + sn * eps[1]};
}

json NoiseSchedule::to_json() const {
    return json{{"T", T}, {"alpha_bar", alpha_bar}, {"beta", beta}};
}

NoiseSchedule NoiseSchedule::from_json(const json& j) {
    NoiseSchedule s;
    s.T = j.at("T").get<int>();
    s.alpha_bar = j.at("alpha_bar").get<std::vector<double>>();
    s.beta = j.at("beta").get<std::vector<double>>();
    if (s.alpha_bar.size() != static_cast<size_t>(s.T) + 1 || s.beta.size() != s.alpha_bar.size())
        throw std::runtime_error("NoiseSchedule: inconsistent array lengths");
    return s;
}

// --- denoiser ----------------------------------------------------------

json DenoiserConfig::to_json() const {
    return json{{"vocab_size", vocab_size},
                {"embed_dim", embed_dim},
                {"time_dim", time_dim},
                {"hidden", hidden},
                {"prompt_len", prompt_len}};
}

DenoiserConfig DenoiserConfig::from_json(const json& j) {
    DenoiserConfig c;
    c.vocab_size = j.at("vocab_size").get<size_t>();
    c.embed_dim = j.at("embed_dim").get<size_t>();
    c.time_dim = j.at("time_dim").get<size_t>();
    c.hidden = j.at("hidden").get<size_t>();
    c.prompt_len = j.at("prompt_len").get<size_t>();
    return c;
}

ParamSet init_denoiser(const DenoiserConfig& cfg, RngStream& rng) {
    if (cfg.vocab_size == 0) throw std::invalid_argument("init_denoiser: vocab_size not set");
    auto randn = [&rng](std::vector<size_t> shape, double std) {
        Tensor t = Tensor::zeros(std::move(shape));
        for (double& v : t.data) v = std * rng.normal();
        return t;
    };
    size_t e = cfg.embed_dim, h = cfg.hidden, td = cfg.time_dim;
    ParamSet p;

    // The embedding table plays the role of a frozen text encoder: content
    // tokens (everything past the pad + template block) get orthonormal
    // directions so that editing one concept's keys/values cannot leak into
    // another's, and template/pad tokens live in the orthogonal complement.
    size_t content_start = 1 + kMaxTemplatePool;
    size_t n_content = cfg.vocab_size > content_start ? cfg.vocab_size - content_start : 0;
    if (n_content > e)
        throw std::invalid_argument("init_denoiser: more content tokens than embedding dims");
    Tensor basis = Tensor::zeros({e, e});
    if ((e & (e - 1)) == 0) {
        // Hadamard rows: orthogonal and flat (+-1 entries). Flatness matters
        // because Adam's per-coordinate normalization turns a rank-one gradient
        // u * e_tok^T into roughly lr * sign(u) * sign(e_tok)^T, and for a
        // Hadamard row sign(e_tok) is proportional to e_tok itself, so such a
        // step cannot move any other content token's key or value.
        basis.at(0, 0) = 1.0;
        for (size_t n = 1; n < e; n *= 2)
            for (size_t r = 0; r < n; ++r)
                for (size_t c = 0; c < n; ++c) {
                    double v = basis.at(r, c);
                    basis.at(r, c + n) = v;
                    basis.at(r + n, c) = v;
                    basis.at(r + n, c + n) = -v;
                }
        double inv = 1.0 / std::sqrt(static_cast<double>(e));
        for (double& v : basis.data) v *= inv;
    } else {
        for (double& v : basis.data) v = rng.normal();
        for (size_t r = 0; r < e; ++r) {  // Gram-Schmidt rows
            for (size_t s = 0; s < r; ++s) {
                double dot = 0.0;
                for (size_t k = 0; k < e; ++k) dot += basis.at(r, k) * basis.at(s, k);
                for (size_t k = 0; k < e; ++k) basis.at(r, k) -= dot * basis.at(s, k);
            }
            double norm = 0.0;
            for (size_t k = 0; k < e; ++k) norm += basis.at(r, k) * basis.at(r, k);
            norm = std::sqrt(norm);
            if (norm < 1e-8) throw std::runtime_error("init_denoiser: degenerate basis draw");
            for (size_t k = 0; k < e; ++k) basis.at(r, k) /= norm;
        }
    }
    Tensor emb = Tensor::zeros({cfg.vocab_size, e});
    size_t comp = e - n_content;  // complement dims left for template/pad tokens
    for (size_t tok = 0; tok < cfg.vocab_size; ++tok) {
        if (tok >= content_start) {
            size_t row = comp + (tok - content_start);
            for (size_t k = 0; k < e; ++k) emb.at(tok, k) = 2.0 * basis.at(row, k);
        } else if (tok > 0 && comp > 0) {
            // templates carry little content; a small norm limits how much any
            // later wk/wv edit can leak through these shared tokens. Pad (id 0)
            // stays zero and is inert under every projection.
            for (size_t r = 0; r < comp; ++r) {
                double c = 0.15 * rng.normal();
                for (size_t k = 0; k < e; ++k) emb.at(tok, k) += c * basis.at(r, k);
            }
        }
    }
    p["tok_embed"] = std::move(emb);
    p["time_w"] = randn({td, td}, 1.0 / std::sqrt(static_cast<double>(td)));
    p["time_b"] = Tensor::zeros({td});
    p["in_w"] = randn({2 + td, h}, 1.0 / std::sqrt(static_cast<double>(2 + td)));
    p["in_b"] = Tensor::zeros({h});
    p["wq"] = randn({h, e}, 1.0 / std::sqrt(static_cast<double>(h)));
    p["wk"] = randn({e, e}, 1.0 / std::sqrt(static_cast<double>(e)));
    p["wv"] = randn({e, e}, 1.0 / std::sqrt(static_cast<double>(e)));
    p["wo"] = randn({e, h}, 1.0 / std::sqrt(static_cast<double>(e)));
    p["mlp_w1"] = randn({h, h}, 1.0 / std::sqrt(static_cast<double>(h)));
    p["mlp_b1"] = Tensor::zeros({h});
    p["mlp_w2"] = randn({h, 2}, 1.0 / std::sqrt(static_cast<double>(h)));
    p["mlp_b2"] = Tensor::zeros({2});
    return p;
}

namespace {

Tensor time_features(const std::vector<int>& t, size_t dim, int T) {
    size_t n = t.size();
    Tensor out = Tensor::zeros({n, dim});
    for (size_t i = 0; i < n; ++i) {
        (void)T;
        double tv = static_cast<double>(t[i]);
        for (size_t k = 0; k < dim / 2; ++k) {
            double freq = std::pow(10000.0, -static_cast<double>(k) / (static_cast<double>(dim) / 2.0));
            out.data[i * dim + 2 * k] = std::sin(tv * freq);
            out.data[i * dim + 2 * k + 1] = std::cos(tv * freq);
        }
    }
    return out;
}

struct ForwardOut {
    Var pred;
    Var attn;
};

ForwardOut denoise_forward(Tape& tape, const std::map<std::string, Var>& p,
                           const std::vector<Point>& x, const std::vector<Prompt>& prompts,
                           const std::vector<int>& t, const NoiseSchedule& sched,
                           const DenoiserConfig& cfg) {
    size_t n = x.size();
    if (prompts.size() != n || t.size() != n)
        throw std::invalid_argument("denoise: batch row counts differ");
    for (int ti : t)
        if (ti < 0 || ti > sched.T) throw std::invalid_argument("denoise: timestep out of range");
    size_t L = cfg.prompt_len;

    Tensor xin = Tensor::zeros({n, 2});
    for (size_t i = 0; i < n; ++i) {
        xin.data[2 * i] = x[i][0];
        xin.data[2 * i + 1] = x[i][1];
    }
    Var xv = tape.leaf(std::move(xin));
    Var tf = tape.leaf(time_features(t, cfg.time_dim, sched.T));

    Var temb = tape.tanh_op(tape.add_bias(tape.matmul(tf, p.at("time_w")), p.at("time_b")));
    Var h0 = tape.tanh_op(
        tape.add_bias(tape.matmul(tape.concat_cols(xv, temb), p.at("in_w")), p.at("in_b")));

    std::vector<size_t> flat_ids;
    flat_ids.reserve(n * L);
    for (const Prompt& pr : prompts)
        for (size_t j = 0; j < L; ++j) flat_ids.push_back(static_cast<size_t>(pr.tok[j]));
    Var emb = tape.gather_rows(p.at("tok_embed"), std::move(flat_ids));  // (nL x e)

    Var q = tape.matmul(h0, p.at("wq"));    // (n x e)
    Var k = tape.matmul(emb, p.at("wk"));   // (nL x e)
    Var v = tape.matmul(emb, p.at("wv"));   // (nL x e)
    Var scores = tape.scale(tape.row_block_dot(q, k, L),
                            1.0 / std::sqrt(static_cast<double>(cfg.embed_dim)));
    Var attn = tape.softmax_rows(scores);         // (n x L)
    Var ctx = tape.row_block_mix(attn, v, L);     // (n x e)
    Var h1 = tape.add(h0, tape.matmul(ctx, p.at("wo")));

    Var h2 = tape.tanh_op(tape.add_bias(tape.matmul(h1, p.at("mlp_w1")), p.at("mlp_b1")));
    Var out = tape.add_bias(tape.matmul(h2, p.at("mlp_w2")), p.at("mlp_b2"));
    return {out, attn};
}

std::map<std::string, Var> leaf_params(Tape& tape, const ParamSet& params) {
    std::map<std::string, Var> vars;
    for (const auto& [name, t] : params) vars.emplace(name, tape.leaf(t));
    return vars;
}

}  // namespace

Var denoise_batch(Tape& tape, const std::map<std::string, Var>& params,
                  const std::vector<Point>& x, const std::vector<Prompt>& prompts,
                  const std::vector<int>& t, const NoiseSchedule& sched,
                  const DenoiserConfig& cfg) {
    return denoise_forward(tape, params, x, prompts, t, sched, cfg).pred;
}

Tensor attention_weights(const ParamSet& params, const std::vector<Point>& x,
                         const std::vector<Prompt>& prompts, const std::vector<int>& t,
                         const NoiseSchedule& sched, const DenoiserConfig& cfg) {
    Tape tape;
    auto vars = leaf_params(tape, params);
    return denoise_forward(tape, vars, x, prompts, t, sched, cfg).attn.val();
}

std::vector<Point> denoise(const ParamSet& params, const std::vector<Point>& x,
                           const std::vector<Prompt>& prompts, const std::vector<int>& t,
                           const NoiseSchedule& sched, const DenoiserConfig& cfg) {
    Tape tape;
    auto vars = leaf_params(tape, params);
    const Tensor& out = denoise_batch(tape, vars, x, prompts, t, sched, cfg).val();
    std::vector<Point> res(x.size());
    for (size_t i = 0; i < x.size(); ++i) res[i] = {out.data[2 * i], out.data[2 * i + 1]};
    return res;
}

Point denoise(const ParamSet& params, const Point& x, const Prompt& prompt, int t,
              const NoiseSchedule& sched, const DenoiserConfig& cfg) {
    return denoise(params, std::vector<Point>{x}, {prompt}, {t}, sched, cfg)[0];
}

// --- loss --------------------------------------------------------------

void Batch::validate() const {
    if (x.empty()) throw std::invalid_argument("batch is empty");
    if (prompts.size() != x.size())
        throw std::invalid_argument("batch prompt count does not match point count");
    if (!target_prompts.empty() && target_prompts.size() != x.size())
        throw std::invalid_argument("batch target prompt count does not match point count");
}

Var diffusion_loss(Tape& tape, const std::map<std::string, Var>& params, const Batch& batch,
                   const NoiseSchedule& sched, const DenoiserConfig& cfg, RngStream& rng) {
    batch.validate();
    size_t n = batch.size();
    std::vector<Point> xt(n);
    std::vector<int> t(n);
    Tensor eps = Tensor::zeros({n, 2});
    for (size_t i = 0; i < n; ++i) {
        t[i] = 1 + static_cast<int>(rng.uniform_int(static_cast<size_t>(sched.T)));
        Point e{rng.normal(), rng.normal()};
        eps.data[2 * i] = e[0];
        eps.data[2 * i + 1] = e[1];
        xt[i] = forward_noise(batch.x[i], t[i], e, sched);
    }
    Var pred = denoise_batch(tape, params, xt, batch.prompts, t, sched, cfg);
    Var target = tape.leaf(std::move(eps));
    return tape.scale(tape.sum_sq(tape.sub(pred, target)), 1.0 / static_cast<double>(n));
}

double diffusion_loss_value(const ParamSet& params, const Batch& batch, const NoiseSchedule& sched,
                            const DenoiserConfig& cfg, RngStream& rng) {
    Tape tape;
    auto vars = leaf_params(tape, params);
    return diffusion_loss(tape, vars, batch, sched, cfg, rng).val().data[0];
}

// --- sampling ----------------------------------------------------------

std::vector<Point> sample_ancestral(const ParamSet& params, const std::vector<Prompt>& prompts,
                                    int steps, const NoiseSchedule& sched,
                                    const DenoiserConfig& cfg, RngStream& rng) {
    if (steps < 1) throw std::invalid_argument("sample_ancestral: steps must be >= 1");
    // more steps than the schedule has cannot refine further; clamp to the
    // full chain
    steps = std::min(steps, sched.T);
    size_t n = prompts.size();
    std::vector<int> stride(static_cast<size_t>(steps) + 1);
    for (int k = 0; k <= steps; ++k)
        stride[static_cast<size_t>(k)] =
            static_cast<int>(std::lround(static_cast<double>(k) * sched.T / steps));

    std::vector<Point> x(n);
    for (size_t i = 0; i < n; ++i) x[i] = {rng.normal(), rng.normal()};

    std::vector<int> t_row(n);
    for (int k = steps; k >= 1; --k) {
        int t_cur = stride[static_cast<size_t>(k)];
        int t_prev = stride[static_cast<size_t>(k - 1)];
        double a_cur = sched.alpha_bar[static_cast<size_t>(t_cur)];
        double a_prev = sched.alpha_bar[static_cast<size_t>(t_prev)];
        double beta_eff = 1.0 - a_cur / a_prev;
        double post_var = t_prev > 0 ? beta_eff * (1.0 - a_prev) / (1.0 - a_cur) : 0.0;
        double post_std = std::sqrt(post_var);

        std::fill(t_row.begin(), t_row.end(), t_cur);
        std::vector<Point> eps_hat = denoise(params, x, prompts, t_row, sched, cfg);
        for (size_t i = 0; i < n; ++i) {
            for (int d = 0; d < 2; ++d) {
                double mu = (x[i][static_cast<size_t>(d)] -
                             beta_eff / std::sqrt(1.0 - a_cur) * eps_hat[i][static_cast<size_t>(d)]) /
                            std::sqrt(1.0 - beta_eff);
                double z = t_prev > 0 ? rng.normal() : 0.0;
                x[i][static_cast<size_t>(d)] = mu + post_std * z;
            }
            if (std::abs(x[i][0]) > kDivergenceGuard || std::abs(x[i][1]) > kDivergenceGuard)
                throw std::runtime_error("sample_ancestral: divergence at row " + std::to_string(i));
        }
    }
    return x;
}

Point sample_ancestral(const ParamSet& params, const Prompt& prompt, int steps,
                       const NoiseSchedule& sched, const DenoiserConfig& cfg, RngStream& rng) {
    return sample_ancestral(params, std::vector<Prompt>{prompt}, steps, sched, cfg, rng)[0];
}

// --- pretraining -------------------------------------------------------

json PretrainConfig::to_json() const {
    return json{{"steps", steps},
                {"batch", batch},
                {"lr", lr},
                {"memorize", memorize},
                {"mem_oversample", mem_oversample},
                {"schedule_T", schedule_T},
                {"beta_min", beta_min},
                {"beta_max", beta_max},
                {"arch", arch.to_json()}};
}

PretrainConfig PretrainConfig::from_json(const json& j) {
    PretrainConfig c;
    c.steps = j.at("steps").get<long>();
    c.batch = j.at("batch").get<size_t>();
    c.lr = j.at("lr").get<double>();
    c.memorize = j.at("memorize").get<bool>();
    c.mem_oversample = j.at("mem_oversample").get<double>();
    c.schedule_T = j.at("schedule_T").get<int>();
    c.beta_min = j.at("beta_min").get<double>();
    c.beta_max = j.at("beta_max").get<double>();
    c.arch = DenoiserConfig::from_json(j.at("arch"));
    return c;
}

json Checkpoint::to_json() const {
    json params_j;
    for (const auto& [name, t] : params)
        params_j[name] = json{{"shape", t.shape}, {"data", t.data}};
    return json{{"format", "ablate-ckpt/1"},
                {"config", config},
                {"arch", arch.to_json()},
                {"schedule", schedule.to_json()},
                {"params", params_j},
                {"sha256-of-config", config_hash}};
}

Checkpoint Checkpoint::from_json(const json& j) {
    if (!j.contains("format") || j.at("format").get<std::string>() != "ablate-ckpt/1")
        throw std::runtime_error("checkpoint: unknown format string");
    Checkpoint c;
    c.config = j.at("config");
    c.arch = DenoiserConfig::from_json(j.at("arch"));
    c.schedule = NoiseSchedule::from_json(j.at("schedule"));
    c.config_hash = j.at("sha256-of-config").get<std::string>();
    for (const auto& [name, pj] : j.at("params").items()) {
        c.params[name] = Tensor(pj.at("shape").get<std::vector<size_t>>(),
                                pj.at("data").get<std::vector<double>>());
    }
    return c;
}

Checkpoint pretrain(const ConceptMap& map, const PretrainConfig& cfg_in, uint64_t seed) {
    PretrainConfig cfg = cfg_in;
    cfg.arch.vocab_size = map.vocab.size();

    // Every promptable (subject, style-slot) condition the map defines.
    struct Condition {
        std::string density_name;
        int subject_tok;
        int style_tok;  // 0 = no style slot
    };
    std::vector<Condition> conds;
    std::vector<std::string> style_names;
    for (const auto& s : map.specs)
        if (s.kind == ConceptKind::Style) style_names.push_back(s.name);
    for (const auto& s : map.specs) {
        if (s.kind != ConceptKind::Instance) continue;
        conds.push_back({s.name, map.vocab.id(s.name), 0});
        for (const auto& st : style_names)
            conds.push_back({s.name + "|" + st, map.vocab.id(s.name), map.vocab.id(st)});
    }

    NoiseSchedule sched = make_schedule(cfg.schedule_T, cfg.beta_min, cfg.beta_max);
    RngStream init_rng = RngStream(seed, 0);
    ParamSet params = init_denoiser(cfg.arch, init_rng);
    RngStream data_rng = RngStream(seed, 1);
    RngStream loss_rng = RngStream(seed, 2);

    const ConceptSpec* mem = nullptr;
    for (const auto& s : map.specs)
        if (s.kind == ConceptKind::Memorized) mem = &s;
    if (cfg.memorize && !mem)
        throw std::invalid_argument("pretrain: memorization enabled but no memorized concept in map");

    AdamState adam(AdamConfig{cfg.lr});
    // tok_embed stays at its init, like the frozen text encoder it stands for;
    // only ablation fine-tuning (EMBED / FULL subsets) may touch it
    std::set<std::string> train_mask;
    for (const auto& [name, t] : params)
        if (name != "tok_embed") train_mask.insert(name);
    for (long step = 0; step < cfg.steps; ++step) {
        Batch batch;
        for (size_t i = 0; i < cfg.batch; ++i) {
            Prompt p;
            // train over the full paraphrase pool so every template the
            // memorization split can use is in-distribution
            p.tok[0] = 1 + static_cast<int>(data_rng.uniform_int(kMaxTemplatePool));
            if (cfg.memorize && data_rng.uniform() < cfg.mem_oversample) {
                // memorized pair lives on the first four templates
                p.tok[0] = 1 + static_cast<int>(data_rng.uniform_int(4));
                p.tok[1] = map.vocab.id(mem->name);
                p.tok[2] = 0;
                batch.x.push_back(sample_truth(map, mem->name, data_rng));
            } else {
                const Condition& c = conds[data_rng.uniform_int(conds.size())];
                p.tok[1] = c.subject_tok;
                p.tok[2] = c.style_tok;
                batch.x.push_back(map.density(c.density_name).sample(data_rng));
            }
            batch.prompts.push_back(p);
        }

        // cosine decay to 10% of the base rate
        double frac = static_cast<double>(step) / static_cast<double>(std::max(cfg.steps, 1L));
        adam.set_lr(cfg.lr * (0.1 + 0.45 * (1.0 + std::cos(M_PI * frac))));

        Tape tape;
        auto vars = leaf_params(tape, params);
        Var loss = diffusion_loss(tape, vars, batch, sched, cfg.arch, loss_rng);
        if (!std::isfinite(loss.val().data[0]))
            throw std::runtime_error("pretrain: non-finite loss at step " + std::to_string(step));
        tape.backward(loss);
        GradSet grads;
        for (const auto& [name, v] : vars) grads.emplace(name, tape.grad(v));
        adam.step(params, grads, train_mask);
    }

    Checkpoint ckpt;
    ckpt.arch = cfg.arch;
    ckpt.schedule = sched;
    ckpt.params = std::move(params);
    ckpt.config = json{{"kind", "pretrain"}, {"seed", seed}, {"pretrain", cfg.to_json()},
                       {"concept_map", map.to_json()}};
    ckpt.config_hash = sha256_hex(ckpt.config.dump());
    return ckpt;
}

}  // namespace ablate
