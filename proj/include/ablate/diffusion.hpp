#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ablate/concepts.hpp"
#include "ablate/gradcheck.hpp"
#include "ablate/optim.hpp"
#include "ablate/tape.hpp"

namespace ablate {

struct NoiseSchedule {
    int T = 0;
    std::vector<double> alpha_bar;  // size T+1, alpha_bar[0] = 1
    std::vector<double> beta;       // size T+1, beta[0] unused

    nlohmann::ordered_json to_json() const;
    static NoiseSchedule from_json(const nlohmann::ordered_json& j);
};

NoiseSchedule make_schedule(int T, double beta_min, double beta_max);

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
Point forward_noise(const Point& x0, int t, const Point& eps, const NoiseSchedule& s);

struct DenoiserConfig {
    size_t vocab_size = 0;
    size_t embed_dim = 16;
    size_t time_dim = 16;
    size_t hidden = 64;
    size_t prompt_len = kPromptLen;

    nlohmann::ordered_json to_json() const;
    static DenoiserConfig from_json(const nlohmann::ordered_json& j);
};

// Parameter names: tok_embed, time_w, time_b, in_w, in_b, wq, wk, wv, wo,
// mlp_w1, mlp_b1, mlp_w2, mlp_b2.
ParamSet init_denoiser(const DenoiserConfig& cfg, RngStream& rng);

// Batched forward pass on a tape; returns the (n x 2) noise prediction.
// Rows carry their own prompt and timestep.
Var denoise_batch(Tape& tape, const std::map<std::string, Var>& params,
                  const std::vector<Point>& x, const std::vector<Prompt>& prompts,
                  const std::vector<int>& t, const NoiseSchedule& sched,
                  const DenoiserConfig& cfg);

// Attention weights of the forward pass (n x prompt_len), for diagnostics.
Tensor attention_weights(const ParamSet& params, const std::vector<Point>& x,
                         const std::vector<Prompt>& prompts, const std::vector<int>& t,
                         const NoiseSchedule& sched, const DenoiserConfig& cfg);

// Value-only forward.
std::vector<Point> denoise(const ParamSet& params, const std::vector<Point>& x,
                           const std::vector<Prompt>& prompts, const std::vector<int>& t,
                           const NoiseSchedule& sched, const DenoiserConfig& cfg);
Point denoise(const ParamSet& params, const Point& x, const Prompt& prompt, int t,
              const NoiseSchedule& sched, const DenoiserConfig& cfg);

struct Batch {
    std::vector<Point> x;
    std::vector<Prompt> prompts;
    std::vector<Prompt> target_prompts;  // optional, empty or same length as x

    size_t size() const { return x.size(); }
    void validate() const;
};

// Mean over the batch of ||eps - net(x_t, c, t)||^2 with t ~ U[1,T].
Var diffusion_loss(Tape& tape, const std::map<std::string, Var>& params, const Batch& batch,
                   const NoiseSchedule& sched, const DenoiserConfig& cfg, RngStream& rng);
double diffusion_loss_value(const ParamSet& params, const Batch& batch, const NoiseSchedule& sched,
                            const DenoiserConfig& cfg, RngStream& rng);

constexpr double kDivergenceGuard = 100.0;

// Ancestral DDPM reverse chain on a strided sub-schedule; one prompt per row.
std::vector<Point> sample_ancestral(const ParamSet& params, const std::vector<Prompt>& prompts,
                                    int steps, const NoiseSchedule& sched,
                                    const DenoiserConfig& cfg, RngStream& rng);
Point sample_ancestral(const ParamSet& params, const Prompt& prompt, int steps,
                       const NoiseSchedule& sched, const DenoiserConfig& cfg, RngStream& rng);

struct PretrainConfig {
    long steps = 5000;
    size_t batch = 64;
    double lr = 2e-3;
    bool memorize = false;
    double mem_oversample = 0.3;  // fraction of batch rows drawn from the memorized pair
    int schedule_T = 100;
    double beta_min = 1e-4;
    double beta_max = 0.2;
    DenoiserConfig arch;  // vocab_size filled from the map

    nlohmann::ordered_json to_json() const;
    static PretrainConfig from_json(const nlohmann::ordered_json& j);
};

struct Checkpoint {
    DenoiserConfig arch;
    NoiseSchedule schedule;
    ParamSet params;
    nlohmann::ordered_json config;  // provenance of the producing run
    std::string config_hash;

    nlohmann::ordered_json to_json() const;
    static Checkpoint from_json(const nlohmann::ordered_json& j);
};

Checkpoint pretrain(const ConceptMap& map, const PretrainConfig& cfg, uint64_t seed);

}  // namespace ablate
