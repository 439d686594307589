#include "ablate/ablation.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "ablate/io.hpp"

namespace ablate {

using json = nlohmann::ordered_json;

std::string objective_str(ObjectiveKind k) {
    switch (k) {
        case ObjectiveKind::ModelBased: return "model";
        case ObjectiveKind::NoiseBased: return "noise";
        case ObjectiveKind::ReverseKl: return "reverse-kl";
        case ObjectiveKind::MaxLossBaseline: return "max-loss";
    }
    return "?";
}

ObjectiveKind objective_from_str(const std::string& s) {
    if (s == "model") return ObjectiveKind::ModelBased;
    if (s == "noise") return ObjectiveKind::NoiseBased;
    if (s == "reverse-kl") return ObjectiveKind::ReverseKl;
    if (s == "max-loss") return ObjectiveKind::MaxLossBaseline;
    throw std::invalid_argument("unknown objective '" + s + "'");
}

std::string subset_str(SubsetKind k) {
    switch (k) {
        case SubsetKind::Embed: return "embed";
        case SubsetKind::Xattn: return "xattn";
        case SubsetKind::Full: return "full";
    }
    return "?";
}

SubsetKind subset_from_str(const std::string& s) {
    if (s == "embed") return SubsetKind::Embed;
    if (s == "xattn") return SubsetKind::Xattn;
    if (s == "full") return SubsetKind::Full;
    throw std::invalid_argument("unknown parameter subset '" + s + "'");
}

std::set<std::string> select_params(const ParamSet& params, SubsetKind kind) {
    std::set<std::string> out;
    switch (kind) {
        case SubsetKind::Embed:
            out = {"tok_embed"};
            break;
        case SubsetKind::Xattn:
            out = {"wk", "wv"};
            break;
        case SubsetKind::Full:
            for (const auto& [name, _] : params) out.insert(name);
            break;
    }
    for (const auto& name : out)
        if (!params.count(name))
            throw std::invalid_argument("subset parameter '" + name + "' missing from model");
    return out;
}

namespace {

struct NoisedBatch {
    std::vector<Point> xt;
    std::vector<int> t;
    Tensor eps;
};

NoisedBatch noise_tuples(const std::vector<AblationTuple>& tuples, const NoiseSchedule& sched,
                         RngStream& rng) {
    if (tuples.empty()) throw std::invalid_argument("empty tuple batch");
    size_t n = tuples.size();
    NoisedBatch nb;
    nb.xt.resize(n);
    nb.t.resize(n);
    nb.eps = Tensor::zeros({n, 2});
    for (size_t i = 0; i < n; ++i) {
        nb.t[i] = 1 + static_cast<int>(rng.uniform_int(static_cast<size_t>(sched.T)));
        Point e{rng.normal(), rng.normal()};
        nb.eps.data[2 * i] = e[0];
        nb.eps.data[2 * i + 1] = e[1];
        nb.xt[i] = forward_noise(tuples[i].x, nb.t[i], e, sched);
    }
    return nb;
}

std::vector<Prompt> anchor_prompts(const std::vector<AblationTuple>& tuples) {
    std::vector<Prompt> out;
    out.reserve(tuples.size());
    for (const auto& t : tuples) out.push_back(t.c);
    return out;
}

std::vector<Prompt> target_prompts(const std::vector<AblationTuple>& tuples) {
    std::vector<Prompt> out;
    out.reserve(tuples.size());
    for (const auto& t : tuples) out.push_back(t.cstar);
    return out;
}

std::map<std::string, Var> leaf_params(Tape& tape, const ParamSet& params) {
    std::map<std::string, Var> vars;
    for (const auto& [name, t] : params) vars.emplace(name, tape.leaf(t));
    return vars;
}

}  // namespace

Var prediction_match_loss(Tape& tape, const std::map<std::string, Var>& params,
                          const std::map<std::string, Var>& anchor_params,
                          const std::vector<AblationTuple>& tuples, const NoiseSchedule& sched,
                          const DenoiserConfig& cfg, RngStream& rng, bool stopgrad_anchor) {
    NoisedBatch nb = noise_tuples(tuples, sched, rng);
    Var anchor_pred =
        denoise_batch(tape, anchor_params, nb.xt, anchor_prompts(tuples), nb.t, sched, cfg);
    if (stopgrad_anchor) anchor_pred = tape.stop_grad(anchor_pred);
    Var target_pred = denoise_batch(tape, params, nb.xt, target_prompts(tuples), nb.t, sched, cfg);
    return tape.scale(tape.sum_sq(tape.sub(anchor_pred, target_pred)),
                      1.0 / static_cast<double>(tuples.size()));
}

Var model_based_loss(Tape& tape, const std::map<std::string, Var>& params,
                     const std::vector<AblationTuple>& tuples, const NoiseSchedule& sched,
                     const DenoiserConfig& cfg, RngStream& rng) {
    return prediction_match_loss(tape, params, params, tuples, sched, cfg, rng, true);
}

Var reverse_kl_loss(Tape& tape, const std::map<std::string, Var>& params,
                    const std::vector<AblationTuple>& tuples, const NoiseSchedule& sched,
                    const DenoiserConfig& cfg, RngStream& rng) {
    // identical matching kernel; the sample source (target-concept x*) is a
    // property of the dataset, not of the loss
    return model_based_loss(tape, params, tuples, sched, cfg, rng);
}

Var noise_based_loss(Tape& tape, const std::map<std::string, Var>& params,
                     const std::vector<AblationTuple>& tuples, const NoiseSchedule& sched,
                     const DenoiserConfig& cfg, RngStream& rng) {
    Batch b;
    for (const auto& t : tuples) {
        b.x.push_back(t.x);
        b.prompts.push_back(t.cstar);
    }
    return diffusion_loss(tape, params, b, sched, cfg, rng);
}

Var baseline_maxloss(Tape& tape, const std::map<std::string, Var>& params,
                     const ParamSet& frozen, const std::vector<AblationTuple>& tuples,
                     const NoiseSchedule& sched, const DenoiserConfig& cfg, RngStream& rng,
                     double weight_penalty) {
    Var diff_loss = noise_based_loss(tape, params, tuples, sched, cfg, rng);
    Var hinge = tape.relu(tape.add_const(tape.scale(diff_loss, -1.0), 1.0));
    Var penalty = tape.leaf(Tensor::scalar(0.0));
    for (const auto& [name, p] : params) {
        Var ref = tape.leaf(frozen.at(name));
        penalty = tape.add(penalty, tape.sum_sq(tape.sub(p, ref)));
    }
    return tape.add(hinge, tape.scale(penalty, weight_penalty));
}

CombinedLoss combined_objective(Tape& tape, const std::map<std::string, Var>& params,
                                const Objective& objective, const ParamSet& frozen,
                                const std::vector<AblationTuple>& tuples,
                                const NoiseSchedule& sched, const DenoiserConfig& cfg,
                                RngStream& rng) {
    Var abl{};
    switch (objective.kind) {
        case ObjectiveKind::ModelBased:
            abl = model_based_loss(tape, params, tuples, sched, cfg, rng);
            break;
        case ObjectiveKind::ReverseKl:
            abl = reverse_kl_loss(tape, params, tuples, sched, cfg, rng);
            break;
        case ObjectiveKind::NoiseBased:
            abl = noise_based_loss(tape, params, tuples, sched, cfg, rng);
            break;
        case ObjectiveKind::MaxLossBaseline:
            abl = baseline_maxloss(tape, params, frozen, tuples, sched, cfg, rng,
                                   objective.weight_penalty);
            break;
    }
    CombinedLoss out;
    out.ablation_value = abl.val().data[0];
    if (objective.lambda > 0.0) {
        Batch b;
        for (const auto& t : tuples) {
            b.x.push_back(t.x);
            b.prompts.push_back(t.c);
        }
        Var reg = diffusion_loss(tape, params, b, sched, cfg, rng);
        out.reg_value = reg.val().data[0];
        out.total = tape.add(abl, tape.scale(reg, objective.lambda));
    } else {
        out.total = abl;
    }
    return out;
}

double prediction_gap_sq(const ParamSet& params, const Point& x_t, const Prompt& c,
                         const Prompt& cstar, int t, const NoiseSchedule& sched,
                         const DenoiserConfig& cfg) {
    Point pa = denoise(params, x_t, c, t, sched, cfg);
    Point pb = denoise(params, x_t, cstar, t, sched, cfg);
    double dx = pa[0] - pb[0], dy = pa[1] - pb[1];
    return dx * dx + dy * dy;
}

std::string trace_csv(const std::vector<TraceRow>& trace) {
    std::ostringstream ss;
    ss << "step,ablation_loss,reg_loss,total\n";
    ss.precision(17);
    for (const auto& r : trace)
        ss << r.step << "," << r.ablation_loss << "," << r.reg_loss << "," << r.total << "\n";
    return ss.str();
}

namespace {

AblateResult run_loop(const Checkpoint& ckpt, const std::vector<AblationTuple>& tuples,
                      const Objective& objective, SubsetKind subset, const AblateConfig& cfg,
                      uint64_t seed, const json& run_config) {
    if (tuples.empty()) throw std::invalid_argument("ablate_run: dataset has no tuples");
    ParamSet params = ckpt.params;
    const ParamSet& frozen = ckpt.params;
    std::set<std::string> mask = select_params(params, subset);

    RngStream pick_rng = RngStream(seed, 20);
    RngStream loss_rng = RngStream(seed, 21);
    AdamState adam(AdamConfig{cfg.lr});

    AblateResult res;
    for (long step = 0; step < cfg.steps; ++step) {
        std::vector<AblationTuple> batch;
        batch.reserve(cfg.batch);
        for (size_t i = 0; i < cfg.batch; ++i)
            batch.push_back(tuples[pick_rng.uniform_int(tuples.size())]);

        Tape tape;
        auto vars = leaf_params(tape, params);
        CombinedLoss loss =
            combined_objective(tape, vars, objective, frozen, batch, ckpt.schedule, ckpt.arch,
                               loss_rng);
        double total = loss.total.val().data[0];
        if (!std::isfinite(total))
            throw std::runtime_error("ablate_run: non-finite loss at step " + std::to_string(step));
        res.trace.push_back({step, loss.ablation_value, loss.reg_value, total});

        // cosine decay to zero over the fixed budget; Adam's noise floor
        // otherwise keeps random-walking the masked weights after convergence
        double frac = static_cast<double>(step) / static_cast<double>(std::max(cfg.steps, 1L));
        adam.set_lr(cfg.lr * 0.5 * (1.0 + std::cos(M_PI * frac)));

        tape.backward(loss.total);
        GradSet grads;
        for (const auto& name : mask) grads.emplace(name, tape.grad(vars.at(name)));
        adam.step(params, grads, mask);
    }

    res.checkpoint.arch = ckpt.arch;
    res.checkpoint.schedule = ckpt.schedule;
    res.checkpoint.params = std::move(params);
    res.checkpoint.config = run_config;
    res.checkpoint.config_hash = sha256_hex(run_config.dump());
    return res;
}

json run_config_json(const char* kind, const Checkpoint& ckpt, const DatasetProvenance& prov,
                     const Objective& objective, SubsetKind subset, const AblateConfig& cfg,
                     uint64_t seed) {
    return json{{"kind", kind},
                {"parent", ckpt.config_hash},
                {"task", prov.task},
                {"target", prov.target},
                {"anchor", prov.anchor},
                {"objective", objective_str(objective.kind)},
                {"lambda", objective.lambda},
                {"weight_penalty", objective.weight_penalty},
                {"subset", subset_str(subset)},
                {"steps", cfg.steps},
                {"batch", cfg.batch},
                {"lr", cfg.lr},
                {"seed", seed}};
}

void check_provenance(const Checkpoint& ckpt, const AblationDataset& d) {
    if (d.provenance.checkpoint_hash != ckpt.config_hash)
        throw std::runtime_error("dataset provenance does not match checkpoint (dataset from " +
                                 d.provenance.checkpoint_hash.substr(0, 12) + "..., checkpoint " +
                                 ckpt.config_hash.substr(0, 12) + "...)");
}

}  // namespace

AblateResult ablate_run(const Checkpoint& ckpt, const AblationDataset& dataset,
                        const Objective& objective, SubsetKind subset, const AblateConfig& cfg,
                        uint64_t seed) {
    if (cfg.check_provenance) check_provenance(ckpt, dataset);
    return run_loop(ckpt, dataset.tuples, objective, subset, cfg, seed,
                    run_config_json("ablate", ckpt, dataset.provenance, objective, subset, cfg,
                                    seed));
}

AblateResult multi_concept_ablate(const Checkpoint& ckpt,
                                  const std::vector<AblationDataset>& datasets,
                                  const Objective& objective, SubsetKind subset,
                                  const AblateConfig& cfg_per_dataset, uint64_t seed) {
    if (datasets.empty()) throw std::invalid_argument("multi_concept_ablate: no datasets");
    std::vector<AblationTuple> all;
    std::string targets;
    for (const auto& d : datasets) {
        if (cfg_per_dataset.check_provenance) check_provenance(ckpt, d);
        all.insert(all.end(), d.tuples.begin(), d.tuples.end());
        if (!targets.empty()) targets += "+";
        targets += d.provenance.target;
    }
    AblateConfig cfg = cfg_per_dataset;
    cfg.steps = cfg_per_dataset.steps * static_cast<long>(datasets.size());
    DatasetProvenance prov = datasets[0].provenance;
    prov.target = targets;
    return run_loop(ckpt, all, objective, subset, cfg, seed,
                    run_config_json("multi-ablate", ckpt, prov, objective, subset, cfg, seed));
}

AblateResult compositional_ablate(const Checkpoint& ckpt, const AblationDataset& dataset,
                                  const Objective& objective, SubsetKind subset,
                                  const AblateConfig& cfg, uint64_t seed) {
    if (dataset.provenance.task != "composition")
        throw std::invalid_argument("compositional_ablate: dataset is not a composition dataset");
    return ablate_run(ckpt, dataset, objective, subset, cfg, seed);
}

}  // namespace ablate
