// Command-line surface: config loading, artifact persistence, run manifest.
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ablate/io.hpp"
#include "ablate/metrics.hpp"

using namespace ablate;
using nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void expect_keys(const ordered_json& j, const std::string& where,
                 const std::vector<std::string>& allowed) {
    if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
    for (const auto& [key, _] : j.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError("config: unknown key '" + key + "' in " + where);
}

template <typename T>
T get_or(const ordered_json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("config: bad value for '" + key + "'");
    }
}

TaskKind task_kind_from_str(const std::string& s) {
    if (s == "instance") return TaskKind::Instance;
    if (s == "style") return TaskKind::Style;
    if (s == "memorized") return TaskKind::Memorized;
    if (s == "composition") return TaskKind::Composition;
    throw ConfigError("config: unknown task kind '" + s + "'");
}

struct RunConfig {
    uint64_t seed = 1;
    std::string map_name = "default";  // "default" | "two_family" | path
    std::string out_dir = "runs";
    PretrainConfig pretrain;
    TaskSpec task{TaskKind::Instance, "grumpy", "cat"};
    struct {
        size_t n = 1000;
        int steps = kDatasetSamplerSteps;
        std::string sample_under = "anchor";
        size_t template_pool = kDefaultTemplatePool;
    } data;
    Objective objective;
    SubsetKind subset = SubsetKind::Xattn;
    AblateConfig ablate;
    MetricConfig metrics;

    ordered_json raw;  // as loaded, for hashing
};

RunConfig load_config(const std::string& path) {
    ordered_json j;
    try {
        j = load_json(path);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    expect_keys(j, "top level",
                {"seed", "map", "out_dir", "pretrain", "task", "data", "objective", "subset",
                 "ablate", "metrics"});
    RunConfig c;
    c.raw = j;
    c.seed = get_or<uint64_t>(j, "seed", c.seed);
    c.map_name = get_or<std::string>(j, "map", c.map_name);
    c.out_dir = get_or<std::string>(j, "out_dir", c.out_dir);

    if (j.contains("pretrain")) {
        const auto& p = j.at("pretrain");
        expect_keys(p, "pretrain",
                    {"steps", "batch", "lr", "memorize", "mem_oversample", "schedule_T",
                     "beta_min", "beta_max", "embed_dim", "time_dim", "hidden"});
        c.pretrain.steps = get_or<long>(p, "steps", c.pretrain.steps);
        c.pretrain.batch = get_or<size_t>(p, "batch", c.pretrain.batch);
        c.pretrain.lr = get_or<double>(p, "lr", c.pretrain.lr);
        c.pretrain.memorize = get_or<bool>(p, "memorize", c.pretrain.memorize);
        c.pretrain.mem_oversample = get_or<double>(p, "mem_oversample", c.pretrain.mem_oversample);
        c.pretrain.schedule_T = get_or<int>(p, "schedule_T", c.pretrain.schedule_T);
        c.pretrain.beta_min = get_or<double>(p, "beta_min", c.pretrain.beta_min);
        c.pretrain.beta_max = get_or<double>(p, "beta_max", c.pretrain.beta_max);
        c.pretrain.arch.embed_dim = get_or<size_t>(p, "embed_dim", c.pretrain.arch.embed_dim);
        c.pretrain.arch.time_dim = get_or<size_t>(p, "time_dim", c.pretrain.arch.time_dim);
        c.pretrain.arch.hidden = get_or<size_t>(p, "hidden", c.pretrain.arch.hidden);
    }
    if (j.contains("task")) {
        const auto& t = j.at("task");
        expect_keys(t, "task", {"kind", "target", "anchor"});
        c.task.kind = task_kind_from_str(get_or<std::string>(t, "kind", "instance"));
        c.task.target = get_or<std::string>(t, "target", c.task.target);
        c.task.anchor = get_or<std::string>(t, "anchor", c.task.anchor);
    }
    if (j.contains("data")) {
        const auto& d = j.at("data");
        expect_keys(d, "data", {"n", "steps", "sample_under", "template_pool"});
        c.data.n = get_or<size_t>(d, "n", c.data.n);
        c.data.steps = get_or<int>(d, "steps", c.data.steps);
        c.data.sample_under = get_or<std::string>(d, "sample_under", c.data.sample_under);
        c.data.template_pool = get_or<size_t>(d, "template_pool", c.data.template_pool);
        if (c.data.sample_under != "anchor" && c.data.sample_under != "target")
            throw ConfigError("config: data.sample_under must be 'anchor' or 'target'");
    }
    if (j.contains("objective")) {
        const auto& o = j.at("objective");
        expect_keys(o, "objective", {"kind", "lambda", "weight_penalty"});
        try {
            c.objective.kind = objective_from_str(get_or<std::string>(o, "kind", "model"));
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
        c.objective.lambda = get_or<double>(o, "lambda", c.objective.lambda);
        c.objective.weight_penalty = get_or<double>(o, "weight_penalty", c.objective.weight_penalty);
        if (c.objective.lambda < 0.0) throw ConfigError("config: objective.lambda must be >= 0");
    }
    if (j.contains("subset")) {
        try {
            c.subset = subset_from_str(j.at("subset").get<std::string>());
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
    }
    if (j.contains("ablate")) {
        const auto& a = j.at("ablate");
        expect_keys(a, "ablate", {"steps", "batch", "lr", "check_provenance"});
        c.ablate.steps = get_or<long>(a, "steps", c.ablate.steps);
        c.ablate.batch = get_or<size_t>(a, "batch", c.ablate.batch);
        c.ablate.lr = get_or<double>(a, "lr", c.ablate.lr);
        c.ablate.check_provenance = get_or<bool>(a, "check_provenance", c.ablate.check_provenance);
    }
    if (j.contains("metrics")) {
        const auto& m = j.at("metrics");
        expect_keys(m, "metrics",
                    {"samples_per_concept", "sampler_steps", "sim_sigma", "sim_threshold",
                     "robustness_levels", "mmd_permutations"});
        c.metrics.samples_per_concept =
            get_or<size_t>(m, "samples_per_concept", c.metrics.samples_per_concept);
        c.metrics.sampler_steps = get_or<int>(m, "sampler_steps", c.metrics.sampler_steps);
        c.metrics.sim_sigma = get_or<double>(m, "sim_sigma", c.metrics.sim_sigma);
        c.metrics.sim_threshold = get_or<double>(m, "sim_threshold", c.metrics.sim_threshold);
        c.metrics.robustness_levels =
            get_or<std::vector<double>>(m, "robustness_levels", c.metrics.robustness_levels);
        c.metrics.mmd_permutations = get_or<int>(m, "mmd_permutations", c.metrics.mmd_permutations);
    }

    if (const char* env = std::getenv("ABLATE_SEED")) {
        try {
            c.seed = std::stoull(env);
        } catch (const std::exception&) {
            throw ConfigError("ABLATE_SEED is not a valid integer");
        }
    }
    return c;
}

ConceptMap load_map(const RunConfig& cfg) {
    if (cfg.map_name == "default") return default_concept_map();
    if (cfg.map_name == "two_family") return two_family_concept_map();
    if (!std::filesystem::exists(cfg.map_name))
        throw ConfigError("config: concept map path '" + cfg.map_name + "' does not exist");
    return ConceptMap::from_json(load_json(cfg.map_name));
}

std::string config_hash(const RunConfig& cfg) {
    ordered_json j = cfg.raw;
    j["seed"] = cfg.seed;  // reflect ABLATE_SEED overrides in the hash
    return sha256_hex(j.dump());
}

class Manifest {
  public:
    Manifest(const std::string& out_dir, std::string cmd, std::string cfg_hash)
        : path_(out_dir + "/manifest.jsonl"),
          cmd_(std::move(cmd)),
          cfg_hash_(std::move(cfg_hash)),
          start_(std::chrono::steady_clock::now()) {}

    void input(const std::string& name, const std::string& path) {
        if (!std::filesystem::exists(path))
            throw ConfigError(name + " '" + path + "' not found");
        inputs_[name] = file_sha256(path);
    }
    void output(const std::string& name, const std::string& path) {
        outputs_[name] = file_sha256(path);
    }

    void commit() const {
        double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        ordered_json entry{{"cmd", cmd_},
                           {"config_hash", cfg_hash_},
                           {"inputs", inputs_},
                           {"outputs", outputs_},
                           {"wall_s", wall},
                           {"version", kVersion}};
        std::ofstream f(path_, std::ios::app);
        if (!f) throw std::runtime_error("cannot append to " + path_);
        f << entry.dump() << "\n";
    }

  private:
    std::string path_, cmd_, cfg_hash_;
    ordered_json inputs_ = ordered_json::object(), outputs_ = ordered_json::object();
    std::chrono::steady_clock::time_point start_;
};

std::string short_hash(const std::string& h) { return h.substr(0, 12); }

void ensure_out_dir(const RunConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
}

Checkpoint load_ckpt(const std::string& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("checkpoint '" + path + "' not found");
    return Checkpoint::from_json(load_json(path));
}

AblationDataset load_dataset(const std::string& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("dataset '" + path + "' not found");
    return AblationDataset::from_json(load_json(path));
}

// --- subcommand bodies ---

int cmd_pretrain(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    Manifest man(cfg.out_dir, "pretrain", config_hash(cfg));
    ConceptMap map = load_map(cfg);
    Checkpoint ckpt = pretrain(map, cfg.pretrain, cfg.seed);
    std::string path = cfg.out_dir + "/ckpt-" + short_hash(ckpt.config_hash) + ".json";
    save_json(path, ckpt.to_json());
    man.output("checkpoint", path);
    man.commit();
    std::printf("checkpoint %s\n", path.c_str());
    return 0;
}

AblationDataset build_dataset(const RunConfig& cfg, const ConceptMap& map, const Checkpoint& ckpt) {
    switch (cfg.task.kind) {
        case TaskKind::Memorized:
            return build_memorization_dataset(ckpt, map, cfg.task.target, cfg.data.n, cfg.seed,
                                              cfg.metrics.sim_sigma, cfg.metrics.sim_threshold,
                                              cfg.data.steps);
        case TaskKind::Composition:
            return build_composition_dataset(ckpt, map, cfg.task.target, cfg.data.n,
                                             cfg.data.steps, cfg.seed);
        default:
            return build_ablation_dataset(ckpt, map, cfg.task, cfg.data.n, cfg.data.steps,
                                          cfg.seed, cfg.data.sample_under == "target",
                                          cfg.data.template_pool);
    }
}

int cmd_gen_data(const RunConfig& cfg, const std::string& ckpt_path) {
    ensure_out_dir(cfg);
    Manifest man(cfg.out_dir, "gen-data", config_hash(cfg));
    man.input("checkpoint", ckpt_path);
    ConceptMap map = load_map(cfg);
    Checkpoint ckpt = load_ckpt(ckpt_path);
    AblationDataset d = build_dataset(cfg, map, ckpt);
    ordered_json j = d.to_json();
    std::string path = cfg.out_dir + "/data-" + short_hash(sha256_hex(j.dump())) + ".json";
    save_json(path, j);
    man.output("dataset", path);
    man.commit();
    std::printf("dataset %s (%zu tuples)\n", path.c_str(), d.tuples.size());
    return 0;
}

int cmd_ablate(const RunConfig& cfg, const std::string& ckpt_path,
               const std::vector<std::string>& data_paths) {
    ensure_out_dir(cfg);
    Manifest man(cfg.out_dir, "ablate", config_hash(cfg));
    man.input("checkpoint", ckpt_path);
    Checkpoint ckpt = load_ckpt(ckpt_path);
    std::vector<AblationDataset> datasets;
    for (size_t i = 0; i < data_paths.size(); ++i) {
        man.input("dataset" + std::to_string(i), data_paths[i]);
        datasets.push_back(load_dataset(data_paths[i]));
    }
    AblateResult res;
    if (datasets.size() > 1) {
        res = multi_concept_ablate(ckpt, datasets, cfg.objective, cfg.subset, cfg.ablate, cfg.seed);
    } else if (datasets[0].provenance.task == "composition") {
        res = compositional_ablate(ckpt, datasets[0], cfg.objective, cfg.subset, cfg.ablate,
                                   cfg.seed);
    } else {
        res = ablate_run(ckpt, datasets[0], cfg.objective, cfg.subset, cfg.ablate, cfg.seed);
    }
    std::string tag = short_hash(res.checkpoint.config_hash);
    std::string ckpt_out = cfg.out_dir + "/ckpt-" + tag + ".json";
    std::string trace_out = cfg.out_dir + "/trace-" + tag + ".csv";
    save_json(ckpt_out, res.checkpoint.to_json());
    write_file(trace_out, trace_csv(res.trace));
    man.output("checkpoint", ckpt_out);
    man.output("trace", trace_out);
    man.commit();
    std::printf("checkpoint %s\ntrace %s\n", ckpt_out.c_str(), trace_out.c_str());
    return 0;
}

int cmd_sample(const RunConfig& cfg, const std::string& ckpt_path, const std::string& concept_name,
               size_t n) {
    ensure_out_dir(cfg);
    Manifest man(cfg.out_dir, "sample", config_hash(cfg));
    man.input("checkpoint", ckpt_path);
    ConceptMap map = load_map(cfg);
    Checkpoint ckpt = load_ckpt(ckpt_path);
    if (n == 0) n = cfg.metrics.samples_per_concept;
    RngStream prompt_rng(cfg.seed, 1), sample_rng(cfg.seed, 2);
    std::vector<Prompt> prompts = make_prompts(map, concept_name, n, prompt_rng);
    std::vector<Point> xs = sample_ancestral(ckpt.params, prompts, cfg.metrics.sampler_steps,
                                             ckpt.schedule, ckpt.arch, sample_rng);
    ordered_json pts = ordered_json::array();
    for (const Point& p : xs) pts.push_back(ordered_json::array({p[0], p[1]}));
    ordered_json j{{"checkpoint", ckpt.config_hash},
                   {"concept", concept_name},
                   {"seed", cfg.seed},
                   {"sampler_steps", cfg.metrics.sampler_steps},
                   {"points", pts}};
    std::string path = cfg.out_dir + "/samples-" + short_hash(sha256_hex(j.dump())) + ".json";
    save_json(path, j);
    man.output("samples", path);
    man.commit();
    std::printf("samples %s\n", path.c_str());
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& ablated_path,
             const std::string& pretrained_path, bool force, bool with_robustness) {
    ensure_out_dir(cfg);
    Manifest man(cfg.out_dir, "eval", config_hash(cfg));
    man.input("ablated", ablated_path);
    man.input("pretrained", pretrained_path);
    ConceptMap map = load_map(cfg);
    Checkpoint ablated = load_ckpt(ablated_path);
    Checkpoint pretrained = load_ckpt(pretrained_path);
    bool lineage_ok = ablated.config_hash == pretrained.config_hash ||
                      (ablated.config.contains("parent") &&
                       ablated.config.at("parent") == pretrained.config_hash);
    if (!lineage_ok) {
        if (!force)
            throw ConfigError("checkpoints do not share lineage (pass --force to override)");
        ablated.config["parent"] = pretrained.config_hash;
    }
    EvalReport rep =
        full_report(ablated, pretrained, map, cfg.task, cfg.metrics, cfg.seed, with_robustness);
    ordered_json j = rep.to_json();
    std::string tag = short_hash(sha256_hex(j.dump()));
    std::string json_out = cfg.out_dir + "/report-" + tag + ".json";
    std::string csv_out = cfg.out_dir + "/report-" + tag + ".csv";
    save_json(json_out, j);
    write_file(csv_out, rep.to_csv());
    man.output("report", json_out);
    man.output("report_csv", csv_out);
    man.commit();
    std::printf("report %s\n", json_out.c_str());
    return 0;
}

int cmd_sweep(const RunConfig& cfg, const std::string& ckpt_path) {
    ensure_out_dir(cfg);
    ConceptMap map = load_map(cfg);
    Checkpoint ckpt = load_ckpt(ckpt_path);
    std::string sweep_dir = cfg.out_dir + "/sweep-" + short_hash(config_hash(cfg));
    std::filesystem::create_directories(sweep_dir);

    // anchor-sampled data for the distillation objectives, target-sampled for
    // the loss-maximization baseline (its hinge is dead on anchor samples)
    RunConfig dcfg = cfg;
    AblationDataset anchor_data = build_dataset(dcfg, map, ckpt);
    dcfg.data.sample_under = "target";
    AblationDataset target_data = build_dataset(dcfg, map, ckpt);

    const std::vector<ObjectiveKind> objectives{ObjectiveKind::ModelBased,
                                                ObjectiveKind::NoiseBased,
                                                ObjectiveKind::MaxLossBaseline};
    const std::vector<SubsetKind> subsets{SubsetKind::Embed, SubsetKind::Xattn, SubsetKind::Full};
    int failures = 0;
    for (ObjectiveKind ok : objectives) {
        for (SubsetKind sk : subsets) {
            Objective obj = cfg.objective;
            obj.kind = ok;
            std::string cell = sweep_dir + "/" + objective_str(ok) + "-" + subset_str(sk);
            std::string report_path = cell + "/report.json";
            if (std::filesystem::exists(report_path)) {
                std::printf("skip %s (report exists)\n", cell.c_str());
                continue;
            }
            std::filesystem::create_directories(cell);
            Manifest man(cfg.out_dir, "sweep:" + objective_str(ok) + "-" + subset_str(sk),
                         config_hash(cfg));
            man.input("checkpoint", ckpt_path);
            AblateConfig acfg = cfg.ablate;
            const AblationDataset& data =
                ok == ObjectiveKind::MaxLossBaseline ? target_data : anchor_data;
            if (ok == ObjectiveKind::MaxLossBaseline) {
                obj.lambda = 0.0;
                acfg.steps = 50;
            }
            try {
                AblateResult res = ablate_run(ckpt, data, obj, sk, acfg, cfg.seed);
                save_json(cell + "/ckpt.json", res.checkpoint.to_json());
                write_file(cell + "/trace.csv", trace_csv(res.trace));
                EvalReport rep = full_report(res.checkpoint, ckpt, map, cfg.task, cfg.metrics,
                                             cfg.seed);
                save_json(report_path, rep.to_json());
                write_file(cell + "/report.csv", rep.to_csv());
            } catch (const std::exception& e) {
                // leave no report.json so a rerun retries the cell
                std::printf("failed %s: %s\n", cell.c_str(), e.what());
                ++failures;
                continue;
            }
            man.output("checkpoint", cell + "/ckpt.json");
            man.output("trace", cell + "/trace.csv");
            man.output("report", report_path);
            man.commit();
            std::printf("done %s\n", cell.c_str());
        }
    }
    return failures == 0 ? 0 : 1;
}

int cmd_report(const std::string& report_path) {
    if (!std::filesystem::exists(report_path))
        throw ConfigError("report '" + report_path + "' not found");
    EvalReport rep = EvalReport::from_json(load_json(report_path));
    std::printf("task %s: ablate '%s' -> '%s' (seed %llu)\n", rep.task.c_str(),
                rep.target.c_str(), rep.anchor.c_str(),
                static_cast<unsigned long long>(rep.seed));
    std::printf("%-16s %-12s %9s %9s %9s %9s %10s %s\n", "concept", "role", "acc", "acc_pre",
                "score", "score_pre", "mmd2", "null");
    for (const ConceptReport& c : rep.concepts)
        std::printf("%-16s %-12s %9.3f %9.3f %9.3f %9.3f %10.4f %s\n", c.name.c_str(),
                    c.role.c_str(), c.accuracy, c.accuracy_pretrained, c.score,
                    c.score_pretrained, c.mmd2, c.mmd_within_null ? "in" : "out");
    if (rep.memorization_rate_ablated >= 0.0)
        std::printf("memorization rate: %.3f ablated, %.3f pretrained\n",
                    rep.memorization_rate_ablated, rep.memorization_rate_pretrained);
    for (const RobustnessPoint& p : rep.robustness)
        std::printf("robustness sigma=%.2f acc=%.3f\n", p.level, p.accuracy);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"concept ablation for conditional denoising diffusion models"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    std::string config_path, ckpt_path, ablated_path, pretrained_path, report_path, concept_name;
    std::vector<std::string> data_paths;
    size_t sample_n = 0;
    bool force = false, with_robustness = false;

    auto* pre = app.add_subcommand("pretrain", "train a model on the concept map");
    pre->add_option("--config", config_path, "run config JSON")->required();

    auto* gen = app.add_subcommand("gen-data", "generate an ablation dataset");
    gen->add_option("--config", config_path, "run config JSON")->required();
    gen->add_option("--ckpt", ckpt_path, "source checkpoint")->required();

    auto* abl = app.add_subcommand("ablate", "fine-tune a concept away");
    abl->add_option("--config", config_path, "run config JSON")->required();
    abl->add_option("--ckpt", ckpt_path, "starting checkpoint")->required();
    abl->add_option("--data", data_paths, "ablation dataset(s)")->required();

    auto* smp = app.add_subcommand("sample", "draw samples for a concept");
    smp->add_option("--config", config_path, "run config JSON")->required();
    smp->add_option("--ckpt", ckpt_path, "checkpoint")->required();
    smp->add_option("--concept", concept_name, "concept to sample")->required();
    smp->add_option("--n", sample_n, "sample count (default: metrics.samples_per_concept)");

    auto* evl = app.add_subcommand("eval", "compare an ablated model to its parent");
    evl->add_option("--config", config_path, "run config JSON")->required();
    evl->add_option("--ablated", ablated_path, "ablated checkpoint")->required();
    evl->add_option("--pretrained", pretrained_path, "pretrained checkpoint")->required();
    evl->add_flag("--force", force, "evaluate despite mismatched lineage");
    evl->add_flag("--robustness", with_robustness, "include the perturbation curve");

    auto* swp = app.add_subcommand("sweep", "objective x subset grid, resumable");
    swp->add_option("--config", config_path, "run config JSON")->required();
    swp->add_option("--ckpt", ckpt_path, "pretrained checkpoint")->required();

    auto* rpt = app.add_subcommand("report", "pretty-print a report JSON");
    rpt->add_option("--report", report_path, "report file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (rpt->parsed()) return cmd_report(report_path);
        RunConfig cfg = load_config(config_path);
        if (pre->parsed()) return cmd_pretrain(cfg);
        if (gen->parsed()) return cmd_gen_data(cfg, ckpt_path);
        if (abl->parsed()) return cmd_ablate(cfg, ckpt_path, data_paths);
        if (smp->parsed()) return cmd_sample(cfg, ckpt_path, concept_name, sample_n);
        if (evl->parsed()) return cmd_eval(cfg, ablated_path, pretrained_path, force,
                                           with_robustness);
        if (swp->parsed()) return cmd_sweep(cfg, ckpt_path);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
