#include "ablate/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace ablate {

using json = nlohmann::ordered_json;

json MetricConfig::to_json() const {
    return json{{"samples_per_concept", samples_per_concept},
                {"sampler_steps", sampler_steps},
                {"sim_sigma", sim_sigma},
                {"sim_threshold", sim_threshold},
                {"robustness_levels", robustness_levels},
                {"mmd_permutations", mmd_permutations}};
}

MetricConfig MetricConfig::from_json(const json& j) {
    MetricConfig c;
    c.samples_per_concept = j.at("samples_per_concept").get<size_t>();
    c.sampler_steps = j.at("sampler_steps").get<int>();
    c.sim_sigma = j.at("sim_sigma").get<double>();
    c.sim_threshold = j.at("sim_threshold").get<double>();
    c.robustness_levels = j.at("robustness_levels").get<std::vector<double>>();
    c.mmd_permutations = j.at("mmd_permutations").get<int>();
    if (c.samples_per_concept < 2) throw std::invalid_argument("metric config: need >= 2 samples");
    if (c.sim_threshold <= 0.0 || c.sim_threshold >= 1.0)
        throw std::invalid_argument("metric config: threshold must be in (0,1)");
    return c;
}

double concept_accuracy(const std::vector<Point>& samples, const Mixture2& a, const Mixture2& b) {
    if (samples.empty()) throw std::invalid_argument("concept_accuracy: no samples");
    a.validate();
    b.validate();
    double hits = 0.0;
    for (const Point& p : samples) {
        double la = a.logpdf(p), lb = b.logpdf(p);
        if (la > lb)
            hits += 1.0;
        else if (la == lb)
            hits += 0.5;  // splitting ties keeps acc(A,B) + acc(B,A) == 1 exact
    }
    return hits / static_cast<double>(samples.size());
}

double concept_score(const std::vector<Point>& samples, const Mixture2& density) {
    if (samples.empty()) throw std::invalid_argument("concept_score: no samples");
    double s = 0.0;
    for (const Point& p : samples) s += density.logpdf(p);
    return s / static_cast<double>(samples.size());
}

namespace {

// k(x,y) = (x.y/2 + 1)^3 expanded into an exact 10-dimensional feature map:
// sum_r C(3,r)/2^r (x.y)^r, with (x.y)^r opened up by the binomial theorem.
constexpr size_t kFeatDim = 10;
using Feat = std::array<double, kFeatDim>;

Feat poly_features(const Point& p) {
    const double c3[4] = {1.0, 3.0, 3.0, 1.0};
    Feat f{};
    size_t idx = 0;
    for (int r = 0; r <= 3; ++r) {
        double cr = c3[r] / std::pow(2.0, r);
        for (int j = 0; j <= r; ++j) {
            double crj = 1.0;
            for (int k = 0; k < j; ++k) crj = crj * (r - k) / (k + 1);
            f[idx++] = std::sqrt(cr * crj) * std::pow(p[0], j) * std::pow(p[1], r - j);
        }
    }
    return f;
}

double feat_dot(const Feat& a, const Feat& b) {
    double s = 0.0;
    for (size_t i = 0; i < kFeatDim; ++i) s += a[i] * b[i];
    return s;
}

// Unbiased estimator from per-set feature sums and within-set diagonal mass.
double mmd_from_sums(const Feat& sa, double diag_a, size_t n, const Feat& sb, double diag_b,
                     size_t m) {
    double dn = static_cast<double>(n), dm = static_cast<double>(m);
    return (feat_dot(sa, sa) - diag_a) / (dn * (dn - 1.0)) +
           (feat_dot(sb, sb) - diag_b) / (dm * (dm - 1.0)) - 2.0 * feat_dot(sa, sb) / (dn * dm);
}

}  // namespace

double mmd_poly(const std::vector<Point>& a, const std::vector<Point>& b) {
    if (a.size() < 2 || b.size() < 2)
        throw std::invalid_argument("mmd_poly: need at least 2 points per set");
    Feat sa{}, sb{};
    double da = 0.0, db = 0.0;
    for (const Point& p : a) {
        Feat f = poly_features(p);
        for (size_t i = 0; i < kFeatDim; ++i) sa[i] += f[i];
        da += feat_dot(f, f);
    }
    for (const Point& p : b) {
        Feat f = poly_features(p);
        for (size_t i = 0; i < kFeatDim; ++i) sb[i] += f[i];
        db += feat_dot(f, f);
    }
    return mmd_from_sums(sa, da, a.size(), sb, db, b.size());
}

MmdTest mmd_permutation_test(const std::vector<Point>& a, const std::vector<Point>& b,
                             RngStream& rng, int permutations) {
    if (permutations < 1) throw std::invalid_argument("mmd_permutation_test: permutations >= 1");
    MmdTest res;
    res.observed = mmd_poly(a, b);

    size_t n = a.size(), total = a.size() + b.size();
    std::vector<Feat> feats;
    std::vector<double> diag;
    feats.reserve(total);
    for (const Point& p : a) feats.push_back(poly_features(p));
    for (const Point& p : b) feats.push_back(poly_features(p));
    for (const Feat& f : feats) diag.push_back(feat_dot(f, f));

    std::vector<size_t> idx(total);
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<double> null_vals;
    null_vals.reserve(static_cast<size_t>(permutations));
    for (int p = 0; p < permutations; ++p) {
        for (size_t i = total - 1; i > 0; --i)
            std::swap(idx[i], idx[rng.uniform_int(i + 1)]);
        Feat sa{}, sb{};
        double da = 0.0, db = 0.0;
        for (size_t i = 0; i < total; ++i) {
            const Feat& f = feats[idx[i]];
            if (i < n) {
                for (size_t k = 0; k < kFeatDim; ++k) sa[k] += f[k];
                da += diag[idx[i]];
            } else {
                for (size_t k = 0; k < kFeatDim; ++k) sb[k] += f[k];
                db += diag[idx[i]];
            }
        }
        null_vals.push_back(mmd_from_sums(sa, da, n, sb, db, total - n));
    }
    std::sort(null_vals.begin(), null_vals.end());
    size_t q_idx = static_cast<size_t>(
        std::ceil(0.95 * static_cast<double>(null_vals.size())));
    res.null_q95 = null_vals[std::min(q_idx, null_vals.size()) - 1];
    res.within_null = res.observed <= res.null_q95;
    return res;
}

double similarity(const Point& x, const Point& mem_point, double sigma) {
    return point_similarity(x, mem_point, sigma);
}

double memorization_rate(const Checkpoint& ckpt, const Prompt& mem_prompt, size_t n,
                         double threshold, const Point& mem_point, double sim_sigma,
                         int sampler_steps, RngStream& rng) {
    if (n < 1) throw std::invalid_argument("memorization_rate: n must be >= 1");
    std::vector<Prompt> prompts(n, mem_prompt);
    std::vector<Point> xs =
        sample_ancestral(ckpt.params, prompts, sampler_steps, ckpt.schedule, ckpt.arch, rng);
    size_t hits = 0;
    for (const Point& x : xs)
        if (similarity(x, mem_point, sim_sigma) >= threshold) ++hits;
    return static_cast<double>(hits) / static_cast<double>(n);
}

namespace {

// Anchor-side rewrite of a target-side prompt (the inverse of to_target_prompt).
Prompt anchor_version(const ConceptMap& map, const TaskSpec& task, Prompt p) {
    switch (task.kind) {
        case TaskKind::Composition:
            p.tok[2] = 0;
            return p;
        case TaskKind::Memorized:
            p.tok[1] = map.vocab.id(task.anchor);
            return p;
        default: {
            int target = map.vocab.id(task.target);
            int anchor = map.vocab.id(task.anchor);
            for (int& t : p.tok)
                if (t == target) t = anchor;
            return p;
        }
    }
}

Prompt target_version(const ConceptMap& map, const TaskSpec& task, const Prompt& p) {
    if (task.kind == TaskKind::Memorized) {
        Prompt out = p;
        out.tok[1] = map.vocab.id(task.target);
        return out;
    }
    return to_target_prompt(map, p, task);
}

// Classify each sample between its own prompt's density and a rewritten
// comparator prompt's density.
double paired_accuracy(const ConceptMap& map, const std::vector<Point>& xs,
                       const std::vector<Prompt>& prompts,
                       const std::function<Prompt(const Prompt&)>& comparator) {
    double hits = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        double la = prompt_density(map, prompts[i]).logpdf(xs[i]);
        double lb = prompt_density(map, comparator(prompts[i])).logpdf(xs[i]);
        if (la > lb)
            hits += 1.0;
        else if (la == lb)
            hits += 0.5;
    }
    return hits / static_cast<double>(xs.size());
}

double paired_score(const ConceptMap& map, const std::vector<Point>& xs,
                    const std::vector<Prompt>& prompts) {
    double s = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) s += prompt_density(map, prompts[i]).logpdf(xs[i]);
    return s / static_cast<double>(xs.size());
}

std::vector<Prompt> entry_prompts(const ConceptMap& map, const std::string& name, size_t n,
                                  RngStream& rng) {
    auto bar = name.find('|');
    if (bar == std::string::npos) return make_prompts(map, name, n, rng);
    int subj = map.vocab.id(name.substr(0, bar));
    int style = map.vocab.id(name.substr(bar + 1));
    std::vector<Prompt> out;
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        Prompt p;
        p.tok[0] = 1 + static_cast<int>(rng.uniform_int(kDefaultTemplatePool));
        p.tok[1] = subj;
        p.tok[2] = style;
        out.push_back(p);
    }
    return out;
}

}  // namespace

std::vector<RobustnessPoint> robustness_eval(const Checkpoint& ckpt, const ConceptMap& map,
                                             const TaskSpec& task,
                                             const std::vector<double>& levels, size_t n,
                                             int sampler_steps, RngStream& rng) {
    if (levels.empty() || levels.front() != 0.0)
        throw std::invalid_argument("robustness_eval: levels must start at 0");
    if (!std::is_sorted(levels.begin(), levels.end()))
        throw std::invalid_argument("robustness_eval: levels must be ascending");

    int target_tok = map.vocab.id(task.target);
    const Tensor& embed = ckpt.params.at("tok_embed");
    double e_norm = 0.0;
    for (size_t k = 0; k < embed.shape[1]; ++k) {
        double v = embed.at(static_cast<size_t>(target_tok), k);
        e_norm += v * v;
    }
    e_norm = std::sqrt(e_norm);

    auto comparator = [&](const Prompt& p) { return anchor_version(map, task, p); };

    std::vector<RobustnessPoint> curve;
    const size_t group = 10;  // samples per perturbation draw
    for (double level : levels) {
        double sigma = level * e_norm;
        std::vector<Point> xs;
        std::vector<Prompt> prompts;
        size_t drawn = 0;
        while (drawn < n) {
            size_t batch = std::min(group, n - drawn);
            drawn += batch;
            ParamSet params = ckpt.params;
            if (sigma > 0.0) {
                Tensor& e = params.at("tok_embed");
                for (size_t k = 0; k < e.shape[1]; ++k)
                    e.at(static_cast<size_t>(target_tok), k) += sigma * rng.normal();
            }
            std::vector<Prompt> ps = make_prompts(map, task.target, batch, rng);
            try {
                std::vector<Point> batch_xs =
                    sample_ancestral(params, ps, sampler_steps, ckpt.schedule, ckpt.arch, rng);
                xs.insert(xs.end(), batch_xs.begin(), batch_xs.end());
                prompts.insert(prompts.end(), ps.begin(), ps.end());
            } catch (const std::runtime_error&) {
                // a perturbation that trips the divergence guard is maximally
                // off-concept; score the group as non-target instead of aborting
            }
        }
        double acc = xs.empty() ? 0.0
                                : paired_accuracy(map, xs, prompts, comparator) *
                                      static_cast<double>(xs.size()) / static_cast<double>(n);
        curve.push_back({level, acc});
    }
    return curve;
}

EvalReport full_report(const Checkpoint& ablated, const Checkpoint& pretrained,
                       const ConceptMap& map, const TaskSpec& task, const MetricConfig& cfg,
                       uint64_t seed, bool with_robustness) {
    if (cfg.samples_per_concept < 2)
        throw std::invalid_argument("full_report: need >= 2 samples per concept");
    bool same = ablated.config_hash == pretrained.config_hash;
    bool child = ablated.config.contains("parent") &&
                 ablated.config.at("parent").get<std::string>() == pretrained.config_hash;
    if (!same && !child)
        throw std::invalid_argument("full_report: checkpoints do not share config lineage");
    if (!map.has_concept(task.target) || !map.has_concept(task.anchor))
        throw std::invalid_argument("full_report: task concepts missing from map");

    EvalReport rep;
    rep.task = task.kind == TaskKind::Instance      ? "instance"
               : task.kind == TaskKind::Style       ? "style"
               : task.kind == TaskKind::Memorized   ? "memorized"
                                                    : "composition";
    rep.target = task.target;
    rep.anchor = task.anchor;
    rep.seed = seed;
    rep.ablated_hash = ablated.config_hash;
    rep.pretrained_hash = pretrained.config_hash;

    struct Entry {
        std::string name, role;
    };
    std::vector<Entry> entries;
    if (task.kind != TaskKind::Memorized) entries.push_back({task.target, "target"});
    entries.push_back({task.anchor, "anchor"});
    if (auto it = map.surrounding_of.find(task.target); it != map.surrounding_of.end())
        for (const std::string& s : it->second) entries.push_back({s, "surrounding"});

    int style_anchor_tok =
        map.has_concept(task.anchor) && map.spec(task.anchor).kind == ConceptKind::Style
            ? map.vocab.id(task.anchor)
            : 0;

    for (size_t ei = 0; ei < entries.size(); ++ei) {
        const Entry& e = entries[ei];
        RngStream prompt_rng(seed, 200 + ei);
        std::vector<Prompt> prompts = entry_prompts(map, e.name, cfg.samples_per_concept, prompt_rng);

        // Common random numbers: the same noise stream drives both chains, so
        // identical behavior yields near-zero MMD between the two sample sets.
        RngStream abl_rng(seed, 100 + ei);
        RngStream pre_rng(seed, 100 + ei);
        std::vector<Point> xs_abl = sample_ancestral(ablated.params, prompts, cfg.sampler_steps,
                                                     ablated.schedule, ablated.arch, abl_rng);
        std::vector<Point> xs_pre = sample_ancestral(pretrained.params, prompts, cfg.sampler_steps,
                                                     pretrained.schedule, pretrained.arch, pre_rng);

        std::function<Prompt(const Prompt&)> comparator;
        if (e.role == "target") {
            comparator = [&](const Prompt& p) { return anchor_version(map, task, p); };
        } else if (e.role == "anchor") {
            comparator = [&](const Prompt& p) { return target_version(map, task, p); };
        } else {
            bool styled = e.name.find('|') != std::string::npos ||
                          map.spec(e.name).kind == ConceptKind::Style;
            comparator = [&map, &task, styled, style_anchor_tok](const Prompt& p) {
                Prompt out = p;
                if (styled)
                    out.tok[2] = style_anchor_tok;
                else
                    out.tok[1] = map.vocab.id(task.anchor);
                return out;
            };
        }

        ConceptReport cr;
        cr.name = e.name;
        cr.role = e.role;
        cr.accuracy = paired_accuracy(map, xs_abl, prompts, comparator);
        cr.accuracy_pretrained = paired_accuracy(map, xs_pre, prompts, comparator);
        cr.score = paired_score(map, xs_abl, prompts);
        cr.score_pretrained = paired_score(map, xs_pre, prompts);
        RngStream mmd_rng(seed, 300 + ei);
        MmdTest mt = mmd_permutation_test(xs_abl, xs_pre, mmd_rng, cfg.mmd_permutations);
        cr.mmd2 = mt.observed;
        cr.mmd_null_q95 = mt.null_q95;
        cr.mmd_within_null = mt.within_null;
        rep.concepts.push_back(cr);
    }

    if (task.kind == TaskKind::Memorized) {
        const ConceptSpec& mem = map.spec(task.target);
        Prompt mem_prompt{{1, map.vocab.id(task.target), 0, 0}};
        RngStream abl_rng(seed, 400);
        RngStream pre_rng(seed, 401);
        rep.memorization_rate_ablated =
            memorization_rate(ablated, mem_prompt, cfg.samples_per_concept, cfg.sim_threshold,
                              mem.mem_point, cfg.sim_sigma, cfg.sampler_steps, abl_rng);
        rep.memorization_rate_pretrained =
            memorization_rate(pretrained, mem_prompt, cfg.samples_per_concept, cfg.sim_threshold,
                              mem.mem_point, cfg.sim_sigma, cfg.sampler_steps, pre_rng);
    }

    if (with_robustness && task.kind != TaskKind::Memorized) {
        RngStream rob_rng(seed, 500);
        rep.robustness = robustness_eval(ablated, map, task, cfg.robustness_levels,
                                         cfg.samples_per_concept, cfg.sampler_steps, rob_rng);
    }

    for (const ConceptReport& c : rep.concepts)
        if (!std::isfinite(c.accuracy) || !std::isfinite(c.score) || !std::isfinite(c.mmd2))
            throw std::runtime_error("full_report: non-finite metric for '" + c.name + "'");
    return rep;
}

json EvalReport::to_json() const {
    json concepts_j = json::array();
    for (const auto& c : concepts)
        concepts_j.push_back(json{{"name", c.name},
                                  {"role", c.role},
                                  {"accuracy", c.accuracy},
                                  {"accuracy_pretrained", c.accuracy_pretrained},
                                  {"score", c.score},
                                  {"score_pretrained", c.score_pretrained},
                                  {"mmd2", c.mmd2},
                                  {"mmd_null_q95", c.mmd_null_q95},
                                  {"mmd_within_null", c.mmd_within_null}});
    json rob_j = json::array();
    for (const auto& r : robustness)
        rob_j.push_back(json{{"level", r.level}, {"accuracy", r.accuracy}});
    return json{{"task", task},
                {"target", target},
                {"anchor", anchor},
                {"seed", seed},
                {"ablated_hash", ablated_hash},
                {"pretrained_hash", pretrained_hash},
                {"concepts", concepts_j},
                {"memorization_rate_ablated", memorization_rate_ablated},
                {"memorization_rate_pretrained", memorization_rate_pretrained},
                {"robustness", rob_j}};
}

EvalReport EvalReport::from_json(const json& j) {
    EvalReport r;
    r.task = j.at("task").get<std::string>();
    r.target = j.at("target").get<std::string>();
    r.anchor = j.at("anchor").get<std::string>();
    r.seed = j.at("seed").get<uint64_t>();
    r.ablated_hash = j.at("ablated_hash").get<std::string>();
    r.pretrained_hash = j.at("pretrained_hash").get<std::string>();
    for (const auto& cj : j.at("concepts")) {
        ConceptReport c;
        c.name = cj.at("name").get<std::string>();
        c.role = cj.at("role").get<std::string>();
        c.accuracy = cj.at("accuracy").get<double>();
        c.accuracy_pretrained = cj.at("accuracy_pretrained").get<double>();
        c.score = cj.at("score").get<double>();
        c.score_pretrained = cj.at("score_pretrained").get<double>();
        c.mmd2 = cj.at("mmd2").get<double>();
        c.mmd_null_q95 = cj.at("mmd_null_q95").get<double>();
        c.mmd_within_null = cj.at("mmd_within_null").get<bool>();
        r.concepts.push_back(c);
    }
    r.memorization_rate_ablated = j.at("memorization_rate_ablated").get<double>();
    r.memorization_rate_pretrained = j.at("memorization_rate_pretrained").get<double>();
    for (const auto& rj : j.at("robustness"))
        r.robustness.push_back({rj.at("level").get<double>(), rj.at("accuracy").get<double>()});
    return r;
}

std::string EvalReport::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "concept,metric,value\n";
    for (const auto& c : concepts) {
        os << c.name << ",accuracy," << c.accuracy << "\n";
        os << c.name << ",accuracy_pretrained," << c.accuracy_pretrained << "\n";
        os << c.name << ",score," << c.score << "\n";
        os << c.name << ",score_pretrained," << c.score_pretrained << "\n";
        os << c.name << ",mmd2," << c.mmd2 << "\n";
        os << c.name << ",mmd_null_q95," << c.mmd_null_q95 << "\n";
    }
    if (memorization_rate_ablated >= 0.0) {
        os << target << ",memorization_rate," << memorization_rate_ablated << "\n";
        os << target << ",memorization_rate_pretrained," << memorization_rate_pretrained << "\n";
    }
    for (const auto& r : robustness)
        os << target << ",robustness@" << r.level << "," << r.accuracy << "\n";
    return os.str();
}

}  // namespace ablate
