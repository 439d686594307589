#include "ablate/dataset.hpp"

#include <cmath>
#include <stdexcept>

namespace ablate {

using json = nlohmann::ordered_json;

double point_similarity(const Point& a, const Point& b, double sigma) {
    double dx = a[0] - b[0], dy = a[1] - b[1];
    return std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
}

void AblationDataset::validate(const ConceptMap& map) const {
    for (size_t i = 0; i < tuples.size(); ++i) {
        const AblationTuple& t = tuples[i];
        if (!std::isfinite(t.x[0]) || !std::isfinite(t.x[1]))
            throw std::runtime_error("dataset tuple " + std::to_string(i) + ": non-finite point");
        // c and cstar may differ only in the subject and style positions
        if (t.c.tok[0] != t.cstar.tok[0] || t.c.tok[3] != t.cstar.tok[3])
            throw std::runtime_error("dataset tuple " + std::to_string(i) +
                                     ": template/pad positions differ between c and c*");
        for (int tok : t.c.tok)
            if (tok < 0 || static_cast<size_t>(tok) >= map.vocab.size())
                throw std::runtime_error("dataset tuple " + std::to_string(i) + ": token out of range");
    }
}

json AblationDataset::to_json() const {
    json prov{{"checkpoint_hash", provenance.checkpoint_hash},
              {"seed", provenance.seed},
              {"sampler_steps", provenance.sampler_steps},
              {"task", provenance.task},
              {"target", provenance.target},
              {"anchor", provenance.anchor},
              {"sample_under", provenance.sample_under}};
    json tuples_j = json::array();
    for (const auto& t : tuples)
        tuples_j.push_back(json{{"x", {t.x[0], t.x[1]}},
                                {"c", t.c.tok},
                                {"cstar", t.cstar.tok}});
    return json{{"format", "ablate-dataset/1"}, {"provenance", prov}, {"tuples", tuples_j}};
}

AblationDataset AblationDataset::from_json(const json& j) {
    if (!j.contains("format") || j.at("format").get<std::string>() != "ablate-dataset/1")
        throw std::runtime_error("dataset: unknown format string");
    AblationDataset d;
    const json& prov = j.at("provenance");
    d.provenance.checkpoint_hash = prov.at("checkpoint_hash").get<std::string>();
    d.provenance.seed = prov.at("seed").get<uint64_t>();
    d.provenance.sampler_steps = prov.at("sampler_steps").get<int>();
    d.provenance.task = prov.at("task").get<std::string>();
    d.provenance.target = prov.at("target").get<std::string>();
    d.provenance.anchor = prov.at("anchor").get<std::string>();
    d.provenance.sample_under = prov.at("sample_under").get<std::string>();
    for (const auto& tj : j.at("tuples")) {
        AblationTuple t;
        t.x = {tj.at("x")[0].get<double>(), tj.at("x")[1].get<double>()};
        for (size_t i = 0; i < kPromptLen; ++i) {
            t.c.tok[i] = tj.at("c")[i].get<int>();
            t.cstar.tok[i] = tj.at("cstar")[i].get<int>();
        }
        d.tuples.push_back(t);
    }
    return d;
}

namespace {

std::string task_kind_str(TaskKind k) {
    switch (k) {
        case TaskKind::Instance: return "instance";
        case TaskKind::Style: return "style";
        case TaskKind::Memorized: return "memorized";
        case TaskKind::Composition: return "composition";
    }
    return "?";
}

}  // namespace

AblationDataset build_ablation_dataset(const Checkpoint& ckpt, const ConceptMap& map,
                                       const TaskSpec& task, size_t n, int steps, uint64_t seed,
                                       bool sample_under_target, size_t template_pool) {
    if (n < 1) throw std::invalid_argument("build_ablation_dataset: n must be >= 1");
    RngStream prompt_rng = RngStream(seed, 10);
    RngStream sample_rng = RngStream(seed, 11);

    std::vector<Prompt> anchors = make_prompts(map, task.anchor, n, prompt_rng, template_pool);
    std::vector<Prompt> targets;
    targets.reserve(n);
    for (const Prompt& c : anchors) targets.push_back(to_target_prompt(map, c, task));

    const std::vector<Prompt>& gen_prompts = sample_under_target ? targets : anchors;
    std::vector<Point> xs =
        sample_ancestral(ckpt.params, gen_prompts, steps, ckpt.schedule, ckpt.arch, sample_rng);

    AblationDataset d;
    d.provenance = {ckpt.config_hash, seed, steps, task_kind_str(task.kind),
                    task.target, task.anchor, sample_under_target ? "target" : "anchor"};
    for (size_t i = 0; i < n; ++i) d.tuples.push_back({xs[i], anchors[i], targets[i]});
    d.validate(map);
    return d;
}

AblationDataset build_memorization_dataset(const Checkpoint& ckpt, const ConceptMap& map,
                                           const std::string& mem_concept, size_t n, uint64_t seed,
                                           double sim_sigma, double sim_threshold, int steps) {
    const ConceptSpec& mem = map.spec(mem_concept);
    if (mem.kind != ConceptKind::Memorized)
        throw std::invalid_argument("'" + mem_concept + "' is not a memorized concept");
    auto anchor_it = map.anchor_of.find(mem_concept);
    if (anchor_it == map.anchor_of.end())
        throw std::invalid_argument("memorized concept '" + mem_concept + "' has no anchor");

    // Paraphrase pool of 16 templates: the first 4 are target-side variants
    // (the ones pretrained against the memorized point), the next 10 anchor-side.
    int mem_tok = map.vocab.id(mem_concept);
    int anchor_tok = map.vocab.id(anchor_it->second);
    std::vector<Prompt> target_pool, anchor_pool;
    for (int i = 0; i < 4; ++i) target_pool.push_back(Prompt{{1 + i, mem_tok, 0, 0}});
    for (int i = 4; i < 14; ++i) anchor_pool.push_back(Prompt{{1 + i, anchor_tok, 0, 0}});

    RngStream rng = RngStream(seed, 12);
    AblationDataset d;
    d.provenance = {ckpt.config_hash, seed, steps, "memorized",
                    mem_concept, anchor_it->second, "anchor"};

    size_t attempts = 0, filtered = 0;
    const size_t max_attempts = 4 * n + 64;
    while (d.tuples.size() < n && attempts < max_attempts) {
        size_t batch = std::min<size_t>(n - d.tuples.size(), 256);
        std::vector<Prompt> cs;
        for (size_t i = 0; i < batch; ++i)
            cs.push_back(anchor_pool[rng.uniform_int(anchor_pool.size())]);
        std::vector<Point> xs =
            sample_ancestral(ckpt.params, cs, steps, ckpt.schedule, ckpt.arch, rng);
        for (size_t i = 0; i < batch; ++i) {
            ++attempts;
            if (point_similarity(xs[i], mem.mem_point, sim_sigma) >= sim_threshold) {
                ++filtered;
                continue;
            }
            Prompt cstar = target_pool[rng.uniform_int(target_pool.size())];
            cstar.tok[0] = cs[i].tok[0];  // keep template position aligned with c
            d.tuples.push_back({xs[i], cs[i], cstar});
        }
        if (attempts >= 64 && filtered * 10 > attempts * 9)
            throw std::runtime_error(
                "build_memorization_dataset: anchor prompts also memorized (>90% filtered)");
    }
    if (d.tuples.size() < n)
        throw std::runtime_error("build_memorization_dataset: could not collect enough samples");
    d.validate(map);
    return d;
}

AblationDataset build_composition_dataset(const Checkpoint& ckpt, const ConceptMap& map,
                                          const std::string& comp_concept, size_t n, int steps,
                                          uint64_t seed) {
    const ConceptSpec& comp = map.spec(comp_concept);
    if (comp.kind != ConceptKind::Composition)
        throw std::invalid_argument("'" + comp_concept + "' is not a composition concept");
    if (!map.has_concept(comp.comp_subject) || !map.has_concept(comp.comp_style))
        throw std::invalid_argument("composition components are not independently generable");

    TaskSpec task{TaskKind::Composition, comp_concept, comp.comp_subject};
    AblationDataset d = build_ablation_dataset(ckpt, map, task, n, steps, seed);
    d.provenance.task = "composition";

    // Identity tuples on the style marginal (other subjects with the composed
    // style): their ablation term is zero, so they act as pure regularization.
    RngStream rng = RngStream(seed, 13);
    int style_tok = map.vocab.id(comp.comp_style);
    std::vector<std::string> others;
    for (const std::string& s : map.anchor_subjects())
        if (s != comp.comp_subject) others.push_back(s);
    if (!others.empty()) {
        size_t extra = n / 2;
        std::vector<Prompt> cs;
        for (size_t i = 0; i < extra; ++i) {
            Prompt p;
            p.tok[0] = 1 + static_cast<int>(rng.uniform_int(kDefaultTemplatePool));
            p.tok[1] = map.vocab.id(others[rng.uniform_int(others.size())]);
            p.tok[2] = style_tok;
            cs.push_back(p);
        }
        std::vector<Point> xs =
            sample_ancestral(ckpt.params, cs, steps, ckpt.schedule, ckpt.arch, rng);
        for (size_t i = 0; i < extra; ++i) d.tuples.push_back({xs[i], cs[i], cs[i]});
    }
    d.validate(map);
    return d;
}

}  // namespace ablate
