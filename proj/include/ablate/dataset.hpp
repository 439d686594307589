#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "ablate/concepts.hpp"
#include "ablate/diffusion.hpp"

namespace ablate {

struct AblationTuple {
    Point x{0.0, 0.0};
    Prompt c;      // anchor prompt
    Prompt cstar;  // target prompt
};

struct DatasetProvenance {
    std::string checkpoint_hash;
    uint64_t seed = 0;
    int sampler_steps = 0;
    std::string task;         // "instance" | "style" | "memorized" | "composition"
    std::string target;
    std::string anchor;
    std::string sample_under; // "anchor" | "target"
};

struct AblationDataset {
    DatasetProvenance provenance;
    std::vector<AblationTuple> tuples;

    void validate(const ConceptMap& map) const;

    nlohmann::ordered_json to_json() const;
    static AblationDataset from_json(const nlohmann::ordered_json& j);
};

constexpr int kDatasetSamplerSteps = 200;

// x generated from the checkpoint under the anchor prompt (or the target
// prompt when sample_under_target is set, for reverse-KL / baseline arms).
AblationDataset build_ablation_dataset(const Checkpoint& ckpt, const ConceptMap& map,
                                       const TaskSpec& task, size_t n, int steps, uint64_t seed,
                                       bool sample_under_target = false,
                                       size_t template_pool = kDefaultTemplatePool);

// Memorization task: 4 target-side prompt variants, 10 anchor-side, drawn from
// a fixed 16-template paraphrase pool; anchor samples too close to the
// memorized point are filtered out.
AblationDataset build_memorization_dataset(const Checkpoint& ckpt, const ConceptMap& map,
                                           const std::string& mem_concept, size_t n, uint64_t seed,
                                           double sim_sigma, double sim_threshold,
                                           int steps = kDatasetSamplerSteps);

// Composition task: composed prompt mapped to the subject-only distribution,
// with extra identity tuples (cstar == c) regularizing both marginals.
AblationDataset build_composition_dataset(const Checkpoint& ckpt, const ConceptMap& map,
                                          const std::string& comp_concept, size_t n, int steps,
                                          uint64_t seed);

double point_similarity(const Point& a, const Point& b, double sigma);

}  // namespace ablate
