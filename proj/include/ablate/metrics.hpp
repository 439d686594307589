#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "ablate/ablation.hpp"
#include "ablate/dataset.hpp"

namespace ablate {

struct MetricConfig {
    size_t samples_per_concept = 200;
    int sampler_steps = 50;
    double sim_sigma = 0.05;       // 5x the memorized jitter
    double sim_threshold = 0.5;
    std::vector<double> robustness_levels{0.0, 0.1, 0.2, 0.3};  // relative to ||embedding||
    int mmd_permutations = 200;

    nlohmann::ordered_json to_json() const;
    static MetricConfig from_json(const nlohmann::ordered_json& j);
};

// Bayes-classifier accuracy: fraction of samples with higher likelihood under
// `a` than under `b` (ties split evenly, so acc(A,B) + acc(B,A) == 1 exactly).
double concept_accuracy(const std::vector<Point>& samples, const Mixture2& a, const Mixture2& b);

// Mean log-likelihood in nats.
double concept_score(const std::vector<Point>& samples, const Mixture2& density);

// Unbiased MMD^2 with the cubic polynomial kernel k(x,y) = (x.y/2 + 1)^3,
// computed through the kernel's explicit 10-dimensional feature map.
double mmd_poly(const std::vector<Point>& a, const std::vector<Point>& b);

struct MmdTest {
    double observed = 0.0;
    double null_q95 = 0.0;
    bool within_null = false;
};

MmdTest mmd_permutation_test(const std::vector<Point>& a, const std::vector<Point>& b,
                             RngStream& rng, int permutations);

double similarity(const Point& x, const Point& mem_point, double sigma);

double memorization_rate(const Checkpoint& ckpt, const Prompt& mem_prompt, size_t n,
                         double threshold, const Point& mem_point, double sim_sigma,
                         int sampler_steps, RngStream& rng);

struct RobustnessPoint {
    double level = 0.0;     // noise std as a fraction of the embedding norm
    double accuracy = 0.0;  // target-vs-anchor accuracy under the perturbed prompt
};

std::vector<RobustnessPoint> robustness_eval(const Checkpoint& ckpt, const ConceptMap& map,
                                             const TaskSpec& task,
                                             const std::vector<double>& levels, size_t n,
                                             int sampler_steps, RngStream& rng);

struct ConceptReport {
    std::string name;
    std::string role;  // "target" | "anchor" | "surrounding"
    double accuracy = 0.0;
    double accuracy_pretrained = 0.0;
    double score = 0.0;
    double score_pretrained = 0.0;
    double mmd2 = 0.0;
    double mmd_null_q95 = 0.0;
    bool mmd_within_null = false;
};

struct EvalReport {
    std::string task;
    std::string target, anchor;
    uint64_t seed = 0;
    std::string ablated_hash, pretrained_hash;
    std::vector<ConceptReport> concepts;
    double memorization_rate_ablated = -1.0;    // -1 = not measured
    double memorization_rate_pretrained = -1.0;
    std::vector<RobustnessPoint> robustness;    // empty = not measured

    nlohmann::ordered_json to_json() const;
    static EvalReport from_json(const nlohmann::ordered_json& j);
    std::string to_csv() const;  // one row per (concept_name, metric)
};

EvalReport full_report(const Checkpoint& ablated, const Checkpoint& pretrained,
                       const ConceptMap& map, const TaskSpec& task, const MetricConfig& cfg,
                       uint64_t seed, bool with_robustness = false);

}  // namespace ablate
