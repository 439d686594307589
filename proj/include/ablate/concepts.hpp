#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ablate/gaussian.hpp"
#include "ablate/rng.hpp"

namespace ablate {

constexpr size_t kPromptLen = 4;

enum class TokenRole { Pad, Template, Subject, Style };

struct Vocab {
    std::vector<std::string> names;
    std::vector<TokenRole> roles;

    size_t size() const { return names.size(); }
    int id(const std::string& name) const;        // throws on unknown token
    bool has(const std::string& name) const;
    std::vector<int> ids_with_role(TokenRole r) const;
};

// [template, subject, style-or-pad, pad]
struct Prompt {
    std::array<int, kPromptLen> tok{0, 0, 0, 0};

    bool operator==(const Prompt&) const = default;
    bool operator<(const Prompt& o) const { return tok < o.tok; }
};

enum class ConceptKind { Instance, Style, Memorized, Composition };

struct ConceptSpec {
    std::string name;
    ConceptKind kind = ConceptKind::Instance;

    Mixture2 density;  // instance kind

    double style_angle = 0.0;   // style kind: x -> R(angle) diag(s, 1/s) R(angle)^T x
    double style_aniso = 1.0;   // axis-scaling ratio s^2 : 1/s^2 reads as aniso : 1

    Point mem_point{0.0, 0.0};  // memorized kind
    double mem_jitter = 0.0;

    std::string comp_subject, comp_style;  // composition kind

    Mat2 style_matrix() const;  // style kind only
};

struct ConceptMap {
    Vocab vocab;
    std::vector<ConceptSpec> specs;
    std::map<std::string, std::string> anchor_of;                  // target -> anchor
    std::map<std::string, std::vector<std::string>> surrounding_of;

    const ConceptSpec& spec(const std::string& name) const;
    bool has_concept(const std::string& name) const;

    // Analytic density for "subject" or the styled composite "subject|style".
    Mixture2 density(const std::string& name) const;

    // Subjects usable as anchor-side prompt subjects (instance kind, not a target).
    std::vector<std::string> anchor_subjects() const;

    nlohmann::ordered_json to_json() const;
    static ConceptMap from_json(const nlohmann::ordered_json& j);
};

ConceptMap default_concept_map();
// Default map plus a second, disjoint instance family; used for multi-concept runs.
ConceptMap two_family_concept_map();

enum class TaskKind { Instance, Style, Memorized, Composition };

struct TaskSpec {
    TaskKind kind = TaskKind::Instance;
    std::string target;  // concept to ablate (subject, style, or composition name)
    std::string anchor;  // concept that overwrites it
};

// 8 templates by default; shrinking the pool models prompt-diversity sweeps.
constexpr size_t kDefaultTemplatePool = 8;
constexpr size_t kMaxTemplatePool = 16;

Point sample_truth(const ConceptMap& map, const std::string& concept_name, RngStream& rng);
std::vector<Point> sample_truth(const ConceptMap& map, const std::string& concept_name, size_t n,
                                RngStream& rng);

std::vector<Prompt> make_prompts(const ConceptMap& map, const std::string& concept_name, size_t n,
                                 RngStream& rng, size_t template_pool = kDefaultTemplatePool);

Prompt to_target_prompt(const ConceptMap& map, const Prompt& c, const TaskSpec& task);

// Ground-truth density the prompt's (subject, style) slots describe.
Mixture2 prompt_density(const ConceptMap& map, const Prompt& p);
bool prompt_is_memorized(const ConceptMap& map, const Prompt& p);

std::string prompt_str(const ConceptMap& map, const Prompt& p);

}  // namespace ablate
