#include "ablate/concepts.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ablate {

namespace {

constexpr double kDeg = M_PI / 180.0;

std::string role_str(TokenRole r) {
    switch (r) {
        case TokenRole::Pad: return "pad";
        case TokenRole::Template: return "template";
        case TokenRole::Subject: return "subject";
        case TokenRole::Style: return "style";
    }
    return "?";
}

TokenRole role_from_str(const std::string& s) {
    if (s == "pad") return TokenRole::Pad;
    if (s == "template") return TokenRole::Template;
    if (s == "subject") return TokenRole::Subject;
    if (s == "style") return TokenRole::Style;
    throw std::invalid_argument("unknown token role '" + s + "'");
}

std::string kind_str(ConceptKind k) {
    switch (k) {
        case ConceptKind::Instance: return "instance";
        case ConceptKind::Style: return "style";
        case ConceptKind::Memorized: return "memorized";
        case ConceptKind::Composition: return "composition";
    }
    return "?";
}

ConceptKind kind_from_str(const std::string& s) {
    if (s == "instance") return ConceptKind::Instance;
    if (s == "style") return ConceptKind::Style;
    if (s == "memorized") return ConceptKind::Memorized;
    if (s == "composition") return ConceptKind::Composition;
    throw std::invalid_argument("unknown concept kind '" + s + "'");
}

}  // namespace

int Vocab::id(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<int>(i);
    throw std::invalid_argument("unknown token '" + name + "'");
}

bool Vocab::has(const std::string& name) const {
    return std::find(names.begin(), names.end(), name) != names.end();
}

std::vector<int> Vocab::ids_with_role(TokenRole r) const {
    std::vector<int> out;
    for (size_t i = 0; i < roles.size(); ++i)
        if (roles[i] == r) out.push_back(static_cast<int>(i));
    return out;
}

Mat2 ConceptSpec::style_matrix() const {
    double s = std::sqrt(style_aniso);
    Mat2 rot = rotation2(style_angle);
    Mat2 diag{s, 0.0, 0.0, 1.0 / s};
    return mat2_mul(mat2_mul(rot, diag), mat2_transpose(rot));
}

const ConceptSpec& ConceptMap::spec(const std::string& name) const {
    for (const auto& s : specs)
        if (s.name == name) return s;
    throw std::invalid_argument("unknown concept '" + name + "'");
}

bool ConceptMap::has_concept(const std::string& name) const {
    for (const auto& s : specs)
        if (s.name == name) return true;
    return false;
}

Mixture2 ConceptMap::density(const std::string& name) const {
    auto bar = name.find('|');
    if (bar != std::string::npos) {
        Mixture2 base = density(name.substr(0, bar));
        const ConceptSpec& style = spec(name.substr(bar + 1));
        if (style.kind != ConceptKind::Style)
            throw std::invalid_argument("'" + name.substr(bar + 1) + "' is not a style concept");
        return base.linear_map(style.style_matrix());
    }
    const ConceptSpec& s = spec(name);
    switch (s.kind) {
        case ConceptKind::Instance:
            return s.density;
        case ConceptKind::Memorized: {
            double sigma = std::max(s.mem_jitter, 1e-6);
            Mixture2 m;
            m.weights = {1.0};
            m.comps = {Gauss2::isotropic(s.mem_point, sigma)};
            return m;
        }
        case ConceptKind::Composition:
            return density(s.comp_subject + "|" + s.comp_style);
        case ConceptKind::Style:
            throw std::invalid_argument("style concept '" + name +
                                        "' has no standalone density; use 'subject|style'");
    }
    throw std::logic_error("unreachable");
}

std::vector<std::string> ConceptMap::anchor_subjects() const {
    std::vector<std::string> out;
    for (const auto& s : specs)
        if (s.kind == ConceptKind::Instance && !anchor_of.count(s.name)) out.push_back(s.name);
    return out;
}

namespace {

void add_family(ConceptMap& map, const std::string& anchor_name, const std::string& target_name,
                const std::vector<std::string>& surrounding_names, Point center, double radius,
                double sigma) {
    // Anchor is a 4-component ring; target is the component at 90 degrees,
    // the surrounding concepts are the remaining three, in angle order 0, 180, 270.
    // The target component carries only 10% of the anchor mass: an ablated model
    // that reproduces the anchor conditional then scores ~0.1 target accuracy
    // instead of the 0.25 an equal-weight ring would force.
    const double angles[4] = {0.0, 90.0, 180.0, 270.0};
    Mixture2 ring;
    std::vector<Gauss2> comps;
    for (double a : angles) {
        Point m{center[0] + radius * std::cos(a * kDeg), center[1] + radius * std::sin(a * kDeg)};
        comps.push_back(Gauss2::isotropic(m, sigma));
    }
    ring.weights = {0.3, 0.1, 0.3, 0.3};
    ring.comps = comps;

    auto single = [](const Gauss2& g) {
        Mixture2 m;
        m.weights = {1.0};
        m.comps = {g};
        return m;
    };

    auto instance = [&map](const std::string& name, Mixture2 density) {
        ConceptSpec s;
        s.name = name;
        s.kind = ConceptKind::Instance;
        s.density = std::move(density);
        map.specs.push_back(std::move(s));
    };
    instance(anchor_name, ring);
    instance(target_name, single(comps[1]));
    instance(surrounding_names[0], single(comps[0]));
    instance(surrounding_names[1], single(comps[2]));
    instance(surrounding_names[2], single(comps[3]));
    map.anchor_of[target_name] = anchor_name;
    map.surrounding_of[target_name] = surrounding_names;
}

void finish_vocab(ConceptMap& map) {
    Vocab& v = map.vocab;
    v.names = {"<pad>"};
    v.roles = {TokenRole::Pad};
    for (size_t i = 0; i < kMaxTemplatePool; ++i) {
        v.names.push_back("tmpl" + std::string(i < 10 ? "0" : "") + std::to_string(i));
        v.roles.push_back(TokenRole::Template);
    }
    for (const auto& s : map.specs) {
        if (s.kind == ConceptKind::Instance || s.kind == ConceptKind::Memorized) {
            v.names.push_back(s.name);
            v.roles.push_back(TokenRole::Subject);
        } else if (s.kind == ConceptKind::Style) {
            v.names.push_back(s.name);
            v.roles.push_back(TokenRole::Style);
        }
    }
}

}  // namespace

ConceptMap default_concept_map() {
    ConceptMap map;
    add_family(map, "cat", "grumpy", {"tabby", "persian", "siamese"}, {0.0, 0.0}, 1.0, 0.15);

    auto style = [&map](const std::string& name, double angle, double aniso) {
        ConceptSpec s;
        s.name = name;
        s.kind = ConceptKind::Style;
        s.style_angle = angle;
        s.style_aniso = aniso;
        map.specs.push_back(std::move(s));
    };
    style("plain", 0.0, 1.0);
    style("vangogh", 45.0 * kDeg, 4.0);
    style("monet", -30.0 * kDeg, 2.0);
    map.anchor_of["vangogh"] = "plain";
    map.surrounding_of["vangogh"] = {"monet"};

    ConceptSpec mem;
    mem.name = "mem";
    mem.kind = ConceptKind::Memorized;
    mem.mem_point = {1.5, 1.5};
    mem.mem_jitter = 0.01;
    map.specs.push_back(mem);
    map.anchor_of["mem"] = "cat";
    map.surrounding_of["mem"] = {"tabby", "persian", "siamese"};

    ConceptSpec comp;
    comp.name = "cat_vangogh";
    comp.kind = ConceptKind::Composition;
    comp.comp_subject = "cat";
    comp.comp_style = "vangogh";
    map.specs.push_back(comp);
    map.anchor_of["cat_vangogh"] = "cat";
    map.surrounding_of["cat_vangogh"] = {"tabby|vangogh", "persian|vangogh"};

    finish_vocab(map);
    return map;
}

ConceptMap two_family_concept_map() {
    ConceptMap map = default_concept_map();
    ConceptMap extra;
    add_family(extra, "dog", "rex", {"husky", "beagle", "collie"}, {3.5, 0.0}, 1.0, 0.15);
    for (auto& s : extra.specs) map.specs.push_back(s);
    for (auto& [k, v] : extra.anchor_of) map.anchor_of[k] = v;
    for (auto& [k, v] : extra.surrounding_of) map.surrounding_of[k] = v;
    map.vocab = {};
    finish_vocab(map);
    return map;
}

Point sample_truth(const ConceptMap& map, const std::string& concept_name, RngStream& rng) {
    if (concept_name.find('|') == std::string::npos) {
        const ConceptSpec& s = map.spec(concept_name);
        if (s.kind == ConceptKind::Memorized) {
            // jitter 0 reproduces the memorized point exactly
            double dx = s.mem_jitter > 0.0 ? s.mem_jitter * rng.normal() : 0.0;
            double dy = s.mem_jitter > 0.0 ? s.mem_jitter * rng.normal() : 0.0;
            return {s.mem_point[0] + dx, s.mem_point[1] + dy};
        }
    }
    return map.density(concept_name).sample(rng);
}

std::vector<Point> sample_truth(const ConceptMap& map, const std::string& concept_name, size_t n,
                                RngStream& rng) {
    if (n < 1) throw std::invalid_argument("sample_truth: n must be >= 1");
    std::vector<Point> out;
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) out.push_back(sample_truth(map, concept_name, rng));
    return out;
}

std::vector<Prompt> make_prompts(const ConceptMap& map, const std::string& concept_name, size_t n,
                                 RngStream& rng, size_t template_pool) {
    if (!map.has_concept(concept_name)) throw std::invalid_argument("unknown concept '" + concept_name + "'");
    if (template_pool < 1 || template_pool > kMaxTemplatePool)
        throw std::invalid_argument("template pool must be in [1, " +
                                    std::to_string(kMaxTemplatePool) + "]");
    const ConceptSpec& s = map.spec(concept_name);
    const Vocab& v = map.vocab;
    int pad = 0;
    std::vector<std::string> subjects = map.anchor_subjects();

    std::vector<Prompt> out;
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        Prompt p;
        p.tok[0] = 1 + static_cast<int>(rng.uniform_int(template_pool));  // templates start at id 1
        p.tok[3] = pad;
        switch (s.kind) {
            case ConceptKind::Instance:
            case ConceptKind::Memorized:
                p.tok[1] = v.id(concept_name);
                p.tok[2] = pad;
                break;
            case ConceptKind::Style:
                p.tok[1] = v.id(subjects[rng.uniform_int(subjects.size())]);
                p.tok[2] = v.id(concept_name);
                break;
            case ConceptKind::Composition:
                p.tok[1] = v.id(s.comp_subject);
                p.tok[2] = v.id(s.comp_style);
                break;
        }
        out.push_back(p);
    }
    return out;
}

Prompt to_target_prompt(const ConceptMap& map, const Prompt& c, const TaskSpec& task) {
    const Vocab& v = map.vocab;
    Prompt out = c;
    switch (task.kind) {
        case TaskKind::Instance: {
            int target = v.id(task.target);
            int anchor = v.id(task.anchor);
            for (int t : c.tok)
                if (t == target)
                    throw std::invalid_argument("prompt already contains target token '" +
                                                task.target + "'");
            if (c.tok[1] != anchor)
                throw std::invalid_argument("prompt subject is not the anchor '" + task.anchor + "'");
            out.tok[1] = target;
            break;
        }
        case TaskKind::Style: {
            int target = v.id(task.target);
            if (c.tok[2] == target)
                throw std::invalid_argument("prompt already contains target style '" + task.target +
                                            "'");
            out.tok[2] = target;
            break;
        }
        case TaskKind::Composition: {
            const ConceptSpec& comp = map.spec(task.target);
            if (comp.kind != ConceptKind::Composition)
                throw std::invalid_argument("'" + task.target + "' is not a composition concept");
            int style = v.id(comp.comp_style);
            if (c.tok[2] == style)
                throw std::invalid_argument("prompt already contains composed style '" +
                                            comp.comp_style + "'");
            out.tok[1] = v.id(comp.comp_subject);
            out.tok[2] = style;
            break;
        }
        case TaskKind::Memorized:
            throw std::invalid_argument(
                "memorized targets use build_memorization_dataset, not to_target_prompt");
    }
    return out;
}

Mixture2 prompt_density(const ConceptMap& map, const Prompt& p) {
    const Vocab& v = map.vocab;
    std::string subject = v.names.at(static_cast<size_t>(p.tok[1]));
    if (v.roles.at(static_cast<size_t>(p.tok[1])) != TokenRole::Subject)
        throw std::invalid_argument("prompt has no subject token");
    int st = p.tok[2];
    if (st != 0 && v.roles.at(static_cast<size_t>(st)) == TokenRole::Style) {
        const std::string& style = v.names.at(static_cast<size_t>(st));
        return map.density(subject + "|" + style);
    }
    return map.density(subject);
}

bool prompt_is_memorized(const ConceptMap& map, const Prompt& p) {
    const Vocab& v = map.vocab;
    size_t id = static_cast<size_t>(p.tok[1]);
    if (id >= v.size() || v.roles[id] != TokenRole::Subject) return false;
    return map.has_concept(v.names[id]) && map.spec(v.names[id]).kind == ConceptKind::Memorized;
}

std::string prompt_str(const ConceptMap& map, const Prompt& p) {
    std::string s;
    for (size_t i = 0; i < kPromptLen; ++i) {
        if (i) s += " ";
        s += map.vocab.names.at(static_cast<size_t>(p.tok[i]));
    }
    return s;
}

// --- JSON --------------------------------------------------------------

nlohmann::ordered_json ConceptMap::to_json() const {
    using json = nlohmann::ordered_json;
    json j;
    json vocab_j;
    for (size_t i = 0; i < vocab.size(); ++i)
        vocab_j.push_back({{"name", vocab.names[i]}, {"role", role_str(vocab.roles[i])}});
    j["vocab"] = vocab_j;

    json specs_j = json::array();
    for (const auto& s : specs) {
        json sj;
        sj["name"] = s.name;
        sj["kind"] = kind_str(s.kind);
        switch (s.kind) {
            case ConceptKind::Instance: {
                json comps = json::array();
                for (size_t i = 0; i < s.density.comps.size(); ++i) {
                    const Gauss2& g = s.density.comps[i];
                    comps.push_back({{"weight", s.density.weights[i]},
                                     {"mean", {g.mean[0], g.mean[1]}},
                                     {"cov", {g.cov[0], g.cov[1], g.cov[2], g.cov[3]}}});
                }
                sj["mixture"] = comps;
                break;
            }
            case ConceptKind::Style:
                sj["angle"] = s.style_angle;
                sj["anisotropy"] = s.style_aniso;
                break;
            case ConceptKind::Memorized:
                sj["point"] = {s.mem_point[0], s.mem_point[1]};
                sj["jitter"] = s.mem_jitter;
                break;
            case ConceptKind::Composition:
                sj["subject"] = s.comp_subject;
                sj["style"] = s.comp_style;
                break;
        }
        specs_j.push_back(sj);
    }
    j["concepts"] = specs_j;
    j["anchors"] = anchor_of;
    j["surrounding"] = surrounding_of;
    return j;
}

ConceptMap ConceptMap::from_json(const nlohmann::ordered_json& j) {
    ConceptMap map;
    for (const auto& t : j.at("vocab")) {
        map.vocab.names.push_back(t.at("name").get<std::string>());
        map.vocab.roles.push_back(role_from_str(t.at("role").get<std::string>()));
    }
    for (const auto& sj : j.at("concepts")) {
        ConceptSpec s;
        s.name = sj.at("name").get<std::string>();
        s.kind = kind_from_str(sj.at("kind").get<std::string>());
        switch (s.kind) {
            case ConceptKind::Instance:
                for (const auto& cj : sj.at("mixture")) {
                    Gauss2 g;
                    g.mean = {cj.at("mean")[0].get<double>(), cj.at("mean")[1].get<double>()};
                    for (int i = 0; i < 4; ++i) g.cov[static_cast<size_t>(i)] = cj.at("cov")[static_cast<size_t>(i)].get<double>();
                    s.density.weights.push_back(cj.at("weight").get<double>());
                    s.density.comps.push_back(g);
                }
                s.density.validate();
                break;
            case ConceptKind::Style:
                s.style_angle = sj.at("angle").get<double>();
                s.style_aniso = sj.at("anisotropy").get<double>();
                break;
            case ConceptKind::Memorized:
                s.mem_point = {sj.at("point")[0].get<double>(), sj.at("point")[1].get<double>()};
                s.mem_jitter = sj.at("jitter").get<double>();
                break;
            case ConceptKind::Composition:
                s.comp_subject = sj.at("subject").get<std::string>();
                s.comp_style = sj.at("style").get<std::string>();
                break;
        }
        map.specs.push_back(std::move(s));
    }
    map.anchor_of = j.at("anchors").get<std::map<std::string, std::string>>();
    map.surrounding_of =
        j.at("surrounding").get<std::map<std::string, std::vector<std::string>>>();
    return map;
}

}  // namespace ablate
