// Thin python surface over the core library. Structured results cross the
// boundary as JSON strings; the package wrapper parses them into dicts.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ablate/metrics.hpp"

namespace py = pybind11;
using namespace ablate;

namespace {

Checkpoint checkpoint_from_json(const std::string& s) {
    return Checkpoint::from_json(nlohmann::ordered_json::parse(s));
}

AblationDataset dataset_from_json(const std::string& s) {
    return AblationDataset::from_json(nlohmann::ordered_json::parse(s));
}

TaskSpec make_task(const std::string& kind, const std::string& target,
                   const std::string& anchor) {
    TaskKind k;
    if (kind == "instance") k = TaskKind::Instance;
    else if (kind == "style") k = TaskKind::Style;
    else if (kind == "memorized") k = TaskKind::Memorized;
    else if (kind == "composition") k = TaskKind::Composition;
    else throw std::invalid_argument("unknown task kind '" + kind + "'");
    return TaskSpec{k, target, anchor};
}

}  // namespace

PYBIND11_MODULE(_ablate, m) {
    m.doc() = "concept ablation for conditional denoising diffusion models";

    py::class_<ConceptMap>(m, "ConceptMap")
        .def("to_json", [](const ConceptMap& c) { return c.to_json().dump(); })
        .def_static("from_json",
                    [](const std::string& s) {
                        return ConceptMap::from_json(nlohmann::ordered_json::parse(s));
                    })
        .def("has_concept", &ConceptMap::has_concept)
        .def("anchor_subjects", &ConceptMap::anchor_subjects);

    m.def("default_concept_map", &default_concept_map);
    m.def("two_family_concept_map", &two_family_concept_map);

    py::class_<Checkpoint>(m, "Checkpoint")
        .def("to_json", [](const Checkpoint& c) { return c.to_json().dump(); })
        .def_static("from_json", &checkpoint_from_json)
        .def_property_readonly("config_hash",
                               [](const Checkpoint& c) { return c.config_hash; });

    py::class_<AblationDataset>(m, "AblationDataset")
        .def("to_json", [](const AblationDataset& d) { return d.to_json().dump(); })
        .def_static("from_json", &dataset_from_json)
        .def("__len__", [](const AblationDataset& d) { return d.tuples.size(); });

    m.def(
        "pretrain",
        [](const ConceptMap& map, uint64_t seed, long steps, size_t batch, double lr,
           bool memorize) {
            PretrainConfig cfg;
            cfg.steps = steps;
            cfg.batch = batch;
            cfg.lr = lr;
            cfg.memorize = memorize;
            return pretrain(map, cfg, seed);
        },
        py::arg("map"), py::arg("seed"), py::arg("steps") = 5000, py::arg("batch") = 64,
        py::arg("lr") = 2e-3, py::arg("memorize") = false,
        py::call_guard<py::gil_scoped_release>());

    m.def(
        "build_dataset",
        [](const Checkpoint& ckpt, const ConceptMap& map, const std::string& kind,
           const std::string& target, const std::string& anchor, size_t n, uint64_t seed) {
            TaskSpec task = make_task(kind, target, anchor);
            switch (task.kind) {
                case TaskKind::Memorized:
                    return build_memorization_dataset(ckpt, map, target, n, seed, 0.05, 0.5);
                case TaskKind::Composition:
                    return build_composition_dataset(ckpt, map, target, n, kDatasetSamplerSteps,
                                                     seed);
                default:
                    return build_ablation_dataset(ckpt, map, task, n, kDatasetSamplerSteps, seed);
            }
        },
        py::arg("checkpoint"), py::arg("map"), py::arg("kind"), py::arg("target"),
        py::arg("anchor"), py::arg("n") = 1000, py::arg("seed") = 1,
        py::call_guard<py::gil_scoped_release>());

    m.def(
        "ablate",
        [](const Checkpoint& ckpt, const AblationDataset& data, const std::string& objective,
           const std::string& subset, double lam, long steps, size_t batch, double lr,
           uint64_t seed) {
            Objective obj;
            obj.kind = objective_from_str(objective);
            obj.lambda = lam;
            AblateConfig cfg;
            cfg.steps = steps;
            cfg.batch = batch;
            cfg.lr = lr;
            AblateResult res =
                data.provenance.task == "composition"
                    ? compositional_ablate(ckpt, data, obj, subset_from_str(subset), cfg, seed)
                    : ablate_run(ckpt, data, obj, subset_from_str(subset), cfg, seed);
            return res.checkpoint;
        },
        py::arg("checkpoint"), py::arg("dataset"), py::arg("objective") = "model",
        py::arg("subset") = "xattn", py::arg("lam") = 1.0, py::arg("steps") = 100,
        py::arg("batch") = 32, py::arg("lr") = 5e-3, py::arg("seed") = 1,
        py::call_guard<py::gil_scoped_release>());

    m.def(
        "sample",
        [](const Checkpoint& ckpt, const ConceptMap& map, const std::string& concept_name,
           size_t n, int steps, uint64_t seed) {
            RngStream prompt_rng(seed, 1), sample_rng(seed, 2);
            std::vector<Prompt> prompts = make_prompts(map, concept_name, n, prompt_rng);
            return sample_ancestral(ckpt.params, prompts, steps, ckpt.schedule, ckpt.arch,
                                    sample_rng);
        },
        py::arg("checkpoint"), py::arg("map"), py::arg("concept"), py::arg("n") = 200,
        py::arg("steps") = 50, py::arg("seed") = 1, py::call_guard<py::gil_scoped_release>());

    m.def(
        "sample_truth",
        [](const ConceptMap& map, const std::string& concept_name, size_t n, uint64_t seed) {
            RngStream rng(seed, 0);
            return sample_truth(map, concept_name, n, rng);
        },
        py::arg("map"), py::arg("concept"), py::arg("n") = 200, py::arg("seed") = 1);

    m.def(
        "report_json",
        [](const Checkpoint& ablated, const Checkpoint& pretrained, const ConceptMap& map,
           const std::string& kind, const std::string& target, const std::string& anchor,
           uint64_t seed, bool robustness, size_t samples, int sampler_steps,
           int permutations) {
            MetricConfig cfg;
            cfg.samples_per_concept = samples;
            cfg.sampler_steps = sampler_steps;
            cfg.mmd_permutations = permutations;
            EvalReport rep = full_report(ablated, pretrained, map,
                                         make_task(kind, target, anchor), cfg, seed, robustness);
            return rep.to_json().dump();
        },
        py::arg("ablated"), py::arg("pretrained"), py::arg("map"), py::arg("kind"),
        py::arg("target"), py::arg("anchor"), py::arg("seed") = 1,
        py::arg("robustness") = false, py::arg("samples") = 200, py::arg("sampler_steps") = 50,
        py::arg("permutations") = 200, py::call_guard<py::gil_scoped_release>());

    m.def("mmd_poly", &mmd_poly, py::arg("a"), py::arg("b"));
    m.def(
        "concept_accuracy",
        [](const std::vector<Point>& xs, const ConceptMap& map, const std::string& a,
           const std::string& b) { return concept_accuracy(xs, map.density(a), map.density(b)); },
        py::arg("samples"), py::arg("map"), py::arg("a"), py::arg("b"));
    m.def(
        "concept_score",
        [](const std::vector<Point>& xs, const ConceptMap& map, const std::string& name) {
            return concept_score(xs, map.density(name));
        },
        py::arg("samples"), py::arg("map"), py::arg("concept"));
}
