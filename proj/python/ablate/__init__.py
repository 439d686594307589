"""Concept ablation for conditional denoising diffusion models."""

import json

try:
    from ablate._ablate import (  # type: ignore[attr-defined]
        AblationDataset,
        Checkpoint,
        ConceptMap,
        ablate,
        build_dataset,
        concept_accuracy,
        concept_score,
        default_concept_map,
        mmd_poly,
        pretrain,
        report_json,
        sample,
        sample_truth,
        two_family_concept_map,
    )
except ImportError:  # module built outside the package (e.g. plain CMake build)
    from _ablate import (  # type: ignore[no-redef]
        AblationDataset,
        Checkpoint,
        ConceptMap,
        ablate,
        build_dataset,
        concept_accuracy,
        concept_score,
        default_concept_map,
        mmd_poly,
        pretrain,
        report_json,
        sample,
        sample_truth,
        two_family_concept_map,
    )

__version__ = "0.1.0"


def report(ablated, pretrained, concept_map, kind, target, anchor, seed=1, robustness=False,
           samples=200, sampler_steps=50, permutations=200):
    """Evaluation report comparing an ablated model to its parent, as a dict."""
    return json.loads(
        report_json(ablated, pretrained, concept_map, kind, target, anchor, seed, robustness,
                    samples, sampler_steps, permutations)
    )


__all__ = [
    "AblationDataset",
    "Checkpoint",
    "ConceptMap",
    "ablate",
    "build_dataset",
    "concept_accuracy",
    "concept_score",
    "default_concept_map",
    "mmd_poly",
    "pretrain",
    "report",
    "report_json",
    "sample",
    "sample_truth",
    "two_family_concept_map",
]
