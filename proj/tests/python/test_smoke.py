import json

import pytest

import ablate


@pytest.fixture(scope="module")
def tiny_model():
    cmap = ablate.default_concept_map()
    ckpt = ablate.pretrain(cmap, seed=1, steps=200, batch=16)
    return cmap, ckpt


def test_pretrain_deterministic(tiny_model):
    cmap, ckpt = tiny_model
    again = ablate.pretrain(cmap, seed=1, steps=200, batch=16)
    assert ckpt.config_hash == again.config_hash
    assert ckpt.to_json() == again.to_json()


def test_checkpoint_round_trip(tiny_model):
    _, ckpt = tiny_model
    clone = ablate.Checkpoint.from_json(ckpt.to_json())
    assert clone.to_json() == ckpt.to_json()


def test_sampling_and_metrics(tiny_model):
    cmap, ckpt = tiny_model
    xs = ablate.sample(ckpt, cmap, "cat", n=40, steps=10, seed=3)
    assert len(xs) == 40
    assert all(len(p) == 2 for p in xs)
    truth = ablate.sample_truth(cmap, "cat", n=40, seed=4)
    assert isinstance(ablate.mmd_poly(xs, truth), float)
    acc = ablate.concept_accuracy(truth, cmap, "cat", "grumpy")
    comp = ablate.concept_accuracy(truth, cmap, "grumpy", "cat")
    assert acc + comp == 1.0
    assert ablate.concept_score(truth, cmap, "cat") > ablate.concept_score(truth, cmap, "grumpy")


def test_ablate_pipeline_and_report(tiny_model):
    cmap, ckpt = tiny_model
    data = ablate.build_dataset(ckpt, cmap, "instance", "grumpy", "cat", n=64, seed=5)
    assert len(data) == 64
    ablated = ablate.ablate(ckpt, data, objective="model", subset="xattn", steps=5, batch=16)
    assert ablated.config_hash != ckpt.config_hash
    assert json.loads(ablated.to_json())["config"]["parent"] == ckpt.config_hash
    rep = ablate.report(ablated, ckpt, cmap, "instance", "grumpy", "cat", seed=6,
                        samples=30, sampler_steps=10, permutations=50)
    roles = {c["role"] for c in rep["concepts"]}
    assert {"target", "anchor", "surrounding"} <= roles


def test_bad_inputs_raise(tiny_model):
    cmap, ckpt = tiny_model
    with pytest.raises(Exception):
        ablate.sample(ckpt, cmap, "no-such-concept", n=4, steps=5)
    data = ablate.build_dataset(ckpt, cmap, "instance", "grumpy", "cat", n=8, seed=5)
    with pytest.raises(Exception):
        ablate.ablate(ckpt, data, objective="mystery")
