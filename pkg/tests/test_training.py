import logging

import numpy as np
import pytest

from rcisep import errors
from rcisep.gnn import GnnConfig
from rcisep.instances import generate_random
from rcisep.training import (
    Dataset,
    LabeledSample,
    TrainConfig,
    WeightError,
    collect_labels,
    label_support,
    load_dataset,
    m_weights,
    positive_weight,
    save_dataset,
    train,
)

SMALL = GnnConfig(embed=8, hidden=(8, 8), layers=2, encoder_hidden=8)


def sample(labels, M=0, source="s"):
    n = len(labels)
    return LabeledSample(source, 0, M, 100, 2, [0] + [10] * (n - 1), {(0, 1): 1.0}, labels)


@pytest.fixture(scope="module")
def small_dataset():
    return collect_labels([generate_random(n, 40 + n) for n in (8, 9, 10)], max_iter=10)


def test_fixture_gives_two_samples(triangle):
    samples, cuts = label_support(triangle, 100, 2, "fixture")
    assert [(s.M, s.labels.tolist()) for s in samples] == [(0, [0, 1, 0, 0]), (1, [0, 1, 1, 0])]
    assert cuts == [frozenset({1, 2})]
    violated_only, _ = label_support(triangle, 100, 2, keep_nonviolated=False)
    assert [s.M for s in violated_only] == [1]
    for s in samples:
        s.check()


def test_empty_instance_list():
    assert len(collect_labels([])) == 0


def test_collected_samples_are_consistent(small_dataset):
    assert len(small_dataset) > 0
    for s in small_dataset:
        s.check()
        assert len(s.labels) == len(s.demands)
    iters = {(s.source, s.iteration) for s in small_dataset}
    assert len(small_dataset.by_graph()) == len(iters)


def test_timeouts_are_skipped(caplog):
    inst = generate_random(22, 1)
    with caplog.at_level(logging.WARNING):
        data = collect_labels([inst], max_iter=3, node_limit=1)
    assert len(data) == 0
    assert "skipped" in caplog.text


def test_positive_weight_examples():
    assert positive_weight([sample([0, 1, 0, 0, 1])]) == 1.5
    assert positive_weight([sample([0, 1, 1])]) == 0.5
    # pooled: 5 negatives, 2 positives (not the mean of 3.0 and 1/1)
    assert positive_weight([sample([0, 1, 0, 0, 0]), sample([0, 1])]) == 2.5
    with pytest.raises(WeightError):
        positive_weight([sample([0, 0, 0])])


def test_all_positive_group_is_degenerate():
    data = Dataset([sample([1, 1], M=0), sample([0, 1, 0], M=1), sample([0, 0], M=2)])
    w = m_weights(data)
    assert w[0] == (pytest.approx(1 / 3), 1.0)
    assert w[1] == (pytest.approx(1 / 3), 2.0)
    assert 2 not in w


def test_dataset_round_trip(tmp_path, small_dataset):
    save_dataset(small_dataset, tmp_path / "d.jsonl")
    back = load_dataset(tmp_path / "d.jsonl")
    assert back.samples == small_dataset.samples


def test_truncated_file_names_line(tmp_path, small_dataset):
    path = tmp_path / "d.jsonl"
    save_dataset(small_dataset, path)
    text = path.read_text()
    path.write_text(text[: len(text) - 40])
    n_lines = len(path.read_text().splitlines())
    with pytest.raises(errors.FormatError, match=f"line {n_lines}"):
        load_dataset(path)


def test_empty_file(tmp_path):
    (tmp_path / "e.jsonl").write_text("")
    assert len(load_dataset(tmp_path / "e.jsonl")) == 0


def test_training_is_reproducible(small_dataset):
    cfg = TrainConfig(epochs=2, seed=3, gnn=SMALL)
    a = train(small_dataset, cfg)
    b = train(small_dataset, cfg)
    assert np.allclose(a.step_losses, b.step_losses, atol=1e-9, rtol=0)
    assert len(a.epoch_losses) == 2


def test_training_rejects_bad_input():
    with pytest.raises(errors.ValidationError):
        train(Dataset(), TrainConfig(epochs=1, gnn=SMALL))
    bad = sample([0, 1, 0])
    bad.labels = np.array([0, 1])
    with pytest.raises(errors.ShapeError):
        train(Dataset([bad]), TrainConfig(epochs=1, gnn=SMALL))
