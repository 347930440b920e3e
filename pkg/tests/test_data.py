import logging

import numpy as np
import pytest

from audiotag.data import (
    BalancedSampler,
    ClipRecord,
    DataError,
    MixupConfig,
    SpecAugmentConfig,
    UniformSampler,
    load_class_map,
    load_index,
    mix_pairs,
    mixup,
    mixup_lambdas,
    parse_labels,
    spec_augment,
    spec_augment_bands,
    spec_augment_mask,
    targets_matrix,
    write_index,
)


def write(tmp_path, text, name="index.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_index_resolves_paths_and_labels(tmp_path):
    p = write(tmp_path, "clip_id,path,labels\na,audio/a.wav,0;2\nb,/abs/b.wav,1\n")
    recs = load_index(p, 3)
    assert [r.clip_id for r in recs] == ["a", "b"]
    assert recs[0].audio_ref == str(tmp_path / "audio/a.wav")
    assert recs[1].audio_ref == "/abs/b.wav"
    assert recs[0].labels == [0, 2]
    np.testing.assert_array_equal(targets_matrix(recs), [[1, 0, 1], [0, 1, 0]])


@pytest.mark.parametrize(
    "body,match",
    [
        ("id,path,labels\n", ":1:"),
        ("clip_id,path,labels\na,x.wav\n", ":2:"),
        ("clip_id,path,labels\na,x.wav,0\na,y.wav,1\n", "duplicate"),
        ("clip_id,path,labels\na,x.wav,7\n", "outside"),
        ("clip_id,path,labels\na,x.wav,cat\n", "bad label"),
        ("clip_id,path,labels\n,x.wav,1\n", "empty clip_id"),
    ],
)
def test_load_index_errors_carry_line_numbers(tmp_path, body, match):
    with pytest.raises(DataError, match=match):
        load_index(write(tmp_path, body), 3)


def test_unlabeled_clip_warns(tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        recs = load_index(write(tmp_path, "clip_id,path,labels\na,x.wav,\n"), 2)
    assert not recs[0].target.any()
    assert "no labels" in caplog.text


def test_index_roundtrip(tmp_path):
    recs = [ClipRecord("a", str(tmp_path / "w/a.wav"), parse_labels("1;3", 4))]
    write_index(tmp_path / "i.csv", recs)
    assert "w/a.wav" in (tmp_path / "i.csv").read_text()
    back = load_index(tmp_path / "i.csv", 4)
    assert back[0].audio_ref == recs[0].audio_ref and back[0].labels == [1, 3]


def test_class_map(tmp_path):
    assert load_class_map(write(tmp_path, "dog\ncat\n\n", "c.txt")) == ["dog", "cat"]


# ---- samplers -----------------------------------------------------------------


def single_label(counts):
    y = np.zeros((sum(counts), len(counts)))
    y[np.arange(sum(counts)), np.repeat(np.arange(len(counts)), counts)] = 1
    return y


def test_balanced_sampler_cycles_through_classes():
    y = single_label([50, 5, 1])
    s = BalancedSampler(y, seed=0)
    draws = [int(np.argmax(y[s.next_index()])) for _ in range(300)]
    for i in range(0, 300, 3):
        assert sorted(draws[i : i + 3]) == [0, 1, 2]


def test_balanced_sampler_visits_every_clip_of_a_class():
    y = single_label([6, 3])
    s = BalancedSampler(y, seed=1)
    idx = s.next_batch(12)
    assert sorted(i for i in idx if i < 6) == list(range(6))


def test_balanced_sampler_multilabel_and_empty_classes():
    y = np.array([[1, 1, 0], [1, 0, 0]])
    s = BalancedSampler(y, seed=0)
    assert set(s.next_batch(20)) <= {0, 1}
    with pytest.raises(DataError):
        BalancedSampler(np.zeros((3, 2)))


def test_balanced_sampler_deterministic():
    y = single_label([5, 5])
    assert BalancedSampler(y, 3).next_batch(20) == BalancedSampler(y, 3).next_batch(20)


def test_uniform_sampler_epochs():
    s = UniformSampler(5, seed=0)
    assert sorted(s.next_batch(5)) == list(range(5))
    with pytest.raises(DataError):
        UniformSampler(0)


# ---- mixup ----------------------------------------------------------------------


def test_mixup_lambda_one_is_identity(rng):
    x = rng.normal(size=(6, 5, 4)).astype(np.float32)
    y = rng.integers(0, 2, size=(6, 3)).astype(np.float32)
    mx, my, _ = mixup(x, y, MixupConfig(), rng, lam=np.ones(3))
    assert np.array_equal(mx, x[0::2]) and np.array_equal(my, y[0::2])


def test_mixup_is_convex(rng):
    x, y = rng.normal(size=(8, 3)), rng.integers(0, 2, size=(8, 2)).astype(float)
    mx, my, lam = mixup(x, y, MixupConfig(0.4), rng)
    assert lam.shape == (4,) and np.all((lam >= 0) & (lam <= 1))
    np.testing.assert_allclose(mx, lam[:, None] * x[0::2] + (1 - lam[:, None]) * x[1::2])
    assert np.all(my >= np.minimum(y[0::2], y[1::2]) - 1e-12)
    assert np.all(my <= np.maximum(y[0::2], y[1::2]) + 1e-12)


def test_mixup_config_and_odd_batch(rng):
    with pytest.raises(ValueError):
        MixupConfig(0.0)
    with pytest.raises(ValueError):
        MixupConfig(1.0, "spectrum")
    with pytest.raises(ValueError):
        mixup_lambdas(3, 1.0, rng)
    with pytest.raises(ValueError):
        mix_pairs(np.zeros((3, 2)), [0.5])


# ---- SpecAugment -------------------------------------------------------------------


def test_spec_augment_masks_bands_and_keeps_rest(rng):
    x = rng.normal(size=(100, 64))
    cfg = SpecAugmentConfig(8, 2, 20, 2)
    bands = spec_augment_bands(x.shape, cfg, rng)
    out = spec_augment(x, cfg, rng, bands=bands)
    mask = np.zeros_like(x, dtype=bool)
    for f0, f in bands[0]:
        mask[:, f0 : f0 + f] = True
    for t0, t in bands[1]:
        mask[t0 : t0 + t] = True
    assert np.all(out[mask] == x.min())
    assert np.array_equal(out[~mask], x[~mask])
    assert np.array_equal(spec_augment_mask(x.shape, cfg, np.random.default_rng(5)),
                          spec_augment(np.zeros_like(x), cfg, np.random.default_rng(5), fill=1.0) == 1.0)


def test_spec_augment_bounds(rng):
    with pytest.raises(ValueError):
        spec_augment(np.zeros((10, 4)), SpecAugmentConfig(8, 1, 2, 1), rng)
    with pytest.raises(ValueError):
        spec_augment(np.zeros((10, 64)), SpecAugmentConfig(8, 1, 20, 1), rng)
    out = spec_augment(np.ones((5, 8)), SpecAugmentConfig(0, 2, 0, 2), rng, fill=-1)
    assert np.all(out == 1)
