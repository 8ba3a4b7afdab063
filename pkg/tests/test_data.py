import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FIXTURES, make_samples
from intermulti.data import (DataError, FeatureDataset, UtteranceSample, collate, decode_container,
                             encode_container, load_dataset, read_container, write_container,
                             write_dataset)

TINY = FIXTURES / "tiny" / "manifest.jsonl"


def test_fixture_loads_to_known_shapes():
    train = load_dataset(TINY, "train")
    assert (len(train), train.task, train.split, train.dims) == (6, "regression", "train", (4, 3, 2))
    first = train.samples[0]
    assert (first.text.shape, first.visual.shape, first.acoustic.shape) == ((3, 4), (2, 3), (4, 2))
    assert len(load_dataset(TINY, "val")) == len(load_dataset(TINY, "test")) == 2
    assert all(-3 <= s.label <= 3 for s in train.samples)


def test_byte_layout_of_one_sample():
    s = UtteranceSample(np.array([[1.0, 2.0]]), np.array([[3.0]]), np.array([[4.0], [5.0]]), -0.5)
    expected = (b"IMFT" + struct.pack("<II", 1, 1)
                + struct.pack("<Bd", 0, -0.5)
                + struct.pack("<II2d", 1, 2, 1.0, 2.0)
                + struct.pack("<II1d", 1, 1, 3.0)
                + struct.pack("<II2d", 2, 1, 4.0, 5.0))
    assert encode_container([s]) == expected


def test_class_label_layout():
    s = UtteranceSample(np.ones((1, 1)), np.ones((1, 1)), np.ones((1, 1)), 5)
    buf = encode_container([s])
    assert buf[12:15] == struct.pack("<BH", 1, 5)
    assert decode_container(buf)[0].label == 5


def test_round_trip_bit_exact(tmp_path, rng):
    datasets = [FeatureDataset(make_samples(rng, n), "regression", split)
                for split, n in (("train", 5), ("val", 3))]
    datasets[0].samples[0].text[0, 0] = np.nextafter(1.0, 2.0)
    manifest = write_dataset(tmp_path, datasets)
    for d in datasets:
        loaded = load_dataset(manifest, d.split)
        assert loaded == d
        for a, b in zip(loaded.samples, d.samples):
            assert a.text.tobytes() == b.text.tobytes()


def test_classification_round_trip(tmp_path, rng):
    d = FeatureDataset(make_samples(rng, 4, task="classification"), "classification", "test")
    manifest = write_dataset(tmp_path, [d])
    loaded = load_dataset(manifest, "test")
    assert loaded.task == "classification" and loaded == d


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 6))
def test_encode_decode_round_trip(seed, n):
    samples = make_samples(np.random.default_rng(seed), n)
    assert decode_container(encode_container(samples)) == samples


def test_truncated_file_names_sample(tmp_path, rng):
    samples = make_samples(rng, 4)
    buf = encode_container(samples)
    cut = len(encode_container(samples[:2])) + 20  # sample 2 starts where two samples end
    path = tmp_path / "cut.imft"
    path.write_bytes(buf[:cut])
    with pytest.raises(DataError, match="sample 2"):
        read_container(path)


def test_bad_magic_and_version(rng):
    buf = encode_container(make_samples(rng, 1))
    with pytest.raises(DataError, match="magic"):
        decode_container(b"XXXX" + buf[4:])
    with pytest.raises(DataError, match="version"):
        decode_container(buf[:4] + struct.pack("<I", 9) + buf[8:])


def test_trailing_bytes(rng):
    with pytest.raises(DataError, match="trailing"):
        decode_container(encode_container(make_samples(rng, 1)) + b"\0")


def test_dim_mismatch(rng):
    samples = make_samples(rng, 2) + make_samples(rng, 1, dims=(5, 4, 2))
    buf = encode_container(samples)
    with pytest.raises(DataError, match="sample 2"):
        FeatureDataset(decode_container(buf), "regression", "train")


def test_label_out_of_range(tmp_path):
    s = UtteranceSample(np.ones((1, 2)), np.ones((1, 2)), np.ones((1, 2)), 3.5)
    write_container(tmp_path / "x.imft", [s])
    (tmp_path / "m.jsonl").write_text(json.dumps({"file": "x.imft", "split": "train"}) + "\n")
    with pytest.raises(DataError, match="outside"):
        load_dataset(tmp_path / "m.jsonl", "train")


def test_label_task_mismatch(rng):
    with pytest.raises(DataError, match="does not match"):
        FeatureDataset(make_samples(rng, 2), "classification", "train")


def test_missing_split(tmp_path, rng):
    manifest = write_dataset(tmp_path, [FeatureDataset(make_samples(rng, 2), "regression", "train")])
    with pytest.raises(DataError, match="no files for split 'test'"):
        load_dataset(manifest, "test")


def test_manifest_errors(tmp_path):
    m = tmp_path / "m.jsonl"
    m.write_text('{"file": "a.imft", "split": "train", "label": 1}\n')
    with pytest.raises(DataError, match=":1:"):
        load_dataset(m, "train")
    m.write_text('{"file": "a.imft", "split": "holdout"}\n')
    with pytest.raises(DataError, match="unknown split"):
        load_dataset(m, "train")
    m.write_text("{not json\n")
    with pytest.raises(DataError, match="invalid JSON"):
        load_dataset(m, "train")
    with pytest.raises(DataError, match="cannot read"):
        load_dataset(tmp_path / "absent.jsonl", "train")


def test_manifest_order_is_preserved(tmp_path, rng):
    a, b = make_samples(rng, 2), make_samples(rng, 3)
    write_container(tmp_path / "b.imft", b)
    write_container(tmp_path / "a.imft", a)
    (tmp_path / "m.jsonl").write_text(
        json.dumps({"file": "b.imft", "split": "train"}) + "\n"
        + json.dumps({"file": "a.imft", "split": "train"}) + "\n")
    assert load_dataset(tmp_path / "m.jsonl", "train").samples == b + a


def test_empty_sequence_rejected():
    with pytest.raises(DataError):
        UtteranceSample(np.zeros((0, 2)), np.ones((1, 2)), np.ones((1, 2)), 0.0)


def test_collate_pads_with_lengths(rng):
    samples = make_samples(rng, 3, max_len=5)
    batch = collate(samples)
    for m in "tva":
        lens = [s.modality(m).shape[0] for s in samples]
        np.testing.assert_array_equal(batch.lengths[m], lens)
        assert batch.seqs[m].shape[1] == max(lens)
        for n, s in enumerate(samples):
            np.testing.assert_array_equal(batch.seqs[m][n, :lens[n]], s.modality(m))
            np.testing.assert_array_equal(batch.seqs[m][n, lens[n]:], 0.0)
