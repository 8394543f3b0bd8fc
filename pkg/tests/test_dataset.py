import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from droiddnn.dataset import (
    LabeledDataset,
    parse_feature_csv,
    format_feature_csv,
    read_manifest,
    stratified_split,
)
from droiddnn.errors import InsufficientData, ManifestParseError


@settings(max_examples=100)
@given(st.integers(2, 200), st.integers(2, 200), st.floats(0.05, 0.95), st.integers(0, 2 ** 32 - 1))
def test_stratified_split_properties(n0, n1, ratio, seed):
    labels = np.array([0] * n0 + [1] * n1)
    rng = np.random.default_rng(seed)
    rng.shuffle(labels)
    tr, va = stratified_split(labels, ratio, seed)
    assert np.intersect1d(tr, va).size == 0
    assert np.union1d(tr, va).tolist() == list(range(n0 + n1))
    for cls, n in ((0, n0), (1, n1)):
        k = int((labels[tr] == cls).sum())
        assert 1 <= k <= n - 1
        assert k == min(max(round(ratio * n), 1), n - 1)
    again = stratified_split(labels, ratio, seed)
    assert all(np.array_equal(a, b) for a, b in zip((tr, va), again))


def test_split_needs_two_per_class():
    with pytest.raises(InsufficientData):
        stratified_split([0, 0, 0, 1], 0.8, 0)
    with pytest.raises(ValueError):
        stratified_split([0, 0, 1, 1], 1.0, 0)


@given(st.lists(st.tuples(st.integers(0, 1), st.lists(st.integers(0, 1), min_size=5, max_size=5)), max_size=20))
def test_feature_csv_roundtrip(rows):
    data = LabeledDataset(tuple(f"app{i}" for i in range(len(rows))),
                          np.array([r[1] for r in rows], dtype=float).reshape(len(rows), 5),
                          np.array([r[0] for r in rows], dtype=np.int64))
    text = format_feature_csv(data)
    back = parse_feature_csv(text)
    assert back.ids == data.ids and np.array_equal(back.X, data.X) and np.array_equal(back.labels, data.labels)
    assert format_feature_csv(back) == text


@pytest.mark.parametrize("text", ["", "id,label,f1\n", "id,label,f0\na,2,0\n", "id,label,f0\na,1,0,1\n",
                                  "id,label,f0\na,1,0.5\n"])
def test_feature_csv_errors(text):
    with pytest.raises(ValueError):
        parse_feature_csv(text)


def test_manifest(tmp_path):
    (tmp_path / "sub").mkdir()
    path = tmp_path / "sub" / "m.csv"
    path.write_text("apk_path,label\na.apk,1\n/abs/b.apk,0\n\n")
    m = read_manifest(path)
    assert m.rows == ((str(tmp_path / "sub" / "a.apk"), 1), ("/abs/b.apk", 0))
    path.write_text("path,label\n")
    with pytest.raises(ManifestParseError):
        read_manifest(path)
    path.write_text("apk_path,label\na.apk,maybe\n")
    with pytest.raises(ManifestParseError):
        read_manifest(path)
    with pytest.raises(ManifestParseError):
        read_manifest(tmp_path / "missing.csv")
