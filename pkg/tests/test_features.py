import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import builders
from droiddnn.apk import open_apk
from droiddnn.errors import EmptySubset, ExtractionError, SchemaParseError
from droiddnn.features import (
    FEATURE_SETS,
    AppFeatures,
    FeatureDescriptor,
    default_schema,
    extract,
    fired_features,
    load_schema,
    parse_subset,
    project,
    vectorize,
)

SCHEMA = default_schema()
perms = [d.key for d in SCHEMA.descriptors if d.kind == "perm"] + ["android.permission.INTERNET", "x.OTHER"]
actions = [d.key for d in SCHEMA.descriptors if d.kind == "intent"] + ["x.ACTION"]
apis = [d.key for d in SCHEMA.descriptors if d.kind == "api"]
app_features = st.builds(
    AppFeatures.build,
    st.sets(st.sampled_from(perms)),
    st.sets(st.sampled_from(actions)),
    st.sets(st.sampled_from(apis)),
    st.booleans(),
    st.booleans(),
)


def test_default_schema_shape():
    assert len(SCHEMA) == 40
    widths = {fs: len(r) for fs, r in SCHEMA.set_spans.items()}
    assert widths == {"fs1": 20, "fs2": 11, "fs3": 7, "fs4": 1, "fs5": 1}
    assert sum(d.kind == "permpair" for d in SCHEMA.descriptors) == 8


@given(app_features)
def test_vector_is_boolean_indicator(features):
    vec = vectorize(features, SCHEMA)
    assert len(vec) == 40 and set(vec.bits) <= {0, 1}
    for bit, d in zip(vec.bits, SCHEMA.descriptors):
        if d.kind == "perm":
            assert bit == (d.key in features.permissions)
        elif d.kind == "permpair":
            assert bit == all(p in features.permissions for p in d.key)
        elif d.kind == "intent":
            assert bit == (d.key in features.intent_actions)
        elif d.kind == "api":
            assert bit == (d.key in features.api_categories)
    assert vec.bits[SCHEMA.set_spans["fs4"].start] == features.cert_invalid
    assert vec.bits[SCHEMA.set_spans["fs5"].start] == features.apk_in_assets


@given(app_features, st.sets(st.sampled_from(FEATURE_SETS), min_size=1))
def test_projection_commutes_with_column_selection(features, subset):
    vec = vectorize(features, SCHEMA)
    proj = project(vec, SCHEMA, subset)
    cols = SCHEMA.columns(subset)
    assert proj.bits == tuple(np.asarray(vec.bits)[cols])
    assert len(proj) == SCHEMA.width(subset) == sum(len(SCHEMA.set_spans[fs]) for fs in subset)
    assert cols == sorted(cols)


def test_empty_subset():
    with pytest.raises(EmptySubset):
        project(vectorize(AppFeatures(), SCHEMA), SCHEMA, [])
    with pytest.raises(EmptySubset):
        parse_subset("+")
    with pytest.raises(ValueError):
        parse_subset("fs9")
    assert parse_subset("all") == FEATURE_SETS
    assert parse_subset("fs3+fs1") == ("fs3", "fs1")


def test_fixture_features(signed_fixture):
    feats = extract(open_apk(signed_fixture.apk), builders.FIXTURE_NOW)
    assert feats.permissions == set(builders.FIXTURE_PERMISSIONS)
    assert feats.intent_actions == set(builders.FIXTURE_ACTIONS)
    assert feats.api_categories == builders.FIXTURE_API_CATEGORIES
    assert not feats.cert_invalid and feats.apk_in_assets
    fired = fired_features(vectorize(feats, SCHEMA), SCHEMA)
    assert fired["fs4"] == [] and fired["fs5"] == ["apk_in_assets"]
    assert "android.permission.INTERNET+android.permission.READ_PHONE_STATE" in fired["fs1"]


def test_strict_and_lenient_extraction(signed_fixture):
    entries = dict(signed_fixture.entries)
    entries["AndroidManifest.xml"] = b"\x00garbage"
    archive = open_apk(builders.zip_bytes(entries))
    with pytest.raises(ExtractionError) as err:
        extract(archive, builders.FIXTURE_NOW)
    assert err.value.stage == "manifest"
    feats = extract(archive, builders.FIXTURE_NOW, lenient=True)
    assert feats.permissions == frozenset() and feats.api_categories == builders.FIXTURE_API_CATEGORIES
    assert any("manifest" in w for w in feats.warnings)
    assert feats.cert_invalid  # unsigned


def test_missing_dex_is_dex_stage(signed_fixture):
    entries = {k: v for k, v in signed_fixture.entries.items() if not k.endswith(".dex")}
    archive = open_apk(builders.zip_bytes(entries))
    with pytest.raises(ExtractionError) as err:
        extract(archive, builders.FIXTURE_NOW)
    assert err.value.stage == "dex"


@pytest.mark.parametrize("text", [
    "",
    "# only a comment\n",
    "perm a\nperm a\n",
    "perm a\nintent b\nperm c\n",
    "intent b\nperm a\n",
    "api teleportation\n",
    "permpair a+a\n",
    "permpair a\n",
    "cert valid\n",
    "bogus x\n",
])
def test_schema_errors(text):
    with pytest.raises(SchemaParseError):
        load_schema(text)


def test_custom_schema():
    schema = load_schema("perm a\npermpair a+b\napi crypto\ncert invalid # trailing comment\n")
    assert len(schema) == 4
    assert schema.columns(["fs3", "fs4"]) == [2, 3]
    assert schema.columns(["fs2"]) == []
    assert schema.descriptors[1] == FeatureDescriptor("permpair", frozenset({"a", "b"}))
    vec = vectorize(AppFeatures.build(["a", "b"], api_categories=["crypto"]), schema)
    assert vec.bits == (1, 1, 1, 0)
