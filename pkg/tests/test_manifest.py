"""Manifest loading, validation, and protocol slicing."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zsmad.errors import ConstraintError, ParseError, SchemaError
from zsmad.manifest import (
    FaceSample,
    Generator,
    Label,
    Manifest,
    Medium,
    load_manifest,
    slice_manifest,
    write_manifest,
)

HEADER = "id,path,label,generator,medium,subject_id"


def write_csv(tmp_path, rows, header=HEADER, name="m.csv"):
    path = tmp_path / name
    path.write_text("\n".join([header] + rows) + "\n", encoding="utf-8")
    return path


# six hand-enumerable rows: 2 bona fide + 4 morphs over 2 mediums
SIX_ROWS = [
    "b1,imgs/b1.png,bonafide,-,digital,u1",
    "b2,imgs/b2.png,bonafide,-,ps-2,u2",
    "m1,imgs/m1.png,morph,lma-i,digital,u3",
    "m2,imgs/m2.png,morph,pipe,digital,u4",
    "m3,imgs/m3.png,morph,lma-i,ps-2,u5",
    "m4,imgs/m4.png,morph,mordiff,ps-2,u6",
]


def test_minimal_valid_csv(tmp_path):
    path = write_csv(tmp_path, [
        "s1,img1.png,bonafide,-,digital,",
        "s2,img2.png,morph,lma-i,digital,",
    ])
    m = load_manifest(path)
    assert len(m) == 2
    assert m.samples[0].label is Label.BONA_FIDE
    assert m.samples[0].generator is Generator.NONE
    assert m.samples[1].generator is Generator.LMA_I
    assert m.samples[0].subject_id is None


def test_row_order_preserved(tmp_path):
    m = load_manifest(write_csv(tmp_path, SIX_ROWS))
    assert [s.id for s in m] == ["b1", "b2", "m1", "m2", "m3", "m4"]


def test_bonafide_with_generator_rejected(tmp_path):
    path = write_csv(tmp_path, ["s3,img3.png,bonafide,lma-i,digital,"])
    with pytest.raises(ConstraintError):
        load_manifest(path)


def test_morph_without_generator_rejected(tmp_path):
    path = write_csv(tmp_path, ["s3,img3.png,morph,-,digital,"])
    with pytest.raises(ConstraintError):
        load_manifest(path)


def test_duplicate_id_rejected(tmp_path):
    path = write_csv(tmp_path, [
        "s1,a.png,bonafide,-,digital,",
        "s1,b.png,bonafide,-,digital,",
    ])
    with pytest.raises(ConstraintError, match="duplicate"):
        load_manifest(path)


def test_missing_column_schema_error(tmp_path):
    path = write_csv(tmp_path, ["s1,a.png,bonafide,-"],
                     header="id,path,label,generator")
    with pytest.raises(SchemaError, match="medium"):
        load_manifest(path)


def test_malformed_row_reports_row_number(tmp_path):
    path = write_csv(tmp_path, [
        "s1,a.png,bonafide,-,digital,",
        "s2,b.png,bonafide,-",
    ])
    with pytest.raises(ParseError, match="row 3"):
        load_manifest(path)


def test_bad_enum_value_reports_row(tmp_path):
    path = write_csv(tmp_path, ["s1,a.png,bonafide,-,floppy,"])
    with pytest.raises(ParseError, match="row 2"):
        load_manifest(path)


def test_comma_in_path_rejected(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text(HEADER + '\ns1,"a,b.png",bonafide,-,digital,\n')
    with pytest.raises(ParseError, match="comma"):
        load_manifest(path)


def test_case_insensitive_parse(tmp_path):
    path = write_csv(tmp_path, ["s1,a.png,BonaFide,-,Digital,",
                                "s2,b.png,MORPH,LMA-I,PS-2,"])
    m = load_manifest(path)
    assert m.samples[0].medium is Medium.DIGITAL
    assert m.samples[1].generator is Generator.LMA_I
    assert m.samples[1].medium is Medium.PS_2


def test_json_manifest_loads(tmp_path):
    path = tmp_path / "m.json"
    rows = [
        {"id": "s1", "path": "a.png", "label": "bonafide", "generator": "-",
         "medium": "digital", "subject_id": "u1"},
        {"id": "s2", "path": "b.png", "label": "morph", "generator": "pipe",
         "medium": "ps-1", "subject_id": None},
    ]
    path.write_text(json.dumps(rows))
    m = load_manifest(path)
    assert len(m) == 2
    assert m.samples[1].generator is Generator.PIPE


def test_json_missing_key_schema_error(tmp_path):
    path = tmp_path / "m.json"
    path.write_text(json.dumps([{"id": "s1", "path": "a.png", "label": "bonafide",
                                 "generator": "-"}]))
    with pytest.raises(SchemaError, match="medium"):
        load_manifest(path)


def test_unsupported_format_rejected(tmp_path):
    path = tmp_path / "m.xml"
    path.write_text("<xml/>")
    with pytest.raises(SchemaError):
        load_manifest(path)


def test_write_load_round_trip(tmp_path):
    m = load_manifest(write_csv(tmp_path, SIX_ROWS))
    for fmt in ("csv", "json"):
        out = tmp_path / f"rt.{fmt}"
        write_manifest(m, out)
        again = load_manifest(out)
        assert again.samples == m.samples


def test_write_emits_canonical_spellings(tmp_path):
    path = write_csv(tmp_path, ["s1,a.png,MORPH,MIPGAN-2,PS-1,"])
    out = tmp_path / "canon.csv"
    write_manifest(load_manifest(path), out)
    text = out.read_text()
    assert "mipgan-2" in text and "ps-1" in text and "morph" in text


def test_slice_identity(tmp_path):
    m = load_manifest(write_csv(tmp_path, SIX_ROWS))
    assert slice_manifest(m).samples == m.samples


def test_slice_by_generator_and_medium(tmp_path):
    # hand enumeration on SIX_ROWS: lma-i+digital keeps b1 (bona fide,
    # digital) and m1 (lma-i, digital) only
    m = load_manifest(write_csv(tmp_path, SIX_ROWS))
    s = slice_manifest(m, Generator.LMA_I, Medium.DIGITAL)
    assert [x.id for x in s] == ["b1", "m1"]


def test_slice_keeps_bonafide_when_no_matching_morphs(tmp_path):
    # pipe+ps-2: no such morph in SIX_ROWS; medium-matching bona fide stays
    m = load_manifest(write_csv(tmp_path, SIX_ROWS))
    s = slice_manifest(m, Generator.PIPE, Medium.PS_2)
    assert [x.id for x in s] == ["b2"]


def test_census_counts_and_slice():
    """Manifest shaped like the published dataset census.

    2552 bona fide and 12630 morph rows in total; any single
    generator-medium slice sees the full 1276-strong bona fide pool of its
    medium plus its own 2526 morphs.
    """
    samples = []
    for medium in (Medium.DIGITAL, Medium.PS_1):
        for i in range(1276):
            samples.append(FaceSample(f"b-{medium.value}-{i}", f"b{i}.png",
                                      Label.BONA_FIDE, Generator.NONE, medium))
    for gen in (Generator.LMA_I, Generator.LMA_II, Generator.MIPGAN_2,
                Generator.MORDIFF, Generator.PIPE):
        for i in range(2526):
            samples.append(FaceSample(f"m-{gen.value}-{i}", f"m{i}.png",
                                      Label.MORPH, gen, Medium.DIGITAL))
    m = Manifest(samples=tuple(samples))
    assert len(m.bonafide()) == 2552
    assert len(m.morphs()) == 12630
    s = slice_manifest(m, Generator.LMA_I, Medium.DIGITAL)
    assert len(s.bonafide()) == 1276
    assert len(s.morphs()) == 2526


# -- property tests --------------------------------------------------------

_generators = st.sampled_from([g for g in Generator if g is not Generator.NONE])
_mediums = st.sampled_from(list(Medium))


@st.composite
def manifests(draw):
    n = draw(st.integers(min_value=0, max_value=24))
    samples = []
    for i in range(n):
        if draw(st.booleans()):
            samples.append(FaceSample(f"s{i}", f"{i}.png", Label.MORPH,
                                      draw(_generators), draw(_mediums)))
        else:
            samples.append(FaceSample(f"s{i}", f"{i}.png", Label.BONA_FIDE,
                                      Generator.NONE, draw(_mediums)))
    return Manifest(samples=tuple(samples))


@settings(max_examples=60, deadline=None)
@given(manifests(), _generators, _mediums)
def test_slice_idempotent(m, g, med):
    once = slice_manifest(m, g, med)
    assert slice_manifest(once, g, med).samples == once.samples


@settings(max_examples=60, deadline=None)
@given(manifests(), _mediums)
def test_generator_slices_partition_morphs(m, med):
    at_medium = slice_manifest(m, medium=med)
    seen = []
    for g in [g for g in Generator if g is not Generator.NONE]:
        seen.extend(s.id for s in slice_manifest(m, g, med).morphs())
    assert sorted(seen) == sorted(s.id for s in at_medium.morphs())


@settings(max_examples=40, deadline=None)
@given(manifests())
def test_round_trip_property(m):
    import tempfile
    from pathlib import Path

    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "m.csv"
        write_manifest(m, out)
        assert load_manifest(out).samples == m.samples
