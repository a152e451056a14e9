import glob as globmod
import math
import os
import random

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from forage import golden
from forage.env import Anchor, DocumentEnv, check_regex_dialect, split_records
from forage.errors import (
    AnchorOutOfRange,
    InvalidDocument,
    InvalidPattern,
    NotFound,
    StaleAnchor,
)


def test_register_empty_and_small(env, write):
    h = env.register_document(write("empty.txt", ""))
    assert (h.byte_size, h.line_count, h.estimated_tokens) == (0, 0, 0)
    h3 = env.register_document(write("abc.txt", "a\nb\nc"))
    assert h3.line_count == 3
    assert env.register_document(write("abc2.txt", "a\nb\nc\n")).line_count == 3


def test_register_same_path_same_id(env, write):
    p = write("x.txt", "hello\n")
    assert env.register_document(p).id == env.register_document(str(p)).id
    assert len(env.documents) == 1


def test_register_basename_collision(env, tmp_path):
    for sub in ("a", "b"):
        (tmp_path / sub).mkdir()
        (tmp_path / sub / "doc.txt").write_text(sub)
    ids = {env.register_document(tmp_path / s / "doc.txt").id for s in ("a", "b")}
    assert ids == {"doc.txt", "doc.txt~2"}


def test_register_errors(env, tmp_path):
    with pytest.raises(NotFound):
        env.register_document(tmp_path / "nope.txt")
    (tmp_path / "bin.dat").write_bytes(b"abc\x00def")
    with pytest.raises(InvalidDocument):
        env.register_document(tmp_path / "bin.dat")
    (tmp_path / "latin.txt").write_bytes(b"caf\xe9")
    with pytest.raises(InvalidDocument):
        env.register_document(tmp_path / "latin.txt")


def test_98kb_fixture_size_and_estimate(env, tmp_path):
    p = tmp_path / "big.txt"
    p.write_bytes(b"x" * (98 * 1024))
    h = env.register_document(p)
    assert h.byte_size == 98 * 1024 == os.path.getsize(p)
    assert h.estimated_tokens == math.ceil(98 * 1024 / 4)


def test_line_count_matches_newline_records(env, write):
    text = "one\ntwo\n\nfour\n"
    h = env.register_document(write("t.txt", text))
    assert h.line_count == len(text.splitlines())
    assert env.text(h.id) == text


def test_file_info(env, write):
    e = env.register_document(write("e.txt", ""))
    info = env.get_file_info(e.id)
    assert (info.byte_size, info.estimated_tokens, info.needs_normalization) == (0, 0, False)
    long = env.register_document(write("long.txt", "x" * 50_000))
    assert env.get_file_info(long.id).needs_normalization
    with pytest.raises(NotFound):
        env.get_file_info("missing")


def test_golden_file_info(golden_env):
    info = golden_env.get_file_info(golden.DOC_NAME)
    h = golden_env.handle(golden.DOC_NAME)
    assert not info.needs_normalization
    assert (info.byte_size, info.line_count, info.estimated_tokens) == (h.byte_size, h.line_count, h.estimated_tokens)


def test_glob_single_and_empty(env, write):
    env.register_document(write("only.txt", "x"))
    assert env.glob("*.txt") == ["only.txt"]
    assert env.glob("*.md") == []


def test_glob_against_stdlib_oracle(env, tmp_path):
    for name in ("doc_1.txt", "doc_2.txt", "doc_10.txt"):
        (tmp_path / name).write_text(name)
        env.register_document(tmp_path / name)
    got = env.glob("doc_?.txt")
    oracle = sorted(os.path.basename(p) for p in globmod.glob(str(tmp_path / "doc_?.txt")))
    assert got == oracle == ["doc_1.txt", "doc_2.txt"]


def test_glob_bad_pattern(env):
    with pytest.raises(InvalidPattern):
        env.glob("doc_[.txt")
    with pytest.raises(InvalidPattern):
        env.glob("")


def test_golden_grep_examples(golden_env):
    hits = golden_env.grep(golden.DOC_NAME, "five types of contextual information")
    assert [m.anchor.start_line for m in hits] == [437]
    none = golden_env.grep(golden.DOC_NAME, "IP-based geolocation|manual city entry", scope="1800-1850")
    assert list(none) == []
    # the same pattern outside the detector section does hit the limitations text
    assert [m.anchor.start_line for m in golden_env.grep(golden.DOC_NAME, "IP-based geolocation|manual city entry")] == [6354, 6358]


def test_golden_scan_and_read(golden_env):
    anchors = golden_env.scan(golden.DOC_NAME, "System overview|Sensor Layer", case_insensitive=True)
    assert anchors[0].start_line == 1212
    obs = golden_env.read(Anchor(golden.DOC_NAME, 1216, 1290), limit=75)
    assert "Weather detector takes as input the Location detector's output" in obs.text


def test_empty_document_search(env, write):
    h = env.register_document(write("e.txt", ""))
    assert list(env.grep(h.id, "a")) == []
    assert list(env.scan(h.id, "^#")) == []


def test_scan_tables(env, write):
    lines = ["filler"] * 50
    lines[9] = "Table 1: x"
    lines[39] = "Table 2: y"
    h = env.register_document(write("t.txt", "\n".join(lines)))
    assert [(a.start_line, a.end_line) for a in env.scan(h.id, "^Table ")] == [(10, 10), (40, 40)]


def test_read_examples(env, write):
    h = env.register_document(write("abc.txt", "a\nb\nc"))
    assert env.read(Anchor(h.id, 2, 2)).text == "b"
    with pytest.raises(AnchorOutOfRange):
        env.read(Anchor(h.id, 2, 9))
    with pytest.raises(NotFound):
        env.read(Anchor("ghost", 1, 1))
    h100 = env.register_document(write("h.txt", "\n".join(f"line {i}" for i in range(1, 101))))
    obs = env.read(Anchor(h100.id, 1, 100), limit=10)
    assert obs.text == "\n".join(f"line {i}" for i in range(1, 11))
    assert obs.truncated and obs.reason == "limit"


def test_read_lines_clips_at_eof(env, write):
    h = env.register_document(write("abc.txt", "a\nb\nc"))
    assert env.read_lines(h.id, 2, 50).text == "b\nc"
    with pytest.raises(AnchorOutOfRange):
        env.read_lines(h.id, 4)


def test_anchor_parse_and_validation():
    a = Anchor.parse("doc.txt:437-438")
    assert (a.doc, a.start_line, a.end_line) == ("doc.txt", 437, 438)
    assert Anchor.parse("12", default_doc="d") == Anchor("d", 12, 12)
    assert Anchor.parse("d@2:3-4").revision == 2
    with pytest.raises(AnchorOutOfRange):
        Anchor("d", 0, 1)
    with pytest.raises(AnchorOutOfRange):
        Anchor("d", 5, 4)
    with pytest.raises(AnchorOutOfRange):
        Anchor.parse("nonsense")


def test_observation_budget_flags_truncation(write):
    env = DocumentEnv(observation_budget=50)
    h = env.register_document(write("w.txt", "\n".join("x" * 40 for _ in range(100))))
    obs = env.read(Anchor(h.id, 1, 100))
    assert obs.truncated and obs.reason == "observation budget"
    assert env.count_tokens(obs.text) <= 50
    hits = env.grep(h.id, "x", max_matches=0)
    assert hits.truncated
    single = env.register_document(write("one.txt", "y" * 1000))
    big = env.read(Anchor(single.id, 1, 1))
    assert big.truncated and env.count_tokens(big.text) <= 50 and "y" * 1000 != big.text


def test_grep_context_and_case(env, write):
    h = env.register_document(write("c.txt", "alpha\nBeta\ngamma\nbeta\nomega"))
    hits = env.grep(h.id, "beta", context=1, case_insensitive=True)
    assert [m.anchor.start_line for m in hits] == [2, 4]
    assert hits[0].context_before == ("alpha",) and hits[0].context_after == ("gamma",)
    assert [m.anchor.start_line for m in env.grep(h.id, "beta")] == [4]


def test_grep_cap(env, write):
    h = env.register_document(write("m.txt", "\n".join(["hit"] * 30)))
    assert len(env.grep(h.id, "hit")) == 20 and env.grep(h.id, "hit").truncated
    assert len(env.scan(h.id, "hit")) == 30


@pytest.mark.parametrize("bad", ["(?i)abc", r"(a)\1", "a*?", "a++", "[abc", "abc\\", ""])
def test_regex_dialect_rejects(bad):
    with pytest.raises(InvalidPattern):
        check_regex_dialect(bad)


@pytest.mark.parametrize("good", ["a|b", "^Table [0-9]+", r"\d+\s\w", "x{2,3}", "[]a]", "(ab)+c?"])
def test_regex_dialect_accepts(good):
    check_regex_dialect(good)


def test_grep_invalid_pattern(env, write):
    h = env.register_document(write("a.txt", "a"))
    with pytest.raises(InvalidPattern):
        env.grep(h.id, "(unclosed")
    with pytest.raises(NotFound):
        env.grep("ghost", "a")


def test_normalize_examples(env, write):
    path = write("n.txt", "short\n" + "x" * 10_000 + "\nend")
    h = env.register_document(path)
    before = env.text(h.id)
    info = env.normalize_document(h.id, 4000)
    assert not info.needs_normalization
    assert [len(l) for l in env.text(h.id).split("\n")[1:4]] == [4000, 4000, 2000]
    assert env.text(h.id).replace("\n", "") == before.replace("\n", "")
    assert env.revision(h.id) == 1
    assert path.read_text() == before  # only the working copy is rewritten


def test_normalize_idempotent_under_cap(env, write):
    h = env.register_document(write("s.txt", "a\nb"))
    env.normalize_document(h.id)
    assert env.text(h.id) == "a\nb" and env.revision(h.id) == 0
    with pytest.raises(NotFound):
        env.normalize_document("ghost")


def test_stale_anchor_after_normalize(env, write):
    h = env.register_document(write("n.txt", "y" * 9000))
    old = env.anchor(h.id, 1)
    env.normalize_document(h.id, 4000)
    with pytest.raises(StaleAnchor):
        env.read(old)
    assert env.read(env.anchor(h.id, 1)).text == "y" * 4000


def test_no_mutation_of_file(env, write):
    p = write("keep.txt", "one\ntwo\nthree\n")
    raw = p.read_bytes()
    h = env.register_document(p)
    env.grep(h.id, "o")
    env.scan(h.id, "t")
    env.read(Anchor(h.id, 1, 3))
    env.get_file_info(h.id)
    assert p.read_bytes() == raw


# -- properties ---------------------------------------------------------------

_line = st.text(alphabet="abcxyz .-", max_size=30)


@settings(max_examples=60, deadline=None)
@given(lines=st.lists(_line, min_size=1, max_size=60), trailing=st.booleans())
def test_read_exactness(tmp_path_factory, lines, trailing):
    p = tmp_path_factory.mktemp("rx") / "d.txt"
    text = "\n".join(lines) + ("\n" if trailing else "")
    p.write_text(text, encoding="utf-8")
    env = DocumentEnv(observation_budget=100_000)
    h = env.register_document(p)
    recs = text.splitlines()
    assert h.line_count == len(recs)
    assume(recs)
    rng = random.Random(len(text))
    s = rng.randint(1, len(recs))
    e = rng.randint(s, len(recs))
    assert env.read(Anchor(h.id, s, e)).text == "\n".join(recs[s - 1:e])
    assert env.read(Anchor(h.id, s, e)) == env.read(Anchor(h.id, s, e))


@settings(max_examples=60, deadline=None)
@given(lines=st.lists(st.text(alphabet="abéz", max_size=300), min_size=1, max_size=20),
       cap=st.integers(1, 50))
def test_normalize_round_trip(tmp_path_factory, lines, cap):
    p = tmp_path_factory.mktemp("nz") / "d.txt"
    p.write_text("\n".join(lines), encoding="utf-8")
    env = DocumentEnv()
    h = env.register_document(p)
    before = env.text(h.id)
    env.normalize_document(h.id, cap)
    after = env.text(h.id)
    assert after.replace("\n", "") == before.replace("\n", "")
    assert all(len(l) <= cap for l in after.split("\n"))


def test_split_records():
    assert split_records("") == ([], False)
    assert split_records("a\n") == (["a"], True)
    assert split_records("a\n\nb") == (["a", "", "b"], False)
