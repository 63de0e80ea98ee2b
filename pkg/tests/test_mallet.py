import gzip
import math

import numpy as np
import pytest

from horizonscan.ingest import TokenizedCorpus
from horizonscan.lda import fit_lda
from horizonscan.mallet import (
    TopicDiagnostics,
    coherence_map,
    parse_diagnostics_xml,
    parse_mallet_state,
    write_diagnostics_xml,
    write_mallet_state,
)


def _gz_write(path, text):
    with gzip.open(path, "wt", encoding="utf-8") as fh:
        fh.write(text)


FIXTURE = """#doc source pos typeindex type topic
#alpha : 0.1 0.2
#beta : 0.01
0 docA 0 0 apple 0
0 docA 1 1 banana 1
1 NA 0 1 banana 0
"""


def test_parse_handcrafted_state(tmp_path):
    path = tmp_path / "state.gz"
    _gz_write(path, FIXTURE)
    state = parse_mallet_state(path)
    np.testing.assert_allclose(state.alpha, [0.1, 0.2])
    assert state.beta == 0.01
    assert state.vocabulary == ["apple", "banana"]
    assert state.doc_ids == ["docA", "1"]  # NA source falls back to the index
    np.testing.assert_array_equal(state.tokens, [0, 1, 1])
    np.testing.assert_array_equal(state.z, [0, 1, 0])
    np.testing.assert_array_equal(state.offsets, [0, 2, 3])


def test_parse_tolerates_whitespace_and_blank_lines(tmp_path):
    path = tmp_path / "state.gz"
    _gz_write(path, "#alpha : 0.5 0.5 \n#beta :  0.02\n\n0 s 0 0 w 1\n")
    state = parse_mallet_state(path)
    np.testing.assert_allclose(state.alpha, [0.5, 0.5])
    assert state.beta == 0.02


def _fitted_state():
    docs = [(f"doc{i}", [j % 4 for j in range(i, i + 6)]) for i in range(8)]
    corpus = TokenizedCorpus(docs, ["alpha", "bravo", "charlie", "delta"],
                             [8, 8, 8, 8], 8)
    _, state = fit_lda(corpus, 3, n_sweeps=5, seed=12)
    return state


def test_write_parse_write_byte_identity(tmp_path):
    state = _fitted_state()
    p1, p2 = tmp_path / "a.gz", tmp_path / "b.gz"
    write_mallet_state(state, p1)
    write_mallet_state(parse_mallet_state(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_write_deterministic(tmp_path):
    state = _fitted_state()
    p1, p2 = tmp_path / "a.gz", tmp_path / "b.gz"
    write_mallet_state(state, p1)
    write_mallet_state(state, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_round_trip_preserves_fields(tmp_path):
    state = _fitted_state()
    path = tmp_path / "state.gz"
    write_mallet_state(state, path)
    back = parse_mallet_state(path)
    assert back.doc_ids == state.doc_ids
    assert back.vocabulary == state.vocabulary
    np.testing.assert_array_equal(back.tokens, state.tokens)
    np.testing.assert_array_equal(back.z, state.z)
    np.testing.assert_array_equal(back.offsets, state.offsets)
    np.testing.assert_array_equal(back.alpha, state.alpha)
    assert back.beta == state.beta


def test_writer_rejects_whitespace_ids(tmp_path):
    state = _fitted_state()
    state.doc_ids[0] = "has space"
    with pytest.raises(ValueError):
        write_mallet_state(state, tmp_path / "x.gz")


def test_truncated_gzip(tmp_path):
    path = tmp_path / "state.gz"
    _gz_write(path, FIXTURE * 50)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises((EOFError, OSError)):
        parse_mallet_state(path)


@pytest.mark.parametrize("body,msg", [
    ("#beta : 0.01\n0 s 0 0 w 0\n", "alpha"),
    ("#alpha : 0.1 0.2\n0 s 0 0 w 0\n", "beta"),
    ("#alpha : 0.1\n#beta : 0.01\n", "no token lines"),
    ("#alpha : 0.1 0.2\n#beta : 0.01\n0 s 0 0 w 0 9\n", "6 fields"),
    ("#alpha : 0.1 0.2\n#beta : 0.01\n0 s 0 0 w 0\n2 s 0 0 w 0\n", "contiguous"),
    ("#alpha : 0.1 0.2\n#beta : 0.01\n0 s 0 0 w 0\n0 s 1 2 x 0\n", "contiguous"),
    ("#alpha : 0.1 0.2\n#beta : 0.01\n0 s 0 0 w 0\n0 s 1 0 x 0\n", "bound to both"),
    ("#alpha : 0.1 0.2\n#beta : 0.01\n0 s 0 0 w 0\n0 t 1 0 w 0\n", "two sources"),
    ("#alpha : 0.1 0.2\n#beta : 0.01\n0 s 0 0 w 5\n", "out of range"),
])
def test_parse_validation(tmp_path, body, msg):
    path = tmp_path / "bad.gz"
    _gz_write(path, body)
    with pytest.raises(ValueError, match=msg):
        parse_mallet_state(path)


# --- diagnostics -----------------------------------------------------------

DIAG = """<?xml version="1.0"?>
<model>
  <topic id="0" coherence="-439">
    <word rank="1" weight="120.5">plasma</word>
    <word rank="2" weight="88.0">laser</word>
    <word rank="3" weight="41.25">beam</word>
  </topic>
  <topic id="3">
    <word rank="1" prob="0.5">quantum</word>
  </topic>
</model>
"""


def test_parse_diagnostics(tmp_path):
    path = tmp_path / "diag.xml"
    path.write_text(DIAG)
    diags = parse_diagnostics_xml(path)
    assert set(diags) == {0, 3}
    assert diags[0].coherence == -439.0
    assert diags[0].has_coherence
    assert diags[0].top_words == [("plasma", 120.5), ("laser", 88.0), ("beam", 41.25)]
    assert math.isnan(diags[3].coherence)
    assert not diags[3].has_coherence
    assert diags[3].top_words == [("quantum", 0.5)]  # prob attribute fallback
    cm = coherence_map(diags)
    assert cm[0] == -439.0 and math.isnan(cm[3])


def test_diagnostics_requires_topics(tmp_path):
    path = tmp_path / "empty.xml"
    path.write_text("<model></model>")
    with pytest.raises(ValueError, match="no topic"):
        parse_diagnostics_xml(path)


def test_diagnostics_requires_id(tmp_path):
    path = tmp_path / "noid.xml"
    path.write_text('<model><topic coherence="-10"/></model>')
    with pytest.raises(ValueError, match="without id"):
        parse_diagnostics_xml(path)


def test_diagnostics_write_round_trip(tmp_path):
    diags = {
        0: TopicDiagnostics(0, -439.0, [("plasma", 120.5), ("laser", 88.0)]),
        2: TopicDiagnostics(2, math.nan, [("quantum", 7.0)]),
    }
    path = tmp_path / "diag.xml"
    write_diagnostics_xml(diags, path)
    back = parse_diagnostics_xml(path)
    assert back[0].coherence == -439.0
    assert back[0].top_words == diags[0].top_words
    assert math.isnan(back[2].coherence)
    assert back[2].top_words == diags[2].top_words


def test_diagnostics_missing_weight_is_zero(tmp_path):
    path = tmp_path / "w.xml"
    path.write_text('<model><topic id="1"><word rank="1">bare</word></topic></model>')
    diags = parse_diagnostics_xml(path)
    assert diags[1].top_words == [("bare", 0.0)]
