import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tati.boxtag import IssueKind, serialize_tagged
from tati.core import ImageDoc, RecognizedLine, TextBox
from tati.errors import BackendUnreachable, FallbackExhausted
from tati.mockserve import MockServer, ScriptedBackends
from tati.prompting import LanguagePair
from tati.translate import (
    MockMode,
    MockTranslator,
    TranslationMode,
    TranslationOutcome,
    TranslatorBackendRef,
    TranslatorKind,
    translate_per_box,
    translate_whole,
)

ZH_EN = LanguagePair("zh", "en")


def mock(**kw):
    return TranslatorBackendRef(mock=MockTranslator(**kw))


def lines_of(texts):
    return [RecognizedLine(TextBox.from_rect(0, 10 * k, 50, 10 * k + 8), t, 1.0, k) for k, t in enumerate(texts)]


def test_identity_whole_context():
    out = translate_whole(serialize_tagged(["减速", "慢行"]), ZH_EN, mock())
    assert out.texts == {0: "减速", 1: "慢行"}
    assert out.mode is TranslationMode.WHOLE_CONTEXT and out.attempts == 1


def test_repairable_first_response():
    backend = mock(mode=MockMode.SCRIPTED_RAW, raw_responses=["<box0>SLOW<box1>DOWN</box1>"])
    out = translate_whole(serialize_tagged(["减速", "慢行"]), ZH_EN, backend)
    assert out.attempts == 1 and out.texts == {0: "SLOW", 1: "DOWN"}
    assert out.mode is TranslationMode.WHOLE_CONTEXT
    assert any(i.kind is IssueKind.MISSING_CLOSE for i in out.issues)


def test_garbage_then_per_box_fallback():
    backend = mock(mode=MockMode.SCRIPTED_RAW, raw_responses=["garbage"] * 3)
    out = translate_whole(serialize_tagged(["减速", "慢行"]), ZH_EN, backend)
    assert out.mode is TranslationMode.PER_BOX_FALLBACK
    assert out.texts == {0: "减速", 1: "慢行"}
    assert out.attempts == 3 + 2
    calls = backend.mock.calls
    assert len(calls) == 5
    # the second and third prompts carry a correction naming the missing boxes
    assert "missing <box0>, <box1>" in calls[1] and "missing" in calls[2] and "missing" not in calls[0]


def test_fallback_only_for_missing_indices():
    backend = mock(mode=MockMode.SCRIPTED_RAW, raw_responses=["<box0>A</box0>"] * 3)
    out = translate_whole(serialize_tagged(["x", "y", "z"]), ZH_EN, backend)
    assert out.texts == {0: "A", 1: "y", 2: "z"}
    assert out.attempts == 3 + 2


def test_retry_recovers_on_second_attempt():
    backend = mock(mode=MockMode.SCRIPTED_RAW, raw_responses=["nothing useful"])
    out = translate_whole(serialize_tagged(["x", "y"]), ZH_EN, backend)
    assert out.attempts == 2 and out.mode is TranslationMode.WHOLE_CONTEXT


def test_fallback_exhausted_carries_partial():
    backend = mock(mode=MockMode.SCRIPTED_RAW, raw_responses=["<box0>A</box0>"] * 3, fail_calls=[3])
    with pytest.raises(FallbackExhausted) as info:
        translate_whole(serialize_tagged(["x", "y"]), ZH_EN, backend)
    assert info.value.partial == {0: "A"}


def test_unreachable_propagates():
    with pytest.raises(BackendUnreachable):
        translate_whole(serialize_tagged(["x"]), ZH_EN, mock(down=True))


def test_strict_mode_single_attempt_no_fallback():
    backend = mock(mode=MockMode.SCRIPTED_RAW, raw_responses=["<box1>B</box1><box0>A</box0>"])
    out = translate_whole(serialize_tagged(["x", "y"]), ZH_EN, backend, strict=True)
    assert out.attempts == 1 and out.texts == {0: "A", 1: "B"}
    backend = mock(mode=MockMode.SCRIPTED_RAW, raw_responses=["<box0>A</box0>"])
    out = translate_whole(serialize_tagged(["x", "y"]), ZH_EN, backend, strict=True)
    assert out.texts == {0: "A", 1: ""} and len(backend.mock.calls) == 1


def test_image_only_for_vision_backends():
    with pytest.raises(ValueError):
        translate_whole(serialize_tagged(["x"]), ZH_EN, mock(), image=ImageDoc.blank(2, 2))


def test_table_per_box():
    out = translate_per_box(lines_of(["你好"]), ZH_EN, mock(mode=MockMode.TABLE, table={"你好": "hello"}))
    assert out.texts == {0: "hello"} and out.mode is TranslationMode.PER_BOX


def test_per_box_identity_three_calls():
    backend = mock()
    out = translate_per_box(lines_of(["a", "b", "c"]), ZH_EN, backend)
    assert out.texts == {0: "a", 1: "b", 2: "c"} and len(backend.mock.calls) == 3


def test_per_box_one_call_unreachable():
    out = translate_per_box(lines_of(["a", "b", "c"]), ZH_EN, mock(fail_calls=[1]))
    assert out.texts == {0: "a", 1: "", 2: "c"}
    assert [i.index for i in out.issues] == [1]


def test_per_box_parallel_matches_sequential():
    texts = [f"line {k}" for k in range(8)]
    a = translate_per_box(lines_of(texts), ZH_EN, mock(), parallelism=4)
    b = translate_per_box(lines_of(texts), ZH_EN, mock(), parallelism=1)
    assert a.texts == b.texts


@settings(max_examples=60, deadline=None)
@given(st.lists(st.text(st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=15).filter(str.strip), min_size=1, max_size=6))
def test_identity_modes_agree(texts):
    texts = [t.strip() for t in texts]
    whole = translate_whole(serialize_tagged(texts), ZH_EN, mock())
    per = translate_per_box(lines_of(texts), ZH_EN, mock())
    assert whole.texts == per.texts
    assert whole.mode is not per.mode


@settings(max_examples=80, deadline=None)
@given(st.lists(st.text(alphabet=st.sampled_from(list("<>/box01 a中")), max_size=30), min_size=3, max_size=3), st.integers(1, 4))
def test_outcome_covers_all_indices(raws, n):
    backend = mock(mode=MockMode.SCRIPTED_RAW, raw_responses=raws)
    out = translate_whole(serialize_tagged([f"s{k}" for k in range(n)]), ZH_EN, backend)
    assert sorted(out.texts) == list(range(n))
    assert out.attempts <= backend.max_attempts + n


def test_outcome_json_round_trip():
    backend = mock(mode=MockMode.SCRIPTED_RAW, raw_responses=["<box0>A<box1>B"])
    out = translate_whole(serialize_tagged(["x", "y"]), ZH_EN, backend)
    again = TranslationOutcome.from_json(json.loads(json.dumps(out.to_json())))
    assert again == out


def test_remote_text_and_vision_backends():
    with MockServer(ScriptedBackends({"translate": {"mode": "table", "table": {"你好": "hello"}}})) as srv:
        text = TranslatorBackendRef(TranslatorKind.REMOTE_TEXT, srv.url, timeout=5)
        assert translate_whole(serialize_tagged(["你好"]), ZH_EN, text).texts == {0: "hello"}
        vision = TranslatorBackendRef(TranslatorKind.REMOTE_VISION, srv.url, timeout=5)
        assert vision.accepts_image
        out = translate_whole(serialize_tagged(["你好", "x"]), ZH_EN, vision, image=ImageDoc.blank(4, 4))
        assert out.texts == {0: "hello", 1: "x"}


def test_backend_ref_validation():
    with pytest.raises(ValueError):
        TranslatorBackendRef(TranslatorKind.REMOTE_TEXT)
    with pytest.raises(ValueError):
        TranslatorBackendRef(max_attempts=0)
    with pytest.raises(ValueError):
        MockTranslator(MockMode.TABLE)
