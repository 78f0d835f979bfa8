import json
import math
import random
import shutil

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import oracle_bleu, oracle_spearman
from tati.config import load_config
from tati.core import ImageDoc
from tati.errors import AlignmentError, DegenerateInput, EmptyCorpus, LengthMismatch, MissingImage, SchemaViolation
from tati.evalkit import (
    EvalReport,
    comet_score,
    corpus_bleu,
    count_by_pair,
    echo_ocr,
    evaluate,
    format_table,
    i2i_score,
    i2t_score,
    join_texts,
    load_mtit6,
    spearman,
    tokenize,
)
from tati.layout import Route
from tati.mockserve import MockServer, ScriptedBackends
from tati.synth import PAIR_COUNTS


@pytest.mark.parametrize(
    "hyps,refs,expected",
    [
        (["the cat sat on the mat"], ["the cat sat on the mat"], 100.0),
        (["dog"], ["cat"], 0.0),
        (["the the the the"], ["the cat sat down"], 0.0),
    ],
)
def test_bleu_examples(hyps, refs, expected):
    assert corpus_bleu(hyps, refs) == pytest.approx(expected)


def test_bleu_brevity_penalty_and_case():
    assert corpus_bleu(["a b c d"], ["a b c d e f g h"]) == pytest.approx(100 * math.exp(-1))
    assert corpus_bleu(["The cat"], ["the cat"]) < 100


def test_bleu_errors():
    with pytest.raises(LengthMismatch):
        corpus_bleu(["a"], ["a", "b"])
    with pytest.raises(EmptyCorpus):
        corpus_bleu([], [])


def test_tokenizers():
    assert tokenize("Hello, world!", "en") == ["Hello", ",", "world", "!"]
    assert tokenize("小心 地滑", "zh") == ["小", "心", "地", "滑"]
    assert tokenize("出口 です", "ja") == ["出", "口", "で", "す"]
    assert tokenize("비상 출구", "ko") == ["비상", "출구"]


def test_join_texts():
    assert join_texts(["SLOW", "", "DOWN"], "en") == "SLOW DOWN"
    assert join_texts(["减速", "慢行"], "zh") == "减速慢行"
    assert join_texts(["비상", "출구"], "ko") == "비상 출구"


_words = st.sampled_from(["the", "cat", "sat", "on", "mat", "a", "dog", ",", "."])
_sentence = st.lists(_words, min_size=0, max_size=12).map(" ".join)


@settings(max_examples=200)
@given(st.lists(st.tuples(_sentence, _sentence), min_size=1, max_size=6))
def test_bleu_matches_oracle(pairs):
    hyps, refs = zip(*pairs)
    assert corpus_bleu(hyps, refs) == pytest.approx(oracle_bleu(hyps, refs), abs=1e-9)


@settings(max_examples=100)
@given(st.lists(st.text(st.sampled_from(list("减速慢行小心地滑出口")), min_size=1, max_size=8), min_size=1, max_size=5))
def test_bleu_cjk_matches_oracle_and_identity(refs):
    assert corpus_bleu(refs, refs, "zh") == pytest.approx(100.0)
    hyps = [r[::-1] for r in refs]
    assert corpus_bleu(hyps, refs, "zh") == pytest.approx(oracle_bleu(hyps, refs, "zh"), abs=1e-9)


@settings(max_examples=100)
@given(st.lists(st.tuples(_sentence.filter(str.strip), _sentence), min_size=1, max_size=6), st.randoms())
def test_bleu_permutation_invariant_and_bounded(pairs, rnd):
    hyps, refs = zip(*pairs)
    base = corpus_bleu(hyps, refs)
    assert 0.0 <= base <= 100.0
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    h2, r2 = zip(*shuffled)
    assert corpus_bleu(h2, r2) == pytest.approx(base, abs=1e-9)
    assert corpus_bleu(hyps, hyps) == pytest.approx(100.0)


def test_spearman_examples():
    assert spearman([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0)
    assert spearman([1, 2, 3], [30, 20, 10]) == pytest.approx(-1.0)
    assert spearman([1, 2, 3, 4], [2, 1, 4, 3]) == pytest.approx(0.6)


def test_spearman_errors():
    with pytest.raises(LengthMismatch):
        spearman([1, 2], [1, 2, 3])
    with pytest.raises(DegenerateInput):
        spearman([1, 1, 1], [1, 2, 3])
    with pytest.raises(DegenerateInput):
        spearman([1], [1])


_values = st.lists(st.integers(-5, 5), min_size=2, max_size=15)


@settings(max_examples=200)
@given(_values.flatmap(lambda xs: st.tuples(st.just(xs), st.lists(st.integers(-5, 5), min_size=len(xs), max_size=len(xs)))))
def test_spearman_matches_oracle_and_monotone_invariance(pair):
    xs, ys = pair
    if len(set(xs)) < 2 or len(set(ys)) < 2:
        with pytest.raises(DegenerateInput):
            spearman(xs, ys)
        return
    rho = spearman(xs, ys)
    assert rho == pytest.approx(oracle_spearman(xs, ys), abs=1e-9)
    assert spearman([x ** 3 + 7 for x in xs], [2.0 ** y for y in ys]) == pytest.approx(rho, abs=1e-12)


def test_load_fixture_counts(fixture_root):
    records = load_mtit6(fixture_root)
    assert count_by_pair(records) == PAIR_COUNTS
    assert len(load_mtit6(fixture_root, "ko-zh")) == PAIR_COUNTS["ko-zh"]
    rec = records[0]
    assert sorted(ln.order for ln in rec.lines) == list(range(len(rec.lines)))


def _copy_root(fixture_root, tmp_path):
    root = tmp_path / "ds"
    shutil.copytree(fixture_root, root)
    return root


def _rewrite(root, rel, change):
    path = root / rel
    data = json.loads(path.read_text())
    change(data)
    path.write_text(json.dumps(data, ensure_ascii=False))


def test_repeated_order_is_schema_violation(fixture_root, tmp_path):
    root = _copy_root(fixture_root, tmp_path)

    def dup(d):
        for ln in d["lines"]:
            ln["order"] = 0

    _rewrite(root, "records/zh-en/0000.json", dup)
    with pytest.raises(SchemaViolation) as info:
        load_mtit6(root)
    assert "records/zh-en/0000" in str(info.value) and "order" in str(info.value)


def test_missing_field_and_bad_reference(fixture_root, tmp_path):
    root = _copy_root(fixture_root, tmp_path)
    _rewrite(root, "records/zh-en/0001.json", lambda d: d.pop("reference_joined"))
    with pytest.raises(SchemaViolation):
        load_mtit6(root, "zh-en")
    root = _copy_root(fixture_root, tmp_path / "b")
    _rewrite(root, "records/zh-en/0001.json", lambda d: d.update(reference_tagged="<box0>x"))
    with pytest.raises(SchemaViolation):
        load_mtit6(root, "zh-en")


def test_missing_image(fixture_root, tmp_path):
    root = _copy_root(fixture_root, tmp_path)
    (root / "imgs/en-zh/0002.png").unlink()
    with pytest.raises(MissingImage):
        load_mtit6(root, "en-zh")
    assert len(load_mtit6(root, "zh-en")) == PAIR_COUNTS["zh-en"]


def test_two_record_fixture(fixture_root, tmp_path):
    root = _copy_root(fixture_root, tmp_path)
    (root / "index.json").write_text(json.dumps({"pairs": {"zh-en": ["records/zh-en/0000.json", "records/zh-en/0001.json"]}}))
    assert len(load_mtit6(root)) == 2


@pytest.fixture(scope="module")
def zh_en(fixture_root):
    return load_mtit6(fixture_root, "zh-en")


def _reference_texts(rec):
    from tati.boxtag import parse_tagged

    return parse_tagged(rec.reference_tagged, len(rec.lines)).texts


def test_i2t_reference_and_empty(zh_en):
    refs = {r.id: _reference_texts(r) for r in zh_en}
    assert i2t_score(zh_en, refs) == {"zh-en": pytest.approx(100.0)}
    empty = {r.id: {k: "" for k in range(len(r.lines))} for r in zh_en}
    assert i2t_score(zh_en, empty) == {"zh-en": 0.0}


def test_i2t_is_keyed_by_order(zh_en):
    refs = {r.id: _reference_texts(r) for r in zh_en}
    rng = random.Random(3)
    shuffled = {}
    for rid, texts in refs.items():
        items = list(texts.items())
        rng.shuffle(items)
        shuffled[rid] = dict(items)
    assert i2t_score(zh_en, shuffled) == i2t_score(zh_en, refs)


def test_alignment_errors(zh_en):
    with pytest.raises(AlignmentError):
        i2t_score(zh_en, [{}])
    with pytest.raises(AlignmentError):
        i2t_score(zh_en, {"nope": {}})


@pytest.fixture(scope="module")
def zh_en_run(fixture_root, zh_en):
    config = load_config(fixture_root / "config_zh-en.json")
    return evaluate(zh_en, config, label="table")


def test_i2i_echo_equals_i2t(zh_en, zh_en_run):
    echo = echo_ocr(zh_en_run.plans)
    assert i2i_score(zh_en, zh_en_run.final_images, echo) == i2t_score(zh_en, zh_en_run.outcomes)


def test_i2i_blank_images_score_zero(zh_en, zh_en_run):
    blanks = {r.id: ImageDoc.blank(8, 8) for r in zh_en}
    assert i2i_score(zh_en, blanks, echo_ocr({})) == {"zh-en": 0.0}


def test_i2i_drops_when_a_line_is_not_rendered(zh_en, zh_en_run):
    rec = next(r for r in zh_en if len(r.lines) >= 2)
    plan = zh_en_run.plans[rec.id]
    full = i2i_score([rec], [zh_en_run.final_images[rec.id]], echo_ocr({rec.id: plan}))["zh-en"]
    partial_plan = type(plan).from_json(plan.to_json())
    partial_plan.entries[1].route = Route.SKIP  # erased, never drawn
    partial = i2i_score([rec], [zh_en_run.final_images[rec.id]], echo_ocr({rec.id: partial_plan}))["zh-en"]
    assert partial < full


def test_evaluate_report(zh_en_run):
    rep = zh_en_run.report
    assert rep.n_images == PAIR_COUNTS["zh-en"] and rep.i2t_bleu == pytest.approx(100.0)
    assert len(rep.per_image) == rep.n_images and rep.fingerprint
    again = EvalReport.from_json(json.loads(json.dumps(rep.to_json())))
    assert again == rep


def test_report_scores_bounded():
    with pytest.raises(ValueError):
        EvalReport("zh-en", 1, 101.0)


def test_table_layout_with_published_row():
    row = EvalReport("zh-en", 200, 43.8, 30.6, 76.3, label="qwen1.5-110B-chat")
    table = format_table([row, EvalReport("en-zh", 4, 100.0, label="mock")])
    lines = table.splitlines()
    assert lines[0].split() == ["model", "pair", "I2T", "BLEU", "COMET", "I2I", "BLEU"]
    assert lines[1].split() == ["qwen1.5-110B-chat", "zh→en", "43.8", "76.3", "30.6"]
    assert lines[2].split() == ["mock", "en→zh", "100.0", "-", "-"]
    assert "COMET" not in format_table([EvalReport("zh-en", 1, 1.0)])


def test_comet_client():
    with MockServer(ScriptedBackends({"comet": {"score": 0.763}})) as srv:
        assert comet_score(srv.url, ["源"], ["mt"], ["ref"], timeout=5) == pytest.approx(0.763)
