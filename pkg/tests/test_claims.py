from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lakeqa.claims import Claim, ClaimSet, batch_verify, parse_answer, verify
from lakeqa.instances import (
    BoundingBox,
    CenterPoint,
    LakeInstance,
    PositionLabel,
    Proximity,
    Quadrant,
    label_components,
)
from lakeqa.qa import generate_dataset, load_builtin_templates, render_answer, write_dataset

from conftest import rect_mask

TL, TR, BL, BR, C = Quadrant.TOP_LEFT, Quadrant.TOP_RIGHT, Quadrant.BOTTOM_LEFT, Quadrant.BOTTOM_RIGHT, Quadrant.CENTER
NEAR, FAR = Proximity.NEAR, Proximity.FAR


def lake(ordinal, quadrant, proximity):
    return LakeInstance(ordinal, BoundingBox(0, 0, 1, 1), CenterPoint(0.5, 0.5), 1, PositionLabel(quadrant, proximity))


def test_parse_worked_example():
    claims = parse_answer(
        "There are two glacial lakes: the 1st is in the top right, far from the center, "
        "and the 2nd is in the bottom left, near the center."
    )
    assert claims.stated_count == 2
    assert claims.claims == (Claim(1, TR, FAR), Claim(2, BL, NEAR))
    assert claims.parse_coverage == 1.0


def test_parse_implied_singular():
    claims = parse_answer("The glacial lake is present in the top left area.")
    assert claims.stated_count == 1
    assert claims.claims == (Claim(None, TL, None),)
    assert 0 < claims.parse_coverage < 1


def test_parse_nothing():
    claims = parse_answer("No lakes mentioned here.")
    assert claims.is_empty
    assert claims.parse_coverage == 0


@pytest.mark.parametrize(
    "text,count",
    [
        ("There is one glacial lake located in top left, near the center.", 1),
        ("A single glacial lake can be seen at center.", 1),
        ("The only glacial lake in this image lies in the bottom right, far from the center.", 1),
        ("There are exactly two glacial lakes: the first is at top left, near the center and the second at center.", 2),
        ("glacial lake count in this scan is 7. The 1st glacial lake lies in the top left, near the center.", 7),
        ("Observed glacial lakes: 12. The 1st glacial lake appears in the top right, far from the center.", 12),
        ("There are Fifteen glacial lakes.", 15),
        ("I see 3 glacial lakes", 3),
    ],
)
def test_parse_counts(text, count):
    assert parse_answer(text).stated_count == count


def test_parse_ordinal_words_and_hyphens():
    claims = parse_answer("The FIRST lake is Top-Right, far from the centre; the second sits bottom-left, near to the center.")
    assert claims.claims == (Claim(1, TR, FAR), Claim(2, BL, NEAR))


def test_center_word_inside_proximity_is_not_a_quadrant():
    claims = parse_answer("The glacial lake is in the top left, near the center.")
    assert claims.claims == (Claim(None, TL, NEAR),)


def test_bare_center_is_near():
    assert parse_answer("The glacial lake is seen in the center.").claims == (Claim(None, C, NEAR),)


def test_claimset_rejects_duplicate_ordinals():
    with pytest.raises(ValueError):
        ClaimSet(2, (Claim(1, TL, NEAR), Claim(1, TR, FAR)))
    with pytest.raises(ValueError):
        ClaimSet(0)


def test_claimset_sorted_by_ordinal():
    cs = ClaimSet(3, (Claim(3, TL, NEAR), Claim(None, BR, FAR), Claim(1, TR, FAR)))
    assert [c.ordinal for c in cs.claims] == [1, 3, None]


def test_parser_never_raises_on_duplicate_ordinals():
    claims = parse_answer("the 1st is top left, near the center. the 1st is top right, far from the center.")
    assert [c.ordinal for c in claims.claims] == [1, None]


_SAMPLE_TEXTS = [
    "There are two glacial lakes: the 1st is in the top right, far from the center, and the 2nd is in the bottom left, near the center.",
    "The glacial lake is present in the top left area.",
    "Observed glacial lakes: 4. The 1st glacial lake lies in the top left, near the center. The 2nd glacial lake appears in the center.",
]


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(_SAMPLE_TEXTS), st.lists(st.sampled_from([" ", "  ", "\n", "\t"]), min_size=1, max_size=4), st.booleans())
def test_parse_idempotent_under_whitespace_and_case(text, spaces, upper):
    words = text.split(" ")
    noisy = "".join(w + spaces[i % len(spaces)] for i, w in enumerate(words))
    noisy = noisy.upper() if upper else noisy.swapcase()
    assert parse_answer(noisy) == parse_answer(text)


def test_verify_exact():
    truth = [lake(1, TR, FAR), lake(2, BL, NEAR)]
    report = verify(ClaimSet(2, (Claim(1, TR, FAR), Claim(2, BL, NEAR))), truth)
    assert report.exact_match and report.count_match


def test_verify_single_field_mismatch():
    report = verify(ClaimSet(1, (Claim(1, TL, NEAR),)), [lake(1, TR, NEAR)])
    (check,) = report.per_lake
    assert not check.quadrant_match and check.proximity_match
    assert not report.exact_match


def test_verify_extra_claim():
    truth = [lake(1, TL, NEAR), lake(2, BR, FAR)]
    claims = ClaimSet(3, (Claim(1, TL, NEAR), Claim(2, BR, FAR), Claim(3, TR, FAR)))
    report = verify(claims, truth)
    assert not report.count_match
    assert [(c.ordinal, c.quadrant_match, c.proximity_match) for c in report.per_lake] == [(1, True, True), (2, True, True)]
    assert any("extra claim for lake 3" in n for n in report.notes)
    assert not report.exact_match


def test_verify_absent_fields_are_mismatches():
    report = verify(parse_answer("The glacial lake is present in the top left area."), [lake(1, TL, NEAR)])
    assert report.count_match
    assert report.per_lake[0].quadrant_match and not report.per_lake[0].proximity_match
    assert any("proximity not stated" in n for n in report.notes)


def test_verify_no_count_stated():
    report = verify(ClaimSet(None, (Claim(None, TL, NEAR),)), [lake(1, TL, NEAR)])
    assert not report.count_match and not report.exact_match


def test_verify_missing_claim_for_lake():
    report = verify(ClaimSet(2, (Claim(1, TL, NEAR),)), [lake(1, TL, NEAR), lake(2, TR, FAR)])
    assert report.per_lake[1].quadrant_match is False
    assert not report.exact_match


def test_greedy_pairing_without_ordinals():
    truth = [lake(1, TL, FAR), lake(2, BR, NEAR), lake(3, TL, NEAR)]
    claims = ClaimSet(3, (Claim(None, TL, NEAR), Claim(None, BR, NEAR), Claim(None, TL, FAR)))
    report = verify(claims, truth)
    assert report.exact_match


def test_verify_symmetric_in_claim_order():
    truth = [lake(1, TL, FAR), lake(2, BR, NEAR), lake(3, C, NEAR)]
    claims = [Claim(1, TL, FAR), Claim(2, TR, NEAR), Claim(3, C, NEAR)]
    reports = set()
    for seed in range(10):
        shuffled = claims[:]
        random.Random(seed).shuffle(shuffled)
        r = verify(ClaimSet(3, tuple(shuffled)), truth)
        reports.add((r.count_match, tuple(r.per_lake), r.exact_match))
    assert len(reports) == 1


@pytest.mark.parametrize("family", ["instance_aware", "position_only"])
def test_round_trip_all_branches(family):
    ts = load_builtin_templates(family)
    layouts = [[(10, 10, 20, 20)], [(140, 140, 20, 20)]]
    if family == "instance_aware":
        layouts += [
            [(10, 10, 20, 20), (250, 250, 20, 20)],
            [(10, 10, 20, 20), (140, 140, 20, 20), (250, 20, 20, 20)],
            [(10, 10, 5, 5), (50, 200, 5, 5), (160, 160, 5, 5), (200, 30, 9, 9), (290, 290, 5, 5)],
        ]
    for rects in layouts:
        truth = label_components(rect_mask(300, 300, rects))
        for seed in range(30):
            answer, _ = render_answer(truth, ts, random.Random(seed))
            report = verify(parse_answer(answer), truth)
            assert report.exact_match, (answer, report.notes)


def test_batch_verify_on_generated(mixed_corpus, tmp_path):
    corpus, _ = mixed_corpus
    records, manifest = generate_dataset(corpus, load_builtin_templates("instance_aware"), global_seed=3)
    out = tmp_path / "d.jsonl"
    write_dataset(records, manifest, out)
    docs = [json.loads(line) for line in out.read_text().splitlines()]
    reports, agg = batch_verify(docs, corpus)
    assert agg["exact_match_rate"] == 1.0
    assert agg["evaluated"] == len(docs)

    # flip one quadrant
    flipped = [dict(d) for d in docs]
    text = flipped[0]["answer"]
    for a, b in (("top left", "bottom right"), ("top right", "bottom left"), ("bottom left", "top right"), ("bottom right", "top left")):
        if a in text:
            flipped[0]["answer"] = text.replace(a, b, 1)
            break
    _, agg = batch_verify(flipped, corpus)
    n = len(docs)
    assert agg["exact_match_rate"] == pytest.approx((n - 1) / n)


def test_batch_verify_missing_mask(mixed_corpus):
    corpus, _ = mixed_corpus
    docs = [{"image_id": "does_not_exist", "answer": "The glacial lake is in the center."}]
    reports, agg = batch_verify(docs, corpus)
    assert reports == []
    assert agg["missing_masks"] == 1 and agg["missing_ids"] == ["does_not_exist"]
    assert agg["exact_match_rate"] is None


def test_batch_verify_proximity_perturbation(tmp_path):
    from lakeqa.synth import CorpusSpec, generate_corpus

    corpus = tmp_path / "m"
    generate_corpus(CorpusSpec(count=200, width=96, height=96, lakes=(1, 4), blob=(3, 10), seed=21), corpus)
    records, manifest = generate_dataset(corpus, load_builtin_templates("instance_aware"), global_seed=1)
    docs = [json.loads(r.to_json()) for r in records]
    assert len(docs) == 200

    rng = random.Random(0)
    candidates = [i for i, d in enumerate(docs) if "near the center" in d["answer"] or "far from the center" in d["answer"]]
    for i in rng.sample(candidates, 20):
        text = docs[i]["answer"]
        near, far = text.find("near the center"), text.find("far from the center")
        if far < 0 or 0 <= near < far:
            docs[i]["answer"] = text.replace("near the center", "far from the center", 1)
        else:
            docs[i]["answer"] = text.replace("far from the center", "near the center", 1)
    _, agg = batch_verify(docs, corpus)
    assert abs(agg["proximity_accuracy"] - 0.90) <= 1 / 200
    assert agg["quadrant_accuracy"] == 1.0 and agg["count_accuracy"] == 1.0
    assert agg["exact_match_rate"] == pytest.approx(0.90)
