"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest -s tests/test_acceptance.py`` to see only the summary lines.
"""

from __future__ import annotations

import contextlib
import json
import math
import random
import time
from pathlib import Path

import numpy as np
import pytest

from lakeqa.claims import batch_verify
from lakeqa.cli import main
from lakeqa.instances import CenterPoint, assign_position, label_components
from lakeqa.qa import GenerationConfig, generate_dataset, load_builtin_templates, render_answer, split_ids, write_dataset
from lakeqa.raster import BinaryMask, load_mask
from lakeqa.segmetrics import score_pair
from lakeqa.synth import CorpusSpec, generate_corpus
from lakeqa.textmetrics import evaluate_corpus, lcs_length, meteor_lite, bleu4, rouge_l

from conftest import rect_mask
from oracles import (
    bleu_bruteforce,
    component_summary,
    flood_fill_components,
    lcs_memo,
    meteor_exhaustive,
    position_by_definition,
)


@contextlib.contextmanager
def criterion(capsys, number, title):
    try:
        yield
    except BaseException as exc:
        with capsys.disabled():
            print(f"\nFAIL  criterion {number}: {title} ({type(exc).__name__}: {exc})")
        raise
    with capsys.disabled():
        print(f"\nPASS  criterion {number}: {title}")


@pytest.fixture(scope="module")
def corpus_512(tmp_path_factory):
    out = tmp_path_factory.mktemp("acc512")
    spec = CorpusSpec(count=200, width=512, height=512, lakes=(1, 5), blob=(10, 90), seed=2024, irregular=True)
    return out, generate_corpus(spec, out)


def test_1_round_trip(capsys, corpus_512, tmp_path):
    corpus, manifest = corpus_512
    counts = {len(img["lakes"]) for img in manifest["images"]}
    with criterion(capsys, 1, "round-trip exact-match rate 1.0 on 200 images at 512x512, both families, < 10 s"):
        assert counts == {1, 2, 3, 4, 5}
        start = time.perf_counter()
        results = {}
        for family in ("instance_aware", "position_only"):
            records, man = generate_dataset(corpus, load_builtin_templates(family), GenerationConfig(jobs=1), 7)
            path = tmp_path / f"{family}.jsonl"
            write_dataset(records, man, path)
            docs = [json.loads(l) for l in path.read_text().splitlines()]
            _, agg = batch_verify(docs, corpus)
            results[family] = (len(docs), agg["exact_match_rate"])
        elapsed = time.perf_counter() - start
        singles = sum(1 for img in manifest["images"] if len(img["lakes"]) == 1)
        assert results["instance_aware"] == (200, 1.0)
        assert results["position_only"] == (singles, 1.0) and singles > 0
        assert elapsed < 10.0, f"took {elapsed:.2f} s"


def test_2_labeling_oracle(capsys, corpus_512):
    corpus, manifest = corpus_512
    with criterion(capsys, 2, "labeling equals flood fill on 1000 random masks per connectivity; 100% planted recovery"):
        rng = np.random.default_rng(2)
        mismatches = 0
        for _ in range(1000):
            h, w = int(rng.integers(1, 13)), int(rng.integers(1, 13))
            grid = (rng.random((h, w)) < rng.uniform(0.2, 0.7)).astype(np.uint8)
            rows = grid.tolist()
            for conn in (4, 8):
                got = [(*i.bbox.as_list(), i.area) for i in label_components(BinaryMask(grid), connectivity=conn)]
                want = [component_summary(px) for _, px in flood_fill_components(rows, conn)]
                mismatches += got != want
        assert mismatches == 0
        for img in manifest["images"]:
            found = label_components(load_mask(corpus / img["file"]))
            assert [(i.bbox.as_list(), i.area) for i in found] == [(l["bbox"], l["area"]) for l in img["lakes"]]


def test_3_geometry(capsys):
    with criterion(capsys, 3, "centers are x+w/2, y+h/2; assign_position matches the definition on 10000 samples incl. scaling"):
        rng = random.Random(3)
        for _ in range(500):
            W, H = rng.randint(4, 200), rng.randint(4, 200)
            x, y = rng.randrange(W - 1), rng.randrange(H - 1)
            w, h = rng.randint(1, W - x), rng.randint(1, H - y)
            (inst,) = label_components(rect_mask(W, H, [(x, y, w, h)]))
            assert (inst.center.cx, inst.center.cy) == (x + w / 2, y + h / 2)
        mismatches = 0
        for i in range(10_000):
            W, H = rng.randint(1, 1024), rng.randint(1, 1024)
            if i % 4 == 0:  # land exactly on midlines and threshold circles
                cx = rng.choice([W / 2, rng.randint(0, 2 * W) / 2])
                cy = rng.choice([H / 2, rng.randint(0, 2 * H) / 2])
            else:
                cx, cy = rng.uniform(0, W), rng.uniform(0, H)
            label = assign_position(CenterPoint(cx, cy), W, H)
            got = (label.quadrant.value, label.proximity.value)
            mismatches += got != position_by_definition(cx, cy, W, H, 0.25)
            for k in (0.5, 2, 10):
                scaled = assign_position(CenterPoint(cx * k, cy * k), W * k, H * k)
                mismatches += scaled != label
        assert mismatches == 0


def test_4_segmentation(capsys):
    with criterion(capsys, 4, "half-overlap IoU 1/3 and Dice 1/2; dice == 2iou/(1+iou) on 1000 pairs; both-empty flagged"):
        left = np.zeros((100, 100), np.uint8)
        left[:, :50] = 1
        top = np.zeros((100, 100), np.uint8)
        top[:50] = 1
        s = score_pair(BinaryMask(left), BinaryMask(top))
        assert abs(s.iou - 1 / 3) < 1e-12 and abs(s.dice - 1 / 2) < 1e-12
        rng = np.random.default_rng(4)
        for _ in range(1000):
            shape = tuple(rng.integers(1, 40, 2))
            p = BinaryMask((rng.random(shape) < rng.random()).astype(np.uint8))
            g = BinaryMask((rng.random(shape) < rng.random()).astype(np.uint8))
            s = score_pair(p, g)
            assert abs(s.dice - 2 * s.iou / (1 + s.iou)) < 1e-12
        z = BinaryMask(np.zeros((8, 8), np.uint8))
        s = score_pair(z, z)
        assert s.iou == 1.0 and s.dice == 1.0 and s.both_empty


def test_5_text_metrics(capsys):
    with criterion(capsys, 5, "worked BLEU/ROUGE/METEOR examples equal independent oracles to 1e-9; identity corpus; LCS exhaustive"):
        c = "the lake is in the top left".split()
        r = "the lake is in the bottom left".split()
        assert abs(bleu4(c, r) - bleu_bruteforce(c, r)) < 1e-9
        assert abs(bleu4(c, r) - (6 / 7 * 4 / 6 * 3 / 5 * 1 / 2) ** 0.25) < 1e-9
        rc, rr = "the cat sat on the mat".split(), "the cat is on the mat".split()
        assert lcs_memo(rc, rr) == 5 and abs(rouge_l(rc, rr) - 5 / 6) < 1e-9
        abc = ["a", "b", "c"]
        assert abs(meteor_lite(abc, abc) - meteor_exhaustive(abc, abc)) < 1e-9
        assert abs(meteor_lite(abc, abc) - (1 - 0.5 / 27)) < 1e-9
        swap_c, swap_r = list("abcd"), list("acbd")
        assert abs(meteor_lite(swap_c, swap_r) - meteor_exhaustive(swap_c, swap_r)) < 1e-9

        rng = random.Random(5)
        words = "glacial lake top bottom left right near far center the is in".split()
        sents = [[rng.choice(words) for _ in range(rng.randint(4, 14))] for _ in range(50)]
        agg, _ = evaluate_corpus([(s, s) for s in sents])
        assert abs(agg.bleu4 - 1.0) < 1e-9 and abs(agg.rouge_l - 1.0) < 1e-9 and agg.meteor >= 0.95

        for n in range(9):
            for _ in range(60 if n else 1):
                a = [rng.choice("ab") for _ in range(n)]
                b = [rng.choice("abc") for _ in range(rng.randint(0, 8))]
                assert lcs_length(a, b) == lcs_memo(a, b)


def test_6_determinism(capsys, tmp_path):
    with criterion(capsys, 6, "generate is byte-identical across runs at --jobs 1 and --jobs 8"):
        masks = tmp_path / "masks"
        assert main(["synth", "--count", "40", "--size", "128x128", "--lakes", "0..5", "--seed", "6", "--out", str(masks)]) == 0
        outputs = []
        for run, jobs in enumerate(("1", "8", "1", "8")):
            out = tmp_path / f"run{run}" / "qa.jsonl"
            out.parent.mkdir()
            rc = main(["generate", "--masks", str(masks), "--out", str(out), "--seed", "6", "--split", "0.8", "--jobs", jobs])
            assert rc == 0
            outputs.append((out.read_bytes(), (out.parent / "qa.manifest.json").read_bytes()))
        assert all(o == outputs[0] for o in outputs)


def test_7_split(capsys):
    with criterion(capsys, 7, "80:20 split over 1000 ids within 3% of 800/200 and stable"):
        ids = [f"img_{i:04d}" for i in range(1000)]
        first = split_ids(ids, 0.8)
        train = sum(v == "train" for v in first.values())
        assert abs(train - 800) <= 30 and abs((1000 - train) - 200) <= 30
        assert split_ids(list(reversed(ids)), 0.8) == first
        assert split_ids(ids, 0.8) == first


def test_8_template_fidelity(capsys):
    with criterion(capsys, 8, "reference two-lake layout renders the dual sentence verbatim"):
        mask = rect_mask(300, 300, [(230, 20, 40, 30), (120, 155, 20, 20)])
        lakes = label_components(mask)
        answer, tid = render_answer(lakes, load_builtin_templates("instance_aware"), random.Random(0), index=0)
        assert tid == "instance_aware/dual/0"
        assert answer == (
            "There are two glacial lakes: the 1st is in the top right, far from the center, "
            "and the 2nd is in the bottom left, near the center."
        )
