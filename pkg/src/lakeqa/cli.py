"""Command line entry point: ``lakeqa <subcommand> ...``.

Settings are resolved as CLI flag > ``--config`` JSON file > built-in
default, and every artifact written embeds the resolved configuration.
Exit status: 0 success, 1 validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from collections import Counter
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from . import __version__
from .claims import batch_verify
from .instances import AnalysisConfig
from .qa import (
    FAMILIES,
    CountMismatchError,
    GenerationConfig,
    TemplateError,
    branch_for,
    builtin_template_path,
    generate_dataset,
    load_templates,
    read_records,
    write_dataset,
)
from .raster import MaskError, find_masks, load_mask
from .segmetrics import aggregate, pooled, score_pair
from .synth import CorpusSpec, InfeasibleSpecError, generate_corpus
from .textmetrics import evaluate_corpus, tokenize

log = logging.getLogger("lakeqa")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


@dataclass
class RunConfig:
    connectivity: int = 8
    near_fraction: float = 0.25
    center_mode: str = "bbox"
    min_area: int = 1
    seed: int = 0
    split_ratio: float | None = None
    template_path: str | None = None
    family: str | None = None
    jobs: int = 1
    smooth: str | None = None
    corpus_bleu: bool = False
    micro: bool = False

    def analysis(self) -> AnalysisConfig:
        return AnalysisConfig(self.connectivity, self.near_fraction, self.center_mode, self.min_area)


_CONFIG_KEYS = {f.name for f in fields(RunConfig)}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge built-in defaults, the optional JSON config file, then explicit flags."""
    values: dict = {}
    if getattr(args, "config", None):
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if not isinstance(doc, dict):
            raise ValueError(f"{args.config}: config must be a JSON object")
        unknown = sorted(set(doc) - _CONFIG_KEYS)
        if unknown:
            raise ValueError(f"{args.config}: unknown config keys {unknown}")
        values.update(doc)
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if values.get("family"):
        values["family"] = values["family"].replace("-", "_")
        if values["family"] == "position":
            values["family"] = "position_only"
    config = RunConfig(**values)
    config.analysis()  # validates analysis keys
    return config


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse default exits with 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _range(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition("..")
    try:
        return (int(lo), int(hi)) if sep else (int(lo), int(lo))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A..B, got {text!r}") from None


def _size(text: str) -> tuple[int, int]:
    w, sep, h = text.lower().partition("x")
    try:
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None


def _add_analysis_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--near-frac", dest="near_fraction", type=float)
    p.add_argument("--connectivity", type=int, choices=(4, 8))
    p.add_argument("--center-mode", dest="center_mode", choices=("bbox", "mass"))
    p.add_argument("--min-area", dest="min_area", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lakeqa", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="store_true", help="print version and template digests")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON file with run configuration keys")
        p.add_argument("--jobs", type=int)

    p = sub.add_parser("generate", help="build a question/answer dataset from masks")
    common(p)
    p.add_argument("--masks", required=True)
    p.add_argument("--templates", dest="template_path")
    p.add_argument("--family", choices=("instance-aware", "position", "instance_aware", "position_only"))
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--split", dest="split_ratio", type=float)
    _add_analysis_flags(p)

    p = sub.add_parser("synth", help="write a seeded synthetic mask corpus")
    common(p)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--size", type=_size, default=(64, 64))
    p.add_argument("--lakes", type=_range, default=(1, 3))
    p.add_argument("--blob", type=_range, default=(4, 12))
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--irregular", action="store_true")
    p.add_argument("--format", dest="fmt", choices=("png", "pgm"), default="png")

    p = sub.add_parser("evaluate-seg", help="IoU/Dice of predicted masks against ground truth")
    common(p)
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", default="seg_report.csv")
    p.add_argument("--micro", action="store_const", const=True)

    p = sub.add_parser("evaluate-text", help="BLEU-4 / ROUGE-L / METEOR of generated text")
    common(p)
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--out", default="text_report.json")
    p.add_argument("--smooth", choices=("add-one",))
    p.add_argument("--corpus-bleu", dest="corpus_bleu", action="store_const", const=True)

    p = sub.add_parser("verify", help="check positional claims in answers against masks")
    common(p)
    p.add_argument("--answers", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--out", default="verify_report.json")
    _add_analysis_flags(p)

    p = sub.add_parser("stats", help="summarise a generated dataset")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out")
    return parser


# --- subcommands ------------------------------------------------------------


def cmd_generate(args: argparse.Namespace, config: RunConfig) -> int:
    if config.template_path:
        template_path = Path(config.template_path)
    else:
        template_path = builtin_template_path(config.family or "instance_aware")
    templates = load_templates(template_path)
    if config.family and templates.family != config.family:
        raise ValueError(
            f"--family {config.family} does not match template file family {templates.family}"
        )
    gen = GenerationConfig(config.analysis(), config.split_ratio, config.jobs)
    records, manifest = generate_dataset(args.masks, templates, gen, config.seed)
    run = asdict(config)
    # worker count does not influence output; keep it out so manifests match across --jobs
    del run["jobs"]
    run["template_path"] = str(template_path)
    run["family"] = templates.family
    manifest["run_config"] = run
    mpath = write_dataset(records, manifest, args.out)
    log.info("wrote %s and %s", args.out, mpath)
    return EXIT_OK


def cmd_synth(args: argparse.Namespace, config: RunConfig) -> int:
    width, height = args.size
    spec = CorpusSpec(
        count=args.count,
        width=width,
        height=height,
        lakes=args.lakes,
        blob=args.blob,
        seed=config.seed,
        irregular=args.irregular,
        fmt=args.fmt,
    )
    manifest = generate_corpus(spec, args.out, jobs=config.jobs)
    log.info("wrote %d masks to %s", len(manifest["images"]), args.out)
    return EXIT_OK


def cmd_evaluate_seg(args: argparse.Namespace, config: RunConfig) -> int:
    preds = {p.stem: p for p in find_masks(args.pred)}
    gts = {p.stem: p for p in find_masks(args.gt)}
    errors = [f"{i}: prediction has no ground truth" for i in sorted(set(preds) - set(gts))]
    errors += [f"{i}: ground truth has no prediction" for i in sorted(set(gts) - set(preds))]
    rows = []
    for image_id in sorted(set(preds) & set(gts)):
        try:
            score = score_pair(load_mask(preds[image_id]), load_mask(gts[image_id]))
        except ValueError as exc:
            errors.append(f"{image_id}: {exc}")
            continue
        rows.append((image_id, score))
    if errors:
        for line in errors:
            log.error(line)
        return EXIT_INVALID
    if not rows:
        log.error("no image pairs to score")
        return EXIT_INVALID

    scores = [s for _, s in rows]
    miou, mdice = aggregate(scores)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# run_config: {json.dumps(asdict(config), sort_keys=True)}\n")
        fh.write("# both-empty images score 1.0 and are flagged in the both_empty column\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", "iou", "dice", "tp", "fp", "fn", "both_empty"])
        for image_id, s in rows:
            writer.writerow([image_id, repr(s.iou), repr(s.dice), s.tp, s.fp, s.fn, int(s.both_empty)])
        writer.writerow(["mIoU", repr(miou)])
        writer.writerow(["mDice", repr(mdice)])
        if config.micro:
            piou, pdice = pooled(scores)
            writer.writerow(["pooled_IoU", repr(piou)])
            writer.writerow(["pooled_Dice", repr(pdice)])
    log.info("mIoU %.4f mDice %.4f over %d images", miou, mdice, len(rows))
    return EXIT_OK


def _read_texts(path: str) -> dict[str, str]:
    texts: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            doc = json.loads(line)
            if "image_id" not in doc or "text" not in doc:
                raise ValueError(f"{path}:{lineno}: expected keys image_id and text")
            if doc["image_id"] in texts:
                raise ValueError(f"{path}:{lineno}: duplicate image_id {doc['image_id']!r}")
            texts[doc["image_id"]] = doc["text"]
    return texts


def cmd_evaluate_text(args: argparse.Namespace, config: RunConfig) -> int:
    preds, refs = _read_texts(args.pred), _read_texts(args.ref)
    missing = sorted(set(preds) ^ set(refs))
    if missing:
        for image_id in missing:
            log.error("%s: present in only one of --pred / --ref", image_id)
        return EXIT_INVALID
    ids = sorted(preds)
    pairs = [(tokenize(preds[i]), tokenize(refs[i])) for i in ids]
    agg, per_pair = evaluate_corpus(pairs, smooth=config.smooth, corpus_bleu=config.corpus_bleu)
    report = {
        "run_config": asdict(config),
        "aggregate": asdict(agg),
        "per_pair": [{"image_id": i, **asdict(s)} for i, s in zip(ids, per_pair)],
    }
    Path(args.out).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    log.info("BLEU-4 %.4f ROUGE-L %.4f METEOR %.4f", agg.bleu4, agg.rouge_l, agg.meteor)
    return EXIT_OK


def cmd_verify(args: argparse.Namespace, config: RunConfig) -> int:
    with open(args.answers, encoding="utf-8") as fh:
        records = [json.loads(line) for line in fh if line.strip()]
    reports, agg = batch_verify(records, args.masks, config.analysis())
    out = Path(args.out)
    per_record = out.with_name(out.stem + ".records.jsonl")
    with per_record.open("w", encoding="utf-8", newline="\n") as fh:
        for r in reports:
            fh.write(json.dumps(r.to_dict()) + "\n")
    out.write_text(
        json.dumps({"run_config": asdict(config), "aggregate": agg, "per_record_file": per_record.name}, indent=2)
        + "\n",
        encoding="utf-8",
    )
    log.info("exact-match rate %s over %d records", agg["exact_match_rate"], agg["evaluated"])
    return EXIT_OK


def dataset_stats(records: list) -> dict:
    lake_counts = Counter(len(r.lakes) for r in records)
    quadrants = Counter(lake["quadrant"] for r in records for lake in r.lakes)
    proximity = Counter(lake["proximity"] for r in records for lake in r.lakes)
    lakes_total = sum(proximity.values())
    return {
        "records": len(records),
        "lakes": lakes_total,
        "lake_count_histogram": {str(k): lake_counts[k] for k in sorted(lake_counts)},
        "branch_counts": dict(sorted(Counter(branch_for(len(r.lakes)) for r in records).items())),
        "family_counts": dict(sorted(Counter(r.family for r in records).items())),
        "quadrant_distribution": dict(sorted(quadrants.items())),
        "proximity_counts": dict(sorted(proximity.items())),
        "near_ratio": proximity["near"] / lakes_total if lakes_total else None,
    }


def cmd_stats(args: argparse.Namespace, config: RunConfig) -> int:
    stats = dataset_stats(read_records(args.dataset))
    text = json.dumps(stats, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "synth": cmd_synth,
    "evaluate-seg": cmd_evaluate_seg,
    "evaluate-text": cmd_evaluate_text,
    "verify": cmd_verify,
    "stats": cmd_stats,
}


def _version_text() -> str:
    lines = [f"lakeqa {__version__}"]
    for family in FAMILIES:
        path = builtin_template_path(family)
        lines.append(f"templates/{family}.json sha256:{_digest(path)}")
    return "\n".join(lines)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.version:
        print(_version_text())
        return EXIT_OK
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_INVALID
    try:
        config = resolve_config(args)
        return COMMANDS[args.command](args, config)
    except (FileNotFoundError, IsADirectoryError, NotADirectoryError, PermissionError) as exc:
        log.error("%s", exc)
        return EXIT_IO
    except (ValueError, TypeError, MaskError, TemplateError, CountMismatchError, InfeasibleSpecError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
