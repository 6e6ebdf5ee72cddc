"""Template storage, answer/question rendering and dataset assembly."""

from __future__ import annotations

import hashlib
import json
import logging
import random
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .instances import AnalysisConfig, LakeInstance, analyze, describe_position
from .raster import find_masks, load_mask

log = logging.getLogger(__name__)

FAMILIES = ("position_only", "instance_aware")
BRANCHES = ("single", "dual", "multi")

ALLOWED_PLACEHOLDERS = frozenset(
    {
        "position_description",
        "position_description[0]",
        "position_description[1]",
        "total_number",
        "all_glacial_sentences",
        "number_position",
    }
)

# Values each template slot can actually be rendered with.
_AVAILABLE = {
    "question": {"total_number"},
    "single": {"position_description", "total_number"},
    "dual": {"position_description[0]", "position_description[1]", "total_number"},
    "multi": {"total_number", "all_glacial_sentences"},
    "per_lake": {"number_position", "position_description"},
}

_PLACEHOLDER = re.compile(r"\{([^{}]*)\}")


class TemplateError(ValueError):
    """Template file does not follow the template schema."""


class CountMismatchError(ValueError):
    """The template family cannot describe the given number of lakes."""


@dataclass(frozen=True)
class QATemplate:
    q: str
    a: str


@dataclass(frozen=True)
class TemplateSet:
    family: str
    single: tuple[QATemplate, ...]
    dual: tuple[QATemplate, ...] = ()
    multi: tuple[QATemplate, ...] = ()
    per_lake: tuple[str, ...] = ()
    version: str = ""
    digest: str = ""

    def branch(self, name: str) -> tuple[QATemplate, ...]:
        return getattr(self, name)


def placeholders(text: str) -> list[str]:
    return _PLACEHOLDER.findall(text)


def _check_text(text: str, slot: str, where: str) -> None:
    for name in placeholders(text):
        if name not in ALLOWED_PLACEHOLDERS:
            raise TemplateError(f"{where}: unknown placeholder {{{name}}}")
        if name not in _AVAILABLE[slot]:
            raise TemplateError(f"{where}: placeholder {{{name}}} cannot be used in {slot} templates")
    stripped = _PLACEHOLDER.sub("", text)
    if "{" in stripped or "}" in stripped:
        raise TemplateError(f"{where}: unbalanced brace")


def parse_templates(doc: dict, digest: str = "") -> TemplateSet:
    if not isinstance(doc, dict):
        raise TemplateError("template file must hold a JSON object")
    family = doc.get("family")
    if family not in FAMILIES:
        raise TemplateError(f"family must be one of {FAMILIES}, got {family!r}")

    branches: dict[str, tuple[QATemplate, ...]] = {}
    for branch in BRANCHES:
        entries = doc.get(branch, [])
        if not isinstance(entries, list):
            raise TemplateError(f"{branch}: expected a list")
        parsed = []
        for i, entry in enumerate(entries):
            where = f"{branch}[{i}]"
            if not isinstance(entry, dict) or not isinstance(entry.get("q"), str) or not isinstance(entry.get("a"), str):
                raise TemplateError(f"{where}: expected an object with string fields 'q' and 'a'")
            _check_text(entry["q"], "question", f"{where}.q")
            _check_text(entry["a"], branch, f"{where}.a")
            parsed.append(QATemplate(entry["q"], entry["a"]))
        branches[branch] = tuple(parsed)

    per_lake = doc.get("per_lake", [])
    if not isinstance(per_lake, list) or not all(isinstance(t, str) for t in per_lake):
        raise TemplateError("per_lake: expected a list of strings")
    for i, text in enumerate(per_lake):
        _check_text(text, "per_lake", f"per_lake[{i}]")

    if not branches["single"]:
        raise TemplateError("single: at least one template is required")
    if family == "instance_aware":
        for name in ("dual", "multi"):
            if not branches[name]:
                raise TemplateError(f"{name}: required for the instance_aware family")
        if not per_lake:
            raise TemplateError("per_lake: required for the instance_aware family")

    return TemplateSet(
        family=family,
        version=str(doc.get("version", "")),
        per_lake=tuple(per_lake),
        digest=digest,
        **branches,
    )


def load_templates(path: str | Path) -> TemplateSet:
    path = Path(path)
    raw = path.read_bytes()
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TemplateError(f"{path}: not valid JSON ({exc})") from exc
    try:
        return parse_templates(doc, digest=hashlib.sha256(raw).hexdigest())
    except TemplateError as exc:
        raise TemplateError(f"{path}: {exc}") from None


def builtin_template_path(family: str) -> Path:
    if family not in FAMILIES:
        raise ValueError(f"unknown template family {family!r}")
    return Path(str(resources.files("lakeqa") / "templates" / f"{family}.json"))


def load_builtin_templates(family: str) -> TemplateSet:
    return load_templates(builtin_template_path(family))


def ordinal(n: int) -> str:
    """``1 -> "1st"``, ``12 -> "12th"``, ``22 -> "22nd"``."""
    if n < 1:
        raise ValueError(f"ordinal needs a positive integer, got {n}")
    if n % 100 in (11, 12, 13):
        suffix = "th"
    else:
        suffix = {1: "st", 2: "nd", 3: "rd"}.get(n % 10, "th")
    return f"{n}{suffix}"


def fill(text: str, values: dict[str, str]) -> str:
    def sub(match: re.Match) -> str:
        name = match.group(1)
        if name not in values:
            raise TemplateError(f"no value for placeholder {{{name}}} in {text!r}")
        return values[name]

    return _PLACEHOLDER.sub(sub, text)


def branch_for(count: int) -> str:
    if count < 1:
        raise CountMismatchError("at least one lake is needed to render an answer")
    if count == 1:
        return "single"
    if count == 2:
        return "dual"
    return "multi"


def _checked_branch(count: int, templates: TemplateSet) -> str:
    branch = branch_for(count)
    if not templates.branch(branch):
        raise CountMismatchError(
            f"{templates.family} templates have no {branch} branch (image has {count} lakes)"
        )
    return branch


def _answer_text(
    instances: Sequence[LakeInstance], templates: TemplateSet, branch: str, index: int, rng: random.Random
) -> str:
    template = templates.branch(branch)[index].a
    descriptions = [describe_position(lake.position) for lake in instances]
    values = {"total_number": str(len(instances))}
    if branch == "single":
        values["position_description"] = descriptions[0]
    elif branch == "dual":
        values["position_description[0]"] = descriptions[0]
        values["position_description[1]"] = descriptions[1]
    else:
        sentences = []
        for i, desc in enumerate(descriptions, start=1):
            per_lake = templates.per_lake[rng.randrange(len(templates.per_lake))]
            sentences.append(fill(per_lake, {"number_position": ordinal(i), "position_description": desc}))
        values["all_glacial_sentences"] = " ".join(sentences)
    return fill(template, values)


def template_id(family: str, branch: str, index: int) -> str:
    return f"{family}/{branch}/{index}"


def render_answer(
    instances: Sequence[LakeInstance], templates: TemplateSet, rng: random.Random, index: int | None = None
) -> tuple[str, str]:
    """Render an answer for ``instances`` (in ordinal order).

    The branch follows the lake count: one lake uses ``single``, two use
    ``dual``, three or more use a ``multi`` count sentence followed by one
    per-lake sentence per lake.
    """
    branch = _checked_branch(len(instances), templates)
    if index is None:
        index = rng.randrange(len(templates.branch(branch)))
    return _answer_text(instances, templates, branch, index, rng), template_id(templates.family, branch, index)


def render_question(
    instances_count: int, templates: TemplateSet, rng: random.Random, index: int | None = None
) -> tuple[str, str]:
    branch = _checked_branch(instances_count, templates)
    if index is None:
        index = rng.randrange(len(templates.branch(branch)))
    text = fill(templates.branch(branch)[index].q, {"total_number": str(instances_count)})
    return text, template_id(templates.family, branch, index)


def render_pair(
    instances: Sequence[LakeInstance], templates: TemplateSet, rng: random.Random
) -> tuple[str, str, str]:
    """Sample one question/answer pair; returns ``(question, answer, template_id)``."""
    branch = _checked_branch(len(instances), templates)
    index = rng.randrange(len(templates.branch(branch)))
    question, tid = render_question(len(instances), templates, rng, index=index)
    answer = _answer_text(instances, templates, branch, index, rng)
    return question, answer, tid


# --- dataset assembly -------------------------------------------------------


@dataclass
class QARecord:
    image_id: str
    question: str
    answer: str
    lakes: list[dict]
    template_id: str
    family: str
    seed: int
    config_echo: dict

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False)

    @classmethod
    def from_dict(cls, doc: dict) -> QARecord:
        return cls(**{k: doc[k] for k in cls.__dataclass_fields__})

    def instances(self) -> list[LakeInstance]:
        return [LakeInstance.from_record(rec) for rec in self.lakes]


@dataclass(frozen=True)
class GenerationConfig:
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    split_ratio: float | None = None
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.split_ratio is not None and not 0 < self.split_ratio < 1:
            raise ValueError(f"split ratio must be in (0, 1), got {self.split_ratio}")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")


def _u64(*parts: object, person: bytes = b"") -> int:
    key = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(key, digest_size=8, person=person).digest(), "big")


def record_seed(global_seed: int, image_id: str) -> int:
    """Stable 64-bit per-record seed, independent of processing order."""
    return _u64(global_seed, image_id, person=b"record")


def split_key(image_id: str) -> int:
    return _u64(image_id, person=b"split")


def split_ids(image_ids: Iterable[str], ratio: float = 0.8) -> dict[str, str]:
    """Deterministic train/test assignment.

    Ids are ranked by a stable hash and the first ``round(ratio * n)`` go to
    train, so the split sizes hit the ratio exactly and do not depend on the
    order the ids arrive in.
    """
    if not 0 < ratio < 1:
        raise ValueError(f"split ratio must be in (0, 1), got {ratio}")
    ranked = sorted(set(image_ids), key=lambda i: (split_key(i), i))
    n_train = round(ratio * len(ranked))
    return {i: "train" if rank < n_train else "test" for rank, i in enumerate(ranked)}


def _process(args: tuple[Path, TemplateSet, AnalysisConfig, int]) -> tuple[str, str, QARecord | None, int]:
    path, templates, analysis, global_seed = args
    mask = load_mask(path)
    lakes = analyze(mask, analysis)
    n = len(lakes)
    if n == 0:
        return mask.image_id, "no_instances", None, n
    if templates.family == "position_only" and n != 1:
        return mask.image_id, "count_mismatch", None, n
    seed = record_seed(global_seed, mask.image_id)
    question, answer, tid = render_pair(lakes, templates, random.Random(seed))
    record = QARecord(
        image_id=mask.image_id,
        question=question,
        answer=answer,
        lakes=[lake.to_record() for lake in lakes],
        template_id=tid,
        family=templates.family,
        seed=seed,
        config_echo=analysis.echo(),
    )
    return mask.image_id, "ok", record, n


def generate_dataset(
    mask_dir: str | Path,
    templates: TemplateSet,
    config: GenerationConfig | None = None,
    global_seed: int = 0,
) -> tuple[list[QARecord], dict]:
    """Build one record per mask that has at least one lake.

    Returns the records sorted by image id together with a manifest
    describing the run.
    """
    config = config or GenerationConfig()
    paths = find_masks(mask_dir)
    if not paths:
        raise FileNotFoundError(f"{mask_dir}: no mask files found")
    stems = [p.stem for p in paths]
    dupes = sorted({s for s in stems if stems.count(s) > 1})
    if dupes:
        raise ValueError(f"{mask_dir}: duplicate image ids {dupes}")

    jobs = [(p, templates, config.analysis, global_seed) for p in paths]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_process, jobs, chunksize=max(1, len(jobs) // (4 * config.jobs))))
    else:
        results = [_process(job) for job in jobs]
    results.sort(key=lambda r: r[0])

    records = [r[2] for r in results if r[2] is not None]
    branch_counts = {b: 0 for b in BRANCHES}
    for rec in records:
        branch_counts[branch_for(len(rec.lakes))] += 1
    lake_hist: dict[str, int] = {}
    for _, _, _, n in results:
        lake_hist[str(n)] = lake_hist.get(str(n), 0) + 1

    manifest = {
        "global_seed": global_seed,
        "family": templates.family,
        "template_version": templates.version,
        "template_digest": templates.digest,
        "config_echo": config.analysis.echo(),
        "split_ratio": config.split_ratio,
        "masks_seen": len(results),
        "records": len(records),
        "branch_counts": branch_counts,
        "lake_count_histogram": dict(sorted(lake_hist.items(), key=lambda kv: int(kv[0]))),
        "skipped_no_instances": sum(1 for r in results if r[1] == "no_instances"),
        "skipped_count_mismatch": sum(1 for r in results if r[1] == "count_mismatch"),
        "skipped_ids": [r[0] for r in results if r[2] is None],
    }
    if config.split_ratio is not None:
        assignment = split_ids((rec.image_id for rec in records), config.split_ratio)
        manifest["split"] = {
            "train": [rec.image_id for rec in records if assignment[rec.image_id] == "train"],
            "test": [rec.image_id for rec in records if assignment[rec.image_id] == "test"],
        }
    log.info(
        "generated %d records from %d masks (%d skipped)",
        len(records),
        len(results),
        len(manifest["skipped_ids"]),
    )
    return records, manifest


def manifest_path(out: str | Path) -> Path:
    out = Path(out)
    return out.with_name(out.stem + ".manifest.json")


def write_dataset(records: Iterable[QARecord], manifest: dict, out: str | Path) -> Path:
    """Write records as JSON lines to ``out`` and the manifest next to it."""
    out = Path(out)
    with out.open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")
    mpath = manifest_path(out)
    mpath.write_text(json.dumps(manifest, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return mpath


def read_records(path: str | Path) -> list[QARecord]:
    with Path(path).open(encoding="utf-8") as fh:
        return [QARecord.from_dict(json.loads(line)) for line in fh if line.strip()]
