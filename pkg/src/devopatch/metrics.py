"""Batch experiment harness: per-image attack records, JSON/CSV persistence,
and the ASR / APA / ANQ aggregate report."""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .engine import AttackTrace, EngineConfig, run_attack
from .errors import InitializationFailure, OracleFailure
from .fitness import Norm, SuccessPredicate, distance
from .images import Image, load_image, save_png
from .oracle import make_oracle
from .patch import Candidate


def area_percent(area_pixels: int, h: int, w: int) -> float:
    """Patch area as a percentage of the image's pixel count."""
    if h * w <= 0:
        raise ValueError("image must have a positive pixel count")
    return 100.0 * area_pixels / (h * w)


@dataclass
class AttackRecord:
    """Outcome of one attacked image; the unit ASR/APA/ANQ aggregate over.

    ``query_budget`` is carried per record so failed attacks can be charged
    the full budget when averaging queries.
    """

    record_id: str
    success: bool
    total_queries: int
    setup_queries: int
    query_budget: int
    final_area_pixels: int | None = None
    final_area_percent: float | None = None
    queries_to_best: int | None = None
    candidate: Candidate | None = None
    error: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "id": self.record_id,
            "success": self.success,
            "final_area_pixels": self.final_area_pixels,
            "final_area_percent": self.final_area_percent,
            "queries_to_best": self.queries_to_best,
            "total_queries": self.total_queries,
            "setup_queries": self.setup_queries,
            "candidate": list(self.candidate) if self.candidate is not None else None,
            "query_budget": self.query_budget,
            "error": self.error,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "AttackRecord":
        cand = d.get("candidate")
        return cls(
            record_id=d["id"],
            success=d["success"],
            total_queries=d["total_queries"],
            setup_queries=d["setup_queries"],
            query_budget=d["query_budget"],
            final_area_pixels=d.get("final_area_pixels"),
            final_area_percent=d.get("final_area_percent"),
            queries_to_best=d.get("queries_to_best"),
            candidate=Candidate(*cand) if cand is not None else None,
            error=d.get("error"),
        )


@dataclass
class ExperimentReport:
    """Aggregate metrics over one record set."""

    asr: float
    apa: float | None
    anq: float
    n_images: int
    config_echo: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "asr": self.asr,
            "apa": self.apa,
            "anq": self.anq,
            "n_images": self.n_images,
            "config_echo": self.config_echo,
        }


def aggregate(records, config_echo: dict | None = None) -> ExperimentReport:
    """ASR over all attempts; APA over successful attacks only (absent when
    there are none); ANQ charges successes their queries-to-best and failures
    their full query budget."""
    records = list(records)
    if not records:
        raise ValueError("cannot aggregate an empty record set")
    successes = [r for r in records if r.success]
    asr = 100.0 * len(successes) / len(records)
    apa = None
    if successes:
        apa = sum(r.final_area_percent for r in successes) / len(successes)
    anq = sum(r.queries_to_best if r.success else r.query_budget for r in records) / len(records)
    return ExperimentReport(
        asr=asr, apa=apa, anq=anq, n_images=len(records), config_echo=config_echo or {}
    )


@dataclass
class AttackPair:
    """One evaluation item: a source image with its label and a target image
    (with its label in targeted mode). Images may be file paths or in-memory
    Images."""

    source: "str | Path | Image"
    source_label: int
    target: "str | Path | Image"
    target_label: int | None = None
    pair_id: str | None = None


@dataclass
class ExperimentSpec:
    """Batch run description: pairs, engine config, oracle description,
    attack mode, and where to persist the per-image artifacts."""

    pairs: list
    engine: EngineConfig
    oracle_spec: dict
    mode: str = "targeted"
    output_dir: "str | Path | None" = None
    workers: int = 1
    config_echo: dict = field(default_factory=dict)


def write_curve(path, trace: AttackTrace, h: int, w: int) -> None:
    """Persist the convergence curve: one row per query once a feasible best
    exists, area as a percentage of the image."""
    lines = ["query_index,best_area_percent"]
    for rec in trace.records:
        if rec.best_candidate is None:
            continue
        lines.append(f"{rec.query_index},{area_percent(rec.best_area_pixels, h, w)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def _as_image(ref) -> Image:
    if isinstance(ref, Image):
        return ref
    return load_image(ref)


def _attack_one(spec: ExperimentSpec, index: int, pair: AttackPair, dirs) -> AttackRecord:
    record_id = pair.pair_id if pair.pair_id is not None else f"{index:03d}"
    oracle = make_oracle(spec.oracle_spec)
    x = _as_image(pair.source)
    x_t = _as_image(pair.target)
    if spec.mode == "targeted":
        if pair.target_label is None:
            raise ValueError(f"pair {record_id}: targeted mode needs a target label")
        pred = SuccessPredicate.targeted(pair.target_label)
    else:
        pred = SuccessPredicate.untargeted(pair.source_label)
    budget = spec.engine.query_budget
    try:
        result = run_attack(oracle, x, pair.source_label, x_t, pred, spec.engine)
    except InitializationFailure as exc:
        return AttackRecord(
            record_id=record_id,
            success=False,
            total_queries=exc.queries_used,
            setup_queries=exc.setup_queries,
            query_budget=budget,
            error=str(exc),
        )
    except OracleFailure as exc:
        total = exc.trace.total_queries if exc.trace is not None else 0
        setup = exc.trace.setup_queries if exc.trace is not None else 0
        return AttackRecord(
            record_id=record_id,
            success=False,
            total_queries=total,
            setup_queries=setup,
            query_budget=budget,
            error=str(exc),
        )
    finally:
        oracle.close()

    area_pixels = int(distance(x.quantize8(), result.adversarial, Norm.L0_PIXELS))
    record = AttackRecord(
        record_id=record_id,
        success=True,
        total_queries=result.trace.total_queries,
        setup_queries=result.trace.setup_queries,
        query_budget=budget,
        final_area_pixels=area_pixels,
        final_area_percent=area_percent(area_pixels, x.height, x.width),
        queries_to_best=result.trace.queries_to_best,
        candidate=result.candidate,
    )
    if dirs is not None:
        save_png(result.adversarial, dirs["adversarial"] / f"{record_id}.png")
        write_curve(dirs["curves"] / f"{record_id}.csv", result.trace, x.height, x.width)
    return record


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    """Attack every pair, persist per-image artifacts, and aggregate.

    Per-image failures (initialization or oracle transport) are recorded, not
    fatal; an oracle description that cannot be constructed at all is fatal.
    With ``workers`` > 1 the pairs run on a thread pool, one oracle handle per
    attack.
    """
    if not spec.pairs:
        raise ValueError("experiment needs at least one pair")
    make_oracle(spec.oracle_spec).close()  # fail fast on unbuildable oracles

    dirs = None
    if spec.output_dir is not None:
        out = Path(spec.output_dir)
        dirs = {
            "images": out / "images",
            "curves": out / "curves",
            "adversarial": out / "adversarial",
        }
        for d in dirs.values():
            d.mkdir(parents=True, exist_ok=True)

    jobs = list(enumerate(spec.pairs))
    if spec.workers > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            records = list(pool.map(lambda job: _attack_one(spec, job[0], job[1], dirs), jobs))
    else:
        records = [_attack_one(spec, i, pair, dirs) for i, pair in jobs]

    if dirs is not None:
        for record in records:
            path = dirs["images"] / f"{record.record_id}.json"
            path.write_text(json.dumps(record.to_json_dict(), indent=2) + "\n")

    report = aggregate(records, config_echo=spec.config_echo)
    if spec.output_dir is not None:
        report_path = Path(spec.output_dir) / "report.json"
        report_path.write_text(json.dumps(report.to_json_dict(), indent=2) + "\n")
    return report
