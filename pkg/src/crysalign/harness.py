"""Batch evaluation pipeline: parse, check, score, aggregate, report.

Samples are processed in two phases mirroring a light/heavy worker split:
cheap checks (parsing, validity, symmetry, trace consistency) run first,
then energy and hull distance for the samples that passed parsing. Results
are gathered by sample index, so output is identical for any worker count.
"""

from __future__ import annotations

import configparser
import csv
import io
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from . import ciflite, energetics, metrics, rewards, traces, validity
from .structcore import reduced_formula
from .symmetry import detect_spacegroup

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_INFRA = 3


class InputError(ValueError):
    """Unreadable or malformed pipeline input."""


@dataclass(frozen=True)
class RunConfig:
    samples_path: str
    output_dir: str = "out"
    reference_structures_path: str | None = None
    worker_count: int = 1
    seed: int = 0
    timeout_s: float = 30.0
    relax_before_hull: bool = True
    symmetry_tol: float = 1e-3
    alpha_validity: float = 1.0
    alpha_stability: float = 10.0
    beta_property: float = 1.0
    e0: float = 1.0
    length_tol: float = 0.05
    angle_tol: float = 5.0
    site_tol: float = 0.03

    def __post_init__(self):
        if self.worker_count < 1:
            raise InputError("worker_count must be >= 1")
        if not os.path.exists(self.samples_path):
            raise InputError(f"samples file not found: {self.samples_path}")
        if (self.reference_structures_path is not None
                and not os.path.exists(self.reference_structures_path)):
            raise InputError(
                f"reference file not found: {self.reference_structures_path}"
            )

    def weights(self) -> rewards.RewardWeights:
        return rewards.RewardWeights(
            self.alpha_validity, self.alpha_stability, self.beta_property
        )

    def match_config(self) -> metrics.MatchConfig:
        return metrics.MatchConfig(self.length_tol, self.angle_tol, self.site_tol)


def load_config(path: str, overrides: dict | None = None) -> RunConfig:
    """Flat sectioned key=value file; explicit overrides win over file keys."""
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise InputError(f"config file not found: {path}")
    merged: dict = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            merged[key] = raw
    casts = {f.name: f.type for f in RunConfig.__dataclass_fields__.values()}
    kwargs: dict = {}
    for key, raw in merged.items():
        if key not in casts:
            raise InputError(f"unknown config key: {key}")
        kind = casts[key]
        if kind == "int":
            kwargs[key] = int(raw)
        elif kind == "float":
            kwargs[key] = float(raw)
        elif kind == "bool":
            kwargs[key] = raw.strip().lower() in ("1", "true", "yes", "on")
        elif kind.startswith("str | None"):
            kwargs[key] = raw or None
        else:
            kwargs[key] = raw
    for key, value in (overrides or {}).items():
        if value is not None:
            kwargs[key] = value
    if "samples_path" not in kwargs:
        raise InputError("config must set samples_path")
    return RunConfig(**kwargs)


@dataclass(frozen=True)
class EvaluationRow:
    index: int
    prompt_id: str
    parse_status: str                  # "ok" or a failure kind
    structural: int = 0
    chemical: int = 0
    composition_match: int = 0
    spacegroup_detected: int | None = None
    spacegroup_match: int | None = None
    e_hull: float | None = None
    r_target: float = 0.0
    site_match: int | None = None
    volume_rel_diff: float | None = None
    bond_rel_diff: float | None = None
    formula: str = ""
    error: str = ""


_CSV_FIELDS = [
    "index", "prompt_id", "parse_status", "structural", "chemical",
    "composition_match", "spacegroup_detected", "spacegroup_match",
    "e_hull", "r_target", "site_match", "volume_rel_diff", "bond_rel_diff",
    "formula", "error",
]


# Per-process state for worker pools; loaded once per worker.
_WORKER: dict = {}


def _init_worker():
    _WORKER["oxidation"] = validity.OxidationTable.load_default()
    _WORKER["backend"] = energetics.PairPotentialBackend.load_default()
    _WORKER["phases"] = energetics.load_reference_phases()


def _light_phase(args) -> dict:
    """Parse and run the cheap checks; never raises."""
    index, prompt_text, response_text, prompt_id, symmetry_tol = args
    if not _WORKER:
        _init_worker()
    out: dict = {"index": index, "prompt_id": prompt_id, "parse_status": "ok",
                 "error": ""}
    try:
        constraints = ciflite.parse_prompt(prompt_text)
        trace_text, cif_text = ciflite.extract_response_parts(response_text)
        if cif_text is None:
            out["parse_status"] = "missing_cif"
            return out
        s = ciflite.parse_ciflite(cif_text)
    except ciflite.ParseError as e:
        out["parse_status"] = "parse_error"
        out["error"] = str(e)
        return out
    try:
        report = validity.build_report(s, constraints.formula, _WORKER["oxidation"])
        out["report"] = report
        out["structure"] = s
        out["constraints"] = constraints
        out["formula"] = reduced_formula(s.composition())
        try:
            sym = detect_spacegroup(s, symmetry_tol)
            out["spacegroup_detected"] = sym.number
            if constraints.spacegroup_number is not None:
                out["spacegroup_match"] = int(
                    sym.number == constraints.spacegroup_number
                )
        except Exception:
            sym = None
            out["spacegroup_detected"] = None
        if trace_text:
            trace = traces.parse_trace(trace_text)
            if sym is not None:
                cons = traces.trace_consistency(trace, s, sym)
                out["site_match"] = int(cons.site_match)
                out["volume_rel_diff"] = cons.volume_rel_diff
                out["bond_rel_diff"] = cons.bond_rel_diff
    except Exception:
        out["parse_status"] = "check_error"
        out["error"] = traceback.format_exc(limit=1).replace("\n", " ")
    return out


def _heavy_phase(args) -> dict:
    """Energy and hull distance; cooperative timeout, never raises."""
    index, s, relax, timeout_s = args
    if not _WORKER:
        _init_worker()
    out: dict = {"index": index}
    start = time.monotonic()
    backend = _WORKER["backend"]
    try:
        if relax:
            s = energetics.relax_positions(backend, s)
        if time.monotonic() - start > timeout_s:
            out["error"] = "timeout"
            return out
        ef = energetics.formation_energy(backend, s)
        candidate = energetics.PhaseEntry(s.composition(), ef, "candidate")
        hull = energetics.energy_above_hull(candidate, list(_WORKER["phases"]))
        out["e_hull"] = max(hull.e_hull, 0.0)
    except Exception as e:
        out["error"] = f"{type(e).__name__}: {e}"
    return out


def _pool_map(fn, items, worker_count):
    if worker_count == 1 or len(items) <= 1:
        if not _WORKER:
            _init_worker()
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=worker_count,
                             initializer=_init_worker) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (worker_count * 4))))


def run_evaluation(config: RunConfig) -> tuple[metrics.MetricReport, list[EvaluationRow]]:
    try:
        samples = ciflite.load_samples(config.samples_path)
    except (OSError, ciflite.ParseError) as e:
        raise InputError(str(e)) from e
    reference = _load_reference(config.reference_structures_path)

    light_args = [
        (i, rec.prompt_text, rec.response_text, rec.prompt_id, config.symmetry_tol)
        for i, rec in enumerate(samples)
    ]
    light = _pool_map(_light_phase, light_args, config.worker_count)
    light.sort(key=lambda d: d["index"])

    heavy_args = [
        (d["index"], d["structure"], config.relax_before_hull, config.timeout_s)
        for d in light if "structure" in d and d["report"].structural
    ]
    heavy = _pool_map(_heavy_phase, heavy_args, config.worker_count)
    heavy_by_index = {d["index"]: d for d in heavy}

    weights = config.weights()
    rows: list[EvaluationRow] = []
    structures = []
    e_hulls: list[float | None] = []
    for d in light:
        idx = d["index"]
        if "report" not in d:
            rows.append(EvaluationRow(
                index=idx, prompt_id=d["prompt_id"],
                parse_status=d["parse_status"], error=d.get("error", ""),
            ))
            continue
        report = d["report"]
        hv = heavy_by_index.get(idx, {})
        e_hull = hv.get("e_hull")
        breakdown = rewards.combined_reward(report, e_hull, weights, config.e0)
        error = d.get("error", "") or hv.get("error", "")
        rows.append(EvaluationRow(
            index=idx, prompt_id=d["prompt_id"], parse_status=d["parse_status"],
            structural=int(report.structural), chemical=int(report.chemical),
            composition_match=int(report.composition_match),
            spacegroup_detected=d.get("spacegroup_detected"),
            spacegroup_match=d.get("spacegroup_match"),
            e_hull=e_hull, r_target=breakdown.r_target,
            site_match=d.get("site_match"),
            volume_rel_diff=d.get("volume_rel_diff"),
            bond_rel_diff=d.get("bond_rel_diff"),
            formula=d.get("formula", ""), error=error,
        ))
        structures.append(d["structure"])
        e_hulls.append(e_hull)

    report = _build_metric_report(rows, structures, e_hulls, reference,
                                  config.match_config())
    return report, rows


def _load_reference(path: str | None):
    if path is None:
        return []
    structures = []
    text = open(path, encoding="utf-8").read()
    for chunk in text.split(ciflite.CIF_CLOSE):
        if ciflite.CIF_OPEN in chunk:
            structures.append(ciflite.parse_ciflite(chunk + ciflite.CIF_CLOSE))
    return structures


def _build_metric_report(rows, structures, e_hulls, reference, match_cfg):
    n = len(rows)
    entries = []

    def add(name, values):
        if values:
            entries.append(metrics.named(metrics.aggregate(values), name))
        else:
            entries.append(metrics.MetricValue(name, 0.0, 0.0, 0, low_count=True))

    add("structural_validity", [bool(r.structural) for r in rows])
    add("chemical_validity", [bool(r.chemical) for r in rows])
    add("composition_match", [bool(r.composition_match) for r in rows])
    add("spacegroup_match", [bool(r.spacegroup_match) for r in rows
                             if r.spacegroup_match is not None])
    known_hulls = [r.e_hull for r in rows if r.e_hull is not None]
    add("mean_e_hull", known_hulls)
    add("stability_rate", [r.e_hull is not None and energetics.is_stable(r.e_hull)
                           for r in rows])
    add("mean_r_target", [r.r_target for r in rows])
    if structures:
        uniq = metrics.uniqueness(structures, match_cfg)
        nov = metrics.novelty(structures, reference, match_cfg) if reference else 1.0
        sun = metrics.sun_ratio(structures, e_hulls, reference, match_cfg)
        m = len(structures)
    else:
        uniq = nov = sun = 0.0
        m = 0
    entries.append(metrics.MetricValue("uniqueness", uniq, 0.0, m, low_count=m <= 1))
    entries.append(metrics.MetricValue("novelty", nov, 0.0, m, low_count=m <= 1))
    entries.append(metrics.MetricValue("sun_ratio", sun, 0.0, m, low_count=m <= 1))
    _ = n
    return metrics.MetricReport(tuple(entries))


def rows_to_csv(rows: list[EvaluationRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_CSV_FIELDS)
    for r in rows:
        record = []
        for name in _CSV_FIELDS:
            v = getattr(r, name)
            if v is None:
                record.append("")
            elif isinstance(v, float):
                record.append(repr(v))
            else:
                record.append(v)
        writer.writerow(record)
    return buf.getvalue()


def emit_report(report: metrics.MetricReport, rows: list[EvaluationRow],
                outdir: str) -> dict[str, str]:
    os.makedirs(outdir, exist_ok=True)
    paths = {
        "metrics.csv": report.to_csv(),
        "metrics.md": report.to_markdown(),
        "samples.csv": rows_to_csv(rows),
    }
    out = {}
    for name, content in paths.items():
        path = os.path.join(outdir, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(content)
        out[name] = path
    return out
