"""Traces + manifest -> labeled dataset -> cross-validated tree and reports.

On-disk layout of a trace directory (what ``pulse synth`` writes)::

    manifest.csv
    {kernel}.{dtype}.{size}.p{1..8}.trace
    {kernel}.{dtype}.{size}.ll       # IR, counted for op/tcdm
    {kernel}.{dtype}.{size}.mca      # analyzer report
"""

from __future__ import annotations

import csv
import io
import json
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .classifier import CVConfig, Dataset, EvalReport, cross_validate, fit, rank_features
from .classifier.tree import DecisionTree
from .energy import ActivityCounts, ClusterTopology, EnergyCostTable, default_cost_table
from .errors import MissingInputError, MissingTraceError, PipelineError, PulseError, SweepError
from .features import (
    CORE_COUNTS,
    FEATURE_SETS,
    FeatureVector,
    RawMetrics,
    assemble_vector,
    compute_agg,
    count_ir_categories,
    extract_dynamic,
    needs,
    parse_mca_report,
)
from .labeling import EnergySweep, LabeledSample, label_min_energy, sweep_from_activities
from .trace import collect_activity

log = logging.getLogger(__name__)

MANIFEST_COLUMNS = ("sample_id", "kernel", "suite", "dtype", "size_bytes", "transfer", "avgws", "op", "tcdm")
META_COLUMNS = ("sample_id", "kernel", "suite", "dtype", "size_bytes")
ENERGY_COLUMNS = tuple(f"energy_{p}" for p in CORE_COUNTS)
VALID_SIZES = (512, 2048, 8192, 8196, 32768)


@dataclass(frozen=True)
class ManifestRow:
    kernel: str
    suite: str
    dtype: str
    size_bytes: int
    transfer: float
    avgws: float
    op: int | None = None
    tcdm: int | None = None

    @property
    def sample_id(self) -> str:
        return f"{self.kernel}.{self.dtype}.{self.size_bytes}"


def _opt_int(text: str | None) -> int | None:
    text = (text or "").strip()
    return int(text) if text else None


def parse_manifest(text: str, source: str = "manifest") -> list[ManifestRow]:
    reader = csv.DictReader(io.StringIO(text))
    need = {"kernel", "suite", "dtype", "size_bytes", "transfer", "avgws"}
    missing = need - set(reader.fieldnames or ())
    if missing:
        raise PipelineError(f"{source}: missing columns {sorted(missing)}")
    rows, seen = [], set()
    for n, rec in enumerate(reader, 2):
        try:
            row = ManifestRow(
                kernel=rec["kernel"], suite=rec["suite"], dtype=rec["dtype"],
                size_bytes=int(rec["size_bytes"]), transfer=float(rec["transfer"]),
                avgws=float(rec["avgws"]), op=_opt_int(rec.get("op")), tcdm=_opt_int(rec.get("tcdm")),
            )
        except (TypeError, ValueError) as exc:
            raise PipelineError(f"{source}:{n}: bad record: {exc}") from exc
        if row.dtype not in ("int32", "fp32"):
            raise PipelineError(f"{source}:{n}: dtype must be int32 or fp32, got {row.dtype!r}")
        if row.size_bytes not in VALID_SIZES:
            raise PipelineError(f"{source}:{n}: size_bytes {row.size_bytes} not in {VALID_SIZES}")
        if row.sample_id in seen:
            raise PipelineError(f"{source}:{n}: duplicate sample {row.sample_id}")
        seen.add(row.sample_id)
        rows.append(row)
    return rows


def read_manifest(path) -> list[ManifestRow]:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"manifest not found: {path}")
    return parse_manifest(path.read_text(), str(path))


def manifest_csv(rows: Iterable[ManifestRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MANIFEST_COLUMNS)
    for r in rows:
        w.writerow([r.sample_id, r.kernel, r.suite, r.dtype, r.size_bytes, repr(float(r.transfer)),
                    repr(float(r.avgws)), "" if r.op is None else r.op, "" if r.tcdm is None else r.tcdm])
    return buf.getvalue()


def trace_path(trace_dir, sample_id: str, p: int) -> Path:
    return Path(trace_dir) / f"{sample_id}.p{p}.trace"


# ---------------------------------------------------------------------------
# samples


def make_sample(
    row: ManifestRow,
    tag: str,
    activities: dict[int, ActivityCounts],
    ir_text: str | None,
    mca_text: str | None,
    topology: ClusterTopology | None = None,
    costs: EnergyCostTable | None = None,
) -> LabeledSample:
    """Label and featurise one kernel instance from its eight activities."""
    sweep = sweep_from_activities(activities, topology, costs)
    want = needs(tag)
    raw = agg = mca = dynamic = None
    if want & {"agg", "raw"}:
        op, tcdm = row.op, row.tcdm
        if op is None or tcdm is None:
            if ir_text is None:
                raise MissingInputError(f"sample {row.sample_id} needs IR text for op/tcdm")
            counts = count_ir_categories(ir_text)
            op = counts.op if op is None else op
            tcdm = counts.tcdm if tcdm is None else tcdm
        raw = RawMetrics(op, tcdm, row.transfer, row.avgws)
        agg = compute_agg(raw)
    if "mca" in want:
        if mca_text is None:
            raise MissingInputError(f"sample {row.sample_id} needs an analyzer report")
        mca = parse_mca_report(mca_text)
    if "dynamic" in want:
        dynamic = {p: extract_dynamic(activities[p], topology) for p in CORE_COUNTS}
    fv = assemble_vector(tag, agg=agg, mca=mca, raw=raw, dynamic=dynamic)
    return LabeledSample(row.sample_id, row.kernel, row.suite, row.dtype, row.size_bytes,
                         fv, sweep, label_min_energy(sweep), bool(agg and agg.degenerate))


def _read_optional(path: Path) -> str | None:
    return path.read_text() if path.is_file() else None


def build_sample(
    row: ManifestRow,
    trace_dir,
    tag: str,
    topology: ClusterTopology | None = None,
    costs: EnergyCostTable | None = None,
) -> LabeledSample:
    trace_dir = Path(trace_dir)
    paths = {p: trace_path(trace_dir, row.sample_id, p) for p in CORE_COUNTS}
    for p, path in paths.items():
        if not path.is_file():
            raise MissingTraceError(row.sample_id, p, path)
    acts = {}
    for p, path in paths.items():
        with path.open() as fh:
            try:
                acts[p], _ = collect_activity(fh, topology)
            except PulseError as exc:
                raise SweepError(f"{path} (p={p}): {exc}") from exc
    ir = _read_optional(trace_dir / f"{row.sample_id}.ll")
    mca = _read_optional(trace_dir / f"{row.sample_id}.mca")
    return make_sample(row, tag, acts, ir, mca, topology, costs)


def _build_one(args) -> LabeledSample:
    return build_sample(*args)


def build_dataset(
    trace_dir,
    manifest_path=None,
    tag: str = "RAW+AGG+MCA",
    topology: ClusterTopology | None = None,
    costs: EnergyCostTable | None = None,
    jobs: int = 1,
) -> Dataset:
    if tag not in FEATURE_SETS:
        raise PipelineError(f"unknown feature set {tag!r}; choose from {sorted(FEATURE_SETS)}")
    trace_dir = Path(trace_dir)
    if not trace_dir.is_dir():
        raise MissingInputError(f"trace directory not found: {trace_dir}")
    rows = read_manifest(manifest_path or trace_dir / "manifest.csv")
    costs = costs or default_cost_table()
    work = [(row, trace_dir, tag, topology, costs) for row in rows]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            samples = list(pool.map(_build_one, work, chunksize=4))
    else:
        samples = [_build_one(w) for w in work]
    log.info("built %d samples (%s)", len(samples), tag)
    return Dataset(tuple(samples), FEATURE_SETS[tag])


# ---------------------------------------------------------------------------
# dataset CSV


def dataset_csv(dataset: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(META_COLUMNS + dataset.feature_names + ENERGY_COLUMNS + ("label", "degenerate"))
    for s in dataset.samples:
        w.writerow([s.sample_id, s.kernel, s.suite, s.dtype, s.size_bytes]
                   + [repr(float(v)) for v in s.features.values]
                   + s.sweep.as_list() + [s.label, int(s.degenerate)])
    return buf.getvalue()


def parse_dataset_csv(text: str, source: str = "dataset", tag: str = "") -> Dataset:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise PipelineError(f"{source}: empty file") from None
    if tuple(header[:5]) != META_COLUMNS:
        raise PipelineError(f"{source}: header must start with {','.join(META_COLUMNS)}")
    try:
        e0 = header.index(ENERGY_COLUMNS[0])
    except ValueError:
        raise PipelineError(f"{source}: no energy columns") from None
    if tuple(header[e0:e0 + 8]) != ENERGY_COLUMNS or header[e0 + 8:e0 + 9] != ["label"]:
        raise PipelineError(f"{source}: expected energy_1..energy_8 followed by label")
    names = tuple(header[5:e0])
    if not tag:
        tag = next((t for t, n in FEATURE_SETS.items() if n == names), "custom")
    has_flag = header[e0 + 9:e0 + 10] == ["degenerate"]
    samples = []
    for n, rec in enumerate(reader, 2):
        if not rec:
            continue
        if len(rec) != len(header):
            raise PipelineError(f"{source}:{n}: expected {len(header)} fields, got {len(rec)}")
        try:
            fv = FeatureVector(names, tuple(float(v) for v in rec[5:e0]), tag)
            sweep = EnergySweep.from_list(int(v) for v in rec[e0:e0 + 8])
            label = int(rec[e0 + 8])
            degenerate = bool(int(rec[e0 + 9])) if has_flag else False
            size = int(rec[4])
        except ValueError as exc:
            raise PipelineError(f"{source}:{n}: {exc}") from exc
        if label != label_min_energy(sweep):
            raise PipelineError(f"{source}:{n}: label {label} is not the sweep argmin")
        samples.append(LabeledSample(rec[0], rec[1], rec[2], rec[3], size, fv, sweep, label, degenerate))
    return Dataset(tuple(samples), names)


def write_dataset(dataset: Dataset, path) -> None:
    Path(path).write_text(dataset_csv(dataset))


def read_dataset(path) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"dataset not found: {path}")
    return parse_dataset_csv(path.read_text(), str(path))


# ---------------------------------------------------------------------------
# training and reports


def parse_report_csv(text: str) -> list[tuple[float, float, float, float]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["tolerance_pct", "mean_acc", "std_acc", "baseline_acc"]:
        raise PipelineError("not a report CSV")
    return [tuple(float(v) for v in rec) for rec in reader if rec]


def train_and_evaluate(dataset_path, report_path, model_path, config: CVConfig = CVConfig(),
                       jobs: int = 1) -> EvalReport:
    dataset = read_dataset(dataset_path)
    report = cross_validate(dataset, config, jobs)
    Path(report_path).write_text(report.to_csv())
    tree = fit(dataset, config.max_depth, config.min_samples_leaf)
    model = tree.to_dict()
    # mean CV importances ride along for `pulse report`
    model["cv_importances"] = {k: repr(v) for k, v in report.importances.items()}
    Path(model_path).write_text(json.dumps(model, indent=1) + "\n")
    return report


def load_model(path) -> tuple[DecisionTree, dict]:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"model not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise PipelineError(f"{path}: {exc}") from exc
    return DecisionTree.from_dict(raw), raw


def importance_csv(importances: dict[str, float]) -> str:
    lines = ["feature_name,importance"]
    if sum(importances.values()) > 0:
        lines += [f"{n},{importances[n]!r}" for n in rank_features(importances)]
    return "\n".join(lines) + "\n"


def report_importance(model_path, out_path, source: str = "cv") -> dict[str, float]:
    """Write ``feature_name,importance`` sorted descending.

    ``source`` picks the fold-averaged CV importances stored with the model
    or the importances of the tree fitted on all samples.
    """
    tree, raw = load_model(model_path)
    if source == "cv" and "cv_importances" in raw:
        imp = {k: float(v) for k, v in raw["cv_importances"].items()}
    elif source in ("cv", "model"):
        imp = dict(zip(tree.feature_names, (float(v) for v in tree.importances())))
    else:
        raise PipelineError(f"unknown importance source {source!r}")
    if sum(imp.values()) <= 0:
        warnings.warn("model is a single leaf; no feature importances to report", stacklevel=2)
    Path(out_path).write_text(importance_csv(imp))
    return imp


def parse_importance_csv(text: str) -> list[tuple[str, float]]:
    reader = csv.reader(io.StringIO(text))
    if next(reader, None) != ["feature_name", "importance"]:
        raise PipelineError("not an importance CSV")
    return [(n, float(v)) for n, v in reader]


def tolerance_grid(max_pct: int = 10, step_pct: int = 1) -> tuple[float, ...]:
    if step_pct < 1 or max_pct < 0:
        raise PipelineError("tolerance grid needs step >= 1 and max >= 0")
    return tuple(p / 100 for p in range(0, max_pct + 1, step_pct))


# ---------------------------------------------------------------------------
# synthetic corpora


def manifest_row_of(spec, with_counts: bool = False) -> ManifestRow:
    from .synthgen import manifest_record

    rec = manifest_record(spec)
    return ManifestRow(spec.name, spec.suite, spec.dtype, spec.size_bytes, float(rec["transfer"]),
                       float(rec["avgws"]), rec["op"] if with_counts else None,
                       rec["tcdm"] if with_counts else None)


def _write_spec(args) -> None:
    from .synthgen import mca_fingerprint, render_ir, render_mca_report, simulate_trace

    spec, out, topology = args
    for p in CORE_COUNTS:
        trace_path(out, spec.sample_id, p).write_text(simulate_trace(spec, p, topology))
    (out / f"{spec.sample_id}.ll").write_text(render_ir(spec))
    (out / f"{spec.sample_id}.mca").write_text(render_mca_report(mca_fingerprint(spec)))


def write_synth_suite(specs: Sequence, out_dir, topology: ClusterTopology | None = None, jobs: int = 1) -> Path:
    """Traces, IR, analyzer reports and manifest for every spec."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    work = [(s, out, topology) for s in specs]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(_write_spec, work, chunksize=2))
    else:
        for w in work:
            _write_spec(w)
    (out / "manifest.csv").write_text(manifest_csv(manifest_row_of(s) for s in specs))
    return out


def _spec_sample(args) -> LabeledSample:
    from .synthgen import expected_activity, mca_fingerprint, render_ir, render_mca_report

    spec, tag, topology, costs = args
    acts = {p: expected_activity(spec, p, topology) for p in CORE_COUNTS}
    return make_sample(manifest_row_of(spec), tag, acts, render_ir(spec),
                       render_mca_report(mca_fingerprint(spec)), topology, costs)


def dataset_from_specs(
    specs: Sequence,
    tag: str = "RAW+AGG+MCA",
    topology: ClusterTopology | None = None,
    costs: EnergyCostTable | None = None,
    jobs: int = 1,
) -> Dataset:
    """Same dataset ``build_dataset`` yields on the written suite, minus the text round trip."""
    if tag not in FEATURE_SETS:
        raise PipelineError(f"unknown feature set {tag!r}; choose from {sorted(FEATURE_SETS)}")
    costs = costs or default_cost_table()
    work = [(s, tag, topology, costs) for s in specs]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            samples = list(pool.map(_spec_sample, work, chunksize=8))
    else:
        samples = [_spec_sample(w) for w in work]
    return Dataset(tuple(samples), FEATURE_SETS[tag])
