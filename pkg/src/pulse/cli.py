"""``pulse`` command line.

Subcommands: synth, parse-trace, build-dataset, train, report. Every
subcommand takes ``--config FILE`` holding flat ``key = value`` lines named
after its long flags; flags given on the command line win.

Exit codes: 0 success, 1 validation or invariant failure, 2 missing input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from . import __version__, pipeline
from .classifier import CVConfig, prune_by_importance, cross_validate, fit
from .energy import ClusterTopology, resolve_cost_table, total_energy
from .errors import MissingInputError, PulseError
from .features import FEATURE_SETS
from .synthgen import generate_suite, with_l2_traffic
from .trace import collect_activity

log = logging.getLogger("pulse")

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class ConfigError(PulseError):
    pass


def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"config file not found: {path}")
    out = {}
    for n, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def parse_topology(text: str) -> ClusterTopology:
    if text == "default":
        return ClusterTopology()
    try:
        return ClusterTopology(*(int(v) for v in text.split(",")))
    except (TypeError, ValueError) as exc:
        raise argparse.ArgumentTypeError(f"bad topology {text!r}: {exc}") from None


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value file; command-line flags override it")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pulse", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"pulse {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic kernel suite with traces for p=1..8")
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--kernels", type=int, default=56, help="kernel families (x8 dtype/size variants)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--with-l2", action="store_true", help="add L2, DMA and refill traffic to every kernel")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("parse-trace", help="activity and energy of one trace, as JSON")
    _add_common(p)
    p.add_argument("trace")
    p.add_argument("--topology", default="default", type=parse_topology,
                   help="'default' or CORES,FPUS,L1_BANKS,L2_BANKS")
    p.add_argument("--energy-model", help="cost table file (default: $PULSE_ENERGY_MODEL or built-in)")
    p.add_argument("--out", help="write JSON here instead of stdout")

    p = sub.add_parser("build-dataset", help="label and featurise every manifest sample")
    _add_common(p)
    p.add_argument("--trace-dir", required=True)
    p.add_argument("--manifest", help="default: TRACE_DIR/manifest.csv")
    p.add_argument("--features", default="RAW+AGG+MCA", choices=sorted(FEATURE_SETS))
    p.add_argument("--energy-model")
    p.add_argument("--out", required=True, help="dataset CSV")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("train", help="repeated stratified CV plus a tree fitted on everything")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--report", required=True, help="report CSV")
    p.add_argument("--model", required=True, help="model JSON")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--repeats", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--min-samples-leaf", type=int, default=1)
    p.add_argument("--tolerance-max", type=int, default=10, help="percent")
    p.add_argument("--tolerance-step", type=int, default=1, help="percent")
    p.add_argument("--prune", type=int, default=None, metavar="N",
                   help="keep the N most important features and re-evaluate")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("report", help="feature importance CSV from a trained model")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--source", default="cv", choices=("cv", "model"))
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    subparsers = parser._subparsers._group_actions[0].choices
    required = {name: [a for a in sp._actions if a.required] for name, sp in subparsers.items()}
    # first pass only finds the subcommand and --config; required flags may come from the file
    for acts in required.values():
        for a in acts:
            a.required = False
    args = parser.parse_args(argv)
    sub = subparsers[args.command]
    defaults = {}
    if args.config:
        actions = {a.dest: a for a in sub._actions}
        for key, value in read_config(args.config).items():
            act = actions.get(key)
            if act is None or key in ("config", "help"):
                raise ConfigError(f"{args.config}: unknown key {key!r} for {args.command}")
            if isinstance(act, argparse._StoreTrueAction):
                low = value.lower()
                if low not in _TRUE | _FALSE:
                    raise ConfigError(f"{args.config}: {key} must be true or false")
                defaults[key] = low in _TRUE
            else:
                defaults[key] = value
    for a in required[args.command]:
        a.required = a.dest not in defaults
    sub.set_defaults(**defaults)
    # string defaults go through each flag's type; explicit flags still win
    return parser.parse_args(argv)


def cmd_synth(args) -> int:
    specs = generate_suite(args.seed, args.kernels)
    if args.with_l2:
        specs = [with_l2_traffic(s) for s in specs]
    out = pipeline.write_synth_suite(specs, args.out, jobs=args.jobs)
    log.info("wrote %d samples to %s", len(specs), out)
    print(f"{len(specs)} samples -> {out}")
    return 0


def cmd_parse_trace(args) -> int:
    path = Path(args.trace)
    if not path.is_file():
        raise MissingInputError(f"trace not found: {path}")
    costs = resolve_cost_table(args.energy_model)
    with path.open() as fh:
        act, region = collect_activity(fh, args.topology)
    energy = total_energy(act, args.topology, costs)
    doc = {
        "trace": str(path),
        "region": {"start_cycle": region.start_cycle, "end_cycle": region.end_cycle, "cycles": region.cycles},
        "total_fj": energy.total_fj,
        "per_component": energy.per_component,
        "activity": act.to_dict(),
    }
    text = json.dumps(doc, indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_build_dataset(args) -> int:
    costs = resolve_cost_table(args.energy_model)
    ds = pipeline.build_dataset(args.trace_dir, args.manifest, args.features, costs=costs, jobs=args.jobs)
    pipeline.write_dataset(ds, args.out)
    print(f"{len(ds)} samples, {len(ds.feature_names)} features -> {args.out}")
    return 0


def cmd_train(args) -> int:
    config = CVConfig(
        k=args.folds, repeats=args.repeats, base_seed=args.seed,
        tolerance_grid=pipeline.tolerance_grid(args.tolerance_max, args.tolerance_step),
        max_depth=args.max_depth, min_samples_leaf=args.min_samples_leaf,
    )
    if args.prune is None:
        report = pipeline.train_and_evaluate(args.dataset, args.report, args.model, config, args.jobs)
    else:
        ds = pipeline.read_dataset(args.dataset)
        names, report = prune_by_importance(ds, config, args.prune, cross_validate(ds, config, args.jobs), args.jobs)
        Path(args.report).write_text(report.to_csv())
        model = fit(ds.select(names), config.max_depth, config.min_samples_leaf).to_dict()
        model["cv_importances"] = {k: repr(v) for k, v in report.importances.items()}
        Path(args.model).write_text(json.dumps(model, indent=1) + "\n")
        print("kept " + ",".join(names))
    for t, m, s, b in report.rows():
        print(f"t={t * 100:4g}%  acc={m:.4f} (sd {s:.4f})  always-8={b:.4f}")
    return 0


def cmd_report(args) -> int:
    imp = pipeline.report_importance(args.model, args.out, args.source)
    top = [n for n in sorted(imp, key=lambda n: -imp[n]) if imp[n] > 0][:5]
    print(f"{len(imp)} features -> {args.out}" + (f"; top: {', '.join(top)}" if top else ""))
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "parse-trace": cmd_parse_trace,
    "build-dataset": cmd_build_dataset,
    "train": cmd_train,
    "report": cmd_report,
}


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"pulse: warning: {message}", file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    warnings.showwarning = _show_warning
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except MissingInputError as exc:
        print(f"pulse: error [{type(exc).__name__}] {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"pulse: error [FileNotFoundError] {exc.filename}: {exc.strerror}", file=sys.stderr)
        return 2
    except PulseError as exc:
        print(f"pulse: error [{type(exc).__name__}] {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
