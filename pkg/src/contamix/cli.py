"""Command-line front end.

Subcommands
-----------
sweep       fit every (structure, G) pair on a CSV file and report the BIC-best model
replicate   run one of the bundled experiments (synthetic-noise, crabs, wine)
generate    write a seeded sample of the two-cluster noise scenario as CSV

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 fit failure. Errors are also written to stderr as a JSON object.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .classification import GOOD_THRESHOLD
from .ecm import FitConfig
from .exceptions import ConfigError, ContamixError, DataError, FitError
from .io import ingest_csv
from .report import Report, build_report
from .selection import SweepGrid, sweep
from .structures import ALL_STRUCTURES, as_structure

logger = logging.getLogger("contamix")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_FIT = 0, 1, 2, 3


@dataclass
class RunConfig:
    """Everything one sweep invocation needs."""

    input: str
    columns: list | None = None
    label_column: str | None = None
    structures: tuple = ALL_STRUCTURES
    g_min: int = 1
    g_max: int = 4
    epsilon: float = 1e-5
    eta_star: float = 1000.0
    alpha_star: float = 0.5
    bad_threshold: float = GOOD_THRESHOLD
    seed: int = 0
    restarts: int = 10
    jobs: int = 1
    output: str | None = None
    labels_csv: str | None = None
    plot: str | None = None
    extra: dict = field(default_factory=dict)

    def validate(self):
        if not 1 <= self.g_min <= self.g_max:
            raise ConfigError(f"need 1 <= g-min <= g-max, got {self.g_min} and {self.g_max}")
        if not 0 < self.bad_threshold < 1:
            raise ConfigError("bad threshold must lie in (0, 1)")
        try:
            self.structures = tuple(as_structure(s) for s in self.structures)
            self.fit_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not self.structures:
            raise ConfigError("no covariance structures selected")
        return self

    def fit_config(self) -> FitConfig:
        return FitConfig(
            epsilon=self.epsilon, eta_star=self.eta_star, alpha_star=self.alpha_star,
            seed=self.seed, restarts=self.restarts,
        )


def run_sweep(cfg: RunConfig) -> Report:
    """Ingest, sweep, classify and assemble the report; writes requested files."""
    cfg.validate()
    data = ingest_csv(cfg.input, cfg.columns, cfg.label_column)
    if data.n < cfg.g_max:
        raise DataError(f"{data.n} observations cannot support G = {cfg.g_max}")
    if cfg.plot and data.p != 2:
        raise ConfigError(f"--plot needs exactly 2 feature columns, got {data.p}")
    grid = SweepGrid(cfg.structures, tuple(range(cfg.g_min, cfg.g_max + 1)), cfg.fit_config())
    logger.info("fitting %d models on %d x %d data", len(grid.pairs()), data.n, data.p)
    ranked = sweep(data.values, grid, n_jobs=cfg.jobs)
    meta = {
        "input": str(cfg.input), "n": data.n, "p": data.p, "columns": data.columns,
        "config": {
            "structures": [s.value for s in cfg.structures], "g_min": cfg.g_min, "g_max": cfg.g_max,
            "epsilon": cfg.epsilon, "eta_star": cfg.eta_star, "alpha_star": cfg.alpha_star,
            "bad_threshold": cfg.bad_threshold, "seed": cfg.seed, "restarts": cfg.restarts,
        },
    }
    report = build_report(ranked, data.row_ids, data.labels, cfg.bad_threshold, meta)
    if cfg.output:
        Path(cfg.output).write_text(report.to_json() + "\n", encoding="utf-8")
    if cfg.labels_csv:
        report.write_labels_csv(cfg.labels_csv)
    if cfg.plot:
        from .plotting import emit_svg_scatter

        emit_svg_scatter(
            data.values, [lab.cluster for lab in report.labels], [lab.is_bad for lab in report.labels],
            cfg.plot, data.columns, title=f"{report.best.structure}, G = {report.best.G}",
        )
    return report


# ---------------------------------------------------------------------------
# Argument parsing


class _Parser(argparse.ArgumentParser):
    """Raises instead of exiting so usage errors share the JSON error path."""

    def error(self, message):
        raise ConfigError(message)


def _structures(text):
    if text.strip().lower() == "all":
        return ALL_STRUCTURES
    try:
        return tuple(as_structure(s.strip().upper()) for s in text.split(",") if s.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _column_list(text):
    return [c.strip() for c in text.split(",") if c.strip()]


def _add_fit_options(p):
    p.add_argument("--epsilon", type=float, default=1e-5, help="Aitken convergence tolerance")
    p.add_argument("--eta-max", type=float, default=1000.0, help="upper bound on inflation eta")
    p.add_argument("--alpha-min", type=float, default=0.5, help="lower bound on good proportion alpha")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=10, help="random-partition starts per model")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (0 = all cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="contamix", description="Parsimonious mixtures of contaminated Gaussians.")
    parser.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sw = sub.add_parser("sweep", help="fit a structure x G grid and report the BIC-best model")
    sw.add_argument("--input", required=True)
    sw.add_argument("--columns", type=_column_list, help="comma list of names or 0-based indices")
    sw.add_argument("--label-column", help="known classes, used for confusion tables")
    sw.add_argument("--structures", type=_structures, default=ALL_STRUCTURES, help='comma list or "all"')
    sw.add_argument("--g-min", type=int, default=1)
    sw.add_argument("--g-max", type=int, default=4)
    sw.add_argument("--bad-threshold", type=float, default=GOOD_THRESHOLD)
    sw.add_argument("--output", help="JSON report path (default: stdout)")
    sw.add_argument("--labels-csv", help="per-observation labels as CSV")
    sw.add_argument("--plot", help="SVG scatter plot path (2 feature columns only)")
    _add_fit_options(sw)

    rp = sub.add_parser("replicate", help="run a bundled experiment")
    rp.add_argument("experiment", choices=("synthetic-noise", "crabs", "wine"))
    rp.add_argument("--input", help="dataset CSV (crabs: RW, CL, sex; wine: 13 features, cultivar)")
    rp.add_argument("--seeds", type=int, default=10, help="synthetic-noise replications")
    rp.add_argument("--output", help="JSON summary path (default: stdout)")
    rp.add_argument("--plot", help="SVG figure path")
    _add_fit_options(rp)

    gen = sub.add_parser("generate", help="write the two-cluster noise scenario as CSV")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--noise", type=int, default=20, help="uniform noise points")
    gen.add_argument("--output", required=True)
    return parser


def _cmd_sweep(args):
    cfg = RunConfig(
        input=args.input, columns=args.columns, label_column=args.label_column,
        structures=args.structures, g_min=args.g_min, g_max=args.g_max, epsilon=args.epsilon,
        eta_star=args.eta_max, alpha_star=args.alpha_min, bad_threshold=args.bad_threshold,
        seed=args.seed, restarts=args.restarts, jobs=args.jobs, output=args.output,
        labels_csv=args.labels_csv, plot=args.plot,
    )
    report = run_sweep(cfg)
    if not args.output:
        sys.stdout.write(report.to_json() + "\n")


def _cmd_replicate(args):
    from .experiments import replicate

    try:
        cfg = FitConfig(epsilon=args.epsilon, eta_star=args.eta_max, alpha_star=args.alpha_min,
                        seed=args.seed, restarts=args.restarts)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if args.experiment != "synthetic-noise" and not args.input:
        raise ConfigError(f"replicate {args.experiment} needs --input")
    if args.seeds < 1:
        raise ConfigError("--seeds must be at least 1")
    seeds = range(args.seed, args.seed + args.seeds)
    result = replicate(args.experiment, cfg, args.input, args.jobs, seeds, args.plot)
    text = result.to_json() + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _cmd_generate(args):
    from .datagen import sample_gpcm, two_cluster_scenario

    if args.noise < 0:
        raise ConfigError("--noise must be non-negative")
    sample_gpcm(two_cluster_scenario(args.seed, noise_count=args.noise)).to_csv(args.output)


def _fail(exc, code):
    err = {"error": {"type": type(exc).__name__, "message": str(exc), "exit_code": code}}
    sys.stderr.write(json.dumps(err) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        return _fail(exc, EXIT_USAGE)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr,
    )
    handler = {"sweep": _cmd_sweep, "replicate": _cmd_replicate, "generate": _cmd_generate}[args.command]
    try:
        handler(args)
    except ConfigError as exc:
        return _fail(exc, EXIT_USAGE)
    except DataError as exc:
        return _fail(exc, EXIT_DATA)
    except (FitError, ContamixError) as exc:
        return _fail(exc, EXIT_FIT)
    except OSError as exc:
        return _fail(exc, EXIT_DATA)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
