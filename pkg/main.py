import argparse
import json
import math
import sys
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, TextIO

from loguru import logger

import combinatorics
import exact_kernel
import monte_carlo
import spanning
from config import Budget, RunDefaults, find_config_file, load_config_file
from errors import DomainError, ParseError, WalkError, require_lambda
from export import (
    OutputFormat,
    dump_graph,
    format_value,
    load_graph,
    open_output,
    write_table,
)
from lattice import speed as walk_speed
from models import LatticePoint
from seeding import MAX_SEED, trial_generator

LOG_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - "
    "<level>{message}</level> <dim>{extra}</dim>"
)

# Commands that accept the λ = 1 simple-walk reference run
REFERENCE_COMMANDS = {"rho-diag", "empirical-return", "box", "path-prob", "green"}
# Commands that never look at λ
LAMBDA_FREE_COMMANDS = {"catalan", "bnk"}


def configure_logging(level: str = "INFO") -> None:
    logger.remove()
    logger.add(sys.stderr, format=LOG_FORMAT, level=level)


@dataclass
class RunConfig:
    """Everything a run depends on; echoed in full ahead of every output."""

    command: str
    d: int = 2
    lam: float = 0.5
    n: int | None = None
    n_max: int = 40
    horizon: int = 10_000
    checkpoints: tuple[int, ...] = ()
    trials: int | None = None
    seed: int = RunDefaults.SEED
    sigma: float = 1.0
    eps: float = 0.5
    k: int | None = None
    z: float = 1.0
    kind: str = "drifted"
    boundary: str = "wired"
    mode: str = "excursion"
    shape: str = "box"
    count: str = "range"
    per_trial: bool = False
    path: str | None = None
    graph: Path | None = None
    start_distance: int | None = None
    output: OutputFormat = "csv"
    out: Path | None = None
    workers: int = RunDefaults.WORKERS
    max_dp_states: int = Budget.MAX_DP_STATES
    max_pair_cells: int = Budget.MAX_PAIR_CELLS
    max_brute_n: int = Budget.MAX_BRUTE_N
    max_tree_vertices: int = Budget.MAX_EXACT_TREE_VERTICES

    def budget(self) -> Budget:
        return Budget(
            max_dp_states=self.max_dp_states,
            max_pair_cells=self.max_pair_cells,
            max_brute_n=self.max_brute_n,
            max_exact_tree_vertices=self.max_tree_vertices,
        )

    def trials_or(self, default: int) -> int:
        return self.trials if self.trials is not None else default

    def require_n(self) -> int:
        if self.n is None:
            raise DomainError(f"{self.command} needs --n", command=self.command)
        return self.n

    def parameters(self) -> dict[str, Any]:
        """Parameter echo; the output destination is not part of the run."""
        values = asdict(self)
        values.pop("out")
        if values["graph"] is not None:
            values["graph"] = str(values["graph"])
        values["lambda"] = values.pop("lam")
        return values


@dataclass
class Table:
    header: Sequence[str]
    rows: list[Sequence[Any]] = field(default_factory=list)
    render: Callable[[TextIO], None] | None = None


class CommandLineParser(argparse.ArgumentParser):
    """ArgumentParser that raises ParseError instead of exiting."""

    def error(self, message: str):
        raise ParseError(message)


def _int_list(value: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in value.split(",") if v.strip())
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {e}")


def _shared_flags() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--d", type=int, default=2, help="Lattice dimension")
    shared.add_argument("--lambda", dest="lam", type=float, default=0.5)
    shared.add_argument("--n", type=int, help="Steps, box size or path half-length")
    shared.add_argument("--n-max", type=int, default=40)
    shared.add_argument("--horizon", type=int, default=10_000)
    shared.add_argument(
        "--checkpoints", type=_int_list, default=(), help="Extra horizons, e.g. 100,1000"
    )
    shared.add_argument("--trials", type=int)
    shared.add_argument("--seed", type=int, default=RunDefaults.SEED)
    shared.add_argument("--sigma", type=float, default=1.0)
    shared.add_argument("--eps", type=float, default=0.5)
    shared.add_argument("--k", type=int)
    shared.add_argument("--z", type=float, default=1.0, help="Green function argument")
    shared.add_argument(
        "--kind", choices=["biased", "drifted", "reflected"], default="drifted"
    )
    shared.add_argument("--boundary", choices=["free", "wired"], default="wired")
    shared.add_argument("--mode", choices=["brute", "excursion"], default="excursion")
    shared.add_argument("--shape", choices=["box", "ball"], default="box")
    shared.add_argument("--count", choices=["range", "coincidence"], default="range")
    shared.add_argument(
        "--per-trial",
        action="store_true",
        help="Write one (trial, horizon, count) row per trial instead of summaries",
    )
    shared.add_argument("--path", help="Lattice path as `0,0;1,0;0,0`")
    shared.add_argument("--graph", type=Path, help="Graph file for ust, as written by box")
    shared.add_argument("--start-distance", type=int)
    shared.add_argument("--output", choices=["csv", "json"], default="csv")
    shared.add_argument("--out", type=Path, help="Output file (default: stdout)")
    shared.add_argument("--workers", type=int, default=RunDefaults.WORKERS)
    shared.add_argument("--max-dp-states", type=int, default=Budget.MAX_DP_STATES)
    shared.add_argument("--max-pair-cells", type=int, default=Budget.MAX_PAIR_CELLS)
    shared.add_argument("--max-brute-n", type=int, default=Budget.MAX_BRUTE_N)
    shared.add_argument(
        "--max-tree-vertices", type=int, default=Budget.MAX_EXACT_TREE_VERTICES
    )
    shared.add_argument("--config", type=Path, help="key=value run configuration file")
    shared.add_argument("--verbose", action="store_true")
    shared.add_argument("--quiet", action="store_true")
    return shared


def build_parser() -> CommandLineParser:
    parser = CommandLineParser(
        prog="biasedusf",
        description="Biased random walks and uniform spanning forests on Z^d",
    )
    subparsers = parser.add_subparsers(
        dest="command", required=True, parser_class=CommandLineParser
    )
    shared = _shared_flags()
    for name, (_, help_text) in COMMANDS.items():
        subparsers.add_parser(name, parents=[shared], help=help_text)
    return parser


def _log_level(verbose: bool, quiet: bool) -> str:
    return "DEBUG" if verbose else "WARNING" if quiet else "INFO"


def requested_log_level(argv: Sequence[str]) -> str:
    """Log level from --verbose/--quiet alone, before any config file is read."""
    early = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    early.add_argument("--verbose", action="store_true")
    early.add_argument("--quiet", action="store_true")
    known, _ = early.parse_known_args(argv)
    return _log_level(known.verbose, known.quiet)


def parse_config(argv: Sequence[str]) -> tuple[RunConfig, str]:
    """Flags override values from the config file; returns (config, log level)."""
    parser = build_parser()
    preliminary = argparse.ArgumentParser(add_help=False)
    preliminary.add_argument("--config", type=Path)
    known, _ = preliminary.parse_known_args(argv)

    config_path = known.config or find_config_file()
    if config_path is not None:
        if not config_path.is_file():
            raise ParseError(f"config file not found: {config_path}")
        values = load_config_file(config_path)
        values = {("lam" if key == "lambda" else key): v for key, v in values.items()}
        for flag in ("verbose", "quiet", "per_trial"):
            if flag in values:
                values[flag] = values[flag].lower() in ("1", "true", "yes")
        subparsers = next(
            action
            for action in parser._actions
            if isinstance(action, argparse._SubParsersAction)
        )
        for subparser in subparsers.choices.values():
            known_keys = {action.dest for action in subparser._actions}
            unknown = set(values) - known_keys
            if unknown:
                raise ParseError(
                    f"unknown keys in {config_path}: {sorted(unknown)}",
                    path=str(config_path),
                )
            subparser.set_defaults(**values)

    args = vars(parser.parse_args(argv))
    level = _log_level(args.pop("verbose"), args.pop("quiet"))
    args.pop("config")
    return RunConfig(**args), level


def _parse_path(text: str) -> combinatorics.LatticePath:
    try:
        points = [
            tuple(int(c) for c in vertex.split(","))
            for vertex in text.split(";")
            if vertex.strip()
        ]
    except ValueError as e:
        raise ParseError(f"malformed --path {text!r}: {e}")
    return combinatorics.LatticePath.of(*points)


def _checkpoints(config: RunConfig, *defaults: int) -> tuple[int, ...]:
    return tuple(sorted({config.horizon, *config.checkpoints, *defaults}))


def _record_row(record: dict[str, Any], header: Sequence[str]) -> tuple[Any, ...]:
    return tuple(record.get(column) for column in header)


def _per_trial_table(counts: dict[int, monte_carlo.CountDistribution]) -> Table:
    return Table(
        header=["trial", "horizon", "count"],
        rows=[
            (trial, horizon, int(value))
            for horizon, distribution in counts.items()
            for trial, value in enumerate(distribution.counts)
        ],
    )


def run_rho_diag(config: RunConfig) -> Table:
    n_max = config.n if config.n is not None else config.n_max
    rows = exact_kernel.rho_diagnostics(config.d, config.lam, n_max, config.budget())
    return Table(
        header=["n", "p2n", "root_estimate", "corrected_ratio", "hk_ratio"],
        rows=[
            (r.n, r.p2n, r.root_estimate, r.corrected_ratio, r.hk_ratio) for r in rows
        ],
    )


def run_speed(config: RunConfig) -> Table:
    report = monte_carlo.speed_estimate(
        config.d,
        config.lam,
        config.horizon,
        config.trials_or(200),
        config.seed,
        config.workers,
    )
    target = walk_speed(config.lam)
    scalar = report.scalar
    rows: list[Sequence[Any]] = [
        ("scalar", scalar.point_estimate, scalar.std_error, target)
    ]
    estimates = report.per_coordinate.point_estimate
    errors = report.per_coordinate.std_error
    assert isinstance(estimates, tuple) and isinstance(errors, tuple)
    for axis, (estimate, error) in enumerate(zip(estimates, errors), start=1):
        rows.append((f"coordinate_{axis}", estimate, error, target / config.d))
    return Table(header=["quantity", "estimate", "std_error", "target"], rows=rows)


def run_axial_visits(config: RunConfig) -> Table:
    horizons = _checkpoints(config, 2 * config.horizon)
    profile = monte_carlo.axial_visit_profile(
        config.d,
        config.lam,
        horizons,
        config.trials_or(RunDefaults.TRIALS),
        config.seed,
        workers=config.workers,
    )
    if config.per_trial:
        return _per_trial_table({h: report.visits for h, report in profile.items()})

    header = ["horizon", "median", "mean", "saturation", "tv_to_previous"]
    rows = []
    previous = None
    for report in profile.values():
        tv = (
            monte_carlo.total_variation(previous, report.visits)
            if previous is not None
            else None
        )
        record = {
            **report.visits.as_record(),
            "saturation": report.saturation,
            "tv_to_previous": tv,
        }
        rows.append(_record_row(record, header))
        previous = report.visits
    return Table(header=header, rows=rows)


def run_intersections(config: RunConfig) -> Table:
    profile = monte_carlo.intersection_profile(
        config.kind,
        config.d,
        config.lam,
        _checkpoints(config),
        config.trials_or(100),
        master_seed=config.seed,
        count=config.count,
        workers=config.workers,
    )
    if config.per_trial:
        return _per_trial_table(profile)

    header = ["horizon", "median", "mean", "trials"]
    return Table(
        header=header,
        rows=[_record_row(counts.as_record(), header) for counts in profile.values()],
    )



def run_expected_intersections(config: RunConfig) -> Table:
    top = config.require_n()
    table = exact_kernel.intersection_table(
        config.d, config.lam, top, top, config.budget()
    )
    rows = []
    previous = 0.0
    for M in range(top + 1):
        partial_sum = math.fsum(table[: M + 1, : M + 1].ravel())
        rows.append((M, partial_sum, partial_sum - previous))
        previous = partial_sum
    return Table(header=["M", "partial_sum", "increment"], rows=rows)


def run_llt_diag(config: RunConfig) -> Table:
    steps = config.checkpoints or (config.require_n(),)
    rows = []
    for n in steps:
        report = exact_kernel.llt_diagnostics(
            config.d, config.lam, n, config.sigma, config.eps, config.budget()
        )
        rows.append(
            (
                report.n,
                report.sup_scaled,
                report.box_min_scaled,
                report.tail_mass,
                report.gaussian_peak_scaled,
            )
        )
    return Table(
        header=["n", "sup_scaled", "box_min_scaled", "tail_mass", "gaussian_peak_scaled"],
        rows=rows,
    )


def run_catalan(config: RunConfig) -> Table:
    L = config.require_n()
    rows = [
        (ell, combinatorics.catalan(ell), combinatorics.catalan_tail(ell))
        for ell in range(L + 1)
    ]
    return Table(header=["ell", "catalan", "tail_sum"], rows=rows)


def run_bnk(config: RunConfig) -> Table:
    n = config.require_n()
    ks = [config.k] if config.k is not None else list(range(n + 1))
    budget = config.budget()
    rows = []
    for k in ks:
        count = combinatorics.count_bnk(n, k, config.mode, budget)
        ratio = combinatorics.bound_ratio(count, n, k) if k > 0 else None
        rows.append((n, k, count, combinatorics.bridge_count_closed_form(n, k), ratio))
    return Table(header=["n", "k", "count", "closed_form", "bound_ratio"], rows=rows)


def run_path_prob(config: RunConfig) -> Table:
    if config.path is None:
        raise DomainError("path-prob needs --path")
    path = _parse_path(config.path)
    result = combinatorics.path_probability(path, config.lam)
    bound = (
        combinatorics.eta_bound(path, config.lam)
        if path.is_closed and len(path) % 2 == 0 and config.lam < 1.0
        else None
    )
    return Table(
        header=["length", "probability", "hits", "projected_hits", "eta_bound"],
        rows=[(len(path), result.probability, result.hits, result.projected_hits, bound)],
    )


def _start_distance(config: RunConfig) -> int:
    if config.start_distance is not None:
        return config.start_distance
    return math.ceil(math.sqrt(config.horizon))


def run_alpha(config: RunConfig) -> Table:
    k = config.k if config.k is not None else 2**config.d
    starts = spanning.orthant_starts(config.d, k, _start_distance(config))
    table = monte_carlo.alpha_table(
        config.d,
        config.lam,
        starts,
        _checkpoints(config),
        config.trials_or(RunDefaults.TRIALS),
        config.seed,
        config.workers,
    )
    header = ["k", "horizon", "point_estimate", "std_error", "trials", "ci_low", "ci_high"]
    rows = []
    for report in table[k].values():
        low, high = report.confidence_interval(RunDefaults.CONFIDENCE)
        record = {**report.as_record(), "ci_low": low, "ci_high": high}
        rows.append(_record_row(record, header))
    return Table(header=header, rows=rows)


def run_tree_count(config: RunConfig) -> Table:
    report = spanning.tree_count_estimate(
        config.d,
        config.lam,
        config.horizon,
        config.trials_or(RunDefaults.TRIALS),
        config.seed,
        k_max=config.k,
        start_distance=config.start_distance,
        workers=config.workers,
    )
    rows = []
    for k, at_horizon in report.alpha_table.items():
        doubled = report.alpha_doubled[k]
        rows.append(
            (
                k,
                at_horizon.point_estimate,
                at_horizon.std_error,
                doubled.point_estimate,
                doubled.std_error,
                report.relative_decay(k),
                k <= report.lower_bound_k,
            )
        )
    return Table(
        header=[
            "k",
            "alpha",
            "std_error",
            "alpha_doubled",
            "std_error_doubled",
            "relative_decay",
            "within_lower_bound",
        ],
        rows=rows,
    )


def run_box(config: RunConfig) -> Table:
    g = spanning.build_box(
        config.d, config.require_n(), config.lam, config.boundary, config.shape
    )
    return Table(
        header=["tag", "a", "b", "conductance"],
        rows=[
            (e.tag, format_value(e.a), format_value(e.b), e.conductance)
            for e in g.edges
        ],
        render=lambda stream: dump_graph(g, stream),
    )


def run_ust(config: RunConfig) -> Table:
    if config.graph is not None:
        if not config.graph.is_file():
            raise ParseError(f"graph file not found: {config.graph}")
        with open(config.graph, encoding="utf-8") as handle:
            g = load_graph(handle)
    else:
        g = spanning.build_box(
            config.d, config.require_n(), config.lam, config.boundary, config.shape
        )
    rows = []
    for trial in range(config.trials_or(1)):
        sample = spanning.wilson_ust(g, rng=trial_generator(config.seed, trial))
        count = (
            spanning.forest_stats(sample).component_count
            if g.root is not None
            else None
        )
        rows.append(
            (
                trial,
                count,
                tuple(len(part) for part in sample.components),
                tuple(sorted(sample.chosen_edges)),
            )
        )
    return Table(
        header=["sample", "component_count", "component_sizes", "edges"], rows=rows
    )


def run_wsf_z1(config: RunConfig) -> Table:
    law = spanning.wsf_z1_sample(
        config.lam,
        config.require_n(),
        config.trials_or(RunDefaults.TRIALS),
        config.seed,
        config.workers,
    )
    return Table(
        header=["outcome", "count", "frequency", "exact_value", "limit_value"],
        rows=[
            (i, count, frequency, exact, spanning.wsf_z1_exact(config.lam, i))
            for i, count, frequency, exact in law.rows()
        ],
    )


def run_empirical_return(config: RunConfig) -> Table:
    n = config.require_n()
    report = monte_carlo.empirical_return(
        config.d,
        config.lam,
        n,
        config.trials_or(RunDefaults.TRIALS),
        config.seed,
        config.workers,
    )
    exact = exact_kernel.heat_kernel(
        "biased", config.d, config.lam, n, budget=config.budget()
    ).mass(LatticePoint.origin(config.d))
    header = ["n", "point_estimate", "std_error", "trials", "exact"]
    record = {**report.as_record(), "n": n, "exact": exact}
    return Table(header=header, rows=[_record_row(record, header)])


def run_green(config: RunConfig) -> Table:
    kind = "biased" if config.kind == "reflected" else config.kind
    steps = config.require_n()
    value = exact_kernel.green_function(
        kind, config.d, config.lam, config.z, steps, config.budget()
    )
    return Table(header=["kind", "z", "steps", "value"], rows=[(kind, config.z, steps, value)])


COMMANDS: dict[str, tuple[Callable[[RunConfig], Table], str]] = {
    "rho-diag": (run_rho_diag, "Spectral radius diagnostics from exact return probabilities"),
    "speed": (run_speed, "Monte Carlo speed estimate"),
    "axial-visits": (run_axial_visits, "Visits to the axial set"),
    "intersections": (run_intersections, "Range intersections of two walks"),
    "expected-intersections": (
        run_expected_intersections,
        "Exact partial sums of the expected intersection series",
    ),
    "llt-diag": (run_llt_diag, "Local limit diagnostics of the drifted walk"),
    "catalan": (run_catalan, "Catalan numbers and their generating-function tail"),
    "bnk": (run_bnk, "Bridges with k returns to 0"),
    "path-prob": (run_path_prob, "Probability of a lattice path"),
    "alpha": (run_alpha, "Non-intersection probability of k walks"),
    "tree-count": (run_tree_count, "Lower bound on the number of forest trees"),
    "box": (run_box, "Free or wired box graph"),
    "ust": (run_ust, "Uniform spanning tree samples on a box"),
    "wsf-z1": (run_wsf_z1, "Wired forest law on Z: sampled vs exact"),
    "empirical-return": (run_empirical_return, "Monte Carlo return probability"),
    "green": (run_green, "Truncated Green function"),
}


def validate(config: RunConfig) -> None:
    if config.command not in COMMANDS:
        raise ParseError(f"unknown command {config.command!r}")
    if config.command not in LAMBDA_FREE_COMMANDS:
        require_lambda(config.lam, allow_reference=config.command in REFERENCE_COMMANDS)
    if config.trials is not None and config.trials < 1:
        raise DomainError(f"trials must be positive, got {config.trials}")
    if config.workers < 1:
        raise DomainError(f"workers must be positive, got {config.workers}")
    if not 0 <= config.seed <= MAX_SEED:
        raise DomainError(f"seed must be a 64-bit unsigned integer, got {config.seed}")


def execute(config: RunConfig) -> int:
    """Run one command and write its output; returns the process exit status."""
    try:
        validate(config)
        handler, _ = COMMANDS[config.command]
        logger.info("Running command", command=config.command)
        table = handler(config)

        if table.render is not None and config.output == "csv":
            with open_output(config.out) as stream:
                for key, value in sorted(config.parameters().items()):
                    stream.write(f"#{key}={format_value(value)}\n")
                table.render(stream)
        else:
            write_table(
                config.out, config.output, config.parameters(), table.header, table.rows
            )
        return 0
    except WalkError as e:
        logger.error("Command failed", command=config.command, error=e.code)
        print(json.dumps(e.record(), sort_keys=True, default=str), file=sys.stderr)
        return e.exit_status
    except Exception as e:
        logger.exception("Unexpected failure", command=config.command)
        record = {"error": WalkError.code, "message": str(e)}
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        return WalkError.exit_status


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    configure_logging(requested_log_level(argv))
    try:
        config, level = parse_config(argv)
    except ParseError as e:
        print(json.dumps(e.record(), sort_keys=True, default=str), file=sys.stderr)
        return e.exit_status

    configure_logging(level)
    return execute(config)


if __name__ == "__main__":
    sys.exit(main())
