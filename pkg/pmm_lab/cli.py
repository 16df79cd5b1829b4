"""Command-line entry point: pmm-lab <subcommand> [options]."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

import numpy as np
import voluptuous as vol

from .batch import run_batch
from .classify import (
    EventuallyPeriodicConfig,
    classify_infinite,
    has_mobile_cluster,
    is_frozen,
)
from .connect import (
    Certificate,
    certify_connectivity,
    certify_finite_holes,
    certify_finite_particles,
    certify_planner,
    connected,
    plan_transport,
    validate_path,
)
from .const import (
    DEFAULT_BLOCKS,
    DEFAULT_FAMILY,
    DEFAULT_HYDRO_L,
    DEFAULT_HYDRO_REPLICAS,
    DEFAULT_JOBS,
    DEFAULT_L2_THRESHOLD,
    DEFAULT_PDE_CELLS,
    DEFAULT_PROFILE,
    DEFAULT_RHO_GRID,
    DEFAULT_SAMPLES,
    DEFAULT_SEED,
    DEFAULT_SOLVE_TOL,
    DEFAULT_TMACRO,
    DEFAULT_TOL,
    ENV_SEED,
    EXIT_CHECK_FAILED,
    EXIT_OK,
    EXIT_USAGE,
    PROFILES,
    VERSION,
)
from .entropy import entropy_report
from .exact_ctmc import (
    Measure,
    bernoulli_measure,
    build_model,
    check_detailed_balance,
    check_exchangeability,
    check_mirror_symmetry,
    check_stationary,
    class_uniformity,
    decompose,
    stationary_measures,
)
from .hydro import run_experiment
from .kmc import ReplicaTask, compare_exact, run_replicas, state_frequencies
from .lattice_core import (
    Boundary,
    ConstraintFamily,
    Configuration,
    PmmLabError,
    Window,
    load_family,
    validate_family,
)
from .manifest import RunManifest

_LOGGER = logging.getLogger(__name__)

# Arguments that describe where output goes rather than what is computed
_RUNTIME_KEYS = {"out", "verbose", "quiet", "jobs", "handler", "subcommand", "seed"}


# =============================================================================
# Validation helpers
# =============================================================================


def validate_density(value: Any) -> float:
    """Validate a density in [0, 1]."""
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise vol.Invalid(f"Density {value} outside [0, 1]")
    return value


def validate_open_density(value: Any) -> float:
    """Validate a density in (0, 1)."""
    value = validate_density(value)
    if value in (0.0, 1.0):
        raise vol.Invalid("Reference density must lie strictly between 0 and 1")
    return value


POSITIVE_INT = vol.All(vol.Coerce(int), vol.Range(min=1))
OPTIONAL_POSITIVE_INT = vol.Any(None, POSITIVE_INT)

SCHEMAS: dict[str, vol.Schema] = {
    "connect": vol.Schema(
        {vol.Optional("certify"): vol.Any(None, vol.All(vol.Coerce(int), vol.Range(min=2)))},
        extra=vol.ALLOW_EXTRA,
    ),
    "exact": vol.Schema(
        {
            vol.Required("length"): OPTIONAL_POSITIVE_INT,
            vol.Optional("lengths"): vol.Any(None, [POSITIVE_INT]),
            vol.Optional("rho_grid"): vol.Any(None, [validate_density]),
            vol.Optional("count"): vol.Any(None, vol.All(vol.Coerce(int), vol.Range(min=0))),
            vol.Required("rho"): validate_density,
            vol.Required("tol"): vol.All(vol.Coerce(float), vol.Range(min=0.0)),
        },
        extra=vol.ALLOW_EXTRA,
    ),
    "simulate": vol.Schema(
        {
            vol.Required("ring"): POSITIVE_INT,
            vol.Optional("rho"): vol.Any(None, validate_density),
            vol.Required("horizon"): vol.All(vol.Coerce(float), vol.Range(min=0.0)),
            vol.Required("samples"): POSITIVE_INT,
            vol.Required("replicas"): POSITIVE_INT,
        },
        extra=vol.ALLOW_EXTRA,
    ),
    "hydro": vol.Schema(
        {
            vol.Required("L"): POSITIVE_INT,
            vol.Required("replicas"): POSITIVE_INT,
            vol.Required("tmacro"): vol.All(vol.Coerce(float), vol.Range(min=0.0)),
            vol.Required("profile"): vol.In(PROFILES),
            vol.Required("blocks"): POSITIVE_INT,
            vol.Required("cells"): POSITIVE_INT,
        },
        extra=vol.ALLOW_EXTRA,
    ),
    "entropy": vol.Schema(
        {
            vol.Required("ring"): POSITIVE_INT,
            vol.Required("rho"): validate_open_density,
            vol.Optional("window"): OPTIONAL_POSITIVE_INT,
        },
        extra=vol.ALLOW_EXTRA,
    ),
}


def resolve_seed(seed: int | None) -> int:
    """--seed, then the PMM_LAB_SEED environment variable, then the default."""
    if seed is not None:
        return seed
    env = os.environ.get(ENV_SEED)
    if env:
        try:
            return vol.Coerce(int)(env)
        except vol.Invalid as err:
            raise vol.Invalid(f"{ENV_SEED}={env!r} is not an integer") from err
    return DEFAULT_SEED


# =============================================================================
# Output
# =============================================================================


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    return value


class Outputs:
    """Collects a run's report and tables, then writes them with the manifest."""

    def __init__(self, args: argparse.Namespace, family: ConstraintFamily) -> None:
        self.args = args
        self.family = family
        self.report: dict[str, Any] = {}
        self.tables: dict[str, tuple[list[str], list[Sequence[Any]]]] = {}

    def table(self, suffix: str, header: list[str], rows: list[Sequence[Any]]) -> None:
        self.tables[suffix] = (header, rows)

    def manifest(self, outputs: list[str]) -> RunManifest:
        parameters = {
            k: v for k, v in vars(self.args).items() if k not in _RUNTIME_KEYS
        }
        return RunManifest(
            subcommand=self.args.subcommand,
            parameters=_jsonable(parameters),
            seed=self.args.seed,
            family_fingerprint=self.family.fingerprint(),
            outputs=outputs,
        )

    def write(self) -> None:
        report = _jsonable(self.report)
        if self.args.out is None:
            # Without a prefix the manifest travels with the report on stdout
            report = {**report, "manifest": self.manifest([]).as_dict()}
            print(json.dumps(report, indent=2, sort_keys=True))
            return

        prefix = Path(self.args.out)
        if prefix.parent != Path("."):
            prefix.parent.mkdir(parents=True, exist_ok=True)
        written = []
        report_path = prefix.with_name(prefix.name + ".json")
        report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        written.append(report_path.name)
        for suffix, (header, rows) in self.tables.items():
            path = prefix.with_name(f"{prefix.name}.{suffix}.csv")
            with path.open("w", newline="") as handle:
                writer = csv.writer(handle)
                writer.writerow(header)
                writer.writerows(_jsonable(list(rows)))
            written.append(path.name)
        self.manifest(written).write(prefix.with_name(prefix.name + ".manifest.json"))
        _LOGGER.info("Wrote %s", ", ".join(written))


# =============================================================================
# Subcommands
# =============================================================================


def cmd_validate(args: argparse.Namespace, family: ConstraintFamily, out: Outputs) -> bool:
    report = validate_family(family)
    out.report = report.as_dict()
    return report.passed


def cmd_classify(args: argparse.Namespace, family: ConstraintFamily, out: Outputs) -> bool:
    results = []
    for text in args.configs:
        if "(" in text:
            config = EventuallyPeriodicConfig.parse(text)
            results.append(
                {"input": text, "canonical": str(config), "label": str(classify_infinite(config))}
            )
        else:
            boundary = Boundary.PERIODIC if args.periodic else Boundary.EMPTY
            config = Configuration.from_string(text, boundary=boundary)
            results.append(
                {
                    "input": text,
                    "frozen": is_frozen(config),
                    "mobile_cluster": has_mobile_cluster(config),
                }
            )
    out.report = {"configurations": results}
    return True


def _certificates_at(task: tuple[ConstraintFamily, int, bool]) -> list[Certificate]:
    family, length, all_pairs = task
    return [
        certify_connectivity(family, length),
        certify_finite_particles(family, length),
        certify_finite_holes(family, length),
        certify_planner(family, length, all_pairs),
    ]


def cmd_connect(args: argparse.Namespace, family: ConstraintFamily, out: Outputs) -> bool:
    if args.certify is not None:
        tasks = [
            (family, n, n <= args.all_pairs_upto) for n in range(2, args.certify + 1)
        ]
        groups = run_batch(args.jobs, _certificates_at, tasks)
        certificates = [c for group in groups for c in group]
        out.report = {"certificates": [c.as_dict() for c in certificates]}
        out.table(
            "certificates",
            ["statement", "window_length", "configurations", "groups", "counterexamples"],
            [
                [c.statement, c.window_length, c.configurations, c.groups, len(c.counterexamples)]
                for c in certificates
            ],
        )
        failed = [c for c in certificates if not c.passed]
        for c in failed:
            _LOGGER.error(
                "%s fails at length %d: %s",
                c.statement, c.window_length, c.counterexamples[0],
            )
        return not failed

    if args.source is None or args.target is None:
        raise vol.Invalid("connect needs --certify N or both --from and --to")
    sigma = Configuration.from_string(args.source)
    sigma_prime = Configuration.from_string(args.target)
    reachable = connected(family, sigma, sigma_prime)
    report: dict[str, Any] = {"from": args.source, "to": args.target, "connected": reachable}
    if has_mobile_cluster(sigma) and has_mobile_cluster(sigma_prime) and (
        sigma.particle_count == sigma_prime.particle_count
    ):
        path = plan_transport(sigma, sigma_prime)
        report["path"] = list(path.moves)
        report["path_text"] = str(path)
        report["path_valid"] = validate_path(family, path) and path.end() == sigma_prime
        out.report = report
        return bool(report["path_valid"]) and reachable
    out.report = report
    return True


def _exact_instance(args: argparse.Namespace, family: ConstraintFamily) -> dict[str, Any]:
    boundary = Boundary.PERIODIC if args.ring else Boundary.EMPTY
    window = Window.of_length(args.length)
    model = build_model(family, window, boundary, args.count)
    measures = stationary_measures(model, DEFAULT_SOLVE_TOL)
    frozen = model.space.frozen_mask()
    report: dict[str, Any] = {
        "boundary": boundary.value,
        "L": args.length,
        "count": args.count,
        "states": model.space.size,
        "classes": model.class_count,
        "frozen_states": int(frozen.sum()),
        "symmetric_generator": model.symmetric,
        "row_sum_error": model.row_sum_error(),
        "class_uniformity": class_uniformity(model, measures).as_dict(),
    }
    checks = [report["class_uniformity"]["passed"], report["row_sum_error"] <= args.tol]

    extremal = [
        check_detailed_balance(model, nu, DEFAULT_SOLVE_TOL).value for nu in measures
    ]
    report["extremal_balance_residual"] = max(extremal, default=0.0)
    checks.append(report["extremal_balance_residual"] <= DEFAULT_SOLVE_TOL)

    if boundary is Boundary.PERIODIC:
        mu = bernoulli_measure(model.space, args.rho)
        residuals = {
            "stationary": check_stationary(model, mu, args.tol).as_dict(),
            "detailed_balance": check_detailed_balance(model, mu, args.tol).as_dict(),
            "exchangeability": check_exchangeability(model, mu, args.tol).as_dict(),
        }
        report["residuals"] = residuals
        checks.extend(r["passed"] for r in residuals.values())
        parts = decompose(model, mu, args.tol)
        reassembly = float(np.abs(parts.reassemble() - mu.weights).max())
        report["decomposition"] = {**parts.as_dict(), "reassembly_error": reassembly}
        checks.append(reassembly <= DEFAULT_TOL)
        spreads = [
            check_exchangeability(model, nu, DEFAULT_SOLVE_TOL).value for nu in measures
        ]
        report["spreads"] = max(spreads, default=0.0)
        checks.append(report["spreads"] <= DEFAULT_SOLVE_TOL)
    else:
        mirrored = [check_mirror_symmetry(model, nu).value for nu in measures]
        report["mirror_gap"] = max(mirrored, default=0.0)
        checks.append(report["mirror_gap"] <= DEFAULT_SOLVE_TOL)

    report["passed"] = all(checks)
    return report


def _sweep_length(task: tuple[ConstraintFamily, int, tuple[float, ...], float]) -> list[dict]:
    """Stationarity and detailed balance of every product measure on one ring."""
    family, length, rhos, tol = task
    model = build_model(family, Window.of_length(length), Boundary.PERIODIC)
    rows = []
    for rho in rhos:
        mu = bernoulli_measure(model.space, rho)
        stationary = check_stationary(model, mu, tol)
        balance = check_detailed_balance(model, mu, tol)
        rows.append(
            {
                "L": length,
                "rho": rho,
                "stationary": stationary.value,
                "detailed_balance": balance.value,
                "passed": stationary.passed and balance.passed,
            }
        )
    return rows


def _exact_sweep(args: argparse.Namespace, family: ConstraintFamily, out: Outputs) -> bool:
    rhos = tuple(args.rho_grid or DEFAULT_RHO_GRID)
    tasks = [(family, length, rhos, args.tol) for length in args.lengths]
    rows = [row for chunk in run_batch(args.jobs, _sweep_length, tasks) for row in chunk]
    out.table(
        "sweep",
        ["L", "rho", "stationary", "detailed_balance", "passed"],
        [[r["L"], r["rho"], r["stationary"], r["detailed_balance"], r["passed"]] for r in rows],
    )
    passed = all(r["passed"] for r in rows)
    out.report = {
        "lengths": list(args.lengths),
        "rho_grid": list(rhos),
        "tol": args.tol,
        "instances": rows,
        "worst": max((max(r["stationary"], r["detailed_balance"]) for r in rows), default=0.0),
        "passed": passed,
    }
    return passed


def cmd_exact(args: argparse.Namespace, family: ConstraintFamily, out: Outputs) -> bool:
    if getattr(args, "lengths", None):
        return _exact_sweep(args, family, out)
    out.report = _exact_instance(args, family)
    return out.report["passed"]


def cmd_simulate(args: argparse.Namespace, family: ConstraintFamily, out: Outputs) -> bool:
    if args.init is None and args.rho is None:
        raise vol.Invalid("simulate needs --rho or --init")
    if args.init is not None and len(args.init) != args.ring:
        raise vol.Invalid(f"--init has {len(args.init)} sites, --ring is {args.ring}")
    task = ReplicaTask(
        family=family,
        length=args.ring,
        horizon=args.horizon,
        seed=args.seed,
        rho=args.rho,
        initial=args.init,
        samples=args.samples,
        track_states=args.track_states or getattr(args, "compare_exact", False),
    )
    summaries = run_replicas(task, args.replicas, args.jobs)
    times = summaries[0].sample_times
    mean = np.mean([s.snapshots for s in summaries], axis=0)
    out.table(
        "profile",
        ["time", "site", "mean_occupation"],
        [
            [float(t), site + 1, float(mean[i, site])]
            for i, t in enumerate(times)
            for site in range(args.ring)
        ],
    )
    out.report = {
        "replicas": [s.as_dict() for s in summaries],
        "events": sum(s.events for s in summaries),
        "time_averaged_density": np.mean([s.profile.bins for s in summaries], axis=0),
    }
    if task.track_states:
        out.report["state_frequencies"] = [
            [{"config": e.config, "mean": e.mean, "stderr": e.stderr} for e in state_frequencies(s)]
            for s in summaries
        ]
    if getattr(args, "compare_exact", False):
        comparison = compare_exact(family, summaries)
        out.report["exact_comparison"] = comparison.as_dict()
        return comparison.passed
    return True


def cmd_hydro(args: argparse.Namespace, family: ConstraintFamily, out: Outputs) -> bool:
    result = run_experiment(
        args.L,
        replicas=args.replicas,
        t_macro=args.tmacro,
        profile=args.profile,
        seed=args.seed,
        jobs=args.jobs,
        family=family,
        cells=args.cells,
        blocks=args.blocks,
    )
    out.report = {**result.as_dict(), "threshold": args.threshold}
    out.table(
        "profiles",
        ["block", "u", "kmc", "pde"],
        [
            [b, (b + 0.5) / args.blocks, float(k), float(p)]
            for b, (k, p) in enumerate(zip(result.kmc_blocks, result.pde_blocks))
        ],
    )
    return result.discrepancy.l2 <= args.threshold


def _entropy_measure(args: argparse.Namespace, family: ConstraintFamily) -> tuple[Measure, bool]:
    """The requested measure and whether it is stationary by construction."""
    window = Window.of_length(args.ring)
    if args.measure == "mu":
        model = build_model(family, window, Boundary.PERIODIC)
        return bernoulli_measure(model.space, args.rho), True
    if args.measure == "uniform-class":
        count = args.count if args.count is not None else round(args.rho * args.ring)
        model = build_model(family, window, Boundary.PERIODIC, count)
        frozen = model.space.frozen_mask()
        for nu in stationary_measures(model):
            if not frozen[nu.support()[0]]:
                return nu, True
        raise vol.Invalid(f"No non-frozen class with {count} particles on a ring of {args.ring}")
    if args.file is None:
        raise vol.Invalid("--measure file needs --file")
    data = json.loads(Path(args.file).read_text())
    model = build_model(family, window, Boundary.PERIODIC)
    weights = np.zeros(model.space.size)
    for text, value in data.items():
        weights[model.space.index(Configuration.from_string(text))] = float(value)
    return Measure.from_unnormalized(model.space, weights), False


def cmd_entropy(args: argparse.Namespace, family: ConstraintFamily, out: Outputs) -> bool:
    nu, stationary = _entropy_measure(args, family)
    inner = Window.of_length(args.window or args.ring - 1)
    report = entropy_report(family, nu, args.rho, inner)
    out.report = report.as_dict()
    ok = report.beta_bound_holds
    if stationary:
        ok = ok and report.balance is not None and report.balance.passed()
    return ok


def cmd_replay(args: argparse.Namespace) -> int:
    manifest = RunManifest.read(args.manifest)
    namespace = argparse.Namespace(**manifest.parameters)
    namespace.subcommand = manifest.subcommand
    namespace.seed = manifest.seed
    namespace.jobs = args.jobs
    namespace.out = args.out
    handler = HANDLERS.get(manifest.subcommand)
    if handler is None:
        raise vol.Invalid(f"Manifest names unknown subcommand {manifest.subcommand!r}")
    if load_family(namespace.family).fingerprint() != manifest.family_fingerprint:
        _LOGGER.warning("Family fingerprint differs from the manifest")
    return _run(handler, namespace)


HANDLERS: dict[str, Callable[[argparse.Namespace, ConstraintFamily, Outputs], bool]] = {
    "validate": cmd_validate,
    "classify": cmd_classify,
    "connect": cmd_connect,
    "exact": cmd_exact,
    "simulate": cmd_simulate,
    "hydro": cmd_hydro,
    "entropy": cmd_entropy,
}


# =============================================================================
# Parser and dispatch
# =============================================================================


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--family", default=DEFAULT_FAMILY,
        help="catalog name (pmm, facilitated, pmm_r2) or path to a family JSON file",
    )
    common.add_argument("--seed", type=int, default=None, help=f"RNG seed (env {ENV_SEED})")
    common.add_argument("--jobs", type=int, default=DEFAULT_JOBS, help="worker processes")
    common.add_argument("--out", default=None, help="output prefix; stdout if omitted")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true")
    verbosity.add_argument("-q", "--quiet", action="store_true")

    parser = argparse.ArgumentParser(
        prog="pmm-lab",
        description="Finite-volume laboratory for the porous medium model and its relatives.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    sub.add_parser("validate", parents=[common], help="check a constraint family")

    p = sub.add_parser("classify", parents=[common], help="label configurations")
    p.add_argument("configs", nargs="+", help="'(100)* 11 (100)*' or a finite string")
    p.add_argument("--periodic", action="store_true", help="read finite strings as rings")

    p = sub.add_parser("connect", parents=[common], help="reachability and certificates")
    p.add_argument("--certify", type=int, default=None, metavar="N")
    p.add_argument("--all-pairs-upto", type=int, default=0, metavar="N",
                   help="replay every planner pair up to this length")
    p.add_argument("--from", dest="source", default=None)
    p.add_argument("--to", dest="target", default=None)

    p = sub.add_parser("exact", parents=[common], help="exact generator and stationary measures")
    where = p.add_mutually_exclusive_group(required=True)
    where.add_argument("--ring", type=int, dest="ring_length", default=None, metavar="L")
    where.add_argument("--interval", type=int, dest="interval_length", default=None, metavar="L")
    where.add_argument(
        "--lengths", type=int, nargs="+", default=None, metavar="L",
        help="sweep product measures over these ring lengths",
    )
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument(
        "--rho-grid", type=float, nargs="+", default=None, metavar="RHO",
        help="densities swept with --lengths (default 0.1 .. 0.9)",
    )
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)

    p = sub.add_parser("simulate", parents=[common], help="kinetic Monte Carlo on a ring")
    p.add_argument("--ring", type=int, required=True, metavar="L")
    start = p.add_mutually_exclusive_group()
    start.add_argument("--rho", type=float, default=None)
    start.add_argument("--init", default=None, help="initial configuration string")
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    p.add_argument("--replicas", type=int, default=1)
    p.add_argument("--track-states", action="store_true")
    p.add_argument(
        "--compare-exact",
        action="store_true",
        help="check state frequencies against the exact class law (implies --track-states)",
    )

    p = sub.add_parser("hydro", parents=[common], help="particle profile against the PME")
    p.add_argument("--L", type=int, default=DEFAULT_HYDRO_L)
    p.add_argument("--replicas", type=int, default=DEFAULT_HYDRO_REPLICAS)
    p.add_argument("--tmacro", type=float, default=DEFAULT_TMACRO)
    p.add_argument("--profile", choices=PROFILES, default=DEFAULT_PROFILE)
    p.add_argument("--cells", type=int, default=DEFAULT_PDE_CELLS)
    p.add_argument("--blocks", type=int, default=DEFAULT_BLOCKS)
    p.add_argument("--threshold", type=float, default=DEFAULT_L2_THRESHOLD)

    p = sub.add_parser("entropy", parents=[common], help="entropy functionals of a measure")
    p.add_argument("--ring", type=int, required=True, metavar="L")
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--measure", choices=("mu", "uniform-class", "file"), default="mu")
    p.add_argument("--file", default=None, help="JSON object mapping configurations to weights")
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--window", type=int, default=None, help="inner window length")

    p = sub.add_parser("replay", parents=[common], help="re-run from a manifest")
    p.add_argument("--manifest", required=True)
    return parser


def setup_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.ERROR if quiet else logging.WARNING
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )


def _normalize(args: argparse.Namespace) -> None:
    """Fold the exact subcommand's --ring/--interval into ring + length."""
    if args.subcommand == "exact" and not hasattr(args, "length"):
        args.ring = args.ring_length is not None or args.lengths is not None
        args.length = (
            args.ring_length if args.ring_length is not None else args.interval_length
        )


def _run(
    handler: Callable[[argparse.Namespace, ConstraintFamily, Outputs], bool],
    args: argparse.Namespace,
) -> int:
    _normalize(args)
    schema = SCHEMAS.get(args.subcommand)
    if schema is not None:
        validated = schema(
            {k: v for k, v in vars(args).items() if k not in ("handler",)}
        )
        for key, value in validated.items():
            setattr(args, key, value)
    family = load_family(args.family)
    out = Outputs(args, family)
    passed = handler(args, family, out)
    out.write()
    if not passed:
        _LOGGER.error("%s: checks failed", args.subcommand)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def dispatch(argv: Sequence[str] | None = None) -> int:
    """Run one subcommand and return the exit code (0 ok, 1 failed check, 2 usage)."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_OK if err.code in (0, None) else EXIT_USAGE

    setup_logging(args.verbose, args.quiet)
    try:
        args.seed = resolve_seed(args.seed)
        if args.jobs < 1:
            raise vol.Invalid("--jobs must be at least 1")
        if args.subcommand == "replay":
            return cmd_replay(args)
        return _run(HANDLERS[args.subcommand], args)
    except vol.Invalid as err:
        _LOGGER.error("Invalid arguments: %s", err)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (PmmLabError, ValueError, OSError) as err:
        _LOGGER.error("%s failed: %s", args.subcommand, err)
        return EXIT_USAGE


def main() -> None:
    sys.exit(dispatch())
