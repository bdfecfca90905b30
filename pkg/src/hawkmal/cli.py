"""Config-driven command line: simulations, checks, and Greek estimates.

Each invocation reads one INI-style config file (``key = value`` inside
named blocks), merges the command-line overrides (``--seed``, ``--paths``)
into it, and stamps a 12-hex digest of the resulting effective settings
into the first header line of every CSV written.  A second
``# generated=...`` line carries the wall clock and is suppressed by
``--no-timestamp``, so a rerun with the same config and seed produces
byte-identical files.  ``--workers`` is an execution detail: it never
enters the digest and never changes a single output byte.

Exit codes: 0 all checks passed, 1 at least one check failed, 2 invalid
config or command line, 3 a model or estimator assumption was violated.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import math
import os
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from .density import (
    NormalizationError,
    density_vs_empirical,
    log_kappa_rows,
    normalization_constant,
)
from .experiments import (
    ExperimentReport,
    ibp_check,
    mean_intensity_check,
    unit_mass_check,
)
from .greeks import (
    AssetModel,
    GreekEstimate,
    Payoff,
    UnsupportedModelError,
    fd_delta,
    malliavin_delta,
    pathwise_delta,
)
from .malliavin import CameronMartinFunction, weight_terms
from .model import (
    AssumptionError,
    BaselineSpec,
    HawkesModel,
    KernelSpec,
    NonlinearitySpec,
)
from .sde import density_criteria, sde_preset
from .simulate import compensator_batch, simulate_batch

DEFAULT_SEED = 12345
_KS_LEVEL = 0.01
_MASS_TOLERANCE = 1e-6
_WEIGHT_DUMP_PATHS = 200


class ConfigError(ValueError):
    """Invalid config file or command-line override."""


# ---------------------------------------------------------------------------
# config schema
# ---------------------------------------------------------------------------

# (section, key) -> (kind, default[, choices]).  Every effective key enters
# the digest, whether it came from the file, an override, or a default.
_SCHEMA: Dict[Tuple[str, str], tuple] = {
    ("model", "baseline"): ("choice", "constant", ("constant", "affine", "sinusoidal")),
    ("model", "lambda0"): ("float", 1.0),
    ("model", "slope"): ("float", 0.0),
    ("model", "amplitude"): ("float", 0.0),
    ("model", "period"): ("posfloat", 1.0),
    ("model", "kernel"): ("choice", "exponential", ("exponential",)),
    ("model", "alpha"): ("float", 0.5),
    ("model", "beta"): ("posfloat", 1.0),
    ("model", "nonlinearity"): ("choice", "linear", ("linear", "tanh")),
    ("model", "cap"): ("posfloat", 2.0),
    ("run", "horizon"): ("posfloat", 5.0),
    ("run", "seed"): ("u64", DEFAULT_SEED),
    ("run", "paths"): ("posint", 20000),
    ("density", "max_n"): ("posint", 2),
    ("density", "min_conditioned"): ("posint", 200),
    ("greeks", "x0"): ("posfloat", 100.0),
    ("greeks", "r"): ("float", 0.05),
    ("greeks", "sigma"): ("float", 0.3),
    ("greeks", "payoff"): (
        "choice",
        "digital",
        ("smooth", "digital", "constant", "capped-linear"),
    ),
    ("greeks", "strike"): ("posfloat", 100.0),
    ("greeks", "lower"): ("posfloat", 90.0),
    ("greeks", "upper"): ("posfloat", 110.0),
    ("greeks", "bump"): ("float", 0.0),  # 0 -> per-payoff default
    ("greeks", "fd_paths"): ("int", 0),  # 0 -> per-payoff default
    ("sde", "preset"): ("choice", "linear-scalar", ("linear-scalar", "cos-sin", "linear-d2")),
    ("experiment", "grid_points"): ("posint", 32),
    ("experiment", "volterra_steps"): ("posint", 2048),
    ("experiment", "eps"): ("floats", (0.1, 0.01, 0.001)),
    ("experiment", "direction"): ("choice", "default", ("default", "cosine", "sine")),
}


def _coerce(section: str, key: str, raw: str, spec: tuple):
    kind = spec[0]
    where = f"[{section}] {key} = {raw!r}"
    if kind == "choice":
        value = raw.strip().lower()
        if value not in spec[2]:
            raise ConfigError(f"{where}: expected one of {', '.join(spec[2])}")
        return value
    if kind == "floats":
        try:
            values = tuple(float(part) for part in raw.split(","))
        except ValueError:
            raise ConfigError(f"{where}: expected a comma-separated list of numbers")
        if not values or any(not math.isfinite(v) or v <= 0.0 for v in values):
            raise ConfigError(f"{where}: every entry must be a positive number")
        return values
    try:
        if kind in ("int", "posint", "u64"):
            value = int(raw, 0)
        else:
            value = float(raw)
    except ValueError:
        noun = "an integer" if kind in ("int", "posint", "u64") else "a number"
        raise ConfigError(f"{where}: expected {noun}")
    if kind == "posint" and value < 1:
        raise ConfigError(f"{where}: must be >= 1")
    if kind == "u64" and not 0 <= value < 2**64:
        raise ConfigError(f"{where}: must fit in an unsigned 64-bit integer")
    if kind == "posfloat" and not value > 0.0:
        raise ConfigError(f"{where}: must be positive")
    if kind in ("float", "posfloat") and not math.isfinite(value):
        raise ConfigError(f"{where}: must be finite")
    return value


def _canonical(value) -> str:
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    return str(value)


@dataclass(frozen=True)
class RunConfig:
    """Effective settings for one invocation, with their digest.

    `values` holds every (section, key) of the schema coerced to canonical
    Python types; the digest hashes the sorted ``section.key=value`` lines,
    so two invocations agree on the digest exactly when they agree on every
    effective setting.
    """

    values: Dict[Tuple[str, str], object]
    digest: str

    def __getitem__(self, sec_key: Tuple[str, str]):
        return self.values[sec_key]

    # ---- model assembly -------------------------------------------------

    def model(self) -> HawkesModel:
        v = self.values
        family = v[("model", "baseline")]
        if family == "constant":
            baseline = BaselineSpec.constant(v[("model", "lambda0")])
        elif family == "affine":
            baseline = BaselineSpec.affine(
                v[("model", "lambda0")], v[("model", "slope")], self.horizon
            )
        else:
            baseline = BaselineSpec.sinusoidal(
                v[("model", "lambda0")], v[("model", "amplitude")], v[("model", "period")]
            )
        kernel = KernelSpec.exponential(v[("model", "alpha")], v[("model", "beta")])
        if v[("model", "nonlinearity")] == "linear":
            nonlinearity = NonlinearitySpec.linear()
        else:
            nonlinearity = NonlinearitySpec.saturating_tanh(v[("model", "cap")])
        return HawkesModel(baseline=baseline, kernel=kernel, nonlinearity=nonlinearity)

    def direction(self) -> CameronMartinFunction:
        name = self.values[("experiment", "direction")]
        if name == "cosine":
            return CameronMartinFunction.cosine(self.horizon)
        if name == "sine":
            return CameronMartinFunction.sine(self.horizon)
        return CameronMartinFunction.default(self.horizon)

    @property
    def horizon(self) -> float:
        return self.values[("run", "horizon")]

    @property
    def seed(self) -> int:
        return self.values[("run", "seed")]

    @property
    def n_paths(self) -> int:
        return self.values[("run", "paths")]


def load_config(
    path: Optional[str], seed: Optional[int] = None, paths: Optional[int] = None
) -> RunConfig:
    """Parse the INI file (if any), apply overrides, fill defaults, digest."""
    raw: Dict[Tuple[str, str], str] = {}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, "r") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path!r}: {exc.strerror}")
        except configparser.Error as exc:
            raise ConfigError(f"malformed config file {path!r}: {exc}")
        for section in parser.sections():
            for key, value in parser.items(section):
                if (section, key) not in _SCHEMA:
                    raise ConfigError(f"[{section}] {key}: unknown setting")
                raw[(section, key)] = value
    values: Dict[Tuple[str, str], object] = {}
    for sec_key, spec in _SCHEMA.items():
        if sec_key in raw:
            values[sec_key] = _coerce(sec_key[0], sec_key[1], raw[sec_key], spec)
        else:
            values[sec_key] = spec[1]
    if seed is not None:
        if not 0 <= seed < 2**64:
            raise ConfigError(f"--seed {seed}: must fit in an unsigned 64-bit integer")
        values[("run", "seed")] = int(seed)
    if paths is not None:
        if paths < 2:
            raise ConfigError(f"--paths {paths}: must be >= 2")
        values[("run", "paths")] = int(paths)
    lines = ";".join(
        f"{sec}.{key}={_canonical(values[(sec, key)])}"
        for sec, key in sorted(values)
    )
    digest = hashlib.sha256(lines.encode()).hexdigest()[:12]
    return RunConfig(values=values, digest=digest)


# ---------------------------------------------------------------------------
# CSV plumbing
# ---------------------------------------------------------------------------

def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _write_csv(
    out_dir: str,
    name: str,
    digest: str,
    header: Sequence[str],
    rows: Sequence[Sequence],
    timestamp: Optional[str],
    comments: Sequence[Tuple[str, object]] = (),
) -> str:
    path = os.path.join(out_dir, name)
    with open(path, "w", newline="") as fh:
        fh.write(f"# digest={digest}\n")
        if timestamp is not None:
            fh.write(f"# generated={timestamp}\n")
        for key, value in comments:
            fh.write(f"# {key}={_cell(value)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return path


_REPORT_HEADER = ("experiment", "parameter_digest", "estimate", "reference", "std_error", "z", "pass")


def _report_rows(report: ExperimentReport) -> List[tuple]:
    return [
        (
            f"{report.name}:{row.label}",
            report.digest,
            row.estimate,
            row.reference,
            row.std_error,
            row.z,
            row.passed,
        )
        for row in report.rows
    ]


def _echo_report(report: ExperimentReport) -> None:
    for row in report.rows:
        verdict = "PASS" if row.passed else "FAIL"
        print(
            f"{verdict} {report.name}:{row.label} estimate={row.estimate:.6g} "
            f"reference={row.reference:.6g} z={row.z:+.3f}"
        )


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Invocation:
    config: RunConfig
    out_dir: str
    workers: int
    timestamp: Optional[str]

    def batch(self, model, n_paths=None, first_index=0):
        return simulate_batch(
            model,
            self.config.horizon,
            self.config.seed,
            self.config.n_paths if n_paths is None else n_paths,
            n_workers=self.workers,
            first_index=first_index,
        )

    def write(self, name, header, rows, comments=()) -> str:
        return _write_csv(
            self.out_dir, name, self.config.digest, header, rows, self.timestamp, comments
        )


def _cmd_simulate(inv: _Invocation) -> bool:
    model = inv.config.model()
    batch = inv.batch(model)
    dump = []
    for i, path in enumerate(batch):
        for j, t in enumerate(path.jump_times, start=1):
            dump.append((batch.first_index + i, j, t))
    inv.write("simulate_paths.csv", ("path_index", "jump_ordinal", "jump_time"), dump)

    counts = batch.counts().astype(float)
    comp = compensator_batch(model, batch)
    gap = counts - comp
    n = batch.n_paths
    summary = [
        (
            n,
            float(counts.mean()),
            float(counts.std(ddof=1) / math.sqrt(n)),
            float(comp.mean()),
            float(comp.std(ddof=1) / math.sqrt(n)),
            float(gap.mean()),
            float(gap.std(ddof=1) / math.sqrt(n)),
            int(counts.max()),
        )
    ]
    inv.write(
        "simulate_summary.csv",
        (
            "n_paths",
            "mean_count",
            "se_count",
            "mean_compensator",
            "se_compensator",
            "mean_martingale_gap",
            "se_martingale_gap",
            "max_count",
        ),
        summary,
    )
    print(
        f"simulate: {n} paths, mean N_T = {summary[0][1]:.6g} "
        f"(se {summary[0][2]:.3g}), mean compensator = {summary[0][3]:.6g}"
    )
    return True


def _cmd_density_check(inv: _Invocation) -> bool:
    model = inv.config.model()
    T = inv.config.horizon
    batch = inv.batch(model)
    rows: List[tuple] = []
    flags: List[bool] = []

    # closure of the one-jump density: integrate k_1 against an independent
    # quadrature of the normalization constant.
    z1, _ = normalization_constant(model, T, 1, method="quadrature")
    grid = np.linspace(0.0, T, 8193)
    vals = np.exp(log_kappa_rows(model, T, grid.reshape(-1, 1))) / z1
    mass = float(integrate.simpson(vals, x=grid))
    mass_ok = abs(mass - 1.0) <= _MASS_TOLERANCE
    rows.append((1, "k1_mass_minus_one", mass - 1.0, None, grid.size))
    flags.append(mass_ok)

    for n in range(1, inv.config[("density", "max_n")] + 1):
        for fit in density_vs_empirical(
            model, T, n, batch, min_conditioned=inv.config[("density", "min_conditioned")]
        ):
            rows.append((fit.n, fit.test_name, fit.statistic, fit.p_value, fit.samples))
            flags.append(fit.p_value >= _KS_LEVEL)

    inv.write(
        "density_report.csv", ("n", "test_name", "statistic", "p_value", "samples"), rows
    )
    for row, ok in zip(rows, flags):
        p = "" if row[3] is None else f" p={row[3]:.4f}"
        print(f"{'PASS' if ok else 'FAIL'} density n={row[0]} {row[1]} stat={row[2]:.4g}{p}")
    return all(flags)


def _cmd_mean_intensity(inv: _Invocation) -> bool:
    cfg = inv.config
    model = cfg.model()
    batch = inv.batch(model)
    grid = np.linspace(0.0, cfg.horizon, cfg[("experiment", "grid_points")] + 1)[1:]
    report = mean_intensity_check(
        model, batch, grid=grid, n_steps=cfg[("experiment", "volterra_steps")]
    )
    inv.write(
        "mean_intensity_report.csv",
        _REPORT_HEADER,
        _report_rows(report),
        comments=report.diagnostics,
    )
    _echo_report(report)
    return report.passed


def _cmd_unit_mass(inv: _Invocation) -> bool:
    cfg = inv.config
    model = cfg.model()
    batch = inv.batch(model)
    report = unit_mass_check(
        model, batch, m=cfg.direction(), eps_values=cfg[("experiment", "eps")]
    )
    inv.write("unit_mass_report.csv", _REPORT_HEADER, _report_rows(report))
    _echo_report(report)
    return report.passed


def _cmd_ibp_check(inv: _Invocation) -> bool:
    cfg = inv.config
    model = cfg.model()
    batch = inv.batch(model)
    m = cfg.direction()
    report = ibp_check(model, batch, m=m)
    inv.write("ibp_report.csv", _REPORT_HEADER, _report_rows(report))

    dump = []
    for i in range(min(_WEIGHT_DUMP_PATHS, batch.n_paths)):
        terms = weight_terms(model, batch.path(i), m)
        for j in range(terms.jump_times.size):
            dump.append(
                (
                    batch.first_index + i,
                    j + 1,
                    terms.jump_times[j],
                    terms.psi_at_jump[j],
                    terms.gamma1_at_jump[j],
                    terms.gamma2_at_jump[j],
                    terms.m_at_jump[j],
                    terms.m_hat_at_jump[j],
                )
            )
    inv.write(
        "ibp_weights.csv",
        ("path_index", "j", "T_j", "psi", "gamma1", "gamma2", "m", "m_hat"),
        dump,
    )
    _echo_report(report)
    return report.passed


def _cmd_sde_density(inv: _Invocation) -> bool:
    cfg = inv.config
    model = cfg.model()
    sde = sde_preset(cfg[("sde", "preset")])
    batch = inv.batch(model)
    crit = density_criteria(sde, batch)
    d = crit.terminal.shape[1]
    header = (
        ["path_index", "n_jumps"]
        + [f"x_{k + 1}" for k in range(d)]
        + ["det_gamma", "min_eigenvalue", "criterion"]
    )
    rows = [
        (batch.first_index + i, int(crit.counts[i]))
        + tuple(crit.terminal[i])
        + (crit.per_path_det[i], crit.per_path_min_eig[i], bool(crit.per_path_flag[i]))
        for i in range(crit.n_paths)
    ]
    comments = [
        ("preset", crit.label),
        ("kind", crit.kind),
        ("n_conditioned", crit.n_conditioned),
        ("min_jumps", crit.min_jumps),
        ("n_nonpositive", crit.n_nonpositive),
        ("passed", crit.passed),
    ]
    if crit.kind == "scalar":
        comments.append(("min_gamma", crit.min_gamma))
        if crit.wronskian_margin is not None:
            comments.append(("wronskian_margin", crit.wronskian_margin))
    else:
        comments.append(("min_rank", crit.min_rank))
        comments.append(("rank_target", crit.rank_target))
    inv.write("sde_density_paths.csv", header, rows, comments=comments)
    verdict = "PASS" if crit.passed else "FAIL"
    print(
        f"{verdict} sde-density preset={crit.label} conditioned={crit.n_conditioned} "
        f"nonpositive={crit.n_nonpositive}"
    )
    return crit.passed


def _build_payoff(cfg: RunConfig) -> Payoff:
    kind = cfg[("greeks", "payoff")]
    if kind == "digital":
        return Payoff.digital(cfg[("greeks", "strike")])
    if kind == "constant":
        return Payoff.constant(1.0)
    if kind == "capped-linear":
        lower = cfg[("greeks", "lower")]
        upper = cfg[("greeks", "upper")]
        if not lower < upper:
            raise ConfigError(
                f"[greeks] lower = {lower!r}, upper = {upper!r}: need lower < upper"
            )
        return Payoff.capped_linear(lower, upper)
    strike = cfg[("greeks", "strike")]

    def fn(x):
        return np.tanh((np.asarray(x, dtype=float) - strike) / strike)

    def derivative(x):
        return (1.0 - np.tanh((np.asarray(x, dtype=float) - strike) / strike) ** 2) / strike

    return Payoff.smooth(fn, derivative, label="smooth")


def _greeks_row(label: str, payoff: Payoff, est: GreekEstimate) -> tuple:
    return (
        label,
        payoff.label,
        est.n_paths,
        est.mean,
        est.std_error,
        est.effective_sample_size,
        est.excluded,
    )


def _cmd_greeks(inv: _Invocation) -> bool:
    cfg = inv.config
    model = cfg.model()
    asset = AssetModel(
        x0=cfg[("greeks", "x0")],
        r=cfg[("greeks", "r")],
        sigma=cfg[("greeks", "sigma")],
        hawkes=model,
    )
    payoff = _build_payoff(cfg)
    n = cfg.n_paths
    fd_n = cfg[("greeks", "fd_paths")]
    if fd_n <= 0:
        fd_n = 10 * n if payoff.kind == "digital" else n
    bump = cfg[("greeks", "bump")]
    if bump <= 0.0:
        bump = 0.01 * asset.x0 if payoff.kind == "digital" else 1e-4 * asset.x0

    # disjoint path-index ranges keep the estimators independent, so the
    # combined standard error of any pairwise difference is the hypotenuse.
    mal_batch = inv.batch(model, n_paths=n, first_index=0)
    pw_batch = inv.batch(model, n_paths=n, first_index=n)
    fd_batch = inv.batch(model, n_paths=fd_n, first_index=2 * n)

    mal = malliavin_delta(asset, payoff, mal_batch)
    fd = fd_delta(asset, payoff, fd_batch, bump=bump)
    estimates = [("malliavin", mal), ("fd", fd)]
    rows = [
        _greeks_row("malliavin", payoff, mal),
        _greeks_row("fd", payoff, fd),
    ]
    if payoff.differentiable:
        pw = pathwise_delta(asset, payoff, pw_batch)
        estimates.append(("pathwise", pw))
        rows.append(_greeks_row("pathwise", payoff, pw))
    else:
        # the estimator is undefined for a payoff without a derivative; the
        # row stays so the file always carries all three estimators.
        rows.append(("pathwise", payoff.label, 0, None, None, None, None))

    header = (
        "estimator",
        "payoff",
        "n_paths",
        "mean",
        "std_error",
        "ESS",
        "excluded_paths",
    )
    comments = [
        ("payoff", payoff.label),
        ("bump", bump),
        ("malliavin_boundary_term", mal.boundary_term),
        ("malliavin_zero_jump_term", mal.zero_jump_term),
        ("malliavin_min_abs_denominator", mal.min_abs_denominator),
    ]
    inv.write("greeks.csv", header, rows, comments=comments)

    all_ok = True
    for label, est in estimates:
        print(
            f"greeks {label}: mean={est.mean:.6g} se={est.std_error:.3g} "
            f"n={est.n_paths} ess={est.effective_sample_size:.1f} excluded={est.excluded}"
        )
    for i in range(len(estimates)):
        for k in range(i + 1, len(estimates)):
            la, ea = estimates[i]
            lb, eb = estimates[k]
            tol = 3.0 * math.hypot(ea.std_error, eb.std_error)
            ok = abs(ea.mean - eb.mean) <= tol
            all_ok = all_ok and ok
            print(
                f"{'PASS' if ok else 'FAIL'} greeks {la} vs {lb}: "
                f"|diff|={abs(ea.mean - eb.mean):.4g} tol={tol:.4g}"
            )
    return all_ok


_COMMANDS = {
    "simulate": _cmd_simulate,
    "density-check": _cmd_density_check,
    "ibp-check": _cmd_ibp_check,
    "unit-mass": _cmd_unit_mass,
    "mean-intensity": _cmd_mean_intensity,
    "sde-density": _cmd_sde_density,
    "greeks": _cmd_greeks,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hawkmal",
        description="Hawkes-process simulation, jump-time calculus checks, and Greeks.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", metavar="<path>", help="INI config file")
        p.add_argument("--seed", type=int, metavar="<u64>", help="override run.seed")
        p.add_argument("--paths", type=int, metavar="<n>", help="override run.paths")
        p.add_argument("--out", metavar="<dir>", default=".", help="output directory")
        p.add_argument(
            "--no-timestamp",
            action="store_true",
            help="omit the generated-at header line from CSV outputs",
        )
        p.add_argument(
            "--workers",
            type=int,
            default=1,
            metavar="<n>",
            help="simulation worker count (never affects output bytes)",
        )
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.workers < 1:
            raise ConfigError(f"--workers {args.workers}: must be >= 1")
        config = load_config(args.config, seed=args.seed, paths=args.paths)
        os.makedirs(args.out, exist_ok=True)
        timestamp = (
            None
            if args.no_timestamp
            else datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        )
        inv = _Invocation(
            config=config, out_dir=args.out, workers=args.workers, timestamp=timestamp
        )
        print(f"digest {config.digest}")
        passed = _COMMANDS[args.command](inv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (AssumptionError, UnsupportedModelError) as exc:
        print(f"assumption violation: {exc}", file=sys.stderr)
        return 3
    except NormalizationError as exc:
        print(f"assumption violation: {exc}", file=sys.stderr)
        return 3
    except RuntimeError as exc:
        print(f"assumption violation: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
