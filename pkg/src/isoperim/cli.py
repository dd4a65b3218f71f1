"""Command-line experiment runner.

Every subcommand reads a JSON config (``"schema": 1``, unknown keys rejected),
computes everything in memory, then writes its CSV/JSON outputs into
``--out``.  Nothing is written when validation or computation fails; errors
go to stderr as one JSON object and the exit code is non-zero.

Exit codes: 0 ok, 1 invalid input, 2 certification failure, 3 a checked
inequality was violated, 4 unexpected internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import __version__
from . import concentration as conc
from . import functional as fn
from . import oned, profile, transport
from .delta import LqNorm, estimate_norm_modulus, modulus_from_json, norm_from_json

EXIT_OK, EXIT_INVALID, EXIT_CERTIFICATION, EXIT_VIOLATION, EXIT_INTERNAL = 0, 1, 2, 3, 4

DEFAULT_A_GRID = [1e-6, 1e-4, 1e-2, 0.1, 0.25, 0.5]


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int = EXIT_INVALID, detail=None):
        super().__init__(message)
        self.kind, self.code, self.detail = kind, code, detail


# ----------------------------------------------------------------------------
# config schemas
# ----------------------------------------------------------------------------


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class _Config(_Strict):
    schema_: Literal[1] = Field(alias="schema")


class LogGrid(_Strict):
    log_min: float
    max: float = 0.5
    num: int = Field(ge=1)

    def values(self) -> list[float]:
        return np.logspace(self.log_min, math.log10(self.max), self.num).tolist()


Grid = Union[list[float], LogGrid]


def _grid(g: Grid) -> list[float]:
    return g.values() if isinstance(g, LogGrid) else [float(x) for x in g]


class UlcCurve(_Strict):
    kind: Literal["ulc"]
    delta: dict
    name: Optional[str] = None


class PowerCurve(_Strict):
    kind: Literal["power"]
    alpha: float
    p: float
    c: Optional[float] = None
    name: Optional[str] = None


class BakryLedouxCurve(_Strict):
    kind: Literal["bakry_ledoux"]
    name: Optional[str] = None


class BobkovCurve(_Strict):
    kind: Literal["bobkov"]
    r: float
    ball_mass: float
    mass_form: bool = False
    name: Optional[str] = None


class PConvexBodyCurve(_Strict):
    kind: Literal["p_convex_body"]
    alpha: float
    p: float
    n: int
    lipschitz: float = profile.DEFAULT_LIPSCHITZ
    name: Optional[str] = None


class ConvexBodyCurve(_Strict):
    kind: Literal["convex_body"]
    delta: dict
    n: int
    c_prime: float = profile.DEFAULT_C_PRIME
    name: Optional[str] = None


CurveSpec = Annotated[
    Union[UlcCurve, PowerCurve, BakryLedouxCurve, BobkovCurve, PConvexBodyCurve, ConvexBodyCurve],
    Field(discriminator="kind"),
]


class ProfileConfig(_Config):
    curves: list[CurveSpec] = Field(min_length=1)
    grid: Grid
    compare: Optional[list[tuple[str, str]]] = None

    @model_validator(mode="after")
    def _nonempty(self):
        if not _grid(self.grid):
            raise ValueError("grid must not be empty")
        return self


class Verify1dConfig(_Config):
    potential: dict
    tail_delta: dict
    midpoint_delta: Optional[dict] = None
    grid: Optional[Grid] = None
    certify_grid: Optional[list[float]] = None


class TransportConfig(_Config):
    n: int = Field(ge=1)
    norm: dict
    profile: dict
    count: int = Field(default=100_000, ge=1)
    pairs: int = Field(default=10_000, ge=2)
    seed: int
    streams: int = Field(default=1, ge=1)
    method: Literal["quadrature", "closed"] = "quadrature"
    export_samples: bool = False


class ConcentrateConfig(_Config):
    norm: dict
    n: int = Field(ge=1)
    theta: list[float]
    t: float
    eps: list[float] = Field(min_length=1)
    count: int = Field(ge=1)
    seed: int
    streams: int = Field(default=1, ge=1)
    delta: dict
    lam: float = 0.5
    c0: Optional[float] = None
    p: Optional[float] = None
    puc_alpha: Optional[float] = None
    c_prime: float = profile.DEFAULT_C_PRIME


class ModulusConfig(_Config):
    norm: dict
    eps_grid: list[float] = Field(min_length=1)
    starts: int = Field(default=8, ge=1)
    seed: int = 0
    safety_factor: float = 1.0


class FamilySpec(_Strict):
    count: int = Field(default=50, ge=1)
    seed: int = 0


class FunctionalConfig(_Config):
    potential: dict
    tail_delta: dict
    family: FamilySpec = FamilySpec()
    ramps: Optional[list[list[list[float]]]] = None


# ----------------------------------------------------------------------------
# helpers
# ----------------------------------------------------------------------------


def _wrap(kind, fn_, *args, **kw):
    try:
        return fn_(*args, **kw)
    except (ValueError, TypeError, KeyError) as exc:
        raise CliError(kind, str(exc)) from exc


def _header(command: str, raw: dict, **extra) -> dict:
    blob = json.dumps(raw, sort_keys=True).encode()
    head = {"tool": f"isoperim {__version__}", "command": command,
            "config_sha256": hashlib.sha256(blob).hexdigest(),
            "config": json.dumps(raw, sort_keys=True)}
    head.update({k: v for k, v in extra.items() if v is not None})
    return head


def _json(o) -> str:
    def default(o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        return str(o)

    def clean(o):
        if isinstance(o, float) and not math.isfinite(o):
            return None if math.isnan(o) else ("inf" if o > 0 else "-inf")
        if isinstance(o, dict):
            return {k: clean(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [clean(v) for v in o]
        return o

    return json.dumps(clean(json.loads(json.dumps(o, default=default))), indent=2, sort_keys=True) + "\n"


def _write_all(out: Path, files: dict[str, Union[str, bytes]]) -> None:
    """Write every file atomically, only after all of them are ready."""
    out.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for name, content in files.items():
            fd, tmp = tempfile.mkstemp(dir=out, prefix=f".{name}.")
            with os.fdopen(fd, "wb") as fh:
                fh.write(content.encode() if isinstance(content, str) else content)
            staged.append((tmp, out / name))
        for tmp, dest in staged:
            os.replace(tmp, dest)
    finally:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)


# ----------------------------------------------------------------------------
# commands; each returns (files, exit code)
# ----------------------------------------------------------------------------


def _build_curve(spec) -> profile.BoundCurve:
    kw = {"name": spec.name} if spec.name else {}
    if isinstance(spec, UlcCurve):
        return profile.ulc_curve(modulus_from_json(spec.delta), **kw)
    if isinstance(spec, PowerCurve):
        return profile.power_curve(spec.alpha, spec.p, spec.c, **kw)
    if isinstance(spec, BakryLedouxCurve):
        return profile.bakry_ledoux_curve(**kw)
    if isinstance(spec, BobkovCurve):
        return profile.bobkov_curve(spec.r, spec.ball_mass, spec.mass_form, **kw)
    if isinstance(spec, PConvexBodyCurve):
        return profile.p_convex_body_curve(spec.alpha, spec.p, spec.n, spec.lipschitz, **kw)
    return profile.convex_body_curve(modulus_from_json(spec.delta), spec.n, spec.c_prime, **kw)


def cmd_profile(cfg: ProfileConfig, raw: dict, args) -> tuple[dict, int]:
    curves = [_wrap("invalid_curve", _build_curve, c) for c in cfg.curves]
    names = [c.name for c in curves]
    if len(set(names)) != len(names):
        raise CliError("invalid_config", f"curve names must be unique, got {names}")
    grid = _grid(cfg.grid)
    rows = _wrap("invalid_grid", profile.sweep, curves, grid, threads=args.threads)
    pairs = cfg.compare
    if pairs is None:
        pairs = [(c, "bakry_ledoux") for c in names if c != "bakry_ledoux"] if "bakry_ledoux" in names else []
    tol = args.tol if args.tol is not None else 1e-12
    comparisons = []
    for lo, hi in pairs:
        if lo not in names or hi not in names:
            raise CliError("invalid_config", f"unknown curve in comparison ({lo}, {hi})")
        margin = min(r[hi] - r[lo] for r in rows)
        comparisons.append({"lower": lo, "upper": hi, "min_margin": margin, "ok": margin >= -tol})
    head = _header("profile", raw)
    csv_text = profile.sweep_csv(curves, rows, head)
    side = profile.sweep_sidecar(curves, {"header": head, "grid": grid, "comparisons": comparisons})
    code = EXIT_OK if all(c["ok"] for c in comparisons) else EXIT_VIOLATION
    return {"profile.csv": csv_text, "profile.json": side + "\n"}, code


def cmd_verify1d(cfg: Verify1dConfig, raw: dict, args) -> tuple[dict, int]:
    pot = _wrap("invalid_potential", oned.potential_from_json, cfg.potential)
    tail = _wrap("invalid_modulus", modulus_from_json, cfg.tail_delta)
    mid = _wrap("invalid_modulus", modulus_from_json, cfg.midpoint_delta) if cfg.midpoint_delta else None
    d = _wrap("invalid_potential", oned.normalize, pot)
    grid = _grid(cfg.grid) if cfg.grid is not None else DEFAULT_A_GRID
    lo, hi = d.support
    xs = cfg.certify_grid
    if xs is None:
        a_lo, a_hi = d.quantile(1e-9), d.isf(1e-9)
        xs = np.linspace(max(lo, a_lo), min(hi, a_hi), 201).tolist()
    cert = oned.verify_tail_condition(d, tail, xs, mid)
    report = {"certification": cert.to_json(), "grid": grid}
    head = _header("verify1d", raw)
    if not cert.tail_holds or (mid is not None and not cert.midpoint_holds):
        report["status"] = "certification_failure"
        return {"verify1d.json": _json(report)}, EXIT_CERTIFICATION
    use_mid = mid if (mid is not None and not mid.is_zero and mid.superlinear) else None
    rows = oned.profile_rows(d, tail, use_mid, grid)
    tol = args.tol if args.tol is not None else 1e-9
    worst_tail = min(r["exact"] - r["prop1d"] for r in rows)
    worst_mid = min((r["exact"] - r["propnew"] for r in rows if use_mid is not None), default=math.inf)
    ok = worst_tail >= -tol and worst_mid >= -tol
    report.update({"status": "pass" if ok else "bound_violation", "min_margin_tail": worst_tail,
                   "min_margin_midpoint": worst_mid})
    files = {"verify1d.csv": oned.rows_to_csv(rows, oned.PROFILE_COLUMNS, head),
             "verify1d.json": _json({"header": head, **report})}
    return files, EXIT_OK if ok else EXIT_VIOLATION


def cmd_transport(cfg: TransportConfig, raw: dict, args) -> tuple[dict, int]:
    norm = _wrap("invalid_norm", norm_from_json, {**cfg.norm, "n": cfg.norm.get("n", cfg.n)})
    prof = _wrap("invalid_profile", transport.profile_from_json, cfg.profile)
    dens = _wrap("invalid_density", transport.RadialDensity, cfg.n, norm, prof, cfg.method)
    seed = cfg.seed
    x = _wrap("sampler", dens.sample, cfg.count, seed, cfg.streams, args.threads)
    push = transport.pushforward_uniformity(dens, x)
    lip = transport.empirical_lipschitz(dens, cfg.pairs, seed + 1, cfg.streams)
    head = _header("transport", raw, seed=seed, streams=cfg.streams)
    report = {"header": head, "density": dens.to_json(), "Z": dens.Z,
              "pushforward": push.to_json(), "lipschitz": lip.to_json()}
    row = {"n": cfg.n, "count": push.count, "ks_statistic": push.ks_statistic,
           "ks_pvalue": push.ks_pvalue, "critical_1pct": push.critical_1pct,
           "passed": int(push.passed)}
    files = {"transport.json": _json(report),
             "transport.csv": oned.rows_to_csv([row], list(row), head)}
    if cfg.export_samples:
        fd, tmp = tempfile.mkstemp()
        os.close(fd)
        try:
            transport.write_sample_batch(tmp, x, {"seed": seed, "streams": cfg.streams,
                                                  "p": prof.to_json().get("p")})
            files["samples.bin"] = Path(tmp).read_bytes()
        finally:
            os.unlink(tmp)
    return files, EXIT_OK if push.passed else EXIT_VIOLATION


def cmd_concentrate(cfg: ConcentrateConfig, raw: dict, args) -> tuple[dict, int]:
    norm = _wrap("invalid_norm", norm_from_json, {**cfg.norm, "n": cfg.norm.get("n", cfg.n)})
    if not isinstance(norm, LqNorm):
        raise CliError("invalid_norm", "Monte Carlo needs an l_q norm")
    delta = _wrap("invalid_modulus", modulus_from_json, cfg.delta)
    exp = conc.EnlargementExperiment(norm, tuple(cfg.theta), cfg.t, tuple(cfg.eps), cfg.count,
                                     cfg.seed, cfg.streams, args.threads)
    res = _wrap("invalid_experiment", conc.mc_enlargement, exp)
    c0 = cfg.c0
    if c0 is None and cfg.puc_alpha is not None and cfg.p is not None:
        c0 = profile.p_convex_body_constant(cfg.puc_alpha, cfg.p, cfg.n)
    gamma = conc.power_gamma(c0, cfg.p) if c0 is not None and cfg.p is not None else None
    rows = _wrap("invalid_experiment", conc.concentration_rows, res, delta, cfg.n, cfg.lam,
                 gamma=gamma, c0=c0, p=cfg.p, c_prime=cfg.c_prime)
    sig = res.sigma()
    below = [bool(r["empirical"] <= r["gm"] + 3 * s) for r, s in zip(rows, sig)]
    head = _header("concentrate", raw, seed=cfg.seed, streams=cfg.streams)
    side = {"header": head, "base_mass": res.base_mass, "base_sigma": res.base_sigma,
            "empirical_below_gm_3sigma": below, "c0": c0}
    files = {"concentrate.csv": conc.concentration_csv(rows, head), "concentrate.json": _json(side)}
    return files, EXIT_OK if all(below) else EXIT_VIOLATION


def cmd_modulus(cfg: ModulusConfig, raw: dict, args) -> tuple[dict, int]:
    norm = _wrap("invalid_norm", norm_from_json, cfg.norm)
    import warnings

    from .delta import ModulusEstimationWarning

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ModulusEstimationWarning)
        table = _wrap("estimation", estimate_norm_modulus, norm, cfg.eps_grid, starts=cfg.starts,
                      seed=cfg.seed, safety_factor=cfg.safety_factor)
    head = _header("modulus", raw, seed=cfg.seed)
    rows = [{"eps": float(e), "delta": float(table.value(e))} for e in cfg.eps_grid]
    spec = table.to_json()
    return {"modulus.json": _json({"header": head, "modulus": spec}),
            "modulus.csv": oned.rows_to_csv(rows, ["eps", "delta"], head)}, EXIT_OK


def cmd_functional(cfg: FunctionalConfig, raw: dict, args) -> tuple[dict, int]:
    pot = _wrap("invalid_potential", oned.potential_from_json, cfg.potential)
    tail = _wrap("invalid_modulus", modulus_from_json, cfg.tail_delta)
    d = _wrap("invalid_potential", oned.normalize, pot)
    lo, hi = d.support
    xs = np.linspace(max(lo, d.quantile(1e-9)), min(hi, d.isf(1e-9)), 201)
    cert = oned.verify_tail_condition(d, tail, xs)
    if not cert.tail_holds:
        return {"functional.json": _json({"status": "certification_failure",
                                          "certification": cert.to_json()})}, EXIT_CERTIFICATION
    c0, q = _wrap("invalid_modulus", fn.certified_constants, tail)
    if cfg.ramps is not None:
        family = [_wrap("invalid_ramp", fn.TestFunction1D, tuple(map(tuple, k))) for k in cfg.ramps]
    else:
        family = fn.ramp_family(d, cfg.family.count, cfg.family.seed)
    rep = fn.check_capacity(d, c0, q, family)
    emp = fn.empirical_q_constants(d, c0, q, family)
    head = _header("functional", raw)
    rows = [{"t": r.t, "lhs": r.lhs, "rhs": r.rhs, "ratio": r.ratio} for r in rep.rows]
    files = {"functional.json": _json({"header": head, "capacity": rep.to_json(), "empirical": emp.to_json()}),
             "functional.csv": oned.rows_to_csv(rows, ["t", "lhs", "rhs", "ratio"], head)}
    return files, EXIT_OK if rep.passed else EXIT_VIOLATION


COMMANDS = {
    "profile": (ProfileConfig, cmd_profile),
    "verify1d": (Verify1dConfig, cmd_verify1d),
    "transport": (TransportConfig, cmd_transport),
    "concentrate": (ConcentrateConfig, cmd_concentrate),
    "modulus": (ModulusConfig, cmd_modulus),
    "functional": (FunctionalConfig, cmd_functional),
}

STOCHASTIC = {"transport", "concentrate"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isoperim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"isoperim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path, default=Path("."))
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--tol", type=float, default=None, help="pass/fail margin for checked inequalities")
    return parser


def _error(exc: CliError, command: str) -> None:
    body = {"error": exc.kind, "message": str(exc), "command": command}
    if exc.detail is not None:
        body["detail"] = exc.detail
    sys.stderr.write(json.dumps(body, sort_keys=True, default=str) + "\n")


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    model, handler = COMMANDS[args.command]
    try:
        if args.threads < 1:
            raise CliError("invalid_flag", "--threads must be >= 1")
        if args.seed is not None and args.seed < 0:
            raise CliError("invalid_flag", "--seed must be non-negative")
        try:
            raw = json.loads(args.config.read_text())
        except OSError as exc:
            raise CliError("config_unreadable", str(exc)) from exc
        except json.JSONDecodeError as exc:
            raise CliError("config_not_json", str(exc)) from exc
        if not isinstance(raw, dict):
            raise CliError("invalid_config", "config must be a JSON object")
        if args.seed is not None:
            if "seed" not in model.model_fields:
                raise CliError("invalid_flag", f"{args.command} takes no seed")
            raw = {**raw, "seed": args.seed}
        try:
            cfg = model.model_validate(raw)
        except ValidationError as exc:
            raise CliError("invalid_config", "config failed validation",
                           detail=json.loads(exc.json(include_url=False))) from exc
        files, code = handler(cfg, raw, args)
        _write_all(args.out, files)
        return code
    except CliError as exc:
        _error(exc, args.command)
        return exc.code
    except Exception as exc:  # noqa: BLE001 - report anything else the same way
        _error(CliError("internal", f"{type(exc).__name__}: {exc}", EXIT_INTERNAL), args.command)
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
