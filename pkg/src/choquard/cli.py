"""Command-line interface: ``choquard {info,solve,verify,sweep,selftest}``.

Exit codes
----------
0  success
1  malformed config, invalid parameters or mismatched input files
2  q outside the existence window (solve refuses to run)
3  solver did not converge (files are still written)
4  kernel cache failed its integrity check
5  ``verify --assert`` threshold violated, or a selftest check failed

Configuration files are flat ``key = value`` lines with dotted keys; ``#``
starts a comment.  Strings may be bare or double-quoted, lists are
comma-separated with optional brackets and exponents accept ratios such as
``5/3``.  Relative paths are resolved against the config file's directory.
See README.md for the full key table.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.special import hyp2f1

from .functional import (ProblemParams, as_exact, critical_exponents, energy_report,
                         energy_value, weak_residual)
from .grid import RadialProfile, build_grid, read_profile_csv, write_profile_csv
from .identities import (decay_fit, degiorgi_sequence, dgms_check, existence_window,
                         hls_scaling_check, lp_norm, moser_ladder, nehari_report,
                         pohozaev_report)
from .riesz import CacheCorrupted, build_kernel, load_or_build_kernel
from .solver import SolveConfig, solve_ground_state

log = logging.getLogger("choquard")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NONEXISTENCE = 2
EXIT_NOT_CONVERGED = 3
EXIT_CACHE = 4
EXIT_CHECK_FAILED = 5

# thresholds applied by ``verify --assert``
ASSERT_POHOZAEV = 1e-2
ASSERT_POHOZAEV_DEGENERATE = 3e-2
ASSERT_NEHARI = 1e-6
ASSERT_DGMS = 1e-2
ASSERT_MOSER = 2e-2
ASSERT_MOSER_FROM = 1e3
ASSERT_DEGIORGI = 1e-12
ASSERT_DECAY_R2 = 0.99
ASSERT_DECAY_RATE = 0.5
ASSERT_HLS = 1e-6


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration

def _to_int(text):
    value = as_exact(text)
    if value.denominator != 1:
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


def _to_float(text):
    return float(as_exact(text))


def _to_str(text):
    return text


def _to_list(text):
    body = text.strip()
    if body.startswith("[") and body.endswith("]"):
        body = body[1:-1]
    items = [_unquote(s.strip()) for s in body.split(",") if s.strip()]
    if not items:
        raise ValueError("empty list")
    return items


def _float_list(text):
    return [_to_float(s) for s in _to_list(text)]


def _unquote(text):
    if len(text) >= 2 and text[0] == text[-1] == '"':
        return text[1:-1]
    return text


# key -> (parser, required)
SCHEMA = {
    "problem.N": (_to_int, True),
    "problem.p": (as_exact, True),
    "problem.alpha": (as_exact, True),
    "problem.nonlinearity": (_to_str, False),
    "problem.q": (as_exact, True),
    "grid.R": (_to_float, True),
    "grid.M": (_to_int, True),
    "grid.scheme": (_to_str, False),
    "solver.max_iter": (_to_int, False),
    "solver.grad_tol": (_to_float, False),
    "solver.step0": (_to_float, False),
    "solver.backtrack": (_to_float, False),
    "solver.seed": (_to_str, False),
    "solver.seed_width": (_to_float, False),
    "solver.seed_profile": (_to_str, False),
    "verify.k_values": (_float_list, False),
    "verify.moser_steps": (_to_int, False),
    "verify.degiorgi_levels": (_to_int, False),
    "verify.decay_window": (_float_list, False),
    "verify.r_exp": (_to_float, False),
    "verify.hls_lambdas": (_float_list, False),
    "verify.hls_M": (_to_int, False),
    "verify.hls_R": (_to_float, False),
    "output.profile_path": (_to_str, False),
    "output.report_path": (_to_str, False),
    "output.verify_path": (_to_str, False),
    "output.cache_dir": (_to_str, False),
}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines into ``{key: (value, lineno)}``."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} (first set on line {out[key][1]})")
        if not value:
            raise ConfigError(f"{source}:{lineno}: missing value for {key!r}")
        parser = SCHEMA[key][0]
        try:
            parsed = parser(value if parser in (_float_list,) else _unquote(value))
        except (ValueError, TypeError, ZeroDivisionError) as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
        out[key] = (parsed, lineno)
    missing = [k for k, (_, req) in SCHEMA.items() if req and k not in out]
    if missing:
        raise ConfigError(f"{source}: missing required key(s): {', '.join(missing)}")
    return out


@dataclass
class RunConfig:
    """Validated run configuration.  Exponents are kept exact."""

    N: int
    p: Fraction
    alpha: Fraction
    q: Fraction
    R: float
    M: int
    scheme: str = "uniform"
    solver: SolveConfig = field(default_factory=SolveConfig)
    k_values: list | None = None
    moser_steps: int = 8
    degiorgi_levels: int = 50
    decay_window: tuple | None = None
    r_exp: float | None = None
    hls_lambdas: tuple = (0.5, 2.0, 4.0)
    hls_M: int = 256
    hls_R: float = 8.0
    profile_path: Path | None = None
    report_path: Path | None = None
    verify_path: Path | None = None
    cache_dir: Path | None = None
    source: str = "<config>"

    def params(self) -> ProblemParams:
        return ProblemParams.power(self.N, self.p, self.alpha, self.q)

    def grid(self):
        return build_grid(self.R, self.M, self.N, self.scheme)

    def dgms_k_values(self):
        if self.k_values is not None:
            return list(self.k_values)
        half = self.R / 2
        ks = [2.0**j for j in range(1, 64) if 2.0**j <= half]
        if not ks or ks[-1] < half:
            ks.append(half)
        return ks

    def degiorgi_exponent(self) -> float:
        if self.r_exp is not None:
            return self.r_exp
        p = float(self.p)
        p_star = self.N * p / (self.N - p)
        return 4.0 if p < 4.0 < p_star else 0.5 * (p + p_star)

    def window(self):
        if self.decay_window is not None:
            return self.decay_window
        return (0.4 * self.R, 0.7 * self.R)


def load_config(path) -> RunConfig:
    """Read and fully validate a config file; raises :class:`ConfigError`."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    raw = parse_config_text(text, str(path))
    base = path.parent

    def get(key, default=None):
        return raw[key][0] if key in raw else default

    def where(key):
        return f"{path}:{raw[key][1]}" if key in raw else str(path)

    kind = get("problem.nonlinearity", "power")
    if kind != "power":
        raise ConfigError(f"{where('problem.nonlinearity')}: only the 'power' nonlinearity "
                          f"can be configured from a file, got {kind!r}")

    def resolve(key):
        value = get(key)
        return None if value is None else (base / value)

    cfg = RunConfig(
        N=get("problem.N"), p=get("problem.p"), alpha=get("problem.alpha"), q=get("problem.q"),
        R=get("grid.R"), M=get("grid.M"), scheme=get("grid.scheme", "uniform"),
        k_values=get("verify.k_values"),
        moser_steps=get("verify.moser_steps", 8),
        degiorgi_levels=get("verify.degiorgi_levels", 50),
        r_exp=get("verify.r_exp"),
        hls_lambdas=tuple(get("verify.hls_lambdas", (0.5, 2.0, 4.0))),
        hls_M=get("verify.hls_M", 256),
        hls_R=get("verify.hls_R", 8.0),
        profile_path=resolve("output.profile_path"),
        report_path=resolve("output.report_path"),
        verify_path=resolve("output.verify_path"),
        cache_dir=resolve("output.cache_dir"),
        source=str(path),
    )
    window = get("verify.decay_window")
    if window is not None:
        if len(window) != 2:
            raise ConfigError(f"{where('verify.decay_window')}: decay_window needs two radii")
        cfg.decay_window = tuple(window)

    # delegate invariants to the component types, before any computation
    for keys, build in (
        (("problem.N", "problem.p", "problem.alpha", "problem.q"), cfg.params),
        (("grid.R", "grid.M", "grid.scheme"), cfg.grid),
    ):
        try:
            build()
        except ValueError as exc:
            lines = ", ".join(str(raw[k][1]) for k in keys if k in raw)
            raise ConfigError(f"{path}:{lines}: {exc}") from None

    seed = get("solver.seed", "gaussian")
    seed_values = None
    if seed == "custom":
        seed_path = resolve("solver.seed_profile")
        if seed_path is None:
            raise ConfigError(f"{where('solver.seed')}: seed = custom needs solver.seed_profile")
        try:
            seed_values = read_profile_csv(seed_path, cfg.grid()).values
        except (OSError, ValueError) as exc:
            raise ConfigError(f"{where('solver.seed_profile')}: {exc}") from None
    defaults = SolveConfig()
    try:
        cfg.solver = SolveConfig(
            max_iter=get("solver.max_iter", defaults.max_iter),
            grad_tol=get("solver.grad_tol", defaults.grad_tol),
            step0=get("solver.step0", defaults.step0),
            backtrack=get("solver.backtrack", defaults.backtrack),
            seed=seed,
            seed_width=get("solver.seed_width", defaults.seed_width),
            seed_values=seed_values,
        )
    except ValueError as exc:
        lines = ", ".join(str(v[1]) for k, v in raw.items() if k.startswith("solver."))
        raise ConfigError(f"{path}:{lines}: {exc}") from None

    for key, value, ok, msg in (
        ("verify.moser_steps", cfg.moser_steps, cfg.moser_steps >= 1, "must be >= 1"),
        ("verify.degiorgi_levels", cfg.degiorgi_levels, cfg.degiorgi_levels >= 1, "must be >= 1"),
        ("verify.hls_M", cfg.hls_M, cfg.hls_M >= 8, "must be >= 8"),
        ("verify.hls_R", cfg.hls_R, cfg.hls_R > 0, "must be positive"),
    ):
        if not ok:
            raise ConfigError(f"{where(key)}: {key} {msg}, got {value!r}")
    p = float(cfg.p)
    p_star = cfg.N * p / (cfg.N - p)
    if not p < cfg.degiorgi_exponent() < p_star:
        raise ConfigError(f"{where('verify.r_exp')}: r_exp must lie in (p, p*) = ({p:g}, {p_star:g})")
    for k in cfg.dgms_k_values():
        if not 0 < k <= cfg.R / 2:
            raise ConfigError(f"{where('verify.k_values')}: cutoff scales must lie in (0, R/2], got {k:g}")
    a, b = cfg.window()
    if not 0 <= a < b <= 0.9 * cfg.R:
        raise ConfigError(f"{where('verify.decay_window')}: need 0 <= a < b <= 0.9 R, got ({a:g}, {b:g})")
    if any(lam <= 0 for lam in cfg.hls_lambdas):
        raise ConfigError(f"{where('verify.hls_lambdas')}: dilation factors must be positive")
    return cfg


# ---------------------------------------------------------------------------
# helpers

def _write_json(path, payload) -> None:
    text = json.dumps(payload, indent=2, allow_nan=True)
    if path is None:
        print(text)
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text + "\n")


def _kernel(cfg: RunConfig, grid):
    return load_or_build_kernel(grid, float(cfg.alpha), cfg.cache_dir)


def _fmt(x) -> str:
    if isinstance(x, Fraction):
        return f"{float(x):.4f} ({x})" if x.denominator != 1 else str(x)
    return f"{x:.4f}"


def hls_exponent(N, alpha) -> Fraction:
    """r = t = 2N / (N + alpha) balancing the HLS relation with mu = N - alpha."""
    return 2 * as_exact(N) / (as_exact(N) + as_exact(alpha))


def _gaussian(r):
    return np.exp(-np.asarray(r) ** 2)


def run_hls(N, alpha, lambdas, M=256, R=8.0):
    """HLS quotient of the Gaussian pair at dilation 1 and each of ``lambdas``."""
    mu = as_exact(N) - as_exact(alpha)
    r_exp = hls_exponent(N, alpha)
    lams = [1.0] + [float(x) for x in lambdas]
    return hls_scaling_check(_gaussian, _gaussian, mu, r_exp, r_exp, lams, N=int(N), R=R, M=M)


# ---------------------------------------------------------------------------
# commands

def cmd_info(args) -> int:
    try:
        N = _to_int(args.N)
        p, alpha = as_exact(args.p), as_exact(args.alpha)
        if p < 2:
            raise ValueError(f"p must be >= 2, got {args.p}")
        lower, upper = critical_exponents(N, p, alpha, exact=True)
    except (ValueError, ZeroDivisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    p_star = N * p / (N - p)
    q_alpha = 2 * N * p / (N + alpha)
    floor = max(N - 2 * p, Fraction(0))
    print(f"N = {N}, p = {p}, alpha = {alpha}")
    print(f"q_lower  = {_fmt(lower)}")
    print(f"q_upper  = {_fmt(upper)}")
    print(f"p*       = {_fmt(p_star)}")
    print(f"q_alpha  = {_fmt(q_alpha)}")
    if alpha > floor:
        print(f"alpha restriction: alpha > (N-2p)_+ = {floor} holds")
    else:
        print(f"warning: alpha <= N-2p = {floor}; the Moser ladder is inadmissible "
              "and the existence theory does not apply")
    return EXIT_OK


def _load(args):
    try:
        return load_config(args.config), None
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None, EXIT_INVALID


def cmd_solve(args) -> int:
    cfg, code = _load(args)
    if cfg is None:
        return code
    if cfg.profile_path is None or cfg.report_path is None:
        print(f"error: {cfg.source}: solve needs output.profile_path and output.report_path",
              file=sys.stderr)
        return EXIT_INVALID
    verdict = existence_window(cfg.N, cfg.p, cfg.alpha, cfg.q)
    if not verdict.admissible:
        print(f"refusing to solve: q = {cfg.q} is outside the open existence window "
              f"({verdict.q_lower}, {verdict.q_upper}); the problem does not have nontrivial "
              "weak solutions there", file=sys.stderr)
        return EXIT_NONEXISTENCE
    params, grid = cfg.params(), cfg.grid()
    try:
        op = _kernel(cfg, grid)
    except CacheCorrupted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CACHE
    sol = solve_ground_state(params, grid, op, cfg.solver)
    cfg.profile_path.parent.mkdir(parents=True, exist_ok=True)
    write_profile_csv(cfg.profile_path, sol.profile)
    _write_json(cfg.report_path, sol.to_dict())
    if not sol.converged:
        print(f"solver did not converge after {sol.iterations} iterations "
              f"(constrained gradient norm {sol.grad_norm:.3e})", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    print(f"converged in {sol.iterations} iterations: energy = {sol.report.energy:.12g}")
    return EXIT_OK


def verification_report(u: RadialProfile, cfg: RunConfig, op) -> dict:
    """All identity diagnostics for ``u`` as a JSON-ready dict."""
    params, grid = cfg.params(), u.grid
    rep = energy_report(u, params, op)
    zero = not np.any(u.values)
    out = {
        "energy": rep.to_dict(),
        "pohozaev": pohozaev_report(u, params, op).to_dict(),
        "nehari_residual": nehari_report(u, params, op),
        "window": existence_window(cfg.N, cfg.p, cfg.alpha, cfg.q).to_dict(),
        "dgms": [r.to_dict() for r in dgms_check(u, params, op, k_values=cfg.dgms_k_values())],
        "moser": [r.to_dict() for r in moser_ladder(u, grid, params, cfg.moser_steps)],
    }
    r_exp = cfg.degiorgi_exponent()
    if zero:
        out["degiorgi"] = [0.0] * (cfg.degiorgi_levels + 1)
        out["decay"] = {"rate": 0.0, "amplitude": 0.0, "r_squared": 0.0}
    else:
        norm = lp_norm(u.values, grid, r_exp)
        peak = float(np.max(np.abs(u.values)))
        rho = max(1.0, peak / norm, 1.0 / norm)
        out["degiorgi"] = degiorgi_sequence(u, grid, r_exp, rho, cfg.degiorgi_levels, params).tolist()
        try:
            out["decay"] = decay_fit(u, grid, cfg.window()).to_dict()
        except ValueError as exc:
            log.warning("decay fit skipped: %s", exc)
            out["decay"] = {"rate": None, "amplitude": None, "r_squared": None}
    out["hls"] = [r.to_dict() for r in run_hls(cfg.N, cfg.alpha, cfg.hls_lambdas, cfg.hls_M, cfg.hls_R)]
    return out


def assert_report(report: dict, p: float) -> list:
    """Acceptance thresholds applied to a verification report; returns violations."""
    bad = []
    tol = ASSERT_POHOZAEV if p == 2 else ASSERT_POHOZAEV_DEGENERATE
    if not report["pohozaev"]["rel_residual"] < tol:
        bad.append(f"pohozaev rel_residual {report['pohozaev']['rel_residual']:.3e} >= {tol:g}")
    e = report["energy"]
    T = e["t_grad"] + e["t_mass"]
    rel = abs(report["nehari_residual"]) / T if T > 0 else 0.0
    if not rel < ASSERT_NEHARI:
        bad.append(f"nehari residual / T {rel:.3e} >= {ASSERT_NEHARI:g}")
    dg = report["dgms"]
    if not dg[-1]["rel_residual"] < ASSERT_DGMS:
        bad.append(f"dgms rel_residual at k={dg[-1]['k']:g} is {dg[-1]['rel_residual']:.3e}")
    gaps = [r["lhs_gap"] for r in dg[-3:]]
    if len(gaps) >= 2 and not all(b < a or a == b == 0 for a, b in zip(gaps, gaps[1:])):
        bad.append(f"dgms limit distance not decreasing over the last k values: {gaps}")
    for rec in report["moser"]:
        if rec["exponent"] > ASSERT_MOSER_FROM and not rec["rel_gap_to_max"] < ASSERT_MOSER:
            bad.append(f"moser norm at nu={rec['exponent']:.4g} off max|u| by {rec['rel_gap_to_max']:.3%}")
    U = report["degiorgi"]
    if any(b > a for a, b in zip(U, U[1:])):
        bad.append("degiorgi sequence increases")
    if not U[-1] < ASSERT_DEGIORGI:
        bad.append(f"degiorgi U_last = {U[-1]:.3e} >= {ASSERT_DEGIORGI:g}")
    d = report["decay"]
    if d["r_squared"] is None or not (d["r_squared"] > ASSERT_DECAY_R2 and d["rate"] > ASSERT_DECAY_RATE):
        bad.append(f"decay fit r_squared={d['r_squared']} rate={d['rate']}")
    ratios = [r["ratio"] for r in report["hls"]]
    if any(r is None for r in ratios):
        bad.append("hls quotient degenerate")
    else:
        drift = max(abs(r - ratios[0]) / abs(ratios[0]) for r in ratios)
        if not drift < ASSERT_HLS:
            bad.append(f"hls quotient drifts by {drift:.3e}")
    return bad


def cmd_verify(args) -> int:
    cfg, code = _load(args)
    if cfg is None:
        return code
    grid = cfg.grid()
    try:
        u = read_profile_csv(args.profile, grid)
    except OSError as exc:
        print(f"error: cannot read profile {args.profile}: {exc.strerror}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        op = _kernel(cfg, grid)
    except CacheCorrupted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CACHE
    report = verification_report(u, cfg, op)
    out = args.out if args.out is not None else cfg.verify_path
    _write_json(out, report)
    if args.assert_:
        bad = assert_report(report, float(cfg.p))
        for msg in bad:
            print(f"violation: {msg}", file=sys.stderr)
        if bad:
            return EXIT_CHECK_FAILED
    return EXIT_OK


def sweep_values(q_min, q_max, steps):
    """Evenly spaced exact q values; a single step returns q_min."""
    lo, hi = as_exact(q_min), as_exact(q_max)
    if not lo < hi:
        raise ValueError(f"need q_min < q_max, got {q_min}, {q_max}")
    if int(steps) != steps or steps < 1:
        raise ValueError(f"steps must be a positive integer, got {steps}")
    if steps == 1:
        return [lo]
    return [lo + (hi - lo) * k / (steps - 1) for k in range(steps)]


def cmd_sweep(args) -> int:
    cfg, code = _load(args)
    if cfg is None:
        return code
    try:
        if args.q_list is not None:
            qs = [as_exact(s) for s in args.q_list.split(",") if s.strip()]
            if not qs:
                raise ValueError("empty q list")
        else:
            if args.q_min is None or args.q_max is None or args.steps is None:
                raise ValueError("give --q-min, --q-max and --steps, or --q-list")
            qs = sweep_values(args.q_min, args.q_max, args.steps)
        if any(q <= 0 for q in qs):
            raise ValueError("every q must be positive")
    except (ValueError, ZeroDivisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    grid = cfg.grid()
    op = None
    rows = []
    for q in qs:
        verdict = existence_window(cfg.N, cfg.p, cfg.alpha, q)
        if not verdict.admissible:
            rows.append([repr(float(q)), "false", "false", "", ""])
            continue
        if op is None:
            try:
                op = _kernel(cfg, grid)
            except CacheCorrupted as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_CACHE
        params = ProblemParams.power(cfg.N, cfg.p, cfg.alpha, q)
        sol = solve_ground_state(params, grid, op, cfg.solver)
        poh = pohozaev_report(sol.profile, params, op)
        rows.append([repr(float(q)), "true", str(sol.converged).lower(),
                     repr(sol.report.energy), repr(poh.rel_residual)])

    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["q", "admissible", "converged", "energy", "pohozaev_rel"])
        writer.writerows(rows)
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# selftest

def newton_ball_potential(r, N: int):
    """I_2 * 1_{B_1} in R^N, N >= 3 (solves -Delta W = 1_B, W -> 0 at infinity)."""
    r = np.asarray(r, dtype=float)
    inner = 1.0 / (2 * N) + 1.0 / (N * (N - 2)) - r**2 / (2 * N)
    outer = np.power(np.maximum(r, 1e-300), 2.0 - N) / (N * (N - 2))
    return np.where(r <= 1.0, inner, outer)


def closed_form_angular_mean(r, s, N, alpha):
    """Sphere mean of |x - y|^{-(N - alpha)} via the Gauss hypergeometric series."""
    beta = N - alpha
    big, small = np.maximum(r, s), np.minimum(r, s)
    return big**-beta * hyp2f1(beta / 2, beta / 2 - N / 2 + 1, N / 2, (small / big) ** 2)


def _selftest_kernel(N, alpha, cache_dir, M):
    grid = build_grid(8.0, M, N)
    op = load_or_build_kernel(grid, alpha, cache_dir)
    if alpha == 2.0 and N >= 3:
        ball = (grid.nodes <= 1.0).astype(float)
        W = op.apply_values(ball)
        exact = newton_ball_potential(grid.nodes, N)
        err = float(np.max(np.abs(W - exact) / exact))
        return "Newtonian potential of the unit ball", err, err < 1e-3
    # off-diagonal kernel entries against the hypergeometric closed form
    i = np.arange(0, M, max(1, M // 16))
    j = np.arange(1, M, max(1, M // 16))
    ri, rj = np.meshgrid(grid.nodes[i], grid.nodes[j], indexing="ij")
    mask = np.abs(ri - rj) > 2 * (grid.nodes[1] - grid.nodes[0])
    exact = op.constant * closed_form_angular_mean(ri, rj, N, alpha)
    got = op.kernel[np.ix_(i, j)]
    err = float(np.max(np.abs(got - exact)[mask] / exact[mask]))
    return "kernel entries vs hypergeometric closed form", err, err < 1e-6


def _selftest_gradient(N, alpha, rng):
    p = 2
    lower, upper = critical_exponents(N, p, alpha, exact=True)
    q = (lower + upper) / 2
    params = ProblemParams.power(N, p, alpha, q)
    grid = build_grid(8.0, 128, N)
    op = build_kernel(grid, N, alpha)
    worst = 0.0
    for _ in range(5):
        a, b, c = rng.uniform(0.5, 1.5, 3)
        u = a * np.exp(-b * grid.nodes**2 / 4) * (1 + 0.3 * np.cos(c * grid.nodes))
        phi = np.exp(-grid.nodes**2 / 8) * np.sin(c * grid.nodes + a)
        eps = 1e-5
        fd = (energy_value(u + eps * phi, params, op) - energy_value(u - eps * phi, params, op)) / (2 * eps)
        wr = weak_residual(RadialProfile(grid, u), params, op, RadialProfile(grid, phi))
        worst = max(worst, abs(wr - fd) / (1 + abs(wr)))
    return "weak residual vs central difference of E", worst, worst < 1e-6


def _selftest_hls(N, alpha):
    recs = run_hls(N, alpha, (0.5, 2.0, 4.0), M=128)
    q0 = recs[0].ratio
    drift = max(abs(r.ratio - q0) / q0 for r in recs)
    return "HLS quotient under dilation", drift, drift < 1e-6


def cmd_selftest(args) -> int:
    try:
        N = _to_int(args.N)
        alpha = float(as_exact(args.alpha))
        if N < 2:
            raise ValueError(f"N must be >= 2, got {N}")
        if not 0 < alpha < N:
            raise ValueError(f"alpha must lie in (0, N) = (0, {N}), got {args.alpha}")
    except (ValueError, ZeroDivisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    rng = np.random.default_rng(args.seed)
    checks = []
    try:
        for run in (lambda: _selftest_kernel(N, alpha, args.cache_dir, args.M),
                    lambda: _selftest_gradient(N, alpha, rng),
                    lambda: _selftest_hls(N, alpha)):
            t0 = time.perf_counter()
            name, err, ok = run()
            checks.append(ok)
            print(f"{'PASS' if ok else 'FAIL'}  {name}: {err:.3e}  ({time.perf_counter() - t0:.1f} s)")
    except CacheCorrupted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CACHE
    except ValueError as exc:
        # a valid alpha can still violate the solver's parameter range (e.g. alpha <= N - 4)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK if all(checks) else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """Usage errors exit 1; argparse's default 2 is reserved for the window refusal."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="choquard", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("info", help="critical exponents for (N, p, alpha)")
    p.add_argument("--N", required=True)
    p.add_argument("--p", required=True)
    p.add_argument("--alpha", required=True)
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("solve", help="compute a ground state")
    p.add_argument("--config", required=True, type=Path)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="run the identity diagnostics on a profile")
    p.add_argument("--profile", required=True, type=Path)
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--assert", dest="assert_", action="store_true",
                   help="exit 5 if any acceptance threshold is violated")
    p.add_argument("--out", type=Path, default=None, help="report path (default: output.verify_path or stdout)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="existence window and ground states over a q range")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--q-min")
    p.add_argument("--q-max")
    p.add_argument("--steps", type=int)
    p.add_argument("--q-list", help="comma-separated q values instead of a range, e.g. 1,5/3,2")
    p.add_argument("--out", type=Path, default=None, help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("selftest", help="kernel oracle, gradient check and HLS scaling")
    p.add_argument("--N", default="3")
    p.add_argument("--alpha", default="2")
    p.add_argument("--M", type=int, default=256, help="nodes for the kernel oracle grid")
    p.add_argument("--cache-dir", type=Path, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
