"""Scenario runner: trajectory scans, Holevo scans, mass sweeps and Chern reports.

Scenarios are described by INI-style configuration files::

    [model]
    mass = 1.0

    [trajectory]
    kind = diagonal        # diagonal | fixed-k2 | explicit-list
    samples = 20

    [povm]
    choice = optimize-det  # trine | sic | optimize-det | optimize-weighted
    weight = W1-qfi        # W1-qfi | W2-jacobian

    [estimation]
    shots = 1000
    trials = 0
    seed = 7

Unknown sections or keys are rejected. All randomness derives from the
configured seed and the row index, so outputs are reproducible bit for bit.
"""
from __future__ import annotations

import configparser
import csv
import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

from . import bounds
from .errors import ConfigError, CriticalMass, NumericError
from .estimation import asymptotic_covariance, monte_carlo_covariance, uncertainty_volume, weighted_variance
from .model import BlochPoint, chern_number, geometry_grid, quantum_volume, wrap_angle
from .optimizer import optimize_det_fim, optimize_weighted
from .povm import PROB_FLOOR, Povm, sic_povm, to_dict, to_json, trine_povm

POVM_CHOICES = ("trine", "sic", "optimize-det", "optimize-weighted")
WEIGHT_LABELS = ("W1-qfi", "W2-jacobian")
TRAJECTORY_KINDS = ("diagonal", "fixed-k2", "explicit-list")

ALLOWED_KEYS = {
    "model": {"mass", "masses"},
    "trajectory": {"kind", "samples", "offset", "k2", "start", "stop", "points"},
    "povm": {"choice", "weight", "restarts"},
    "estimation": {"shots", "trials", "seed"},
    "grid": {"n"},
    "point": {"k1", "k2"},
    "sweep": {"spot_checks"},
}


def default_masses() -> tuple[float, ...]:
    grid = [0.25 * i for i in range(1, 16)]
    return tuple(m for m in grid if all(abs(m - c) >= 0.05 for c in (-2.0, 0.0, 2.0)))


@dataclass(frozen=True)
class Trajectory:
    """Curve through the Brillouin zone sampled at cell midpoints.

    ``diagonal``: k1 = t, k2 = t + offset. ``fixed-k2``: k1 = t, k2 fixed.
    The parameter t runs over [start, stop) and is sampled at the centres
    of ``samples`` equal cells. ``explicit-list`` uses ``points`` verbatim.
    """

    kind: str = "diagonal"
    samples: int = 20
    offset: float = 0.0
    k2: float = 1.0
    start: float = -math.pi
    stop: float = math.pi
    points: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise ConfigError(f"unknown trajectory kind {self.kind!r}")
        if self.kind == "explicit-list":
            if len(self.points) < 2:
                raise ConfigError("explicit trajectory needs at least two points")
        elif self.samples < 2:
            raise ConfigError("trajectory needs at least two samples")

    def sample(self) -> list[tuple[float, float]]:
        if self.kind == "explicit-list":
            pts = self.points
        else:
            t = self.start + (np.arange(self.samples) + 0.5) * (self.stop - self.start) / self.samples
            if self.kind == "diagonal":
                pts = [(x, x + self.offset) for x in t]
            else:
                pts = [(x, self.k2) for x in t]
        return [(float(wrap_angle(a)), float(wrap_angle(b))) for a, b in pts]


@dataclass(frozen=True)
class ScenarioConfig:
    mass: float = 1.0
    masses: tuple[float, ...] = field(default_factory=default_masses)
    trajectory: Trajectory = field(default_factory=Trajectory)
    povm_choice: str = "optimize-det"
    weight_label: str = "W1-qfi"
    restarts: int = 8
    shots: int = 1000
    trials: int = 500
    seed: int | None = None
    grid_n: int = 64
    point: tuple[float, float] = (1.0, 0.5)
    spot_checks: int = 5

    def __post_init__(self):
        if self.povm_choice not in POVM_CHOICES:
            raise ConfigError(f"unknown POVM choice {self.povm_choice!r}")
        if self.weight_label not in WEIGHT_LABELS:
            raise ConfigError(f"unknown weight label {self.weight_label!r}")
        if self.shots < 1 or self.trials < 0 or self.restarts < 1 or self.spot_checks < 0:
            raise ConfigError("shots, restarts must be >= 1 and trials, spot_checks >= 0")
        if self.trials == 1:
            raise ConfigError("trials must be 0 or at least 2")
        if self.grid_n < 8:
            raise ConfigError("grid n must be at least 8")
        if self.seed is not None and not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("a seed is mandatory (config [estimation] seed or --seed)")
        return self.seed


_PI_EXPR = re.compile(r"^\s*([+-]?)\s*(\d*\.?\d*)\s*\*?\s*pi\s*(?:/\s*(\d+\.?\d*))?\s*$")


def parse_number(text: str) -> float:
    """Float, optionally written as a multiple of pi ("-pi", "2*pi/3")."""
    m = _PI_EXPR.match(text)
    if m:
        sign, coef, denom = m.groups()
        value = (float(coef) if coef else 1.0) * math.pi / (float(denom) if denom else 1.0)
        return -value if sign == "-" else value
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"not a number: {text!r}") from exc


def _parse_int(text: str) -> int:
    try:
        return int(text)
    except ValueError as exc:
        raise ConfigError(f"not an integer: {text!r}") from exc


def parse_config(text: str) -> ScenarioConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    for section in parser.sections():
        if section not in ALLOWED_KEYS:
            raise ConfigError(f"unknown section [{section}]")
        unknown = set(parser[section]) - ALLOWED_KEYS[section]
        if unknown:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")

    def get(section, key):
        return parser.get(section, key, fallback=None)

    kw: dict = {}
    if (v := get("model", "mass")) is not None:
        kw["mass"] = parse_number(v)
    if (v := get("model", "masses")) is not None:
        kw["masses"] = tuple(parse_number(x) for x in v.replace(",", " ").split())
    traj: dict = {}
    if (v := get("trajectory", "kind")) is not None:
        traj["kind"] = v.strip()
    if (v := get("trajectory", "samples")) is not None:
        traj["samples"] = _parse_int(v)
    for key in ("offset", "k2", "start", "stop"):
        if (v := get("trajectory", key)) is not None:
            traj[key] = parse_number(v)
    if (v := get("trajectory", "points")) is not None:
        pts = []
        for chunk in v.split(";"):
            if chunk.strip():
                parts = chunk.replace(",", " ").split()
                if len(parts) != 2:
                    raise ConfigError(f"trajectory point needs two coordinates: {chunk!r}")
                pts.append((parse_number(parts[0]), parse_number(parts[1])))
        traj["points"] = tuple(pts)
    if traj:
        kw["trajectory"] = Trajectory(**traj)
    if (v := get("povm", "choice")) is not None:
        kw["povm_choice"] = v.strip()
    if (v := get("povm", "weight")) is not None:
        kw["weight_label"] = v.strip()
    if (v := get("povm", "restarts")) is not None:
        kw["restarts"] = _parse_int(v)
    if (v := get("estimation", "shots")) is not None:
        kw["shots"] = _parse_int(v)
    if (v := get("estimation", "trials")) is not None:
        kw["trials"] = _parse_int(v)
    if (v := get("estimation", "seed")) is not None:
        kw["seed"] = _parse_int(v)
    if (v := get("grid", "n")) is not None:
        kw["grid_n"] = _parse_int(v)
    if get("point", "k1") is not None or get("point", "k2") is not None:
        kw["point"] = (parse_number(get("point", "k1") or "0"), parse_number(get("point", "k2") or "0"))
    if (v := get("sweep", "spot_checks")) is not None:
        kw["spot_checks"] = _parse_int(v)
    return ScenarioConfig(**kw)


def load_config(path, seed: int | None = None, grid_n: int | None = None) -> ScenarioConfig:
    try:
        with open(path) as fh:
            cfg = parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if grid_n is not None:
        cfg = replace(cfg, grid_n=grid_n)
    return cfg


# ---------------------------------------------------------------------------
# Output tables


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if math.isnan(v):
            raise ValueError("NaN must not reach an output table")
        return f"{float(v):.17g}"
    return str(v)


@dataclass
class Table:
    columns: list[str]
    rows: list[dict] = field(default_factory=list)

    def add(self, **row) -> None:
        unknown = set(row) - set(self.columns)
        if unknown:
            raise KeyError(f"unknown columns {unknown}")
        self.rows.append(row)

    def column(self, name: str) -> list:
        return [r.get(name) for r in self.rows]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns)
            for r in self.rows:
                w.writerow([format_value(r.get(c)) for c in self.columns])


class _Errors:
    """Collects per-row error messages while letting the row continue."""

    def __init__(self):
        self.messages: list[str] = []

    def run(self, label, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (NumericError, ValueError) as exc:
            self.messages.append(f"{label}: {type(exc).__name__}: {exc}")
            return None

    def text(self):
        return "; ".join(self.messages) or None


def point_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1, np.uint64)[0])


def _asymptotic_volume(povm: Povm, point: BlochPoint, N: int) -> float:
    return uncertainty_volume(asymptotic_covariance(povm, point, N))


def _selected_povm(cfg: ScenarioConfig, point: BlochPoint, seed: int, opovm=None) -> Povm:
    if cfg.povm_choice == "trine":
        return trine_povm()
    if cfg.povm_choice == "sic":
        return sic_povm()
    if cfg.povm_choice == "optimize-det":
        return opovm if opovm is not None else optimize_det_fim(point, cfg.restarts, seed).povm
    W = bounds.weight_for(cfg.weight_label, point)
    return optimize_weighted(W, point, cfg.restarts, seed).povm


TRAJECTORY_COLUMNS = [
    "index", "k1", "k2", "mass", "omega12", "berry_bound",
    "vol_opovm", "vol_trine", "vol_sic",
    "selected", "vol_selected", "vol_selected_mc", "povm", "error",
]


def run_trajectory_scan(cfg: ScenarioConfig) -> Table:
    """Uncertainty volumes of oPOVM, trine and SIC along a trajectory, with the Berry bound."""
    seed = cfg.require_seed()
    N = cfg.shots
    table = Table(TRAJECTORY_COLUMNS)
    for j, (k1, k2) in enumerate(cfg.trajectory.sample()):
        point = BlochPoint(k1, k2, cfg.mass)
        err = _Errors()
        s = point_seed(seed, j)
        omega = err.run("omega", lambda: bounds.qgt_analytic(point).omega12)
        bb = err.run("berry_bound", bounds.berry_bound, point, N)
        opt = err.run("opovm", optimize_det_fim, point, cfg.restarts, s)
        opovm = opt.povm if opt is not None else None
        vol_o = err.run("vol_opovm", _asymptotic_volume, opovm, point, N) if opovm else None
        vol_t = err.run("vol_trine", _asymptotic_volume, trine_povm(), point, N)
        vol_s = err.run("vol_sic", _asymptotic_volume, sic_povm(), point, N)
        selected = err.run("selected", _selected_povm, cfg, point, s, opovm)
        vol_sel = vol_mc = None
        if selected is not None:
            vol_sel = err.run("vol_selected", _asymptotic_volume, selected, point, N)
            if cfg.trials > 0:
                mc = err.run("monte_carlo", monte_carlo_covariance, selected, point, N, cfg.trials, s)
                vol_mc = uncertainty_volume(mc) if mc is not None else None
        table.add(
            index=j, k1=point.k1, k2=point.k2, mass=point.M, omega12=omega, berry_bound=bb,
            vol_opovm=vol_o, vol_trine=vol_t, vol_sic=vol_s, selected=cfg.povm_choice,
            vol_selected=vol_sel, vol_selected_mc=vol_mc,
            povm=to_json(selected) if selected is not None else None, error=err.text(),
        )
    return table


HOLEVO_COLUMNS = [
    "index", "k1", "k2", "mass", "weight", "shots",
    "weighted_variance", "scaled_weighted_variance", "holevo", "sld_crb",
    "one_plus_r", "ratio_holevo_sld", "saturation", "weighted_variance_mc", "povm", "error",
]


def _holevo_row(cfg: ScenarioConfig, point: BlochPoint, s: int, err: _Errors) -> dict:
    N = cfg.shots
    W = bounds.weight_for(cfg.weight_label, point)
    # bounds first: they name the failure (e.g. vanishing curvature) before the search would
    ch = bounds.holevo_bound(W, point)
    cs = bounds.sld_crb(W, point)
    opt = optimize_weighted(W, point, cfg.restarts, s)
    cov = asymptotic_covariance(opt.povm, point, N)
    tr = weighted_variance(W, cov)
    row = dict(
        weighted_variance=tr, scaled_weighted_variance=N * tr, holevo=ch, sld_crb=cs,
        one_plus_r=1.0 + bounds.r_parameter(point), ratio_holevo_sld=ch / cs,
        saturation=N * tr / ch, povm=to_json(opt.povm),
    )
    if cfg.trials > 0:
        mc = err.run("monte_carlo", monte_carlo_covariance, opt.povm, point, N, cfg.trials, s)
        row["weighted_variance_mc"] = weighted_variance(W, mc) if mc is not None else None
    return row


def run_holevo_scan(cfg: ScenarioConfig) -> Table:
    """Weighted variance of the Tr(W F_C^-1)-optimal POVM against C^H, C^S and 1+R."""
    seed = cfg.require_seed()
    table = Table(HOLEVO_COLUMNS)
    for j, (k1, k2) in enumerate(cfg.trajectory.sample()):
        point = BlochPoint(k1, k2, cfg.mass)
        err = _Errors()
        row = err.run("holevo", _holevo_row, cfg, point, point_seed(seed, j), err) or {}
        table.add(index=j, k1=point.k1, k2=point.k2, mass=point.M, weight=cfg.weight_label,
                  shots=cfg.shots, error=err.text(), **row)
    return table


def trine_fim_grid(M: float, grid_n: int):
    """sqrt(det F_C) of the trine POVM on the midpoint grid, and the cell area."""
    n, dn, area = geometry_grid(M, grid_n)
    P = trine_povm()
    w, m = P.weights, P.directions
    p = 0.5 * w * (1.0 + n @ m.T)  # (G, G, outcomes)
    grad = 0.5 * w[:, None] * np.einsum("ic,...ac->...ia", m, dn)  # (G, G, outcomes, 2)
    live = p > PROB_FLOOR
    inv_p = np.where(live, 1.0 / np.where(live, p, 1.0), 0.0)
    F = np.einsum("...i,...ia,...ib->...ab", inv_p, grad, grad)
    det = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    return np.sqrt(np.maximum(det, 0.0)), area


def metrological_potential(M: float, grid_n: int = 64) -> float:
    """Integral of [det Sigma]^(-1/2) / N for the trine POVM, i.e. of sqrt(det F_C)."""
    integrand, area = trine_fim_grid(M, grid_n)
    return float(np.sum(integrand) * area)


class BoundViolation(NumericError):
    pass


SWEEP_COLUMNS = ["mass", "chern", "quantum_volume", "four_vol", "metrological_potential", "bound_ok", "error"]
SPOT_COLUMNS = ["index", "mass", "k1", "k2", "integrand_asymptotic", "integrand_mc", "relative_difference", "error"]


def run_mass_sweep(cfg: ScenarioConfig) -> tuple[Table, Table]:
    """Quantum volume, trine metrological potential and Chern number across masses.

    Returns the sweep table and a table of Monte Carlo spot checks of the
    integrand identity (1/N)[det Sigma]^(-1/2) = sqrt(det F_C) at
    ``spot_checks`` seeded points (skipped when trials = 0).
    """
    seed = cfg.require_seed()
    table = Table(SWEEP_COLUMNS)
    violations = []
    good_masses = []
    for M in cfg.masses:
        if any(abs(M - c) < 0.05 for c in (-2.0, 0.0, 2.0)):
            table.add(mass=M, error=f"CriticalMass: M = {M} within 0.05 of a gap closing")
            continue
        err = _Errors()
        ch = err.run("chern", chern_number, M, cfg.grid_n)
        vol = err.run("quantum_volume", quantum_volume, M, cfg.grid_n)
        mp = err.run("metrological_potential", metrological_potential, M, cfg.grid_n)
        ok = None
        if vol is not None and mp is not None:
            ok = bool(mp <= 4 * vol * (1 + 1e-12))
            if not ok:
                violations.append(M)
            good_masses.append(M)
        table.add(mass=M, chern=ch, quantum_volume=vol, four_vol=4 * vol if vol is not None else None,
                  metrological_potential=mp, bound_ok=ok, error=err.text())
    spots = Table(SPOT_COLUMNS)
    if cfg.trials > 0 and good_masses:
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2**32,)))
        for j in range(cfg.spot_checks):
            M = good_masses[j % len(good_masses)]
            k1, k2 = rng.uniform(-np.pi, np.pi, 2)
            point = BlochPoint(k1, k2, M)
            err = _Errors()
            fc = err.run("fim", bounds.classical_fim, trine_povm(), point)
            mc = err.run("monte_carlo", monte_carlo_covariance, trine_povm(), point, cfg.shots, cfg.trials, point_seed(seed, j))
            a = math.sqrt(max(np.linalg.det(fc.matrix), 0.0)) if fc is not None else None
            b = None
            if mc is not None and uncertainty_volume(mc) > 0:
                b = 1.0 / (cfg.shots * uncertainty_volume(mc))
            rel = (b / a - 1.0) if (a and b is not None) else None
            spots.add(index=j, mass=M, k1=point.k1, k2=point.k2, integrand_asymptotic=a,
                      integrand_mc=b, relative_difference=rel, error=err.text())
    if violations:
        raise BoundViolation(f"M_p > 4 vol_g at M = {violations}")
    return table, spots


CHERN_COLUMNS = ["mass", "chern", "quantum_volume", "saturation_ratio", "error"]


def run_chern_report(masses, grid_n: int = 64) -> Table:
    """Signed Chern number, quantum volume and vol_g / (pi |Ch|) per mass."""
    table = Table(CHERN_COLUMNS)
    for M in masses:
        try:
            ch = chern_number(M, grid_n)
            vol = quantum_volume(M, grid_n)
        except (CriticalMass, NumericError) as exc:
            table.add(mass=M, error=f"{type(exc).__name__}: {exc}")
            continue
        ratio = vol / (math.pi * abs(ch)) if ch != 0 else math.inf
        table.add(mass=M, chern=ch, quantum_volume=vol, saturation_ratio=ratio)
    return table


def run_optimize_povm(cfg: ScenarioConfig):
    """Optimize a POVM at ``cfg.point``; returns (summary dict, OptimizationResult)."""
    seed = cfg.require_seed()
    point = BlochPoint(cfg.point[0], cfg.point[1], cfg.mass)
    summary = {"point": {"k1": point.k1, "k2": point.k2, "M": point.M}, "seed": seed}
    if cfg.povm_choice == "optimize-weighted":
        W = bounds.weight_for(cfg.weight_label, point)
        result = optimize_weighted(W, point, cfg.restarts, seed)
        summary["weight"] = cfg.weight_label
        summary["holevo"] = bounds.holevo_bound(W, point)
    elif cfg.povm_choice == "optimize-det":
        result = optimize_det_fim(point, cfg.restarts, seed)
        summary["det_qfi"] = float(np.linalg.det(bounds.qfi_matrix(point).matrix))
    else:
        raise ConfigError("optimize-povm needs choice = optimize-det or optimize-weighted")
    summary.update(
        objective=result.objective, objective_kind=result.objective_kind,
        iterations=result.iterations, converged=result.converged,
    )
    summary["povm"] = to_dict(result.povm)
    return summary, result
