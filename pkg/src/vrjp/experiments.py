"""Replica engine and statistical checks for the tree martingale.

A replica is one sampled tree with one attached random potential. Every
estimator reads only the finished per-replica records, so aggregation is a
pure reduction over replica ids: thread count and completion order cannot
change any output byte.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import functools
import importlib.resources
import json
import logging
import math
import os
import pathlib
import time

import numpy as np
from scipy import stats

from .green import eliminate
from .igmath import ig_cdf
from .network import (effective_conductance, escape_probability,
                      generation_conductance, wired_network)
from .phase import critical_exponents, critical_weight, decay_rate, optimal_tilt
from .potential import attach_potential
from .trees import (OffspringLaw, additive_sum, min_ancestral_max, sample_tree,
                    walk_fields)

__all__ = [
    "CSV_COLUMNS",
    "ExperimentSpec",
    "KsReport",
    "ReplicaRecord",
    "SpecError",
    "coupling_ks_test",
    "critical_scaling",
    "decay_rate_estimate",
    "escape_decay",
    "evaluate_checks",
    "hushi_moment_check",
    "load_calibration",
    "load_spec",
    "moment_curve",
    "pit_conditional_test",
    "pit_values",
    "positive_recurrence_check",
    "resolved_weight",
    "run",
    "run_to_dir",
    "write_records_csv",
]

log = logging.getLogger("vrjp.experiments")

# Pinned record schema; downstream tooling parses these columns by name.
CSV_COLUMNS = ("experiment", "replica", "depth", "psi", "g_hat", "g_tilde",
               "resistance", "escape_p", "lambda_n", "w_n_beta", "gamma", "seed")

_W_MODES = ("absolute", "w_c_multiple")
_OPTION_KEYS = frozenset(
    {"checks", "beta", "r", "p", "symmetry_depth", "rate_depth"})


class SpecError(ValueError):
    """Malformed or inconsistent experiment description."""


@dataclasses.dataclass(frozen=True)
class ExperimentSpec:
    """Declarative description of one batch of replicas.

    w is either the edge weight itself (w_mode "absolute") or a multiple of
    the critical weight of the offspring law (w_mode "w_c_multiple").
    """

    name: str
    law: OffspringLaw
    w_mode: str
    w: float
    depths: tuple[int, ...]
    replicas: int
    seed: int
    options: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise SpecError("experiment name must be a nonempty string")
        if not isinstance(self.law, OffspringLaw):
            raise SpecError("law must be an OffspringLaw")
        if not self.law.always_branches:
            raise SpecError("offspring law must branch surely with mean > 1")
        if self.w_mode not in _W_MODES:
            raise SpecError(f"w_mode must be one of {_W_MODES}, got {self.w_mode!r}")
        if not (isinstance(self.w, (int, float)) and math.isfinite(self.w) and self.w > 0):
            raise SpecError(f"w must be a positive finite number, got {self.w!r}")
        object.__setattr__(self, "w", float(self.w))
        depths = tuple(self.depths)
        if not depths or any(int(n) != n or n < 1 for n in depths):
            raise SpecError(f"depths must be integers >= 1, got {depths!r}")
        depths = tuple(int(n) for n in depths)
        if any(b <= a for a, b in zip(depths, depths[1:])):
            raise SpecError(f"depths must be strictly increasing, got {depths!r}")
        object.__setattr__(self, "depths", depths)
        if int(self.replicas) != self.replicas or self.replicas < 1:
            raise SpecError(f"replicas must be an integer >= 1, got {self.replicas!r}")
        object.__setattr__(self, "replicas", int(self.replicas))
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise SpecError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        object.__setattr__(self, "seed", int(self.seed))
        if not isinstance(self.options, dict):
            raise SpecError("options must be a mapping")
        unknown = set(self.options) - _OPTION_KEYS
        if unknown:
            raise SpecError(f"unknown option keys {sorted(unknown)}; "
                            f"known: {sorted(_OPTION_KEYS)}")
        checks = self.options.get("checks", [])
        bad = [c for c in checks if c not in _CHECKS]
        if bad:
            raise SpecError(f"unknown checks {bad}; known: {sorted(_CHECKS)}")
        beta = self.options.get("beta", 1.0)
        if not (isinstance(beta, (int, float)) and math.isfinite(beta) and beta > 0):
            raise SpecError(f"options.beta must be positive, got {beta!r}")

    @classmethod
    def from_json(cls, obj) -> "ExperimentSpec":
        if not isinstance(obj, dict):
            raise SpecError(f"experiment spec must be a JSON object, got {type(obj).__name__}")
        missing = [k for k in ("name", "law", "w_mode", "w", "depths", "replicas", "seed")
                   if k not in obj]
        if missing:
            raise SpecError(f"experiment spec missing keys {missing}")
        extra = set(obj) - {"name", "law", "w_mode", "w", "depths", "replicas",
                            "seed", "options"}
        if extra:
            raise SpecError(f"unknown spec keys {sorted(extra)}")
        try:
            law = OffspringLaw.from_json(obj["law"])
        except ValueError as exc:
            raise SpecError(str(exc)) from exc
        return cls(name=obj["name"], law=law, w_mode=obj["w_mode"], w=obj["w"],
                   depths=tuple(obj["depths"]), replicas=obj["replicas"],
                   seed=obj["seed"], options=obj.get("options", {}))

    def to_json(self) -> dict:
        return {"name": self.name,
                "law": {"pmf": {str(k): v for k, v in self.law.pmf.items()}},
                "w_mode": self.w_mode, "w": self.w, "depths": list(self.depths),
                "replicas": self.replicas, "seed": self.seed,
                "options": dict(self.options)}


def load_spec(path) -> ExperimentSpec:
    """Parse an experiment spec file, turning JSON syntax errors into SpecError."""
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SpecError(f"unparseable spec file {path}: {exc}") from exc
    except OSError as exc:
        raise SpecError(f"cannot read spec file {path}: {exc}") from exc
    return ExperimentSpec.from_json(obj)


def resolved_weight(spec: ExperimentSpec) -> float:
    if spec.w_mode == "absolute":
        return spec.w
    return spec.w * critical_weight(spec.law.mean)


@dataclasses.dataclass(frozen=True)
class ReplicaRecord:
    """Per-replica observables, one slot per requested depth.

    Everything except wall_time is reproducible bit for bit from
    (seed, replica, spec). escape_p at depth n is the probability that the
    walk started at the root reaches generation n before returning, so the
    network is wired one level below n.
    """

    replica: int
    depths: tuple[int, ...]
    psi: tuple[float, ...]
    g_hat: tuple[float, ...]
    g_tilde: tuple[float, ...]
    resistance: tuple[float, ...]
    escape_p: tuple[float, ...]
    lambda_n: tuple[float, ...]
    w_n_beta: tuple[float, ...]
    min_ancestral_max: tuple[float, ...]
    gamma: float
    wall_time: float


@dataclasses.dataclass(frozen=True)
class RunContext:
    seed: int
    seed_overridden: bool
    w: float
    w_c: float
    tilt: float
    tau: float
    beta: float


def _context(spec: ExperimentSpec) -> RunContext:
    seed, overridden = spec.seed, False
    env = os.environ.get("VRJP_SEED")
    if env is not None:
        try:
            seed = int(env)
        except ValueError as exc:
            raise SpecError(f"VRJP_SEED must be an integer, got {env!r}") from exc
        overridden = True
        log.warning("VRJP_SEED=%s overrides spec seed %d", env, spec.seed)
    m = spec.law.mean
    w = resolved_weight(spec)
    return RunContext(seed=seed, seed_overridden=overridden, w=w,
                      w_c=critical_weight(m), tilt=optimal_tilt(m, w),
                      tau=decay_rate(m, w), beta=float(spec.options.get("beta", 1.0)))


def _replica_rng(seed: int, replica: int) -> np.random.Generator:
    # counter-based stream keyed by (seed, replica id); replicas never share state
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(replica,))
    return np.random.Generator(np.random.Philox(ss))


def _one_replica(spec: ExperimentSpec, ctx: RunContext, replica: int) -> ReplicaRecord:
    t0 = time.perf_counter()
    rng = _replica_rng(ctx.seed, replica)
    # the deepest eliminate and the deepest wired network both need one
    # generation past the largest requested depth
    tree = sample_tree(spec.law, spec.depths[-1] + 1, rng)
    pot = attach_potential(tree, ctx.w, rng)
    walk = walk_fields(tree, pot.a, ctx.tilt, ctx.tau)
    psi, g_hat, g_tilde, res, esc, lam, wnb, mam = ([] for _ in range(8))
    for n in spec.depths:
        rep = eliminate(tree, pot, n)
        psi.append(rep.psi_root)
        g_hat.append(rep.g_hat_root)
        g_tilde.append(rep.g_tilde_root)
        res.append(1.0 / effective_conductance(wired_network(tree, pot, n)))
        esc.append(escape_probability(wired_network(tree, pot, n - 1)))
        lam.append(generation_conductance(tree, pot, n))
        wnb.append(additive_sum(walk, n, ctx.beta))
        mam.append(min_ancestral_max(walk, n))
    return ReplicaRecord(replica=replica, depths=spec.depths, psi=tuple(psi),
                         g_hat=tuple(g_hat), g_tilde=tuple(g_tilde),
                         resistance=tuple(res), escape_p=tuple(esc),
                         lambda_n=tuple(lam), w_n_beta=tuple(wnb),
                         min_ancestral_max=tuple(mam), gamma=pot.gamma,
                         wall_time=time.perf_counter() - t0)


def _compute_records(spec: ExperimentSpec, ctx: RunContext,
                     threads: int) -> list[ReplicaRecord]:
    if int(threads) != threads or threads < 1:
        raise SpecError(f"threads must be an integer >= 1, got {threads!r}")
    ids = range(spec.replicas)
    if threads == 1:
        return [_one_replica(spec, ctx, r) for r in ids]
    with concurrent.futures.ThreadPoolExecutor(max_workers=int(threads)) as ex:
        return list(ex.map(lambda r: _one_replica(spec, ctx, r), ids))


def run(spec: ExperimentSpec, threads: int = 1):
    """Compute all replicas and evaluate the spec's checks.

    Returns (records, summary). The summary carries one row per assertion
    with its measured value, standard error where one exists, and the
    threshold it was held against.
    """
    ctx = _context(spec)
    records = _compute_records(spec, ctx, threads)
    assertions = evaluate_checks(spec, records, ctx)
    summary = {
        "experiment": spec.name,
        "seed": ctx.seed,
        "seed_overridden": ctx.seed_overridden,
        "w": ctx.w,
        "w_c": ctx.w_c,
        "t_star": ctx.tilt,
        "tau": ctx.tau,
        "beta": ctx.beta,
        "replicas": spec.replicas,
        "depths": list(spec.depths),
        "assertions": assertions,
        "passed": all(a["pass"] for a in assertions),
    }
    return records, summary


def write_records_csv(path, spec: ExperimentSpec, records, seed: int) -> None:
    """One row per (replica, depth), sorted, shortest-round-trip floats."""
    recs = sorted(records, key=lambda r: r.replica)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(CSV_COLUMNS)
        for rec in recs:
            for i, n in enumerate(rec.depths):
                out.writerow((spec.name, rec.replica, n,
                              repr(float(rec.psi[i])), repr(float(rec.g_hat[i])),
                              repr(float(rec.g_tilde[i])),
                              repr(float(rec.resistance[i])),
                              repr(float(rec.escape_p[i])),
                              repr(float(rec.lambda_n[i])),
                              repr(float(rec.w_n_beta[i])),
                              repr(float(rec.gamma)), seed))


def run_to_dir(spec: ExperimentSpec, out_dir, threads: int = 1) -> dict:
    """Run the experiment and write records.csv + summary.json under out_dir."""
    records, summary = run(spec, threads=threads)
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_records_csv(out / "records.csv", spec, records, summary["seed"])
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return summary


@functools.lru_cache(maxsize=1)
def load_calibration() -> dict:
    """Tolerances for the calibrated bands, plus the pilot evidence behind them."""
    path = importlib.resources.files("vrjp").joinpath("calibration.json")
    return json.loads(path.read_text())


# ---------------------------------------------------------------- estimators

def _sorted_records(records) -> list[ReplicaRecord]:
    recs = sorted(records, key=lambda r: r.replica)
    if not recs:
        raise ValueError("no records")
    depths = recs[0].depths
    if any(r.depths != depths for r in recs):
        raise ValueError("records disagree on their depth grid")
    return recs


def _matrix(records, name: str) -> np.ndarray:
    """(replicas, depths) array of one record field, in replica order."""
    return np.array([getattr(r, name) for r in _sorted_records(records)])


def _depth_slot(records, depth) -> int:
    depths = _sorted_records(records)[0].depths
    if depth is None:
        return len(depths) - 1
    if depth not in depths:
        raise ValueError(f"depth {depth} not in record grid {depths}")
    return depths.index(depth)


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(len(x)))


def decay_rate_estimate(records, depths=None) -> tuple[float, float]:
    """Median per-replica slope of ln psi over the largest depth pair.

    The stderr is the normal-approximation standard error of the sample
    median, with the spread read off the MAD.
    """
    recs = _sorted_records(records)
    grid = recs[0].depths
    if depths is None:
        depths = grid
    pair = sorted(set(depths))[-2:]
    if len(pair) < 2:
        raise ValueError("need two distinct depths for a slope")
    n1, n2 = pair
    i1, i2 = grid.index(n1), grid.index(n2)
    lp = np.log(_matrix(recs, "psi"))
    slopes = (lp[:, i2] - lp[:, i1]) / (n2 - n1)
    med = float(np.median(slopes))
    mad = float(np.median(np.abs(slopes - med)))
    se = 1.2533 * 1.4826 * mad / math.sqrt(len(slopes))
    return med, se


@dataclasses.dataclass(frozen=True)
class MomentRow:
    depth: int
    p: float
    estimate: float
    stderr: float
    partner_p: float
    partner_estimate: float
    partner_stderr: float


def moment_curve(records, p_list) -> list[MomentRow]:
    """MC estimates of E[psi^p] with the (p, 1-p) partner side by side."""
    recs = _sorted_records(records)
    psi = _matrix(recs, "psi")
    rows = []
    for j, n in enumerate(recs[0].depths):
        for p in p_list:
            est, se = _mean_se(psi[:, j] ** p)
            pest, pse = _mean_se(psi[:, j] ** (1.0 - p))
            rows.append(MomentRow(depth=n, p=float(p), estimate=est, stderr=se,
                                  partner_p=float(1.0 - p), partner_estimate=pest,
                                  partner_stderr=pse))
    return rows


@dataclasses.dataclass(frozen=True)
class KsReport:
    statistic: float
    pvalue: float
    n: int


def coupling_ks_test(records, depth=None, corrupted=False) -> KsReport:
    """KS of psi^2 * 2 gamma * (1 + 2 gamma R) against 2*Gamma(1/2, 1).

    corrupted=True drops the (1 + 2 gamma R) factor; that is the negative
    control and must be rejected decisively.
    """
    recs = _sorted_records(records)
    j = _depth_slot(recs, depth)
    psi = _matrix(recs, "psi")[:, j]
    res = _matrix(recs, "resistance")[:, j]
    gamma = np.array([r.gamma for r in recs])
    phi = psi**2 * 2.0 * gamma
    if not corrupted:
        phi = phi * (1.0 + 2.0 * gamma * res)
    ks = stats.kstest(phi, stats.gamma(a=0.5, scale=2.0).cdf)
    return KsReport(statistic=float(ks.statistic), pvalue=float(ks.pvalue),
                    n=len(phi))


def pit_values(records, depth=None, corrupted=False) -> np.ndarray:
    """Conditional probability integral transform of psi at one depth.

    The conditional law of psi given everything but the root pivot is
    inverse Gaussian with mean 1 and shape psi/g_hat (a function of the
    pivot-free sweep only), so these transforms are iid Uniform(0,1).
    corrupted=True uses shape 1 instead.
    """
    recs = _sorted_records(records)
    j = _depth_slot(recs, depth)
    psi = _matrix(recs, "psi")[:, j]
    g_hat = _matrix(recs, "g_hat")[:, j]
    if not (np.all(np.isfinite(psi)) and np.all(psi > 0) and np.all(g_hat > 0)):
        raise ValueError("PIT needs finite positive psi and g_hat")
    shape = 1.0 if corrupted else psi / g_hat
    return np.asarray(ig_cdf(psi, 1.0, shape))


def pit_conditional_test(records, depth=None, corrupted=False) -> KsReport:
    u = pit_values(records, depth=depth, corrupted=corrupted)
    ks = stats.kstest(u, "uniform")
    return KsReport(statistic=float(ks.statistic), pvalue=float(ks.pvalue), n=len(u))


@dataclasses.dataclass(frozen=True)
class EscapeDecay:
    slope: float
    band_lo: float
    band_hi: float
    inside: bool
    depths: tuple[int, ...]
    log_means: tuple[float, ...]


def escape_decay(records, depths=None, *, tau: float, tilt: float,
                 eps_rel: float = 0.15) -> EscapeDecay:
    """Slope of ln E[escape probability] in n, held against [-2 tau, -tau t*].

    The band is widened by eps_rel * tau on both sides; both ends are theory
    bounds, not point targets, so membership is the meaningful assertion.
    """
    recs = _sorted_records(records)
    grid = recs[0].depths
    if depths is None:
        depths = grid
    idx = [grid.index(n) for n in depths]
    esc = _matrix(recs, "escape_p")[:, idx]
    log_means = np.log(np.mean(esc, axis=0))
    slope = float(np.polyfit(np.asarray(depths, dtype=float), log_means, 1)[0])
    eps = eps_rel * tau
    lo, hi = -2.0 * tau - eps, -tau * tilt + eps
    return EscapeDecay(slope=slope, band_lo=lo, band_hi=hi,
                       inside=bool(lo <= slope <= hi), depths=tuple(depths),
                       log_means=tuple(float(v) for v in log_means))


@dataclasses.dataclass(frozen=True)
class CriticalTrend:
    depths: tuple[int, ...]
    scaled_medians: tuple[float, ...]   # median ln psi_n / n^(1/3)
    negative_from_4: bool
    level_ratio: float                  # |last scaled median| / rho_c
    decreasing_pairs: int
    total_pairs: int


def critical_scaling(records, *, rho_c: float) -> CriticalTrend:
    """Cube-root scaling report for ln psi at the critical weight.

    Desk-scale depths leave n^(1/3) below 2.7, so this is a trend check:
    negative medians, a level within a calibrated factor of rho_c, and a
    mostly monotone decrease.
    """
    recs = _sorted_records(records)
    grid = recs[0].depths
    lp = np.log(_matrix(recs, "psi"))
    scaled = np.median(lp, axis=0) / np.asarray(grid, dtype=float) ** (1.0 / 3.0)
    from4 = [s for n, s in zip(grid, scaled) if n >= 4]
    drops = sum(b < a for a, b in zip(scaled, scaled[1:]))
    return CriticalTrend(depths=grid,
                         scaled_medians=tuple(float(s) for s in scaled),
                         negative_from_4=bool(all(s < 0 for s in from4)),
                         level_ratio=float(abs(scaled[-1]) / rho_c),
                         decreasing_pairs=int(drops), total_pairs=len(grid) - 1)


@dataclasses.dataclass(frozen=True)
class PowerSlope:
    slope: float
    depths: tuple[int, ...]
    log_means: tuple[float, ...]
    decreasing: bool


def _log_mean_slope(records, field: str, power: float) -> PowerSlope:
    recs = _sorted_records(records)
    grid = np.asarray(recs[0].depths, dtype=float)
    vals = _matrix(recs, field) ** power
    log_means = np.log(np.mean(vals, axis=0))
    slope = float(np.polyfit(np.log(grid), log_means, 1)[0])
    dec = bool(np.all(np.diff(log_means) < 0))
    return PowerSlope(slope=slope, depths=recs[0].depths,
                      log_means=tuple(float(v) for v in log_means), decreasing=dec)


def positive_recurrence_check(records, r: float) -> PowerSlope:
    """Log-log slope of E[Lambda_n^r] in n at the critical weight.

    The summability argument needs r strictly between 2/9 and 1/4; anything
    else is a configuration error, not a soft failure.
    """
    if not 2.0 / 9.0 < r < 0.25:
        raise SpecError(f"r must lie in (2/9, 1/4), got {r!r}")
    return _log_mean_slope(records, "lambda_n", r)


def hushi_moment_check(records, r: float, beta: float) -> PowerSlope:
    """Log-log slope of E[W_{n,beta}^r]; the small-moment target is -3 r beta / 2."""
    if not 0 < r < 1.0 / beta:
        raise SpecError(f"r must lie in (0, 1/beta), got r={r!r} beta={beta!r}")
    return _log_mean_slope(records, "w_n_beta", r)


# -------------------------------------------------------------------- checks
#
# Each check maps the finished records to assertion rows
# {name, value, stderr, threshold, pass}; nothing passes silently.

def _row(name, value, stderr, threshold, ok) -> dict:
    return {"name": name, "value": float(value),
            "stderr": None if stderr is None else float(stderr),
            "threshold": threshold, "pass": bool(ok)}


def _check_mean_one(spec, records, ctx, calib):
    band = calib["mean_band_se"]
    rows = []
    for row in moment_curve(records, [1.0]):
        ok = abs(row.estimate - 1.0) <= band * row.stderr
        rows.append(_row(f"mean_one[n={row.depth}]", row.estimate, row.stderr,
                         f"|value - 1| <= {band}*se", ok))
    return rows


def _check_additive_mean_one(spec, records, ctx, calib):
    if ctx.beta != 1.0:
        raise SpecError("additive_mean_one needs options.beta == 1")
    band = calib["mean_band_se"]
    w = _matrix(records, "w_n_beta")
    rows = []
    for j, n in enumerate(_sorted_records(records)[0].depths):
        est, se = _mean_se(w[:, j])
        ok = abs(est - 1.0) <= band * se
        rows.append(_row(f"additive_mean_one[n={n}]", est, se,
                         f"|value - 1| <= {band}*se", ok))
    return rows


def _check_square_green_flat(spec, records, ctx, calib):
    # E[psi^2 - g_hat] is the same at every depth; compare consecutive depths
    band = calib["mean_band_se"]
    recs = _sorted_records(records)
    v = _matrix(recs, "psi") ** 2 - _matrix(recs, "g_hat")
    rows = []
    for j in range(v.shape[1] - 1):
        a, sa = _mean_se(v[:, j])
        b, sb = _mean_se(v[:, j + 1])
        comb = math.hypot(sa, sb)
        n1, n2 = recs[0].depths[j], recs[0].depths[j + 1]
        rows.append(_row(f"square_minus_green_flat[n={n1}->{n2}]", b - a, comb,
                         f"|value| <= {band}*se", abs(b - a) <= band * comb))
    return rows


def _check_moment_symmetry(spec, records, ctx, calib):
    band = calib["mean_band_se"]
    depth = spec.options.get("symmetry_depth")
    recs = _sorted_records(records)
    j = _depth_slot(recs, depth)
    psi = _matrix(recs, "psi")[:, j]
    a, sa = _mean_se(psi**2)
    b, sb = _mean_se(psi**-1)
    comb = math.hypot(sa, sb)
    n = recs[0].depths[j]
    return [_row(f"moment_symmetry[n={n}]", abs(a - b), comb,
                 f"|E[psi^2] - E[psi^-1]| <= {band}*se", abs(a - b) <= band * comb)]


def _check_second_moment_rate(spec, records, ctx, calib):
    rel = calib["second_moment_rel_tol"]
    depth = spec.options.get("rate_depth")
    recs = _sorted_records(records)
    j = _depth_slot(recs, depth)
    n = recs[0].depths[j]
    est, se = _mean_se(_matrix(recs, "psi")[:, j] ** 2)
    value = math.log(est) / n
    stderr = se / est / n
    ok = abs(value - ctx.tau) <= rel * ctx.tau
    return [_row(f"second_moment_rate[n={n}]", value, stderr,
                 f"|value - tau| <= {rel}*tau, tau={ctx.tau:.6f}", ok)]


def _check_decay_rate(spec, records, ctx, calib):
    rel = calib["decay_rel_tol"]
    slope, se = decay_rate_estimate(records)
    ok = abs(slope + ctx.tau) <= rel * ctx.tau
    return [_row("decay_rate_median_slope", slope, se,
                 f"|slope + tau| <= {rel}*tau, tau={ctx.tau:.6f}", ok)]


def _check_decay_rate_zero(spec, records, ctx, calib):
    slope, se = decay_rate_estimate(records)
    return [_row("decay_rate_zero", slope, se, "|slope| <= 3*se",
                 abs(slope) <= 3.0 * se)]


def _check_nash_williams(spec, records, ctx, calib):
    # 1/Lambda_n <= R sample by sample; slack covers the two log/linear routes
    lam = _matrix(records, "lambda_n")
    res = _matrix(records, "resistance")
    gap = 1.0 / lam - res * (1.0 + 1e-12)
    worst = float(np.max(gap / res))
    return [_row("nash_williams_bound", worst, None, "<= 0 (rel 1e-12)", worst <= 0)]


def _check_coupling(spec, records, ctx, calib):
    ks = coupling_ks_test(records)
    level = calib["ks_level"]
    return [_row("coupling_ks_pvalue", ks.pvalue, None, f"> {level}",
                 ks.pvalue > level)]


def _check_coupling_control(spec, records, ctx, calib):
    ks = coupling_ks_test(records, corrupted=True)
    level = calib["control_level"]
    return [_row("coupling_control_pvalue", ks.pvalue, None, f"< {level}",
                 ks.pvalue < level)]


def _check_pit(spec, records, ctx, calib):
    u = pit_values(records)
    ks = pit_conditional_test(records)
    level = calib["ks_level"]
    return [
        _row("pit_ks_pvalue", ks.pvalue, None, f"> {level}", ks.pvalue > level),
        _row("pit_support", float(np.min(u)), None, "all u in (0,1)",
             0.0 < np.min(u) and np.max(u) < 1.0),
    ]


def _check_pit_control(spec, records, ctx, calib):
    ks = pit_conditional_test(records, corrupted=True)
    level = calib["control_level"]
    return [_row("pit_control_pvalue", ks.pvalue, None, f"< {level}",
                 ks.pvalue < level)]


def _check_escape_band(spec, records, ctx, calib):
    rep = escape_decay(records, tau=ctx.tau, tilt=ctx.tilt,
                       eps_rel=calib["escape_eps_rel"])
    return [_row("escape_log_slope", rep.slope, None,
                 f"[{rep.band_lo:.6f}, {rep.band_hi:.6f}]", rep.inside)]


def _check_critical_scaling(spec, records, ctx, calib):
    _, rho_c = critical_exponents(spec.law.mean)
    rep = critical_scaling(records, rho_c=rho_c)
    factor = calib["critical_factor"]
    need = rep.total_pairs - 1  # "4 of 5" on the standard six-depth grid
    worst = max(s for n, s in zip(rep.depths, rep.scaled_medians) if n >= 4)
    return [
        _row("critical_scaled_negative", worst, None, "< 0 for n >= 4",
             rep.negative_from_4),
        _row("critical_scaled_level", rep.level_ratio, None,
             f"in [1/{factor}, {factor}] of rho_c={rho_c:.6f}",
             1.0 / factor <= rep.level_ratio <= factor),
        _row("critical_scaled_trend", rep.decreasing_pairs, None,
             f">= {need} of {rep.total_pairs} pairs decreasing",
             rep.decreasing_pairs >= need),
    ]


def _check_positive_recurrence(spec, records, ctx, calib):
    r = spec.options.get("r", 0.24)
    rep = positive_recurrence_check(records, r)
    lo, hi = calib["positive_recurrence_band"]
    return [_row("lambda_moment_slope", rep.slope, None, f"[{lo}, {hi}]",
                 lo <= rep.slope <= hi)]


def _check_lambda_strictly_decreasing(spec, records, ctx, calib):
    # strict per-step decrease of E-hat[Lambda^r]; the r-th moment sits at
    # its integrability edge, so at desk scale this is noise-dominated and
    # not attached to any shipped spec
    r = spec.options.get("r", 0.24)
    rep = positive_recurrence_check(records, r)
    return [_row("lambda_moment_decreasing", float(np.max(np.diff(rep.log_means))),
                 None, "< 0 at every step", rep.decreasing)]


def _check_hushi(spec, records, ctx, calib):
    r = spec.options.get("r", 0.3)
    rep = hushi_moment_check(records, r, ctx.beta)
    target = -1.5 * r * ctx.beta
    key = f"{ctx.beta:g},{r:g}"
    band = calib["hushi_bands"].get(key)
    if band is None:
        band = [target * (1.0 + calib["hushi_rel_band"]),
                target * (1.0 - calib["hushi_rel_band"])]
    lo, hi = band
    return [
        _row("hushi_moment_slope", rep.slope, None,
             f"[{lo}, {hi}] around target {target:.3f}", lo <= rep.slope <= hi),
        _row("hushi_slope_negative", rep.slope, None, "< 0", rep.slope < 0),
    ]


def _check_cramer(spec, records, ctx, calib):
    # rank-one pivot identity g_hat = g_tilde / (1 + 2 gamma g_tilde)
    recs = _sorted_records(records)
    g_hat = _matrix(recs, "g_hat")
    g_tilde = _matrix(recs, "g_tilde")
    gamma = np.array([r.gamma for r in recs])[:, None]
    rel = np.abs(g_hat - g_tilde / (1.0 + 2.0 * gamma * g_tilde)) / g_hat
    worst = float(np.max(rel))
    return [_row("pivot_identity_rel_err", worst, None, "<= 1e-10", worst <= 1e-10)]


def _check_resistance_identity(spec, records, ctx, calib):
    recs = _sorted_records(records)
    res = _matrix(recs, "resistance")
    g_tilde = _matrix(recs, "g_tilde")
    worst = float(np.max(np.abs(res - g_tilde) / g_tilde))
    return [_row("resistance_identity_rel_err", worst, None, "<= 1e-10",
                 worst <= 1e-10)]


_CHECKS = {
    "mean_one": _check_mean_one,
    "additive_mean_one": _check_additive_mean_one,
    "square_minus_green_flat": _check_square_green_flat,
    "moment_symmetry": _check_moment_symmetry,
    "second_moment_rate": _check_second_moment_rate,
    "decay_rate": _check_decay_rate,
    "decay_rate_zero": _check_decay_rate_zero,
    "nash_williams": _check_nash_williams,
    "coupling": _check_coupling,
    "coupling_control": _check_coupling_control,
    "pit": _check_pit,
    "pit_control": _check_pit_control,
    "escape_band": _check_escape_band,
    "critical_scaling": _check_critical_scaling,
    "positive_recurrence": _check_positive_recurrence,
    "lambda_strictly_decreasing": _check_lambda_strictly_decreasing,
    "hushi": _check_hushi,
    "cramer": _check_cramer,
    "resistance_identity": _check_resistance_identity,
}


def evaluate_checks(spec: ExperimentSpec, records, ctx: RunContext | None = None) -> list[dict]:
    if ctx is None:
        ctx = _context(spec)
    calib = load_calibration()
    rows = []
    for name in spec.options.get("checks", []):
        rows.extend(_CHECKS[name](spec, records, ctx, calib))
    return rows
