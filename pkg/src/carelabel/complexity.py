"""Empirical complexity-class verification.

A subject is executed at increasing input sizes while the resource meter
records runtime and peak memory.  Each candidate growth family is fitted
to the min-max-normalized series by least squares and the family with
the smallest regularized error wins; classes within 1% of the best are
tied and the tie goes to the lowest class on the ladder, so the most
flexible family only wins when it clearly earns it.

A check passes when the selected class does not exceed the declared
worst-case class: an implementation may beat its bound, never break it.
"""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .meter import Meter, measure_peak_bytes

CLASS_LADDER = (
    "constant",
    "logarithmic",
    "linear",
    "linearithmic",
    "quadratic",
    "cubic",
    "exponential",
)

_EXP_GRID_LO = 0.1
_EXP_GRID_HI = 20.0
_EXP_GRID_STEPS = 200
_EXP_GOLDEN_ITERS = 20
_TIE_RELATIVE = 0.01
_TIE_FLOOR = 1e-12


class ProbeError(Exception):
    """Scaling experiment could not produce a usable series."""


class SubjectRefusal(Exception):
    """Subject declined to run at the requested size (e.g. memory guard)."""


def ladder_index(kind: str) -> int:
    try:
        return CLASS_LADDER.index(kind)
    except ValueError:
        raise ValueError(f"unknown complexity class {kind!r}") from None


@dataclass(frozen=True)
class ScalingSeries:
    """Measured quantity against an input-size knob."""

    points: tuple[tuple[float, float], ...]
    quantity_kind: str  # runtime_seconds | memory_bytes

    def __post_init__(self):
        if len(self.points) < 5:
            raise ValueError("scaling series needs at least 5 points")
        xs = [p[0] for p in self.points]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("sizes must be strictly increasing")
        if any(p[1] < 0 for p in self.points):
            raise ValueError("measured values must be non-negative")

    @property
    def xs(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def ys(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])


@dataclass(frozen=True)
class ClassFit:
    kind: str
    params: tuple[float, ...]
    sse: float
    regularizer: float


@dataclass(frozen=True)
class FitReport:
    fits: dict[str, ClassFit]
    selected: str
    lam: float
    declared: str | None = None
    passed: bool | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "selected": self.selected,
                "declared": self.declared,
                "passed": self.passed,
                "lambda": self.lam,
                "per_class_sse": {k: f.sse for k, f in self.fits.items()},
            },
            indent=2,
            sort_keys=True,
        )


@dataclass
class ScalingResult:
    """Output of one scaling experiment over a size range."""

    runtime: ScalingSeries
    memory: ScalingSeries
    truncated_at: float | None = None
    refusal: str | None = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["size", "runtime_s", "mem_bytes"])
        for (x, rt), (_, mem) in zip(self.runtime.points, self.memory.points):
            writer.writerow([f"{x:g}", repr(rt), f"{mem:g}"])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# measurement
# ---------------------------------------------------------------------------


def run_scaling_experiment(
    subject: Callable[[int], object],
    sizes: Sequence[int],
    meter: Meter,
    warmup: bool = True,
) -> ScalingResult:
    """Measure runtime and peak memory of ``subject`` at each size.

    Each size is executed ``meter.repeats`` times and aggregated with
    the meter's runtime estimator (peak memory takes the maximum).  The
    repeats are interleaved as full passes over the size range rather
    than run back to back, so a transient slowdown on the host taints at
    most one repeat per size instead of every repeat of one size.

    A :class:`SubjectRefusal` truncates the series before the refusing
    size; refusing before 5 usable points is a probe error.
    """
    if list(sizes) != sorted(set(sizes)):
        raise ValueError("sizes must be sorted and unique")
    if warmup:
        try:
            subject(sizes[0])
        except SubjectRefusal as exc:
            raise ProbeError(f"subject refused smallest size: {exc}") from exc
    single = Meter(meter.provider, 1, meter.clock, meter.aggregate)
    runtimes: dict[int, list[float]] = {n: [] for n in sizes}
    truncated_at = None
    refusal = None
    for _ in range(meter.repeats):
        for n in sizes:
            if truncated_at is not None and n >= truncated_at:
                continue
            try:
                m = single.run(lambda: subject(n), with_memory=False)
            except SubjectRefusal as exc:
                truncated_at = float(n)
                refusal = str(exc)
                break
            runtimes[n].append(m.runtime_seconds)
    agg = min if meter.aggregate == "min" else statistics.median
    usable = [n for n in sizes if runtimes[n]]
    # One traced pass for memory: allocations are deterministic, and
    # keeping tracing out of the timed passes keeps timings honest.
    peaks = {n: measure_peak_bytes(lambda: subject(n)) for n in usable}
    runtime_pts = [(float(n), agg(runtimes[n])) for n in usable]
    memory_pts = [(float(n), float(peaks[n])) for n in usable]
    if len(runtime_pts) < 5:
        raise ProbeError(
            f"only {len(runtime_pts)} usable sizes before refusal: {refusal}"
        )
    return ScalingResult(
        runtime=ScalingSeries(tuple(runtime_pts), "runtime_seconds"),
        memory=ScalingSeries(tuple(memory_pts), "memory_bytes"),
        truncated_at=truncated_at,
        refusal=refusal,
    )


# ---------------------------------------------------------------------------
# curve fitting
# ---------------------------------------------------------------------------


def _normalize(values: np.ndarray) -> np.ndarray:
    span = values.max() - values.min()
    if span == 0.0:
        return np.zeros_like(values)
    return (values - values.min()) / span


def _design_matrix(kind: str, x_raw: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Regressor columns for a family, each min-max normalized to [0, 1].

    Linear, quadratic, and exponential use their conventional full
    forms; the extra ladder classes are leading-term-plus-offset only
    (a*x^3 + b, a*x*log x + b, ...), so neighbouring families do not
    nest and fits discriminate by growth shape, not parameter count.

    Shape functions are taken in raw size units (where the growth laws
    live); per-column normalization is an affine map, so it changes the
    coefficients but not the achievable error, and it keeps every
    regressor on the same scale as the normalized measurements.
    """
    # Logarithms need positive sizes; shifted normalized x is the fallback.
    lx = np.log(x_raw) if x_raw.min() > 0 else np.log1p(t)
    one = np.ones_like(t)
    if kind == "constant":
        return np.column_stack([one])
    if kind == "logarithmic":
        cols = [lx]
    elif kind == "linear":
        cols = [t]
    elif kind == "linearithmic":
        cols = [x_raw * lx]
    elif kind == "quadratic":
        cols = [t**2, t]
    elif kind == "cubic":
        cols = [x_raw**3]
    else:
        raise ValueError(f"no linear design for {kind!r}")
    return np.column_stack([_normalize(c) for c in cols] + [one])


def _ridge_fit(phi: np.ndarray, y: np.ndarray, lam: float):
    if lam > 0.0:
        gram = phi.T @ phi + lam * np.eye(phi.shape[1])
        theta = np.linalg.solve(gram, phi.T @ y)
    else:
        theta, *_ = np.linalg.lstsq(phi, y, rcond=None)
    resid = y - phi @ theta
    return theta, float(resid @ resid)


def _fit_exponential(x: np.ndarray, y: np.ndarray, lam: float) -> ClassFit:
    """a*exp(b*x) + c: coarse grid over b, then golden-section refinement."""

    def objective(b: float):
        phi = np.column_stack([np.exp(b * x), np.ones_like(x)])
        theta, sse = _ridge_fit(phi, y, lam)
        reg = float(theta @ theta) + b * b
        return sse + lam * reg, theta, sse, reg

    grid = np.linspace(_EXP_GRID_LO, _EXP_GRID_HI, _EXP_GRID_STEPS)
    objs = [objective(b)[0] for b in grid]
    best = int(np.argmin(objs))
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, len(grid) - 1)]
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    b1 = hi - inv_phi * (hi - lo)
    b2 = lo + inv_phi * (hi - lo)
    f1, f2 = objective(b1)[0], objective(b2)[0]
    for _ in range(_EXP_GOLDEN_ITERS):
        if f1 <= f2:
            hi, b2, f2 = b2, b1, f1
            b1 = hi - inv_phi * (hi - lo)
            f1 = objective(b1)[0]
        else:
            lo, b1, f1 = b1, b2, f2
            b2 = lo + inv_phi * (hi - lo)
            f2 = objective(b2)[0]
    b = b1 if f1 <= f2 else b2
    _, theta, sse, reg = objective(b)
    return ClassFit(
        kind="exponential",
        params=(float(theta[0]), float(b), float(theta[1])),
        sse=sse,
        regularizer=reg,
    )


def fit_class(series: ScalingSeries, lam: float = 0.0) -> FitReport:
    """Fit every candidate family to the normalized series and select.

    Ties within 1% relative error of the best fit resolve to the lowest
    ladder class, so nested families do not win by default.
    """
    x_raw = series.xs
    t = _normalize(x_raw)
    y = _normalize(series.ys)
    fits: dict[str, ClassFit] = {}
    for kind in CLASS_LADDER:
        if kind == "exponential":
            fits[kind] = _fit_exponential(t, y, lam)
        else:
            phi = _design_matrix(kind, x_raw, t)
            theta, sse = _ridge_fit(phi, y, lam)
            fits[kind] = ClassFit(
                kind=kind,
                params=tuple(float(t) for t in theta),
                sse=sse,
                regularizer=float(theta @ theta),
            )
    objective = {
        k: f.sse + lam * f.regularizer for k, f in fits.items()
    }
    best = min(objective.values())
    cutoff = best * (1.0 + _TIE_RELATIVE) + _TIE_FLOOR
    tied = [k for k in CLASS_LADDER if objective[k] <= cutoff]
    selected = min(tied, key=ladder_index)
    return FitReport(fits=fits, selected=selected, lam=lam)


def check_class(fit: FitReport, declared: str) -> FitReport:
    """Pass iff the selected class does not exceed the declared class."""
    passed = ladder_index(fit.selected) <= ladder_index(declared)
    return replace(fit, declared=declared, passed=passed)
