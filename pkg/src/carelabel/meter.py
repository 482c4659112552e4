"""Wall-clock, peak-memory, and energy measurement for workloads.

Runtime is the median over repeats; peak memory is the maximum
allocation high-water mark (tracemalloc) observed during any repeat.
Energy comes from the configured provider:

* ``constant-power`` -- wattage times measured runtime (desk-scale
  default; wattage configurable, 65 W if unspecified),
* ``os-counter`` -- RAPL energy counter delta; raises a capability
  error when the counter is unavailable, never silently estimated,
* ``mock`` -- fixed joules-per-second rate times runtime, for tests.

The provider id is recorded in every measurement so downstream labels
always disclose how energy was obtained.  Measurement sessions assume
exclusivity: nothing else should run a measured workload concurrently.
"""

from __future__ import annotations

import gc
import platform
import statistics
import time
import tracemalloc
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

DEFAULT_POWER_WATTS = 65.0
_RAPL_DIR = Path("/sys/class/powercap/intel-rapl:0")


class CapabilityError(Exception):
    """Requested measurement capability is unavailable on this host."""


@dataclass(frozen=True)
class EnvironmentInfo:
    cpu: str
    os: str
    provider: str

    def as_dict(self) -> dict[str, str]:
        return {"cpu": self.cpu, "os": self.os, "provider": self.provider}


@dataclass(frozen=True)
class EnergyProvider:
    """Energy model: constant-power, os-counter, or mock."""

    kind: str
    watts: float = DEFAULT_POWER_WATTS
    joules_per_second: float = 0.0

    _KINDS = ("constant-power", "os-counter", "mock")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown energy provider {self.kind!r}")
        if self.kind == "constant-power" and self.watts <= 0:
            raise ValueError("constant-power wattage must be positive")

    @property
    def label(self) -> str:
        if self.kind == "constant-power":
            return f"constant-power-{self.watts:g}W"
        if self.kind == "mock":
            return f"mock-{self.joules_per_second:g}Jps"
        return "os-counter-rapl"


@dataclass(frozen=True)
class Measurement:
    runtime_seconds: float
    peak_memory_bytes: int
    energy_joules: float
    environment: EnvironmentInfo

    def as_dict(self) -> dict:
        return {
            "runtime_s": self.runtime_seconds,
            "peak_mem_bytes": self.peak_memory_bytes,
            "energy_j": self.energy_joules,
            "provider": self.environment.provider,
            "environment": self.environment.as_dict(),
        }


def _cpu_model() -> str:
    try:
        for line in Path("/proc/cpuinfo").read_text().splitlines():
            if line.lower().startswith("model name"):
                return line.split(":", 1)[1].strip()
    except OSError:
        pass
    return platform.processor() or platform.machine() or "unknown-cpu"


def environment_info(provider: EnergyProvider) -> EnvironmentInfo:
    return EnvironmentInfo(
        cpu=_cpu_model(), os=platform.platform(), provider=provider.label
    )


def _read_rapl_uj() -> int:
    path = _RAPL_DIR / "energy_uj"
    if not path.exists():
        raise CapabilityError(
            "os-counter energy requested but no RAPL counter is readable "
            f"at {path}"
        )
    try:
        return int(path.read_text().strip())
    except (OSError, ValueError) as exc:
        raise CapabilityError(f"RAPL counter unreadable: {exc}") from exc


def _rapl_range_uj() -> int:
    try:
        return int((_RAPL_DIR / "max_energy_range_uj").read_text().strip())
    except (OSError, ValueError):
        return 0


def measure_peak_bytes(workload: Callable[[], object]) -> int:
    """Allocation high-water mark of one untimed workload execution."""
    started_here = not tracemalloc.is_tracing()
    if started_here:
        tracemalloc.start()
    try:
        baseline, _ = tracemalloc.get_traced_memory()
        tracemalloc.reset_peak()
        workload()
        _, high_water = tracemalloc.get_traced_memory()
    finally:
        if started_here:
            tracemalloc.stop()
    return max(high_water - baseline, 0)


def measure(
    workload: Callable[[], object],
    provider: EnergyProvider,
    repeats: int = 3,
    clock: Callable[[], float] = time.perf_counter,
    aggregate: str = "median",
    with_memory: bool = True,
) -> Measurement:
    """Run the workload ``repeats`` times and aggregate the metrics.

    ``aggregate`` picks the runtime estimator: ``median`` (default) or
    ``min``.  Minimum-of-repeats is the robust choice on noisy shared
    hosts where scheduler interference only ever inflates wall time.

    Timed repeats run with the garbage collector paused and without
    allocation tracing; peak memory comes from one separate traced
    execution afterwards, so tracing overhead never distorts timings.
    """
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    if aggregate not in ("median", "min"):
        raise ValueError(f"unknown aggregate {aggregate!r}")
    runtimes = []
    counter_deltas = []
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        for _ in range(repeats):
            rapl_before = (
                _read_rapl_uj() if provider.kind == "os-counter" else 0
            )
            t0 = clock()
            workload()
            elapsed = clock() - t0
            if provider.kind == "os-counter":
                delta = _read_rapl_uj() - rapl_before
                if delta < 0:  # counter wrap
                    delta += _rapl_range_uj()
                counter_deltas.append(delta / 1e6)
            runtimes.append(elapsed)
    finally:
        if gc_was_enabled:
            gc.enable()
    peak = measure_peak_bytes(workload) if with_memory else 0
    agg = statistics.median if aggregate == "median" else min
    runtime = agg(runtimes)
    if provider.kind == "constant-power":
        energy = provider.watts * runtime
    elif provider.kind == "mock":
        energy = provider.joules_per_second * runtime
    else:
        energy = agg(counter_deltas)
    return Measurement(
        runtime_seconds=runtime,
        peak_memory_bytes=peak,
        energy_joules=energy,
        environment=environment_info(provider),
    )


def per_sample(measurement: Measurement, n_samples: int) -> Measurement:
    """Scale runtime and energy to per-sample units; peak memory stays."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    return Measurement(
        runtime_seconds=measurement.runtime_seconds / n_samples,
        peak_memory_bytes=measurement.peak_memory_bytes,
        energy_joules=measurement.energy_joules / n_samples,
        environment=measurement.environment,
    )


@dataclass
class Meter:
    """Reusable measurement handle: provider, repeats, clock, estimator."""

    provider: EnergyProvider = field(
        default_factory=lambda: EnergyProvider("constant-power")
    )
    repeats: int = 3
    clock: Callable[[], float] = time.perf_counter
    aggregate: str = "median"

    def run(
        self, workload: Callable[[], object], with_memory: bool = True
    ) -> Measurement:
        return measure(
            workload,
            self.provider,
            self.repeats,
            self.clock,
            self.aggregate,
            with_memory,
        )


def spin(seconds: float, clock: Callable[[], float] = time.perf_counter) -> int:
    """Busy-loop for roughly the given duration; returns loop count."""
    count = 0
    t0 = clock()
    while clock() - t0 < seconds:
        count += 1
    return count
