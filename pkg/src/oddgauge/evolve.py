"""Method-of-lines RK4 evolution on a truncated tortoise grid."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from oddgauge.geometry import Background, DomainError, tortoise
from oddgauge.grid import GridSpec, TortoiseGrid
from oddgauge.harmonics import ModeIndex
from oddgauge.modesystem import (
    ContractError,
    GeneratorFields,
    ModeFields,
    RWFields,
    derive_P,
    derive_Q,
    gauge_residual,
    kerr_mode,
    pure_gauge_fields,
    rhs_coupled,
    rhs_gauge_generator,
    rhs_rw,
)


class System(enum.Enum):
    COUPLED = "coupled"
    RW = "rw"
    GENERATOR = "generator"


class DataKind(enum.Enum):
    MOMENTARILY_STATIC_BUMP = "momentarily_static_bump"
    PURE_GAUGE = "pure_gauge"
    KERR = "kerr"
    RW_BUMP = "rw_bump"


class InstabilityError(RuntimeError):
    """Evolution aborted; ``partial`` holds everything recorded so far."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


_TARGETS = {"h1", "h2", "p", "q", "x"}


@dataclass(frozen=True)
class InitialDataSpec:
    kind: DataKind = DataKind.MOMENTARILY_STATIC_BUMP
    center: float = 20.0
    width: float = 4.0
    amplitude: float = 1.0
    target_field: str = "h1"

    def __post_init__(self):
        object.__setattr__(self, "kind", DataKind(self.kind))
        if not self.width > 0:
            raise DomainError("width must be positive")
        if self.target_field not in _TARGETS:
            raise DomainError(f"unknown target field {self.target_field!r}")


@dataclass(frozen=True)
class EvolutionConfig:
    system: System = System.COUPLED
    mode: ModeIndex = ModeIndex(2)
    t_final: float = 100.0
    snapshot_stride: int = 0
    probe_radii: Sequence[float] = (6.0, 10.0, 20.0)
    initial_data: InitialDataSpec = InitialDataSpec()
    monitor_window: Optional[tuple] = None
    causally_clean: bool = False

    def __post_init__(self):
        object.__setattr__(self, "system", System(self.system))
        object.__setattr__(self, "probe_radii", tuple(float(r) for r in self.probe_radii))
        if self.t_final < 0:
            raise DomainError("t_final must be non-negative")
        if self.snapshot_stride < 0:
            raise DomainError("snapshot_stride must be non-negative")

    def check_causality(self, bg: Background, spec: GridSpec):
        """Raise unless boundary signals cannot reach any probe by ``t_final``."""
        for r in self.probe_radii:
            rs = tortoise(bg, r)
            room = min(spec.rstar_max - rs, rs - spec.rstar_min)
            if self.t_final > room:
                raise DomainError(
                    f"t_final = {self.t_final} exceeds the causal distance {room:.6g} of probe r = {r}"
                )


def _gaussian(grid, spec: InitialDataSpec):
    return spec.amplitude * np.exp(-(((grid.rstar - spec.center) / spec.width) ** 2))


def initial_data(spec: InitialDataSpec, grid: TortoiseGrid, bg: Background, mode: ModeIndex, system=None):
    """Initial state for ``system`` (inferred from ``spec.kind`` when omitted)."""
    kind = spec.kind
    zero = np.zeros(grid.n)
    if kind is DataKind.KERR:
        if mode.ell != 1:
            raise DomainError("kerr data requires ell = 1")
        return kerr_mode(bg, mode.m, grid).scaled(spec.amplitude)
    if kind is DataKind.RW_BUMP:
        bump = _gaussian(grid, spec)
        if spec.target_field == "p":
            q = None if mode.ell == 1 else zero
            return RWFields(mode, grid, bump, q, zero, q)
        if spec.target_field == "q" and mode.ell >= 2:
            return RWFields(mode, grid, zero, bump, zero, zero)
        raise DomainError(f"rw_bump cannot target {spec.target_field!r} at ell = {mode.ell}")
    if kind is DataKind.PURE_GAUGE:
        gen = GeneratorFields(mode, grid, _gaussian(grid, spec), zero)
        if System(system or System.COUPLED) is System.GENERATOR:
            return gen
        return pure_gauge_fields(gen, bg)
    # momentarily static bump: solve the gauge condition for d_t h0
    bump = _gaussian(grid, spec)
    r, f = grid.r, grid.lapse
    lam = mode.ell * (mode.ell + 1)
    if spec.target_field == "h1":
        h1, h2 = bump, (None if mode.ell == 1 else zero)
    elif spec.target_field == "h2" and mode.ell >= 2:
        h1, h2 = zero, bump
    else:
        raise DomainError(f"momentarily_static_bump cannot target {spec.target_field!r} at ell = {mode.ell}")
    dth0 = grid.d1(h1) + 2 * f * h1 / r
    if h2 is not None:
        dth0 = dth0 + f * (lam - 2) * h2 / r**2
    return ModeFields(mode, grid, zero, h1, h2, dth0, zero, h2)


def _rhs_for(state, bg, potential_off=False):
    if isinstance(state, ModeFields):
        out = rhs_coupled(state, bg)
    elif isinstance(state, RWFields):
        out = rhs_rw(state, bg, potential_off=potential_off)
    elif isinstance(state, GeneratorFields):
        out = (rhs_gauge_generator(state, bg),)
    else:
        raise DomainError(f"unsupported state type {type(state).__name__}")
    return np.stack([a for a in out if a is not None])


def apply_boundary(state, grid: TortoiseGrid, bg: Optional[Background] = None):
    """Overwrite the end-node rates with the outgoing conditions used by :func:`step`."""
    v = _boundary_rates(state.fields(), state.rates(), grid, type(state), bg)
    return type(state).from_arrays(state.mode, grid, state.fields(), v, state.time)


def _boundary_rates(u, v, grid, cls=None, bg=None):
    """Sommerfeld rates ``d_t u = +D1 u`` (left) and ``d_t u = -D1 u`` (right).

    Near the horizon the ``h0`` equation reduces to
    ``d_t^2 h0 = D2 h0 - a D1 h0 + a d_t h1`` with ``a = 2M/r^2``.  Its purely
    ingoing solution is ``h0 = h1``; the remainder behaves like
    ``exp(a r*/2) psi`` with ``psi`` a Klein-Gordon field, so the left condition
    for ``h0`` is imposed on ``psi``: ``d_t h0 = D1 h0 - (a/2)(h0 - h1)``.
    """
    du_l = grid.d1(u[:, :5])[:, 0]
    du_r = grid.d1(u[:, -5:])[:, -1]
    v = v.copy()
    v[:, 0] = du_l
    v[:, -1] = -du_r
    if cls is ModeFields and bg is not None:
        v[0, 0] -= bg.mass / grid.r[0] ** 2 * (u[0, 0] - u[1, 0])
    return v


def step(state, bg: Background, dt: float, potential_off: bool = False):
    """One classical RK4 step; the Sommerfeld conditions are imposed after every stage."""
    grid, mode, cls = state.grid, state.mode, type(state)
    u0 = state.fields()
    v0 = _boundary_rates(u0, state.rates(), grid, cls, bg)

    def accel(u, v):
        try:
            stage = cls.from_arrays(mode, grid, u, v)
        except ContractError as err:
            raise InstabilityError(f"{err} during the step from t = {state.time}", partial=state) from None
        return _rhs_for(stage, bg, potential_off)

    a1 = accel(u0, v0)
    u = u0 + 0.5 * dt * v0
    v2 = _boundary_rates(u, v0 + 0.5 * dt * a1, grid, cls, bg)
    a2 = accel(u, v2)
    u = u0 + 0.5 * dt * v2
    v3 = _boundary_rates(u, v0 + 0.5 * dt * a2, grid, cls, bg)
    a3 = accel(u, v3)
    u = u0 + dt * v3
    v4 = _boundary_rates(u, v0 + dt * a3, grid, cls, bg)
    a4 = accel(u, v4)
    u1 = u0 + dt / 6 * (v0 + 2 * v2 + 2 * v3 + v4)
    v1 = v0 + dt / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
    v1 = _boundary_rates(u1, v1, grid, cls, bg)
    if not (np.all(np.isfinite(u1)) and np.all(np.isfinite(v1))):
        raise InstabilityError(f"non-finite values at t = {state.time + dt}", partial=state)
    return cls.from_arrays(mode, grid, u1, v1, state.time + dt)


@dataclass
class EvolutionResult:
    """Recorded output of :func:`evolve`.

    ``probes`` maps a column name to a list with one value per step (including
    ``t = 0``); ``snapshots`` holds every ``snapshot_stride``-th state.
    """

    times: List[float] = field(default_factory=list)
    probes: Dict[str, List[float]] = field(default_factory=dict)
    snapshots: List[object] = field(default_factory=list)
    final: object = None
    aborted: bool = False

    def record(self, name, value):
        self.probes.setdefault(name, []).append(float(value))

    def series(self, name):
        return np.asarray(self.probes[name])


def _norm(arr, w):
    return math.sqrt(float(np.sum(w * arr * arr)))


def probe_values(state, bg: Background, indices: Dict[str, int], window=None):
    """Scalar monitors of a state: fields and derived scalars at the probes plus norms."""
    grid = state.grid
    w = grid.trapezoid_weights if window is None else grid.trapezoid_weights * grid.window(*window)
    out = {}
    u = state.fields()
    for label, i in indices.items():
        for name, row in zip(state.names, u):
            out[f"{name}@{label}"] = row[i]
    if isinstance(state, ModeFields):
        p = derive_P(state, bg)
        q = derive_Q(state, bg)
        for label, i in indices.items():
            out[f"p@{label}"] = p[i]
            if q is not None:
                out[f"q@{label}"] = q[i]
        c = gauge_residual(state, bg)
        out["gauge_l2"] = _norm(c, w)
        out["fields_l2"] = _norm(u, w)
    else:
        out["fields_l2"] = _norm(u, w)
    return out


def evolve(
    config: EvolutionConfig,
    grid: TortoiseGrid,
    bg: Background,
    state=None,
    observers: Sequence[Callable] = (),
    potential_off: bool = False,
    growth_limit: float = 1e6,
) -> EvolutionResult:
    """Evolve ``config.initial_data`` (or ``state``) to ``config.t_final``.

    Each observer is called as ``observer(state)`` at every recorded time and
    returns a mapping of extra scalar columns.  Raises :class:`InstabilityError`
    with the partial result attached when the field norm grows by more than
    ``growth_limit``.
    """
    if config.causally_clean:
        config.check_causality(bg, grid.spec)
    if state is None:
        state = initial_data(config.initial_data, grid, bg, config.mode, config.system)
    indices = {f"r={r:g}": grid.index_of(tortoise(bg, r)) for r in config.probe_radii}
    dt_max = grid.spec.dt
    nsteps = math.ceil(config.t_final / dt_max - 1e-12) if config.t_final > 0 else 0
    dt = config.t_final / nsteps if nsteps else 0.0
    result = EvolutionResult()
    norm0 = float(np.max(np.abs(state.fields())))

    def record(s, k):
        result.times.append(s.time)
        for name, val in probe_values(s, bg, indices, config.monitor_window).items():
            result.record(name, val)
        for obs in observers:
            for name, val in obs(s).items():
                result.record(name, val)
        if config.snapshot_stride and k % config.snapshot_stride == 0:
            result.snapshots.append(s)

    record(state, 0)
    for k in range(1, nsteps + 1):
        try:
            state = step(state, bg, dt, potential_off)
        except InstabilityError as err:
            result.final, result.aborted = err.partial, True
            raise InstabilityError(str(err), partial=result) from None
        # use the exact multiple to avoid accumulating round-off in t
        state = type(state).from_arrays(state.mode, grid, state.fields(), state.rates(), k * dt)
        record(state, k)
        if norm0 > 0 and np.max(np.abs(state.fields())) > growth_limit * norm0:
            result.final, result.aborted = state, True
            raise InstabilityError(f"field norm grew beyond {growth_limit:g}x at t = {state.time}", partial=result)
    result.final = state
    return result


def run_states(state, bg: Background, t_final: float, stride: int = 1, potential_off: bool = False):
    """Evolve a given state and return ``(times, states)`` every ``stride`` steps."""
    grid = state.grid
    nsteps = math.ceil(t_final / grid.spec.dt - 1e-12) if t_final > 0 else 0
    dt = t_final / nsteps if nsteps else 0.0
    t0 = state.time
    times, states = [state.time], [state]
    for k in range(1, nsteps + 1):
        state = step(state, bg, dt, potential_off)
        state = type(state).from_arrays(state.mode, grid, state.fields(), state.rates(), t0 + k * dt)
        if k % stride == 0 or k == nsteps:
            times.append(state.time)
            states.append(state)
    return np.asarray(times), states
