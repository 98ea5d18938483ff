"""Fixed-step integrators: classical RK4 for the noise-free system,
Euler-Maruyama and Milstein for the noisy one.

All three schemes share the same drift/diffusion evaluations from
:mod:`jobmarket.model`, and the stochastic updates apply the matching
noise term with opposite signs, so the step-to-step change of u + v is
the pure drift balance dt*(r*u*(1 - u/K) - d*v) up to a few ulps,
independent of the Brownian increment.

Milstein adds the derivative-of-diffusion correction for the single-noise
system with b = (-sigma*u*v, +sigma*u*v):

    corr_u = 0.5 * sigma^2 * u*v*(v - u) * (dB^2 - dt) = -corr_v

obtained from (b . grad) b; the two corrections are one product negated
and cancel exactly.

Positivity policy: the exact solution stays positive but a discrete step
can overshoot. A component that lands at or below -DBL_MIN is clamped to
zero and the event is logged; magnitudes inside the subnormal range
(below ~2.2e-308, where fixed-quantum rounding can flip signs on its own)
are flushed to exact zero silently, which makes extinction absorbing.
RK4 has no noise to blame, so it only repairs negativities smaller than
1e-12 relative to the state scale and raises otherwise.

Per-trajectory time averages are accumulated trapezoidally at full step
resolution while integrating, so thinned recording never degrades them.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from enum import Enum
from typing import TextIO

import numpy as np

from .brownian import BrownianPath
from .errors import IntegrationError, ParameterError
from .model import ModelParams, State, drift

__all__ = [
    "Scheme",
    "Trajectory",
    "BatchResult",
    "step_rk4",
    "step_em",
    "step_milstein",
    "simulate",
    "run_batch",
]

# Smallest positive normal double; below this, gradual underflow arithmetic
# can produce sign noise, so compartment values are flushed to exact zero.
_TINY = sys.float_info.min

_RK4_CLAMP_REL = 1e-12


class Scheme(Enum):
    RK4 = "rk4"
    EULER_MARUYAMA = "euler_maruyama"
    MILSTEIN = "milstein"

    @property
    def is_stochastic(self) -> bool:
        return self is not Scheme.RK4

    @classmethod
    def parse(cls, name: str) -> "Scheme":
        for scheme in cls:
            if scheme.value == name:
                return scheme
        raise ParameterError(
            f"unknown scheme {name!r}; expected one of "
            f"{[s.value for s in cls]}"
        )


# ---------------------------------------------------------------------------
# shared update expressions (work elementwise on floats and on arrays)

def _em_next(u, v, dt, dB, p: ModelParams):
    du, dv = drift((u, v), p)
    noise = (p.sigma * u * v) * dB
    return u + du * dt - noise, v + dv * dt + noise


def _milstein_corr(u, v, dt, dB, p: ModelParams):
    return 0.5 * p.sigma * p.sigma * u * v * (v - u) * (dB * dB - dt)


def _milstein_next(u, v, dt, dB, p: ModelParams):
    un, vn = _em_next(u, v, dt, dB, p)
    corr = _milstein_corr(u, v, dt, dB, p)
    return un + corr, vn - corr


def _rk4_next(u, v, dt, p: ModelParams):
    k1u, k1v = drift((u, v), p)
    k2u, k2v = drift((u + 0.5 * dt * k1u, v + 0.5 * dt * k1v), p)
    k3u, k3v = drift((u + 0.5 * dt * k2u, v + 0.5 * dt * k2v), p)
    k4u, k4v = drift((u + dt * k3u, v + dt * k3v), p)
    sixth = dt / 6.0
    return (u + sixth * (k1u + 2.0 * (k2u + k3u) + k4u),
            v + sixth * (k1v + 2.0 * (k2v + k3v) + k4v))


# ---------------------------------------------------------------------------
# scalar steps

def _clamp_scalar(x: float) -> tuple[float, bool]:
    if x >= _TINY:
        return x, False
    # subnormal magnitudes (either sign) flush silently; a materially
    # negative value is a logged positivity clamp
    return 0.0, x <= -_TINY


def step_rk4(s: State, dt: float, p: ModelParams) -> State:
    """One classical fourth-order Runge-Kutta step of the noise-free system.

    Raises IntegrationError when a component goes negative beyond rounding
    scale (1e-12 of the state magnitude): that is a step-size problem, not
    something to silently repair.
    """
    if not dt > 0.0:
        raise ParameterError(f"dt must be > 0, got {dt}")
    u, v = float(s[0]), float(s[1])
    un, vn = _rk4_next(u, v, dt, p)
    scale = max(1.0, abs(u) + abs(v))
    out = []
    for x in (un, vn):
        if x < 0.0:
            if -x < _RK4_CLAMP_REL * scale:
                x = 0.0
            else:
                raise IntegrationError(
                    f"RK4 step from ({u}, {v}) with dt={dt} went negative "
                    f"({x}); reduce the step size"
                )
        out.append(x)
    return State(out[0], out[1])


def step_em(s: State, dt: float, dB: float, p: ModelParams) -> tuple[State, bool]:
    """One Euler-Maruyama step; returns (new state, clamped flag)."""
    if not dt > 0.0:
        raise ParameterError(f"dt must be > 0, got {dt}")
    un, vn = _em_next(float(s[0]), float(s[1]), dt, dB, p)
    un, cu = _clamp_scalar(un)
    vn, cv = _clamp_scalar(vn)
    return State(un, vn), cu or cv


def step_milstein(s: State, dt: float, dB: float, p: ModelParams) -> tuple[State, bool]:
    """One Milstein step; returns (new state, clamped flag).

    Coincides with step_em when dB^2 == dt or u == v, where the
    correction factor vanishes.
    """
    if not dt > 0.0:
        raise ParameterError(f"dt must be > 0, got {dt}")
    un, vn = _milstein_next(float(s[0]), float(s[1]), dt, dB, p)
    un, cu = _clamp_scalar(un)
    vn, cv = _clamp_scalar(vn)
    return State(un, vn), cu or cv


# ---------------------------------------------------------------------------
# trajectories

@dataclass
class Trajectory:
    """A recorded solution path on a uniform time grid.

    times/u/v/clamped are aligned arrays; ``clamped[i]`` means at least one
    positivity clamp happened in the steps since the previous recorded row.
    clamp_count and clamp_times log every event at full step resolution,
    independent of the recording stride, as do the trapezoidal integrals
    integral_u/integral_v (populated by simulate, None on hand-built
    trajectories).
    """

    times: np.ndarray
    u: np.ndarray
    v: np.ndarray
    clamped: np.ndarray
    scheme: Scheme | None = None
    params: ModelParams | None = None
    clamp_count: int = 0
    clamp_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    seed: int | None = None
    path_index: int | None = None
    integral_u: float | None = None
    integral_v: float | None = None
    max_total: float | None = None

    @classmethod
    def from_samples(cls, times, u, v) -> "Trajectory":
        """Wrap plain sampled data (no clamp log, no accumulators)."""
        times = np.asarray(times, dtype=float)
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if not (len(times) == len(u) == len(v)):
            raise ParameterError("times, u, v must have equal length")
        return cls(times=times, u=u, v=v,
                   clamped=np.zeros(len(times), dtype=bool))

    @property
    def n_points(self) -> int:
        return len(self.times)

    @property
    def horizon(self) -> float:
        return float(self.times[-1] - self.times[0])

    def state(self, i: int) -> State:
        return State(float(self.u[i]), float(self.v[i]))

    @property
    def terminal(self) -> State:
        return self.state(-1)

    def to_csv(self, fp: TextIO) -> None:
        """Write rows t,u,v,clamped with round-trip decimal formatting."""
        fp.write("t,u,v,clamped\n")
        flags = self.clamped
        for i in range(self.n_points):
            fp.write(f"{float(self.times[i])!r},{float(self.u[i])!r},"
                     f"{float(self.v[i])!r},{1 if flags[i] else 0}\n")


def _resolve_steps(horizon: float, dt: float) -> int:
    if not (isinstance(dt, (int, float)) and dt > 0.0 and np.isfinite(dt)):
        raise ParameterError(f"dt must be a positive finite number, got {dt!r}")
    if not (isinstance(horizon, (int, float)) and horizon > 0.0 and np.isfinite(horizon)):
        raise ParameterError(f"horizon must be a positive finite number, got {horizon!r}")
    n_steps = round(horizon / dt)
    if n_steps < 1 or abs(n_steps * dt - horizon) > 1e-9 * horizon:
        raise ParameterError(
            f"horizon {horizon} is not a positive integer multiple of dt {dt}"
        )
    return n_steps


def _check_stride(n_steps: int, record_stride: int) -> None:
    if (isinstance(record_stride, bool) or not isinstance(record_stride, int)
            or record_stride < 1):
        raise ParameterError(
            f"record_stride must be a positive integer, got {record_stride!r}")
    if n_steps % record_stride != 0:
        raise ParameterError(
            f"record_stride {record_stride} must divide the step count {n_steps} "
            "so the recorded grid keeps a constant spacing"
        )


def simulate(scheme: Scheme, p: ModelParams, x0: State, horizon: float,
             dt: float, path: BrownianPath | None = None,
             record_stride: int = 1) -> Trajectory:
    """Advance x0 over [0, horizon] and record every record_stride-th state.

    Stochastic schemes require ``path`` covering at least horizon/dt steps
    at the same dt; RK4 takes no driving path. Time averages are
    accumulated at full resolution regardless of the recording stride.
    """
    n_steps = _resolve_steps(horizon, dt)
    _check_stride(n_steps, record_stride)
    u, v = float(x0[0]), float(x0[1])
    if not (np.isfinite(u) and np.isfinite(v)) or u < 0.0 or v < 0.0:
        raise ParameterError(f"x0 must be finite and nonnegative, got {x0!r}")

    if scheme.is_stochastic:
        if path is None:
            raise ParameterError(f"scheme {scheme.value} requires a Brownian path")
        if abs(path.dt - dt) > 1e-12 * dt:
            raise ParameterError(
                f"path dt {path.dt} does not match requested dt {dt}")
        if path.n_steps < n_steps:
            raise ParameterError(
                f"path covers {path.n_steps} steps, {n_steps} needed")
        dW = path.increments
    else:
        if path is not None:
            raise ParameterError("deterministic RK4 takes no driving path")
        dW = None

    n_rec = n_steps // record_stride + 1
    times = np.empty(n_rec)
    rec_u = np.empty(n_rec)
    rec_v = np.empty(n_rec)
    rec_clamped = np.zeros(n_rec, dtype=bool)
    times[0], rec_u[0], rec_v[0] = 0.0, u, v

    integral_u = 0.0
    integral_v = 0.0
    max_total = u + v
    clamp_times: list[float] = []
    window_clamped = False
    row = 1
    for k in range(1, n_steps + 1):
        if scheme is Scheme.RK4:
            try:
                un, vn = step_rk4(State(u, v), dt, p)
            except IntegrationError as exc:
                raise IntegrationError(f"at t={(k - 1) * dt}: {exc}") from None
            clamped = False
        else:
            dB = float(dW[k - 1])
            if scheme is Scheme.EULER_MARUYAMA:
                (un, vn), clamped = step_em(State(u, v), dt, dB, p)
            else:
                (un, vn), clamped = step_milstein(State(u, v), dt, dB, p)
        if clamped:
            clamp_times.append(k * dt)
            window_clamped = True
        integral_u += 0.5 * (u + un) * dt
        integral_v += 0.5 * (v + vn) * dt
        u, v = un, vn
        total = u + v
        if total > max_total:
            max_total = total
        if k % record_stride == 0:
            times[row] = k * dt
            rec_u[row] = u
            rec_v[row] = v
            rec_clamped[row] = window_clamped
            window_clamped = False
            row += 1

    return Trajectory(
        times=times, u=rec_u, v=rec_v, clamped=rec_clamped,
        scheme=scheme, params=p,
        clamp_count=len(clamp_times), clamp_times=np.array(clamp_times),
        seed=path.seed if path is not None else None,
        path_index=path.path_index if path is not None else None,
        integral_u=integral_u, integral_v=integral_v, max_total=max_total,
    )


# ---------------------------------------------------------------------------
# vectorised multi-path engine

@dataclass
class BatchResult:
    """Per-path outputs of a vectorised run on a shared time grid.

    U and V have shape (n_paths, n_recorded); each path's column sequence
    is bit-identical to a scalar simulate() of that path alone.
    """

    times: np.ndarray
    U: np.ndarray
    V: np.ndarray
    clamped: np.ndarray          # (n_paths, n_recorded) bool
    clamp_counts: np.ndarray     # (n_paths,) int
    integral_u: np.ndarray       # (n_paths,) full-resolution trapezoids
    integral_v: np.ndarray
    max_total: np.ndarray        # (n_paths,) running max of u + v
    scheme: Scheme | None = None
    params: ModelParams | None = None

    @property
    def n_paths(self) -> int:
        return self.U.shape[0]

    @property
    def terminal_u(self) -> np.ndarray:
        return self.U[:, -1]

    @property
    def terminal_v(self) -> np.ndarray:
        return self.V[:, -1]

    def time_average_v(self) -> np.ndarray:
        return self.integral_v / float(self.times[-1])

    def time_average_u(self) -> np.ndarray:
        return self.integral_u / float(self.times[-1])


def _clamp_array(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    events = x <= -_TINY
    return np.where(x >= _TINY, x, 0.0), events


def run_batch(scheme: Scheme, p: ModelParams, u0: np.ndarray, v0: np.ndarray,
              horizon: float, dt: float, dW: np.ndarray | None,
              record_stride: int = 1) -> BatchResult:
    """Advance many paths at once; path i uses increment row dW[i].

    Aggregation-free: every per-path quantity is computed independently and
    elementwise, so results do not depend on which paths share a batch.
    """
    n_steps = _resolve_steps(horizon, dt)
    _check_stride(n_steps, record_stride)
    u = np.asarray(u0, dtype=float).copy()
    v = np.asarray(v0, dtype=float).copy()
    if u.shape != v.shape or u.ndim != 1:
        raise ParameterError("u0 and v0 must be 1-D arrays of equal length")
    if np.any(u < 0.0) or np.any(v < 0.0) or not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise ParameterError("initial states must be finite and nonnegative")
    n_paths = len(u)

    if scheme.is_stochastic:
        if dW is None or dW.shape[0] != n_paths or dW.shape[1] < n_steps:
            raise ParameterError(
                f"dW must have shape ({n_paths}, >= {n_steps})")
    elif dW is not None:
        raise ParameterError("deterministic RK4 takes no increments")

    n_rec = n_steps // record_stride + 1
    times = np.empty(n_rec)
    U = np.empty((n_paths, n_rec))
    V = np.empty((n_paths, n_rec))
    clamped_rows = np.zeros((n_paths, n_rec), dtype=bool)
    times[0] = 0.0
    U[:, 0] = u
    V[:, 0] = v

    integral_u = np.zeros(n_paths)
    integral_v = np.zeros(n_paths)
    max_total = u + v
    clamp_counts = np.zeros(n_paths, dtype=np.int64)
    window_clamped = np.zeros(n_paths, dtype=bool)
    row = 1
    for k in range(1, n_steps + 1):
        if scheme is Scheme.RK4:
            un, vn = _rk4_next(u, v, dt, p)
            scale = np.maximum(1.0, np.abs(u) + np.abs(v))
            for arr in (un, vn):
                bad = arr < -_RK4_CLAMP_REL * scale
                if np.any(bad):
                    i = int(np.argmax(bad))
                    raise IntegrationError(
                        f"path {i}: RK4 went negative at t={(k - 1) * dt} "
                        f"(value {arr[i]}); reduce the step size")
            un = np.where(un < 0.0, 0.0, un)
            vn = np.where(vn < 0.0, 0.0, vn)
            events = np.zeros(n_paths, dtype=bool)
        else:
            dB = dW[:, k - 1]
            if scheme is Scheme.EULER_MARUYAMA:
                un, vn = _em_next(u, v, dt, dB, p)
            else:
                un, vn = _milstein_next(u, v, dt, dB, p)
            un, ev_u = _clamp_array(un)
            vn, ev_v = _clamp_array(vn)
            events = ev_u | ev_v
        clamp_counts += events
        window_clamped |= events
        integral_u += 0.5 * (u + un) * dt
        integral_v += 0.5 * (v + vn) * dt
        u, v = un, vn
        np.maximum(max_total, u + v, out=max_total)
        if k % record_stride == 0:
            times[row] = k * dt
            U[:, row] = u
            V[:, row] = v
            clamped_rows[:, row] = window_clamped
            window_clamped[:] = False
            row += 1

    return BatchResult(times=times, U=U, V=V, clamped=clamped_rows,
                       clamp_counts=clamp_counts,
                       integral_u=integral_u, integral_v=integral_v,
                       max_total=max_total, scheme=scheme, params=p)
