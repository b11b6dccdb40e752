"""Semi-infinite lossless line truncated at x_max, load at x = 0.

With wave speed normalized to 1 the d'Alembert split v = a' + b',
i = a' - b' turns the interior PDE into two translations: the a'
profile moves toward the load (incoming), the b' profile moves away
(outgoing). On a grid with dt = dx both translations are exact index
shifts, so the only numerical work is the n-dimensional load ODE at
the boundary,

    xi' = Gamma xi + 2 b0 w,   w(t) = a'(t),

advanced one trapezoidal (midpoint) step per dt. That scheme is not a
convenience: writing the produced outgoing sample as

    e_m = c0 xi_mid - w_m,     xi_mid = (xi_m + xi_{m+1})/2,

the load-energy increment obeys the exact discrete identity
dE = dt (w_m^2 - e_m^2) via the certificate pair (A^T O + O A = 0,
O b0 = c0^T), so total energy (line sum + load quadratic + radiated)
is conserved to roundoff, with no O(dx) bookkeeping residue.

Wave sign conventions: the line trace stores the outgoing series as
wbar = w - v0 (the transmission-line orientation); the string
scenario flips the outgoing sign (wbar_string = v0 - w) and drives
the backward model with the opposite sign. One engine, one switch.

The wbar samples are midpoint (cell) values, offset half a step from
the t grid; that is exactly what the backward reduced model needs to
reproduce the forward trajectory to machine precision. The final
trace row, which no step produced, stores the point value w - c0 xi.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .coupling import CoupledModelPair, Observable, close_loops
from .realization import LosslessRealization


class ReflectionWindowError(RuntimeError):
    """A far-end reflection re-entered the domain in reflection-free mode."""


class ContaminatedWindowError(ValueError):
    """Decay-probe window still contains incoming-wave energy."""


class DegenerateProbeError(ValueError):
    """Decay probe asked to fit a slope on an identically zero state."""


@dataclass(frozen=True)
class LineConfig:
    """Grid and run geometry for one line simulation.

    Stepping is Courant-exact (dt = dx, wave speed 1). x_max must be
    an integer number of cells. In reflection-free mode t_max is
    limited to the window 2 x_max before truncation artifacts can
    reach the load.
    """

    dx: float
    x_max: float
    t_max: float
    load: LosslessRealization
    far_end: str = "open"
    reflection_free: bool = True

    def __post_init__(self):
        if not (self.dx > 0 and np.isfinite(self.dx)):
            raise ValueError(f"dx must be positive, got {self.dx}")
        cells = self.x_max / self.dx
        if abs(cells - round(cells)) > 1e-9 * max(1.0, cells):
            raise ValueError("x_max must be an integer multiple of dx")
        if round(cells) < 2:
            raise ValueError("line needs at least two cells")
        if self.t_max <= 0:
            raise ValueError("t_max must be positive")
        if self.far_end not in ("open", "shorted"):
            raise ValueError(f"far_end must be open|shorted, got {self.far_end!r}")
        if self.reflection_free and self.t_max >= 2.0 * self.x_max:
            raise ValueError(
                f"reflection-free run needs t_max < 2 x_max = {2 * self.x_max}"
            )

    @property
    def dt(self):
        return self.dx

    @property
    def n_cells(self):
        return int(round(self.x_max / self.dx))

    @property
    def n_steps(self):
        return int(round(self.t_max / self.dt))


@dataclass
class WaveField:
    """Left- and right-moving wave profiles on the grid.

    a_prime[j] is the incoming profile at x_j (moves toward x = 0),
    b_prime[j] the outgoing one. radiated accumulates energy that has
    left through an open far end.
    """

    a_prime: np.ndarray
    b_prime: np.ndarray
    dx: float
    radiated: float = 0.0

    def __post_init__(self):
        self.a_prime = np.asarray(self.a_prime, dtype=float).copy()
        self.b_prime = np.asarray(self.b_prime, dtype=float).copy()
        if self.a_prime.shape != self.b_prime.shape or self.a_prime.ndim != 1:
            raise ValueError("wave profiles must be equal-length 1-d arrays")

    @property
    def v(self):
        return self.a_prime + self.b_prime

    @property
    def i(self):
        return self.a_prime - self.b_prime

    def energy(self):
        """Line energy dx * sum(a'^2 + b'^2) = (dx/2) sum(v^2 + i^2)."""
        return self.dx * (self.a_prime @ self.a_prime + self.b_prime @ self.b_prime)


def init_waves(v0, i0, dx) -> WaveField:
    """Split port-variable initial data into travelling profiles."""
    v0 = np.asarray(v0, dtype=float)
    i0 = np.asarray(i0, dtype=float)
    if v0.shape != i0.shape or v0.ndim != 1:
        raise ValueError("v0 and i0 must be equal-length 1-d sequences")
    if not (np.all(np.isfinite(v0)) and np.all(np.isfinite(i0))):
        raise ValueError("initial data must be finite")
    return WaveField(0.5 * (v0 + i0), 0.5 * (v0 - i0), dx)


def gaussian_field(rng, n_cells, dx, sigma=1.0) -> WaveField:
    """White-noise-like initial data: v, i i.i.d. N(0, sigma^2/dx).

    The 1/dx variance scaling keeps the wave spectrum flat with
    grid-independent level up to the grid cutoff.
    """
    scale = sigma / np.sqrt(dx)
    v0 = scale * rng.standard_normal(n_cells)
    i0 = scale * rng.standard_normal(n_cells)
    return init_waves(v0, i0, dx)


@dataclass(frozen=True, eq=False)
class BoundaryTrace:
    """Time series recorded at the coupling point.

    xi has one row per sample; w[m] = a'(t_m); wbar holds midpoint
    (cell) outgoing samples as described in the module docstring;
    energy is the conserved total (line + load + radiated).
    """

    t_grid: np.ndarray
    xi: np.ndarray
    y: np.ndarray
    w: np.ndarray
    w_bar: np.ndarray
    energy: np.ndarray
    convention: str = "line"

    def to_csv(self, fh):
        """Fixed-order CSV: t,xi_1..xi_n,y,w,wbar (17 significant digits)."""
        n = self.xi.shape[1]
        header = "t," + ",".join(f"xi_{k + 1}" for k in range(n)) + ",y,w,wbar"
        fh.write(header + "\n")
        for m in range(self.t_grid.size):
            row = [self.t_grid[m], *self.xi[m], self.y[m], self.w[m], self.w_bar[m]]
            fh.write(",".join("%.17g" % x for x in row) + "\n")


@dataclass(frozen=True, eq=False)
class BoundaryCoupler:
    """Precomputed boundary step for one load at one step size.

    Holds the Cayley (trapezoidal) update matrices of the forward
    feedback matrix and the observable used for the y column.
    """

    load: LosslessRealization
    pair: CoupledModelPair
    obs: Observable
    dt: float
    far_end: str = "open"
    reflection_free: bool = True
    convention: str = "line"
    step_matrix: np.ndarray = dc_field(init=False, repr=False)
    input_matrix: np.ndarray = dc_field(init=False, repr=False)

    def __post_init__(self):
        if self.convention not in ("line", "string"):
            raise ValueError(f"unknown convention {self.convention!r}")
        S, g = _cayley(self.pair.gamma, self.pair.input_gain, self.dt)
        object.__setattr__(self, "step_matrix", S)
        object.__setattr__(self, "input_matrix", g)

    @classmethod
    def from_config(cls, config: LineConfig, obs=None, convention="line"):
        pair = close_loops(config.load)
        if obs is None:
            obs = Observable.build(config.load, config.load.ss.c, 0.0)
        return cls(config.load, pair, obs, config.dt,
                   config.far_end, config.reflection_free, convention)


def _cayley(G, gain, h):
    """Trapezoidal update: xi+ = S xi + g u with S the Cayley map of G."""
    n = G.shape[0]
    M = np.eye(n) - 0.5 * h * G
    S = np.linalg.solve(M, np.eye(n) + 0.5 * h * G)
    g = np.linalg.solve(M, h * gain)
    return S, g


def propagate(field: WaveField, steps: int, boundary: BoundaryCoupler,
              xi0=None):
    """Run the coupled system for the given number of steps.

    Returns (final field, boundary trace). The input field is not
    modified. Interior transport is an exact shift; all arithmetic
    happens in the boundary cell and the load state.
    """
    a = field.a_prime.copy()
    b = field.b_prime.copy()
    dx = field.dx
    radiated = field.radiated
    n_cells = a.size
    if steps < 0:
        raise ValueError("steps must be nonnegative")

    load, pair, obs = boundary.load, boundary.pair, boundary.obs
    S, g = boundary.step_matrix, boundary.input_matrix
    c0 = load.ss.c
    om = load.omega
    h = boundary.dt
    sign = 1.0 if boundary.convention == "line" else -1.0

    n = load.dim
    xi = np.zeros(n) if xi0 is None else np.asarray(xi0, dtype=float).copy()
    t = np.arange(steps + 1) * h
    xis = np.empty((steps + 1, n))
    ys = np.empty(steps + 1)
    ws = np.empty(steps + 1)
    wbars = np.empty(steps + 1)
    energies = np.empty(steps + 1)

    def record(m, xi_now):
        xis[m] = xi_now
        ws[m] = a[0]
        ys[m] = obs.h @ xi_now + 2.0 * obs.d * a[0]
        energies[m] = (
            dx * (a @ a + b @ b) + 0.5 * (xi_now @ om @ xi_now) + radiated
        )

    record(0, xi)
    for m in range(steps):
        u = a[0]
        xi_next = S @ xi + g * u
        xi_mid = 0.5 * (xi + xi_next)
        v_mid = c0 @ xi_mid
        emitted = v_mid - u          # outgoing cell written at the boundary
        wbars[m] = sign * (u - v_mid)
        # outgoing tape shifts away from the load
        departing = b[-1]
        b[1:] = b[:-1]
        b[0] = emitted
        # incoming tape shifts toward the load; far end feeds the last cell
        a[:-1] = a[1:]
        if boundary.far_end == "open":
            a[-1] = 0.0
            radiated += dx * departing * departing
        else:  # shorted: v(x_max) = 0 reflects with sign flip
            if boundary.reflection_free and departing != 0.0:
                raise ReflectionWindowError(
                    f"reflection would re-enter at step {m + 1} "
                    f"(t = {(m + 1) * h:.6g})"
                )
            a[-1] = -departing
        xi = xi_next
        record(m + 1, xi)
    # final row: no produced cell, store the point value
    wbars[steps] = sign * (ws[steps] - c0 @ xi)

    out = WaveField(a, b, dx, radiated)
    trace = BoundaryTrace(t, xis, ys, ws, wbars, energies,
                          boundary.convention)
    return out, trace


def run_line(config: LineConfig, field: WaveField, obs=None,
             convention="line", xi0=None):
    """Convenience wrapper: build the coupler and run t_max worth of steps."""
    if field.a_prime.size != config.n_cells:
        raise ValueError(
            f"field has {field.a_prime.size} cells, config wants {config.n_cells}"
        )
    boundary = BoundaryCoupler.from_config(config, obs=obs, convention=convention)
    return propagate(field, config.n_steps, boundary, xi0=xi0)


# ---------------------------------------------------------------------
# reduced models
# ---------------------------------------------------------------------


def reduced_forward(pair: CoupledModelPair, obs: Observable, w, xi0, dt):
    """Integrate the stable reduced model xi' = Gamma xi + 2 b0 w.

    Uses the same trapezoidal step as the full simulation, so fed the w
    series extracted from a run it reproduces the full xi trajectory
    bit for bit: once the incoming samples are known, the line adds
    nothing to the boundary dynamics. Returns (xi, y) sampled on the
    same grid as w, with y = h xi + 2 d w.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("w must be a nonempty 1-d series")
    steps = w.size - 1
    S, g = _cayley(pair.gamma, pair.input_gain, dt)
    n = pair.dim
    xis = np.empty((steps + 1, n))
    xis[0] = np.asarray(xi0, dtype=float)
    for m in range(steps):
        xis[m + 1] = S @ xis[m] + g * w[m]
    ys = xis @ obs.h + 2.0 * obs.d * w
    return xis, ys


def reduced_backward(pair: CoupledModelPair, obs: Observable, w_bar, xiT,
                     dt, convention="line"):
    """Recover the trajectory from the outgoing record, running backward.

    The forward step rewritten against the anticausal feedback matrix
    reads xi+ = xi + dt Gb xi_mid + 2 dt b0 wbar_cell, so knowing the
    final state and the emitted cells determines every earlier state by
    an exact linear solve; integrating Gb in reverse time is the stable
    direction. w_bar must hold cell (midpoint) samples, i.e. the trace
    column as recorded; entry [steps] is never read. The string
    convention flips the drive sign. Returns (xi, y) with
    y = hbar xi + 2 d w_bar.
    """
    if convention not in ("line", "string"):
        raise ValueError(f"unknown convention {convention!r}")
    w_bar = np.asarray(w_bar, dtype=float)
    if w_bar.ndim != 1 or w_bar.size == 0:
        raise ValueError("w_bar must be a nonempty 1-d series")
    steps = w_bar.size - 1
    sign = 1.0 if convention == "line" else -1.0
    n = pair.dim
    Gb = pair.gamma_bar
    M_plus = np.eye(n) + 0.5 * dt * Gb
    M_minus = np.eye(n) - 0.5 * dt * Gb
    drive = dt * pair.input_gain      # input_gain is already 2 b0
    xis = np.empty((steps + 1, n))
    xis[steps] = np.asarray(xiT, dtype=float)
    for m in range(steps - 1, -1, -1):
        rhs = M_minus @ xis[m + 1] - sign * drive * w_bar[m]
        xis[m] = np.linalg.solve(M_plus, rhs)
    ys = xis @ obs.h_bar + 2.0 * obs.d * w_bar
    return xis, ys


# ---------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------


def decay_rate_probe(trace: BoundaryTrace, window):
    """Least-squares slope of log ||xi|| over a quiet time window.

    After the incoming wave has passed, the load state relaxes at the
    slowest rate of the stable feedback matrix; the fitted slope
    estimates it. Raises ContaminatedWindowError if incoming samples in
    the window are not negligible against the run's peak (the fit would
    measure forcing, not relaxation), and DegenerateProbeError when
    there is no state to fit.
    """
    t1, t2 = window
    if not t2 > t1:
        raise ValueError("window must satisfy t1 < t2")
    mask = (trace.t_grid >= t1) & (trace.t_grid <= t2)
    if np.count_nonzero(mask) < 3:
        raise ValueError("window contains fewer than three samples")
    w_peak = float(np.max(np.abs(trace.w))) if trace.w.size else 0.0
    w_win = float(np.max(np.abs(trace.w[mask])))
    if w_win > 1e-9 * max(w_peak, 1e-300):
        raise ContaminatedWindowError(
            f"incoming wave still active in window: max |w| = {w_win:.3g} "
            f"(run peak {w_peak:.3g})"
        )
    norms = np.linalg.norm(trace.xi[mask], axis=1)
    if not np.all(norms > 0.0):
        raise DegenerateProbeError("state norm vanishes inside the window")
    slope = np.polyfit(trace.t_grid[mask], np.log(norms), 1)[0]
    return float(slope)


def energy_drift(trace: BoundaryTrace):
    """Worst relative energy deviation per unit time over the run."""
    e = trace.energy
    e0 = e[0]
    if e0 <= 0.0:
        return 0.0
    span = trace.t_grid[-1] - trace.t_grid[0]
    if span <= 0.0:
        return 0.0
    return float(np.max(np.abs(e - e0)) / (e0 * span))
