"""Grid evaluation engines for delay scans.

Signals have the form ``Tr{O G(t_n) P_n ... G(t_1) P_1 rho0}`` where each
``P_k`` is either one pathway term (direct engine) or the full pulse
superoperator at bound phases (phase-cycling engine).  Scans over uniform
delay grids reuse the generator's spectral decomposition:

* a scanned axis is expanded in the eigenbasis by one outer product,
* the readout is pulled backwards through the trailing pulses, so the last
  scanned axis costs a single matrix product instead of a propagation per
  grid point.

Pathways and phase tuples factor over grid points, so the per-pathway result
matrices are accumulated before the final contraction.  A stepping fallback
covers generators whose eigendecomposition is too ill-conditioned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .liouville import SuperOperator, vec
from .pathways import (
    IDENTITY,
    LOWER,
    RAISE,
    PhaseSignature,
    enumerate_pathways,
    phase_grid_lengths,
    phase_tuples,
)


@dataclass(frozen=True)
class FixedDelay:
    value: float

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("delays must be nonnegative")


@dataclass(frozen=True)
class ScanDelay:
    start: float
    stop: float
    points: int

    def __post_init__(self):
        if self.points < 2:
            raise ValueError("a scanned delay needs at least 2 points")
        if self.start < 0 or self.stop <= self.start:
            raise ValueError("scan range must satisfy 0 <= start < stop")

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.points)

    @property
    def step(self) -> float:
        return (self.stop - self.start) / (self.points - 1)


# ---------------------------------------------------------------------------
# pulse appliers (forward on state stacks, adjoint on the observable)
# ---------------------------------------------------------------------------


class TermApplier:
    """One expansion product ``X -> L X R`` (either factor may be absent)."""

    def __init__(self, term, a: np.ndarray):
        adag = a.conj().T
        self.left = {IDENTITY: None, RAISE: adag, LOWER: a}[term.ket]
        self.right = {IDENTITY: None, RAISE: adag, LOWER: a}[term.bra]

    def forward(self, stack):
        if self.left is not None:
            stack = self.left @ stack
        if self.right is not None:
            stack = stack @ self.right
        return stack

    def adjoint(self, y):
        if self.left is not None:
            y = self.left.conj().T @ y
        if self.right is not None:
            y = y @ self.right.conj().T
        return y


class FullPulseApplier:
    """Exact pulse superoperator ``X -> V X V^dag`` at a bound phase."""

    def __init__(self, vmat: np.ndarray):
        self.v = vmat
        self.vdag = vmat.conj().T

    def forward(self, stack):
        return self.v @ stack @ self.vdag

    def adjoint(self, y):
        return self.vdag @ y @ self.v


class LinearizedPulseApplier:
    """First-order displacement: ``X -> a^2 X + a (B X + X B^dag)``."""

    def __init__(self, alpha: float, b: np.ndarray):
        self.alpha = alpha
        self.b = b
        self.bdag = b.conj().T

    def forward(self, stack):
        return self.alpha**2 * stack + self.alpha * (self.b @ stack
                                                     + stack @ self.bdag)

    def adjoint(self, y):
        return self.alpha**2 * y + self.alpha * (self.bdag @ y + y @ self.b)


def pulse_applier(v, layout, phase: float):
    a = v.lowering_matrix(layout)
    b = (v.beta * np.exp(1j * phase) * a.conj().T
         + v.gamma * np.exp(-1j * phase) * a)
    if v.linearized:
        return LinearizedPulseApplier(v.alpha, b)
    return FullPulseApplier(v.alpha * np.eye(layout.dim) + b)


# ---------------------------------------------------------------------------
# evolution workspace
# ---------------------------------------------------------------------------


class Workspace:
    """Evolution helpers bound to one generator's spectral data."""

    def __init__(self, generator: SuperOperator, force_stepping: bool = False):
        self.generator = generator
        self.dim = generator.dim
        spec = generator.spectral()
        self.stepping = force_stepping or spec.method == "expm"
        self.method = "expm" if self.stepping else spec.method
        if not self.stepping:
            self.w = spec.w
            self.V = spec.V
            self.Vinv = spec.Vinv

    # stacks are (m, D, D); rows are (m, D*D) column-stacked vectorizations
    @staticmethod
    def _rows(stack):
        m, d, _ = stack.shape
        return stack.transpose(0, 2, 1).reshape(m, d * d)

    @staticmethod
    def _stack(rows, d):
        return rows.reshape(-1, d, d).transpose(0, 2, 1)

    def evolve_stack(self, stack, t: float):
        """Evolve every state in the stack for a fixed time."""
        if t == 0:
            return stack
        d = self.dim
        if self.stepping:
            g = self.generator.propagator_matrix(t)
            return self._stack(self._rows(stack) @ g.T, d)
        rows = self._rows(stack) @ self.Vinv.T
        rows *= np.exp(self.w * t)[None, :]
        return self._stack(rows @ self.V.T, d)

    def expand_axis(self, state, tvals: np.ndarray):
        """All evolutions ``G(t) state`` for the axis values, as a stack."""
        d = self.dim
        x = vec(state)
        if self.stepping:
            out = np.empty((len(tvals), d * d), dtype=complex)
            steps = np.diff(tvals)
            if len(steps) and not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
                for j, t in enumerate(tvals):
                    out[j] = self.generator.propagator_matrix(t) @ x
            else:
                cur = self.generator.propagator_matrix(tvals[0]) @ x
                g = self.generator.propagator_matrix(steps[0]) if len(steps) else None
                out[0] = cur
                for j in range(1, len(tvals)):
                    cur = g @ cur
                    out[j] = cur
            return self._stack(out, d)
        e = self.Vinv @ x
        rows = np.exp(np.outer(tvals, self.w)) * e[None, :]
        return self._stack(rows @ self.V.T, d)

    def adjoint_evolve(self, y, t: float):
        """Pull the readout backwards: ``y -> G(t)^dag y``."""
        if t == 0:
            return y
        d = self.dim
        if self.stepping:
            g = self.generator.propagator_matrix(t)
            return (g.conj().T @ vec(y)).reshape((d, d), order="F")
        q = self.V.conj().T @ vec(y)
        q *= np.exp(self.w.conj() * t)
        return (self.Vinv.conj().T @ q).reshape((d, d), order="F")

    def last_axis_signals(self, stack, y, tvals: np.ndarray):
        """``signals[i, j] = Tr{y^dag G(t_j) stack_i}`` in one contraction."""
        if self.stepping:
            d = self.dim
            rows = self._rows(stack)
            w = np.empty((len(tvals), d * d), dtype=complex)
            steps = np.diff(tvals)
            uniform = not len(steps) or np.allclose(steps, steps[0], rtol=1e-9, atol=0)
            yv = vec(y)
            if uniform:
                cur = self.generator.propagator_matrix(tvals[0]).conj().T @ yv
                g = (self.generator.propagator_matrix(steps[0]).conj().T
                     if len(steps) else None)
                w[0] = cur
                for j in range(1, len(tvals)):
                    cur = g @ cur
                    w[j] = cur
            else:
                for j, t in enumerate(tvals):
                    w[j] = self.generator.propagator_matrix(t).conj().T @ yv
            return rows @ w.conj().T
        q = self.V.conj().T @ vec(y)
        rows = self._rows(stack) @ self.Vinv.T
        r = rows * q.conj()[None, :]
        return r @ np.exp(np.outer(self.w, tvals))


# ---------------------------------------------------------------------------
# the scan kernel
# ---------------------------------------------------------------------------


def scan_chain(ws: Workspace, appliers, delays, rho0: np.ndarray,
               obs: np.ndarray) -> np.ndarray:
    """Evaluate one operator chain over all scanned axes.

    Returns a complex array whose shape lists the scanned axes in delay
    order (scalar array when every delay is fixed).
    """
    delays = list(delays)
    if len(appliers) != len(delays):
        raise ValueError("need exactly one delay per pulse")
    scan_idx = [i for i, d in enumerate(delays) if isinstance(d, ScanDelay)]

    if len(scan_idx) > 2:
        first = scan_idx[0]
        vals = delays[first].values
        slices = []
        for t in vals:
            sub = list(delays)
            sub[first] = FixedDelay(float(t))
            slices.append(scan_chain(ws, appliers, sub, rho0, obs))
        return np.stack(slices, axis=0)

    if not scan_idx:
        stack = rho0[None, :, :].astype(complex)
        for app, d in zip(appliers, delays):
            stack = app.forward(stack)
            stack = ws.evolve_stack(stack, d.value)
        return np.einsum("ij,nji->n", obs, stack)[0]

    b = scan_idx[-1]
    a = scan_idx[0] if len(scan_idx) == 2 else None
    n = len(delays)

    stack = rho0[None, :, :].astype(complex)
    prefix_end = a if a is not None else b
    for k in range(prefix_end):
        stack = appliers[k].forward(stack)
        stack = ws.evolve_stack(stack, delays[k].value)
    if a is not None:
        stack = appliers[a].forward(stack)
        stack = ws.expand_axis(stack[0], delays[a].values)
        for k in range(a + 1, b):
            stack = appliers[k].forward(stack)
            stack = ws.evolve_stack(stack, delays[k].value)
    stack = appliers[b].forward(stack)

    y = np.asarray(obs, dtype=complex)
    for k in range(n - 1, b, -1):
        y = ws.adjoint_evolve(y, delays[k].value)
        y = appliers[k].adjoint(y)

    signals = ws.last_axis_signals(stack, y, delays[b].values)
    if a is None:
        return signals[0]
    return signals


def direct_signal_grid(generator: SuperOperator, interactions,
                       signature: PhaseSignature, delays, initial, observable,
                       prune: str = "initial",
                       force_stepping: bool = False) -> np.ndarray:
    """Signed pathway sum over the delay grid (direct engine)."""
    ws = Workspace(generator, force_stepping)
    layout = generator.layout
    pathways = enumerate_pathways(interactions, signature, initial,
                                  observable, layout=layout, prune=prune)
    amats = [v.lowering_matrix(layout) for v in interactions]
    shape = tuple(d.points for d in delays if isinstance(d, ScanDelay))
    total = np.zeros(shape, dtype=complex)
    obs = observable.operator.matrix
    for p in pathways:
        appliers = [TermApplier(t, a) for t, a in zip(p.terms, amats)]
        total = total + p.amplitude * scan_chain(ws, appliers, delays,
                                                 initial.matrix, obs)
    return total


def cycled_signal_grid(generator: SuperOperator, interactions,
                       signature: PhaseSignature, delays, initial, observable,
                       lengths=None, force_stepping: bool = False,
                       parallel_map=map) -> np.ndarray:
    """Phase-cycling engine: full signal on the phase grid, inverse DFT.

    Every phase variable is cycled on its own grid of ``2*m_max + 1`` points
    (or more), which keeps the extracted component exact even for models
    without a global excitation-number symmetry.
    """
    ws = Workspace(generator, force_stepping)
    layout = generator.layout
    interactions = tuple(interactions)
    grid = phase_grid_lengths(interactions, signature, lengths)
    obs = observable.operator.matrix
    variables = signature.variables

    def one_tuple(item):
        phases, weight = item
        appliers = [pulse_applier(v, layout, phases[v.phase_var])
                    for v in interactions]
        factor = np.exp(-1j * sum(signature[v] * phases[v] for v in variables))
        return weight * factor * scan_chain(ws, appliers, delays,
                                            initial.matrix, obs)

    shape = tuple(d.points for d in delays if isinstance(d, ScanDelay))
    total = np.zeros(shape, dtype=complex)
    for contribution in parallel_map(one_tuple, list(phase_tuples(grid))):
        total = total + contribution
    return total
