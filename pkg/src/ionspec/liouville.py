"""Dense operator and superoperator algebra on truncated product bases.

Conventions
-----------
* Vectorization is column-stacking: ``vec(X)[i + D*j] = X[i, j]``, so the
  superoperator of ``X -> A X B`` is ``kron(B.T, A)``.
* Time evolution uses the single convention ``G(t) = exp(L t)`` with
  ``L rho = -i[H, rho] + sum_k r_k (J_k rho J_k^dag - {J_k^dag J_k, rho}/2)``.
* Propagation goes through a spectral decomposition of the generator when it
  is well conditioned (unitarily derived from ``eigh`` for closed systems),
  with a Pade ``expm`` fallback otherwise.  The choice is recorded on the
  generator and surfaces in run metadata.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .spaces import LayoutError, SpaceLayout, destroy

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-9
EIG_COND_LIMIT = 1e8
ZERO_EIGENVALUE_TOL = 1e-10


class NumericalError(RuntimeError):
    """Raised when a numerical procedure fails to meet its contract."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=complex)
    a.flags.writeable = False
    return a


def vec(mat: np.ndarray) -> np.ndarray:
    """Column-stacked vectorization."""
    return np.asarray(mat).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: int) -> np.ndarray:
    return np.asarray(v).reshape((dim, dim), order="F")


class Operator:
    """Dense operator on a layout's truncated basis."""

    def __init__(self, layout: SpaceLayout, matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.shape != (layout.dim, layout.dim):
            raise LayoutError(
                f"matrix shape {matrix.shape} does not match basis size {layout.dim}"
            )
        self.layout = layout
        self.matrix = _readonly(matrix)

    @property
    def dim(self) -> int:
        return self.layout.dim

    def dagger(self) -> "Operator":
        return Operator(self.layout, self.matrix.conj().T)

    def is_hermitian(self, tol: float = HERMITICITY_TOL) -> bool:
        m = self.matrix
        scale = np.linalg.norm(m) or 1.0
        return np.linalg.norm(m - m.conj().T) <= tol * scale

    def __matmul__(self, other: "Operator") -> "Operator":
        self._check_layout(other)
        return Operator(self.layout, self.matrix @ other.matrix)

    def __add__(self, other: "Operator") -> "Operator":
        self._check_layout(other)
        return Operator(self.layout, self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        self._check_layout(other)
        return Operator(self.layout, self.matrix - other.matrix)

    def __mul__(self, scalar) -> "Operator":
        return Operator(self.layout, self.matrix * scalar)

    __rmul__ = __mul__

    def _check_layout(self, other):
        if other.layout is not self.layout and other.layout != self.layout:
            raise LayoutError("operators live on different layouts")


class DensityMatrix:
    """State of the system; ``physical=False`` marks pathway intermediates."""

    def __init__(self, layout: SpaceLayout, matrix: np.ndarray, physical: bool = True):
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.shape != (layout.dim, layout.dim):
            raise LayoutError(
                f"matrix shape {matrix.shape} does not match basis size {layout.dim}"
            )
        if physical:
            tr = np.trace(matrix)
            if abs(tr - 1.0) > TRACE_TOL:
                raise ValueError(f"physical state must have unit trace, got {tr}")
            if np.linalg.norm(matrix - matrix.conj().T) > 1e-9 * max(
                np.linalg.norm(matrix), 1.0
            ):
                raise ValueError("physical state must be Hermitian")
        self.layout = layout
        self.matrix = _readonly(matrix)
        self.physical = physical


@dataclass(frozen=True)
class Dissipator:
    """A Lindblad jump channel with a nonnegative rate."""

    jump: Operator
    rate: float

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("dissipator rate must be nonnegative")


@dataclass(frozen=True)
class Spectral:
    """Eigendecomposition ``L = V diag(w) Vinv`` of a generator."""

    w: np.ndarray
    V: np.ndarray
    Vinv: np.ndarray
    method: str
    cond: float


class SuperOperator:
    """Dense linear map on vectorized density matrices.

    Immutable in its mathematical content; lazily computes and caches a
    spectral decomposition plus propagators at requested times.
    """

    def __init__(self, layout: SpaceLayout, matrix: np.ndarray,
                 closed_hamiltonian: np.ndarray | None = None):
        matrix = np.asarray(matrix, dtype=complex)
        d2 = layout.dim ** 2
        if matrix.shape != (d2, d2):
            raise LayoutError(
                f"superoperator shape {matrix.shape} does not match dim^2 {d2}"
            )
        self.layout = layout
        self.matrix = _readonly(matrix)
        self._closed_h = closed_hamiltonian
        self._spectral: Spectral | None = None
        self._prop_cache: dict[float, np.ndarray] = {}

    @property
    def dim(self) -> int:
        return self.layout.dim

    def __call__(self, state: np.ndarray) -> np.ndarray:
        """Apply to a density matrix (matrix in, matrix out)."""
        return unvec(self.matrix @ vec(state), self.dim)

    def spectral(self) -> Spectral:
        if self._spectral is None:
            self._spectral = self._decompose()
        return self._spectral

    def _decompose(self) -> Spectral:
        d = self.dim
        if self._closed_h is not None:
            energies, u = np.linalg.eigh(self._closed_h)
            v = np.kron(u.conj(), u)
            w = (-1j * (energies[:, None] - energies[None, :])).reshape(-1, order="F")
            return Spectral(w=w, V=v, Vinv=v.conj().T, method="eigh-closed", cond=1.0)
        w, v = np.linalg.eig(self.matrix)
        cond = np.linalg.cond(v)
        if cond >= EIG_COND_LIMIT or not np.isfinite(cond):
            return Spectral(w=w, V=v, Vinv=None, method="expm", cond=float(cond))
        return Spectral(w=w, V=v, Vinv=np.linalg.inv(v), method="eig", cond=float(cond))

    def propagator_matrix(self, t: float) -> np.ndarray:
        """Dense ``exp(L t)``, cached per requested time."""
        if t < 0:
            raise ValueError("propagation time must be nonnegative")
        key = float(t)
        cached = self._prop_cache.get(key)
        if cached is not None:
            return cached
        spec = self.spectral()
        if spec.method == "expm":
            g = scipy.linalg.expm(self.matrix * t)
        else:
            g = (spec.V * np.exp(spec.w * t)) @ spec.Vinv
        g = _readonly(g)
        self._prop_cache[key] = g
        return g

    def evolve(self, state: np.ndarray, t: float) -> np.ndarray:
        """Evolve a density matrix for time ``t`` (matrix in, matrix out)."""
        if t < 0:
            raise ValueError("propagation time must be nonnegative")
        if t == 0:
            return np.array(state, dtype=complex)
        spec = self.spectral()
        if spec.method == "expm":
            return unvec(self.propagator_matrix(t) @ vec(state), self.dim)
        x = spec.Vinv @ vec(state)
        x *= np.exp(spec.w * t)
        return unvec(spec.V @ x, self.dim)


def embed_local(local_op: np.ndarray, site: int, layout: SpaceLayout) -> Operator:
    """Embed a local matrix at ``site``, identity elsewhere.

    Matrix elements connecting retained basis states to states outside the
    excitation cap are dropped (projection onto the truncated basis).
    """
    layout.check_site(site)
    local = np.asarray(local_op, dtype=complex)
    d = layout.site_dims[site]
    if local.shape != (d, d):
        raise LayoutError(f"local operator shape {local.shape} != ({d}, {d})")
    out = np.zeros((layout.dim, layout.dim), dtype=complex)
    rows, cols = np.nonzero(local)
    for col_state_idx, state in enumerate(layout.states):
        n = state[site]
        for m in rows[cols == n]:
            target = state[:site] + (int(m),) + state[site + 1:]
            if layout.contains(target):
                out[layout.index_of(target), col_state_idx] += local[m, n]
    return Operator(layout, out)


def site_lowering(layout: SpaceLayout, site: int) -> Operator:
    """Embedded lowering operator (phonon ``a_i`` or spin ``sigma_-``)."""
    return embed_local(destroy(layout.site_dims[site]), site, layout)


def build_generator(H: Operator, dissipators: list[Dissipator] | tuple = (),
                    check_hermitian: bool = True) -> SuperOperator:
    """Lindblad generator ``L`` with ``drho/dt = L rho``."""
    if check_hermitian and not H.is_hermitian():
        raise ValueError("Hamiltonian must be Hermitian")
    layout = H.layout
    d = layout.dim
    eye = np.eye(d)
    h = H.matrix
    lmat = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    closed = True
    for dis in dissipators:
        if dis.jump.layout != layout:
            raise LayoutError("dissipator layout does not match Hamiltonian layout")
        if dis.rate == 0:
            continue
        closed = False
        j = dis.jump.matrix
        jdj = j.conj().T @ j
        lmat += dis.rate * (
            np.kron(j.conj(), j)
            - 0.5 * np.kron(eye, jdj)
            - 0.5 * np.kron(jdj.T, eye)
        )
    return SuperOperator(layout, lmat, closed_hamiltonian=h if closed else None)


def thermal_dissipators(layout: SpaceLayout, site: int, nbar: float,
                        rate: float) -> list[Dissipator]:
    """Two-channel thermal bath on one site: ``rate*(nbar+1)`` on ``a`` and
    ``rate*nbar`` on ``a^dag``."""
    if nbar < 0:
        raise ValueError("bath occupation nbar must be nonnegative")
    a = site_lowering(layout, site)
    out = [Dissipator(a, rate * (nbar + 1.0))]
    if nbar > 0:
        out.append(Dissipator(a.dagger(), rate * nbar))
    return [d for d in out if d.rate > 0]


def propagator(generator: SuperOperator, t: float) -> SuperOperator:
    """``exp(L t)`` as a SuperOperator; repeated times hit the cache."""
    return SuperOperator(generator.layout, generator.propagator_matrix(t))


def steady_state(generator: SuperOperator, method: str = "eig",
                 t_horizon: float = 1e6) -> DensityMatrix:
    """Unique trace-one null vector of the generator.

    ``method='evolve'`` propagates the maximally mixed state to ``t_horizon``
    instead of solving the null space; it is a fallback for very large
    generators and performs the same residual/uniqueness checks.
    """
    d = generator.dim
    if method == "evolve":
        rho = np.eye(d, dtype=complex) / d
        rho = generator.evolve(rho, t_horizon)
    else:
        spec = generator.spectral()
        if spec.method == "eigh-closed":
            raise NumericalError(
                "no unique steady state: generator has no dissipation"
            )
        near_zero = np.flatnonzero(np.abs(spec.w.real) <= ZERO_EIGENVALUE_TOL)
        if len(near_zero) != 1:
            raise NumericalError(
                "no unique steady state: "
                f"{len(near_zero)} eigenvalues with |Re| <= {ZERO_EIGENVALUE_TOL}"
            )
        idx = near_zero[0]
        if abs(spec.w[idx]) > 1e-8:
            raise NumericalError(
                f"no steady state: smallest eigenvalue {spec.w[idx]} not zero"
            )
        rho = unvec(spec.V[:, idx], d)
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho).real
    if abs(tr) < 1e-14:
        raise NumericalError("steady-state candidate has zero trace")
    rho /= tr
    residual = np.linalg.norm(generator.matrix @ vec(rho))
    if residual > 1e-9:
        raise NumericalError(f"steady-state residual {residual:.3e} exceeds 1e-9")
    return DensityMatrix(generator.layout, rho)


def expectation(observable: Operator, rho: DensityMatrix | np.ndarray) -> complex:
    """``Tr(O rho)``."""
    mat = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    if isinstance(rho, DensityMatrix) and rho.layout != observable.layout:
        raise LayoutError("observable and state live on different layouts")
    return complex(np.einsum("ij,ji->", observable.matrix, mat))


def ground_state(H: Operator) -> DensityMatrix:
    """Projector onto the lowest eigenvector of a Hermitian operator."""
    energies, u = np.linalg.eigh(H.matrix)
    g = u[:, 0]
    return DensityMatrix(H.layout, np.outer(g, g.conj()))
