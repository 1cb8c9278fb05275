"""Model builders: phonon Bose-Hubbard chains and long-range Ising chains.

Units: phonon chains are expressed in units of the transverse trap frequency
``nu_x`` (times in ``1/nu_x``), spin chains in units of the coupling scale
``J0``.  All positions are in units of the Coulomb length ``l0``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.constants

from . import liouville
from .liouville import Dissipator, NumericalError, Operator, SuperOperator, build_generator, embed_local
from .spaces import SIGMA_X, SIGMA_Y, SpaceLayout, destroy, number_op


@dataclass(frozen=True)
class BathSpec:
    """Thermal reservoir attached to one site (0-based)."""

    site: int
    nbar: float
    rate: float

    def __post_init__(self):
        if self.nbar < 0 or self.rate < 0:
            raise ValueError("bath nbar and rate must be nonnegative")


@dataclass(frozen=True)
class PhononChainParams:
    """Local-phonon chain in a linear trap.

    ``beta0`` is the squared trap-frequency ratio setting the hopping scale;
    ``anharmonicity`` is the on-site term in units of ``nu_x``.
    """

    n_ions: int
    beta0: float
    anharmonicity: float = 0.0
    local_dim: int = 4
    total_cap: int | None = 4
    baths: tuple[BathSpec, ...] = ()

    def __post_init__(self):
        if self.n_ions < 1:
            raise ValueError("n_ions must be >= 1")
        if not 0 < self.beta0 < 1:
            raise ValueError("beta0 must lie in (0, 1)")
        if self.beta0 > 0.3:
            warnings.warn(
                f"beta0 = {self.beta0} is large; the local-phonon picture "
                "assumes beta0 << 1",
                stacklevel=2,
            )
        object.__setattr__(self, "baths", tuple(self.baths))
        for b in self.baths:
            if not 0 <= b.site < self.n_ions:
                raise ValueError(f"bath site {b.site} out of range")

    def layout(self) -> SpaceLayout:
        return SpaceLayout((self.local_dim,) * self.n_ions, self.total_cap)


@dataclass(frozen=True)
class IsingChainParams:
    """Transverse-field Ising chain with power-law couplings.

    The coupling exponent is named ``power_exponent`` to avoid clashing with
    the pulse amplitude alpha.
    """

    n_spins: int
    j0: float = 1.0
    power_exponent: float = 1.0
    field: float = 0.0

    def __post_init__(self):
        if self.n_spins < 1:
            raise ValueError("n_spins must be >= 1")
        if not 0 < self.power_exponent < 3:
            warnings.warn(
                f"power exponent {self.power_exponent} outside (0, 3)",
                stacklevel=2,
            )

    def layout(self) -> SpaceLayout:
        return SpaceLayout((2,) * self.n_spins, None)


@dataclass(frozen=True)
class ExcitonTable:
    """Eigenstates of the one- and two-excitation blocks of the chain."""

    single_energies: np.ndarray
    single_coeffs: np.ndarray  # row i = coefficients of exciton i over sites
    double_energies: np.ndarray
    double_coeffs: np.ndarray  # row i = coefficients over the pair basis
    pair_basis: tuple[tuple[int, int], ...]
    degenerate: bool = False


def equilibrium_positions(n_ions: int, tol: float = 1e-12,
                          max_iter: int = 200) -> np.ndarray:
    """Dimensionless equilibrium positions of a linear Coulomb chain.

    Solves the force balance ``u_m = sum_{n<m} (u_m-u_n)^-2
    - sum_{n>m} (u_m-u_n)^-2`` by damped Newton iteration from a
    uniformly-spaced guess.  Positions come back sorted ascending and are
    symmetric about zero.
    """
    if n_ions < 2:
        raise ValueError("equilibrium positions need at least 2 ions")
    # Uniform guess with the empirical minimal-spacing scale for short chains.
    spacing = 2.018 / n_ions ** 0.559
    u = (np.arange(n_ions) - (n_ions - 1) / 2.0) * spacing

    def residual(u):
        diff = u[:, None] - u[None, :]
        np.fill_diagonal(diff, 1.0)
        inv2 = np.sign(diff) / diff**2
        np.fill_diagonal(inv2, 0.0)
        return u - inv2.sum(axis=1)

    def jacobian(u):
        diff = u[:, None] - u[None, :]
        np.fill_diagonal(diff, 1.0)
        inv3 = 2.0 / np.abs(diff) ** 3
        np.fill_diagonal(inv3, 0.0)
        jac = -inv3
        np.fill_diagonal(jac, 1.0 + inv3.sum(axis=1))
        return jac

    f = residual(u)
    for _ in range(max_iter):
        norm = np.max(np.abs(f))
        if norm <= tol:
            break
        step = np.linalg.solve(jacobian(u), -f)
        alpha = 1.0
        while alpha > 1e-6:
            trial = u + alpha * step
            if np.all(np.diff(trial) > 0):
                f_trial = residual(trial)
                if np.max(np.abs(f_trial)) < norm:
                    u, f = trial, f_trial
                    break
            alpha *= 0.5
        else:
            raise NumericalError("equilibrium position iteration stalled")
    else:
        raise NumericalError(
            f"equilibrium positions did not converge in {max_iter} iterations"
        )
    # Symmetrize against the mirrored solution to pin the center of mass.
    u = 0.5 * (u - u[::-1])
    return u


def phonon_couplings(params: PhononChainParams) -> tuple[np.ndarray, np.ndarray]:
    """Site energies ``omega_i^0`` and hopping matrix ``t_ij`` in nu_x units."""
    n = params.n_ions
    t = np.zeros((n, n))
    if n > 1:
        u = equilibrium_positions(n)
        diff = np.abs(u[:, None] - u[None, :])
        np.fill_diagonal(diff, 1.0)
        t = params.beta0 / 2.0 / diff**3
        np.fill_diagonal(t, 0.0)
    omega0 = 1.0 - t.sum(axis=1)
    return omega0, t


def phonon_hamiltonian(params: PhononChainParams,
                       layout: SpaceLayout | None = None) -> Operator:
    """Bose-Hubbard chain Hamiltonian on the truncated layout."""
    layout = layout or params.layout()
    omega0, t = phonon_couplings(params)
    n = params.n_ions
    lowering = [embed_local(destroy(layout.site_dims[i]), i, layout) for i in range(n)]
    h = np.zeros((layout.dim, layout.dim), dtype=complex)
    for i in range(n):
        num = embed_local(number_op(layout.site_dims[i]), i, layout).matrix
        h += omega0[i] * num
        if params.anharmonicity:
            d = layout.site_dims[i]
            levels = np.arange(d, dtype=float)
            anh = np.diag(levels * (levels - 1)).astype(complex)
            h += params.anharmonicity * embed_local(anh, i, layout).matrix
    for i in range(n):
        for j in range(i + 1, n):
            hop = lowering[i].dagger().matrix @ lowering[j].matrix
            h += t[i, j] * (hop + hop.conj().T)
    return Operator(layout, h)


def single_exciton_block(params: PhononChainParams) -> np.ndarray:
    """One-excitation block in the site basis (row i = phonon at ion i)."""
    omega0, t = phonon_couplings(params)
    return np.diag(omega0) + t


def _fix_signs(vectors: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Deterministic sign convention: first non-negligible component > 0."""
    out = vectors.copy()
    for k in range(out.shape[1]):
        col = out[:, k]
        nz = np.flatnonzero(np.abs(col) > tol)
        if len(nz) and col[nz[0]].real < 0:
            out[:, k] = -col
    return out


def exciton_table(params: PhononChainParams) -> ExcitonTable:
    """Diagonalize the one- and two-excitation blocks of the full chain."""
    layout = params.layout()
    if layout.total_cap is not None and layout.total_cap < 2:
        raise ValueError("exciton table needs a total excitation cap >= 2")
    h = phonon_hamiltonian(params, layout).matrix.real
    states = layout.states
    single_idx = [k for k, s in enumerate(states) if sum(s) == 1]
    single_sites = [s.index(1) for s in (states[k] for k in single_idx)]
    order = np.argsort(single_sites)
    single_idx = [single_idx[k] for k in order]
    block1 = h[np.ix_(single_idx, single_idx)]
    e1, c1 = np.linalg.eigh(block1)
    c1 = _fix_signs(c1)

    double_idx = [k for k, s in enumerate(states) if sum(s) == 2]

    def pair_of(state):
        occupied = [i for i, n in enumerate(state) if n]
        if len(occupied) == 1:
            return (occupied[0], occupied[0])
        return (occupied[0], occupied[1])

    pairs = [pair_of(states[k]) for k in double_idx]
    order = np.argsort([p[0] * params.n_ions + p[1] for p in pairs])
    double_idx = [double_idx[k] for k in order]
    pairs = [pairs[k] for k in order]
    block2 = h[np.ix_(double_idx, double_idx)]
    e2, c2 = np.linalg.eigh(block2)
    c2 = _fix_signs(c2)

    gaps = np.concatenate([np.diff(e1), np.diff(e2)]) if len(e2) > 1 else np.diff(e1)
    degenerate = bool(len(gaps) and np.min(np.abs(gaps)) < 1e-10)
    return ExcitonTable(
        single_energies=e1,
        single_coeffs=c1.T,
        double_energies=e2,
        double_coeffs=c2.T,
        pair_basis=tuple(pairs),
        degenerate=degenerate,
    )


def ising_hamiltonian(params: IsingChainParams,
                      layout: SpaceLayout | None = None) -> Operator:
    """``H = -sum_{i<j} J0/|i-j|^a sx_i sx_j - B sum_i sy_i``."""
    layout = layout or params.layout()
    n = params.n_spins
    sx = [embed_local(SIGMA_X, i, layout).matrix for i in range(n)]
    h = np.zeros((layout.dim, layout.dim), dtype=complex)
    for i in range(n):
        for j in range(i + 1, n):
            h -= params.j0 / abs(i - j) ** params.power_exponent * (sx[i] @ sx[j])
    if params.field:
        for i in range(n):
            h -= params.field * embed_local(SIGMA_Y, i, layout).matrix
    return Operator(layout, h)


def recoil_energy(lambda1: float, lambda2: float, mass: float) -> float:
    """Recoil angular frequency ``E/hbar = hbar (k1^2 + k2^2) / (2 m hbar)``.

    Wavelengths in meters, mass in kg; returns ``E/hbar`` in 1/s.
    """
    if lambda1 <= 0 or lambda2 <= 0 or mass <= 0:
        raise ValueError("wavelengths and mass must be positive")
    k1 = 2 * np.pi / lambda1
    k2 = 2 * np.pi / lambda2
    return scipy.constants.hbar * (k1**2 + k2**2) / (2 * mass)


@dataclass(frozen=True)
class Model:
    """A concrete system: layout, Hamiltonian, and jump channels."""

    kind: str  # "phonon-chain" | "spin-chain"
    params: object
    layout: SpaceLayout
    hamiltonian: Operator
    dissipators: tuple[Dissipator, ...] = ()
    _generator: list = field(default_factory=list, repr=False, compare=False)

    @property
    def n_sites(self) -> int:
        return self.layout.n_sites

    def generator(self) -> SuperOperator:
        if not self._generator:
            self._generator.append(
                build_generator(self.hamiltonian, self.dissipators)
            )
        return self._generator[0]


def build_phonon_model(params: PhononChainParams,
                       layout: SpaceLayout | None = None) -> Model:
    layout = layout or params.layout()
    h = phonon_hamiltonian(params, layout)
    dissipators: list[Dissipator] = []
    for bath in params.baths:
        dissipators.extend(
            liouville.thermal_dissipators(layout, bath.site, bath.nbar, bath.rate)
        )
    return Model("phonon-chain", params, layout, h, tuple(dissipators))


def build_ising_model(params: IsingChainParams) -> Model:
    layout = params.layout()
    return Model("spin-chain", params, layout, ising_hamiltonian(params, layout))
