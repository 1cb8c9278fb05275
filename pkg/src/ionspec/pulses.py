"""Impulsive interaction operators and readout observables.

An interaction is ``V = alpha*I + beta*exp(i*phi)*A^dag + gamma*exp(-i*phi)*A``
where ``A`` lowers the addressed mode (phonon ``a_i`` or spin ``sigma_-``).
Multi-site excitation uses ``A = sum_k c_k A_{site_k}``.  The ``linearized``
flag marks first-order expansions of a displacement, for which the quadratic
(two-arrow) products of ``V rho V^dag`` must be discarded downstream.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .liouville import Operator, embed_local, site_lowering
from .spaces import SIGMA_MINUS, SIGMA_PLUS, SIGMA_Z, SpaceLayout

MODE_PHONON = "phonon-ladder"
MODE_SPIN = "spin-ladder"

INV_SQRT2 = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class Interaction:
    """One impulsive pulse, bound to a phase variable."""

    sites: tuple[int, ...]
    mode_kind: str
    alpha: float
    beta: float
    gamma: float
    phase_var: str
    linearized: bool = False
    coeffs: tuple[complex, ...] | None = None

    def __post_init__(self):
        if self.mode_kind not in (MODE_PHONON, MODE_SPIN):
            raise ValueError(f"unknown mode kind {self.mode_kind!r}")
        if self.beta == 0 and self.gamma == 0:
            raise ValueError("interaction must excite or de-excite something")
        sites = tuple(int(s) for s in self.sites)
        if not sites:
            raise ValueError("interaction needs at least one site")
        object.__setattr__(self, "sites", sites)
        if self.coeffs is not None:
            coeffs = tuple(complex(c) for c in self.coeffs)
            if len(coeffs) != len(sites):
                raise ValueError("coefficient vector length must match site list")
            object.__setattr__(self, "coeffs", coeffs)

    def lowering_matrix(self, layout: SpaceLayout) -> np.ndarray:
        """The mode operator ``A`` on the layout's truncated basis."""
        coeffs = self.coeffs or (1.0,) * len(self.sites)
        a = np.zeros((layout.dim, layout.dim), dtype=complex)
        for c, site in zip(coeffs, self.sites):
            a += c * site_lowering(layout, site).matrix
        return a

    def operator_matrix(self, layout: SpaceLayout, phase: float) -> np.ndarray:
        """Full ``V`` at a bound phase value (ignores the linearized flag)."""
        a = self.lowering_matrix(layout)
        return (
            self.alpha * np.eye(layout.dim)
            + self.beta * np.exp(1j * phase) * a.conj().T
            + self.gamma * np.exp(-1j * phase) * a
        )


def generic_interaction(site, alpha: float, beta: float, gamma: float,
                        phase_var: str, mode_kind: str,
                        linearized: bool = False,
                        coeffs=None) -> Interaction:
    """Free-form pulse; ``site`` may be an index or a list of indices."""
    sites = (site,) if np.isscalar(site) else tuple(site)
    return Interaction(sites, mode_kind, float(alpha), float(beta), float(gamma),
                       phase_var, linearized,
                       None if coeffs is None else tuple(coeffs))


def spin_pi2(site: int, phase_var: str) -> Interaction:
    """Resonant pi/2 carrier pulse: alpha = beta = -gamma = 1/sqrt(2)."""
    return Interaction((int(site),), MODE_SPIN, INV_SQRT2, INV_SQRT2, -INV_SQRT2,
                       phase_var, linearized=False)


def weak_displacement(site: int, epsilon: float, phase_var: str) -> Interaction:
    """First-order displacement kick: alpha = 1, beta = -gamma = epsilon."""
    if epsilon <= 0:
        raise ValueError("displacement amplitude must be positive")
    if epsilon > 0.3:
        warnings.warn(
            f"epsilon = {epsilon} is large for a linearized displacement",
            stacklevel=2,
        )
    return Interaction((int(site),), MODE_PHONON, 1.0, float(epsilon),
                       -float(epsilon), phase_var, linearized=True)


def raise_only(site: int, phase_var: str, beta: float = INV_SQRT2) -> Interaction:
    """Sideband-built transition that only creates a local phonon.

    The identity amplitude is fixed to 1/sqrt(2); only relative signs of the
    amplitudes matter after phase cycling.
    """
    if beta <= 0:
        raise ValueError("raise amplitude must be positive")
    return Interaction((int(site),), MODE_PHONON, INV_SQRT2, float(beta), 0.0,
                       phase_var, linearized=False)


def lower_only(site: int, phase_var: str, gamma: float = INV_SQRT2) -> Interaction:
    """Sideband-built transition that only destroys a local phonon."""
    if gamma <= 0:
        raise ValueError("lower amplitude must be positive")
    return Interaction((int(site),), MODE_PHONON, INV_SQRT2, 0.0, float(gamma),
                       phase_var, linearized=False)


def carrier_unitary(omega: float, t: float, varphi: float) -> Operator:
    """Single-spin carrier rotation
    ``cos(Omega t/2) I - i sin(Omega t/2)(e^{i varphi} s+ + e^{-i varphi} s-)``.
    """
    layout = SpaceLayout((2,))
    half = 0.5 * omega * t
    mat = (
        math.cos(half) * np.eye(2)
        - 1j * math.sin(half) * (np.exp(1j * varphi) * SIGMA_PLUS
                                 + np.exp(-1j * varphi) * SIGMA_MINUS)
    )
    return Operator(layout, mat)


@dataclass(frozen=True)
class Observable:
    """Hermitian readout operator with its descriptor."""

    kind: str
    site: int | None
    operator: Operator

    def __post_init__(self):
        if not self.operator.is_hermitian(1e-10):
            raise ValueError("observables must be Hermitian")


def motional_observable(site: int, layout: SpaceLayout) -> Observable:
    """Red-sideband probe ``O = sum_n sin^2(sqrt(n) pi/2) |n><n|`` at a site.

    Exactly zero on n = 0 and n = 4 (values below 1e-30 are snapped).
    """
    d = layout.site_dims[site]
    diag = np.array([math.sin(math.sqrt(n) * math.pi / 2.0) ** 2 for n in range(d)])
    diag[diag < 1e-30] = 0.0
    op = embed_local(np.diag(diag).astype(complex), site, layout)
    return Observable("motional-pi", site, op)


def sigma_z_observable(site: int, layout: SpaceLayout) -> Observable:
    """``sigma_z`` at a spin site (ground state reads -1)."""
    if layout.site_dims[site] != 2:
        raise ValueError(f"site {site} is not a spin (dimension 2) site")
    return Observable("sigma-z", site, embed_local(SIGMA_Z, site, layout))


def number_observable(site: int, layout: SpaceLayout) -> Observable:
    d = layout.site_dims[site]
    diag = np.diag(np.arange(d, dtype=float)).astype(complex)
    return Observable("number", site, embed_local(diag, site, layout))


def custom_observable(matrix: np.ndarray, layout: SpaceLayout) -> Observable:
    return Observable("custom", None, Operator(layout, matrix))
