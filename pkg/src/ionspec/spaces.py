"""Composite Hilbert-space layouts with an optional total-excitation cutoff.

A layout is a list of local dimensions, one per site.  Spin sites have
dimension 2 (index 0 is the ground state), phonon sites carry a local Fock
cutoff ``d`` (levels ``0..d-1``).  When ``total_cap`` is set, the retained
basis contains exactly the product states whose summed occupation does not
exceed the cap.

Basis ordering
--------------
States are enumerated in lexicographic order of the occupation tuple with
site 0 as the most significant digit, i.e. the same ordering that
``numpy.kron`` induces on the full product space, with over-cap states
removed.  The ordering is deterministic and is part of the public contract:
all dense matrices produced by this package refer to it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np


class LayoutError(ValueError):
    """Raised for invalid site indices or dimension mismatches."""


@dataclass(frozen=True)
class SpaceLayout:
    """Truncated product basis over a chain of local Hilbert spaces."""

    site_dims: tuple[int, ...]
    total_cap: int | None = None
    _states: tuple[tuple[int, ...], ...] = field(
        init=False, repr=False, compare=False, hash=False, default=()
    )
    _index: dict = field(init=False, repr=False, compare=False, hash=False, default=None)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.site_dims)
        if not dims or any(d < 2 for d in dims):
            raise LayoutError("every site dimension must be >= 2")
        if self.total_cap is not None and self.total_cap < 0:
            raise LayoutError("total_cap must be nonnegative")
        object.__setattr__(self, "site_dims", dims)
        cap = self.total_cap
        states = tuple(
            s
            for s in itertools.product(*(range(d) for d in dims))
            if cap is None or sum(s) <= cap
        )
        object.__setattr__(self, "_states", states)
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(states)})

    @property
    def n_sites(self) -> int:
        return len(self.site_dims)

    @property
    def dim(self) -> int:
        return len(self._states)

    @property
    def states(self) -> tuple[tuple[int, ...], ...]:
        return self._states

    def index_of(self, state: tuple[int, ...]) -> int:
        """Basis index of an occupation tuple (raises if not retained)."""
        try:
            return self._index[tuple(state)]
        except KeyError:
            raise LayoutError(f"state {state} is not in the truncated basis") from None

    def contains(self, state: tuple[int, ...]) -> bool:
        return tuple(state) in self._index

    def check_site(self, site: int) -> int:
        if not 0 <= site < self.n_sites:
            raise LayoutError(f"site {site} out of range for {self.n_sites} sites")
        return site

    def with_raised_cutoff(self, extra: int = 1) -> "SpaceLayout":
        """Enlarged layout for convergence checks.

        Raises every local dimension and the total cap by ``extra`` so the
        added headroom is actually reachable.
        """
        cap = None if self.total_cap is None else self.total_cap + extra
        return SpaceLayout(tuple(d + extra for d in self.site_dims), cap)


def destroy(d: int) -> np.ndarray:
    """Local lowering operator, ``<n-1|a|n> = sqrt(n)``.

    For ``d == 2`` this doubles as the spin lowering operator sigma_minus in
    the ground-first basis.
    """
    return np.diag(np.sqrt(np.arange(1, d, dtype=float)), k=1).astype(complex)


def create(d: int) -> np.ndarray:
    return destroy(d).conj().T


def number_op(d: int) -> np.ndarray:
    return np.diag(np.arange(d, dtype=float)).astype(complex)


# Pauli matrices in the ground-first basis (index 0 = |down>), so that
# sigma_z |down> = -|down> and sigma_minus = destroy(2).
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, 1j], [-1j, 0]], dtype=complex)
SIGMA_Z = np.array([[-1, 0], [0, 1]], dtype=complex)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_PLUS = np.array([[0, 0], [1, 0]], dtype=complex)
