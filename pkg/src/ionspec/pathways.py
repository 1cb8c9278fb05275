"""Diagrammatic expansion of pulse sequences and phase-signature extraction.

Expanding each pulse superoperator ``V rho V^dag`` yields up to nine
products, each tagged with a signed amplitude and an integer phase weight
``m`` (the coefficient of the pulse's phase variable).  A pathway picks one
product per pulse; the pathways whose per-variable weight totals match a
requested signature reproduce exactly the component a phase-cycling
experiment extracts by inverse DFT.  Both routes are implemented here and
serve as mutual oracles.

Term bookkeeping (phase weights):
  ket raise  ``A^dag rho``  amplitude beta,  m = +1   label L
  ket lower  ``A rho``      amplitude gamma, m = -1   label l
  bra raise  ``rho A^dag``  amplitude gamma, m = +1   label r
  bra lower  ``rho A``      amplitude beta,  m = -1   label R
Sign conventions such as sgn(gamma*beta) on mixed products emerge from the
amplitude products without special-casing.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .liouville import DensityMatrix, SuperOperator
from .pulses import Interaction, Observable
from .spaces import SpaceLayout

IDENTITY = "id"
RAISE = "raise"
LOWER = "lower"

_KET_LABEL = {IDENTITY: "", RAISE: "L", LOWER: "l"}
_BRA_LABEL = {IDENTITY: "", RAISE: "r", LOWER: "R"}


@dataclass(frozen=True)
class InteractionTerm:
    """One product of the expanded pulse superoperator."""

    ket: str
    bra: str
    amplitude: float
    phase_weight: int

    @property
    def label(self) -> str:
        lbl = _KET_LABEL[self.ket] + _BRA_LABEL[self.bra]
        return lbl or "o"

    @property
    def arrows(self) -> int:
        return (self.ket != IDENTITY) + (self.bra != IDENTITY)


def expand_interaction(v: Interaction) -> list[InteractionTerm]:
    """All surviving products of ``V rho V^dag`` for one pulse.

    Nine for a generic pulse, four when exactly one of beta/gamma vanishes,
    five (identity plus the four single-arrow products) when linearized.
    """
    ket_factors = [(IDENTITY, v.alpha, 0), (RAISE, v.beta, +1), (LOWER, v.gamma, -1)]
    bra_factors = [(IDENTITY, v.alpha, 0), (RAISE, v.gamma, +1), (LOWER, v.beta, -1)]
    terms = []
    for (kf, ka, km), (bf, ba, bm) in itertools.product(ket_factors, bra_factors):
        amp = ka * ba
        if amp == 0:
            continue
        if v.linearized and kf != IDENTITY and bf != IDENTITY:
            continue
        terms.append(InteractionTerm(kf, bf, amp, km + bm))
    return terms


class PhaseSignature:
    """Integer coefficients of the phase variables selecting a pathway class.

    The coefficients must sum to zero: only phase differences survive in any
    measurable component.
    """

    def __init__(self, coefficients: dict[str, int]):
        coeffs = {str(k): int(n) for k, n in coefficients.items()}
        if sum(coeffs.values()) != 0:
            raise ValueError(
                f"signature coefficients must sum to zero, got {coeffs}"
            )
        self.coefficients = coeffs

    def __getitem__(self, var: str) -> int:
        return self.coefficients[var]

    def __eq__(self, other):
        return (isinstance(other, PhaseSignature)
                and self.coefficients == other.coefficients)

    def __repr__(self):
        return f"PhaseSignature({self.coefficients})"

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(self.coefficients)

    def negated(self) -> "PhaseSignature":
        return PhaseSignature({k: -n for k, n in self.coefficients.items()})


@dataclass(frozen=True)
class Pathway:
    """One term choice per pulse, with the accumulated signed amplitude."""

    interactions: tuple[Interaction, ...]
    terms: tuple[InteractionTerm, ...]
    amplitude: float

    @property
    def label(self) -> str:
        parts = [t.label for t in self.terms]
        if all(len(p) == 1 for p in parts):
            return "".join(parts)
        return ",".join(parts)


def _phase_binding(interactions) -> dict[str, list[int]]:
    """Map phase variable -> pulse indices bound to it."""
    binding: dict[str, list[int]] = {}
    for k, v in enumerate(interactions):
        binding.setdefault(v.phase_var, []).append(k)
    return binding


def _check_signature(interactions, signature: PhaseSignature):
    binding = _phase_binding(interactions)
    missing = set(signature.variables) ^ set(binding)
    if missing:
        raise ValueError(
            "signature variables and pulse phase bindings disagree on "
            f"{sorted(missing)}"
        )
    return binding


def apply_term(term: InteractionTerm, a: np.ndarray, state: np.ndarray) -> np.ndarray:
    """Apply one expansion product (without its amplitude) to a state."""
    adag = a.conj().T
    out = state
    if term.ket == RAISE:
        out = adag @ out
    elif term.ket == LOWER:
        out = a @ out
    if term.bra == RAISE:
        out = out @ adag
    elif term.bra == LOWER:
        out = out @ a
    return out


def apply_full_pulse(v: Interaction, layout: SpaceLayout, phase: float,
                     state: np.ndarray) -> np.ndarray:
    """Apply the pulse superoperator at a bound phase value.

    Uses ``V rho V^dag`` for exact pulses and the first-order expansion
    ``alpha^2 rho + alpha (B rho + rho B^dag)`` for linearized ones, with
    ``B = beta e^{i phi} A^dag + gamma e^{-i phi} A``.
    """
    a = v.lowering_matrix(layout)
    b = v.beta * np.exp(1j * phase) * a.conj().T + v.gamma * np.exp(-1j * phase) * a
    if v.linearized:
        return v.alpha**2 * state + v.alpha * (b @ state + state @ b.conj().T)
    vmat = v.alpha * np.eye(layout.dim) + b
    return vmat @ state @ vmat.conj().T


def enumerate_pathways(interactions, signature: PhaseSignature,
                       initial: DensityMatrix | None = None,
                       observable: Observable | None = None,
                       layout: SpaceLayout | None = None,
                       prune: str = "initial") -> list[Pathway]:
    """All term combinations matching the signature, optionally pruned.

    ``prune='initial'`` (default) drops pathways whose first term annihilates
    the initial state exactly; this never changes the summed signal.
    ``prune='detected'`` additionally folds the remaining terms with zero
    delays, dropping pathways that die along the way or read out exactly
    zero.  That stronger pruning is exact only for excitation-conserving free
    evolution probed from a zero-excitation state (e.g. a closed chain from
    its vacuum); the evaluation engines never use it on their own.
    """
    if prune not in ("none", "initial", "detected"):
        raise ValueError(f"unknown prune mode {prune!r}")
    interactions = tuple(interactions)
    binding = _check_signature(interactions, signature)
    per_pulse = [expand_interaction(v) for v in interactions]

    pathways = []
    for combo in itertools.product(*per_pulse):
        ok = True
        for var, pulse_ids in binding.items():
            if sum(combo[k].phase_weight for k in pulse_ids) != signature[var]:
                ok = False
                break
        if not ok:
            continue
        amp = math.prod(t.amplitude for t in combo)
        pathways.append(Pathway(interactions, tuple(combo), amp))

    if prune != "none" and initial is not None and pathways:
        if layout is None:
            layout = initial.layout
        amats = [v.lowering_matrix(layout) for v in interactions]
        kept = []
        for p in pathways:
            first = apply_term(p.terms[0], amats[0], initial.matrix)
            if not np.any(first):
                continue
            if prune == "detected":
                state = first
                dead = False
                for term, a in zip(p.terms[1:], amats[1:]):
                    state = apply_term(term, a, state)
                    if not np.any(state):
                        dead = True
                        break
                if dead:
                    continue
                if observable is not None:
                    value = np.einsum("ij,ji->", observable.operator.matrix, state)
                    if abs(value) < 1e-30:
                        continue
            kept.append(p)
        pathways = kept

    if not pathways:
        warnings.warn("no pathway matches the requested phase signature",
                      stacklevel=2)
    return pathways


def evaluate_pathways(pathways, generator: SuperOperator, delays,
                      initial: DensityMatrix, observable: Observable) -> complex:
    """Signed pathway sum ``sum_p amp_p Tr{O G(t_n) T_n ... G(t_1) T_1 rho0}``.

    ``delays`` has one entry per pulse; the last delay separates the final
    pulse from the readout.  This is the plain fold used as the reference
    implementation; grid scans go through the engine module.
    """
    pathways = list(pathways)
    if not pathways:
        return 0.0 + 0.0j
    layout = generator.layout
    n_pulses = len(pathways[0].terms)
    if len(delays) != n_pulses:
        raise ValueError("need exactly one delay per pulse")
    obs = observable.operator.matrix
    total = 0.0 + 0.0j
    amats_cache: dict[tuple, list[np.ndarray]] = {}
    for p in pathways:
        amats = amats_cache.get(p.interactions)
        if amats is None:
            amats = [v.lowering_matrix(layout) for v in p.interactions]
            amats_cache[p.interactions] = amats
        state = np.array(initial.matrix, dtype=complex)
        for term, a, t in zip(p.terms, amats, delays):
            state = apply_term(term, a, state)
            state = generator.evolve(state, t)
        total += p.amplitude * np.einsum("ij,ji->", obs, state)
    return complex(total)


def phase_grid_lengths(interactions, signature: PhaseSignature,
                       lengths: dict[str, int] | int | None = None) -> dict[str, int]:
    """Per-variable phase-grid sizes ``L >= 2*m_max + 1``.

    ``m_max`` for a variable is the sum over its bound pulses of the largest
    reachable per-pulse weight, so variables shared between pulses are cycled
    on automatically enlarged grids.
    """
    interactions = tuple(interactions)
    binding = _check_signature(interactions, signature)
    out = {}
    for var, pulse_ids in binding.items():
        m_max = sum(
            max(abs(t.phase_weight) for t in expand_interaction(interactions[k]))
            for k in pulse_ids
        )
        minimum = 2 * m_max + 1
        if lengths is None:
            chosen = minimum
        elif isinstance(lengths, int):
            chosen = lengths
        else:
            chosen = lengths.get(var, minimum)
        if chosen < minimum:
            raise ValueError(
                f"phase grid for {var!r} needs at least {minimum} points, "
                f"got {chosen}"
            )
        out[var] = chosen
    return out


def phase_tuples(grid: dict[str, int]):
    """Iterate (phases, dft_weight) over the full multi-variable phase grid.

    Every variable is cycled independently; the inverse-DFT weight already
    contains the 1/L normalization per variable.  Cycling all variables keeps
    the extraction exact even for models without a global excitation-number
    symmetry, where components of nonzero total weight do not vanish.
    """
    variables = tuple(grid)
    return _phase_tuples(variables, grid)


def _phase_tuples(variables, grid):
    ranges = [range(grid[v]) for v in variables]
    norm = math.prod(grid[v] for v in variables)
    for ks in itertools.product(*ranges):
        phases = {v: 2 * math.pi * k / grid[v] for v, k in zip(variables, ks)}
        yield phases, 1.0 / norm


def phase_cycled_signal(interactions, signature: PhaseSignature, delays,
                        generator: SuperOperator, initial: DensityMatrix,
                        observable: Observable,
                        lengths: dict[str, int] | int | None = None) -> complex:
    """Extract one signature component from the full signal by inverse DFT.

    Evaluates ``Tr{O prod_k [G(t_k) V_k(phi)] rho0}`` on the phase grid and
    returns the component at the signature.  Must agree with
    ``evaluate_pathways(enumerate_pathways(...))`` to within numerical noise.
    """
    interactions = tuple(interactions)
    grid = phase_grid_lengths(interactions, signature, lengths)
    if len(delays) != len(interactions):
        raise ValueError("need exactly one delay per pulse")
    layout = generator.layout
    obs = observable.operator.matrix
    total = 0.0 + 0.0j
    for phases, weight in phase_tuples(grid):
        state = np.array(initial.matrix, dtype=complex)
        for v, t in zip(interactions, delays):
            state = apply_full_pulse(v, layout, phases[v.phase_var], state)
            state = generator.evolve(state, t)
        value = np.einsum("ij,ji->", obs, state)
        factor = np.exp(
            -1j * sum(signature[var] * phases[var] for var in signature.variables)
        )
        total += weight * factor * value
    return complex(total)
