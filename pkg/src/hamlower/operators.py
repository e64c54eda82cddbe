"""Pauli-string and fermionic operator cores.

Conventions used throughout the package (changing any of these silently
invalidates every frozen expected value in the test suite):

* Spin site 0 is the most significant tensor factor, so on ``n`` spins the
  basis state with index ``b`` assigns spin ``s`` the bit ``(b >> (n-1-s)) & 1``
  and ``Z`` on site 0 of a 2-spin system realizes ``diag(1, 1, -1, -1)``.
* ``|0>`` is the ``Z = +1`` eigenstate.
* Fermionic mode 0 is the leftmost slot of the occupation bitstring and the
  sector basis is ordered with occupied-leftmost states first (``|10>`` before
  ``|01>``), which makes the singly-occupied block of a spinful lattice line
  up with the spin basis above without any permutation.
* Creation / annihilation signs follow the usual convention
  ``a_m^+ |n> = (-1)**(n_0 + ... + n_{m-1}) |...>``.
* Spin Hamiltonian coefficients are real.  Fermionic coefficients may be
  complex internally (the on-site image of ``Y`` needs them) but the text
  interchange format only accepts real values.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import ParseError, ResourceLimitError, ValidationError

AXES = ("X", "Y", "Z")

PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "Y": np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    "Z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
}

# Single-site products P*Q -> (phase, R) for P != Q, both non-identity.
_PAULI_PRODUCT = {
    ("X", "Y"): (1.0j, "Z"),
    ("Y", "X"): (-1.0j, "Z"),
    ("Y", "Z"): (1.0j, "X"),
    ("Z", "Y"): (-1.0j, "X"),
    ("Z", "X"): (1.0j, "Y"),
    ("X", "Z"): (-1.0j, "Y"),
}

# Dense realizations refuse to build above this many spins unless the
# environment override is set; 2**14 doubles is the intended desk-scale cap.
DENSE_SPIN_LIMIT = 14
_DENSE_LIMIT_ENV = "HAMLOWER_DENSE_LIMIT"


def dense_spin_limit() -> int:
    """Current dense-realization cap in spins (env override included)."""
    raw = os.environ.get(_DENSE_LIMIT_ENV)
    if raw is None:
        return DENSE_SPIN_LIMIT
    try:
        value = int(raw)
    except ValueError as exc:
        raise ValidationError(f"{_DENSE_LIMIT_ENV} must be an integer, got {raw!r}") from exc
    if value < 1:
        raise ValidationError(f"{_DENSE_LIMIT_ENV} must be positive, got {value}")
    return value


def pauli_product(left: str, right: str):
    """Single-site product ``left * right`` as ``(phase, axis)``.

    ``axis`` is ``"I"`` when the product is proportional to the identity.
    """
    if left == "I":
        return 1.0 + 0.0j, right
    if right == "I":
        return 1.0 + 0.0j, left
    if left == right:
        return 1.0 + 0.0j, "I"
    return _PAULI_PRODUCT[(left, right)]


def multiply_factor_tuples(left, right):
    """Product of two Pauli factor tuples, each ``((site, axis), ...)``.

    Returns ``(phase, factors)`` with factors site-sorted and identity sites
    dropped.  Inputs must individually be site-sorted and duplicate free.
    """
    phase = 1.0 + 0.0j
    merged = {}
    for site, axis in left:
        merged[site] = axis
    for site, axis in right:
        if site in merged:
            p, ax = pauli_product(merged[site], axis)
            phase *= p
            if ax == "I":
                del merged[site]
            else:
                merged[site] = ax
        else:
            merged[site] = axis
    return phase, tuple(sorted(merged.items()))


@dataclass(frozen=True)
class PauliTerm:
    """One real-weighted Pauli string, e.g. ``0.5 * X@1 Z@4``.

    ``factors`` is a site-sorted tuple of ``(site, axis)`` pairs with no
    repeated sites; an empty tuple denotes a multiple of the identity.
    """

    coefficient: float
    factors: tuple = ()

    def __post_init__(self):
        if isinstance(self.coefficient, complex):
            raise ValidationError("PauliTerm coefficients must be real")
        c = float(self.coefficient)
        if not math.isfinite(c):
            raise ValidationError(f"non-finite coefficient {self.coefficient!r}")
        object.__setattr__(self, "coefficient", c)
        factors = tuple((int(s), str(a)) for s, a in self.factors)
        seen = set()
        for site, axis in factors:
            if site < 0:
                raise ValidationError(f"negative site index {site}")
            if axis not in AXES:
                raise ValidationError(f"unknown Pauli axis {axis!r}")
            if site in seen:
                raise ValidationError(f"duplicate site {site} in term")
            seen.add(site)
        object.__setattr__(self, "factors", tuple(sorted(factors)))

    @property
    def weight(self) -> int:
        """Number of non-identity tensor factors (locality of the string)."""
        return len(self.factors)

    def max_site(self) -> int:
        return max((s for s, _ in self.factors), default=-1)

    def scaled(self, factor: float) -> "PauliTerm":
        return PauliTerm(self.coefficient * factor, self.factors)


class SpinHamiltonian:
    """Real linear combination of Pauli strings on ``num_spins`` spins."""

    drop_tol = 1e-12

    def __init__(self, num_spins: int, terms=()):
        num_spins = int(num_spins)
        if num_spins < 1:
            raise ValidationError("num_spins must be at least 1")
        terms = tuple(t if isinstance(t, PauliTerm) else PauliTerm(*t) for t in terms)
        for t in terms:
            if t.max_site() >= num_spins:
                raise ValidationError(
                    f"term touches site {t.max_site()} but system has {num_spins} spins")
        self.num_spins = num_spins
        self.terms = terms

    def canonicalize(self) -> "SpinHamiltonian":
        """Merge duplicate strings, drop tiny ones, sort deterministically."""
        merged = {}
        for t in self.terms:
            merged[t.factors] = merged.get(t.factors, 0.0) + t.coefficient
        kept = [PauliTerm(c, f) for f, c in merged.items() if abs(c) > self.drop_tol]
        kept.sort(key=lambda t: (t.weight, t.factors))
        return SpinHamiltonian(self.num_spins, kept)

    def __add__(self, other: "SpinHamiltonian") -> "SpinHamiltonian":
        if not isinstance(other, SpinHamiltonian):
            return NotImplemented
        n = max(self.num_spins, other.num_spins)
        return SpinHamiltonian(n, self.terms + other.terms).canonicalize()

    def scaled(self, factor: float) -> "SpinHamiltonian":
        return SpinHamiltonian(self.num_spins, [t.scaled(factor) for t in self.terms])

    def constant(self) -> float:
        """Sum of identity-term coefficients."""
        return sum(t.coefficient for t in self.terms if not t.factors)

    def max_locality(self) -> int:
        return max((t.weight for t in self.terms), default=0)

    def __eq__(self, other):
        if not isinstance(other, SpinHamiltonian):
            return NotImplemented
        a, b = self.canonicalize(), other.canonicalize()
        return a.num_spins == b.num_spins and a.terms == b.terms

    def __repr__(self):
        return f"SpinHamiltonian(num_spins={self.num_spins}, terms={len(self.terms)})"


def _term_masks(term: PauliTerm, num_spins: int):
    """Bit masks describing one Pauli string: (flip, phase_bits, n_y)."""
    flip = 0
    phase_bits = 0
    n_y = 0
    for site, axis in term.factors:
        bit = 1 << (num_spins - 1 - site)
        if axis in ("X", "Y"):
            flip |= bit
        if axis in ("Y", "Z"):
            phase_bits |= bit
        if axis == "Y":
            n_y += 1
    return flip, phase_bits, n_y


def realize_spin(h: SpinHamiltonian, num_spins=None) -> np.ndarray:
    """Dense complex matrix of ``h`` with spin 0 as the leading tensor factor.

    Refuses systems above the dense limit (see ``dense_spin_limit``); the
    sparse ``apply_spin`` path has no such cap.
    """
    n = h.num_spins if num_spins is None else int(num_spins)
    if n < h.num_spins:
        raise ValidationError("num_spins smaller than the Hamiltonian support")
    limit = dense_spin_limit()
    if n > limit:
        raise ResourceLimitError(
            f"dense realization of {n} spins exceeds the {limit}-spin limit "
            f"(set {_DENSE_LIMIT_ENV} to override)")
    dim = 1 << n
    out = np.zeros((dim, dim), dtype=complex)
    cols = np.arange(dim, dtype=np.uint64)
    for term in h.terms:
        flip, phase_bits, n_y = _term_masks(term, n)
        rows = cols ^ np.uint64(flip)
        par = np.bitwise_count(cols & np.uint64(phase_bits)).astype(np.int64)
        phase = term.coefficient * (1.0j ** n_y) * np.where(par & 1, -1.0, 1.0)
        out[rows, cols] += phase
    return out


def apply_spin(h: SpinHamiltonian, vec: np.ndarray, num_spins=None) -> np.ndarray:
    """Matrix-free application of ``h`` to a state vector."""
    n = h.num_spins if num_spins is None else int(num_spins)
    dim = 1 << n
    if vec.shape[0] != dim:
        raise ValidationError(f"state has dimension {vec.shape[0]}, expected {dim}")
    cols = np.arange(dim, dtype=np.uint64)
    out = np.zeros(dim, dtype=complex)
    for term in h.terms:
        flip, phase_bits, n_y = _term_masks(term, n)
        rows = cols ^ np.uint64(flip)
        par = np.bitwise_count(cols & np.uint64(phase_bits)).astype(np.int64)
        phase = term.coefficient * (1.0j ** n_y) * np.where(par & 1, -1.0, 1.0)
        out[rows] += phase * vec
    return out


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues (ascending) and matching eigenvector columns."""

    values: np.ndarray
    vectors: np.ndarray


def eig_hermitian(matrix: np.ndarray) -> Spectrum:
    """Full eigendecomposition with an explicit Hermiticity check."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {matrix.shape}")
    scale = max(1.0, float(np.abs(matrix).max()))
    if np.abs(matrix - matrix.conj().T).max() > 1e-10 * scale:
        raise ValidationError("matrix is not Hermitian within tolerance")
    values, vectors = np.linalg.eigh(matrix)
    return Spectrum(values, vectors)


def low_spectrum(h: SpinHamiltonian, k: int) -> np.ndarray:
    """Lowest ``k`` eigenvalues; dense below the limit, Lanczos above it."""
    n = h.num_spins
    if n <= dense_spin_limit():
        return eig_hermitian(realize_spin(h)).values[:k]
    from scipy.sparse.linalg import LinearOperator, eigsh

    dim = 1 << n
    op = LinearOperator((dim, dim), matvec=lambda v: apply_spin(h, v), dtype=complex)
    v0 = np.full(dim, 1.0 / math.sqrt(dim))
    vals = eigsh(op, k=k, which="SA", v0=v0, return_eigenvectors=False)
    return np.sort(vals)


# ---------------------------------------------------------------------------
# Fermions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FermionOperator:
    """Linear combination of creation/annihilation monomials.

    ``terms`` is a tuple of ``(coefficient, monomial)`` where the monomial is
    a tuple of ``(mode, dagger)`` pairs in left-to-right operator order.  Use
    ``normal_order`` to bring every monomial to the canonical form with all
    creations left of all annihilations and mode indices ascending inside
    each group.
    """

    num_modes: int
    terms: tuple = ()

    def __post_init__(self):
        if self.num_modes < 1:
            raise ValidationError("num_modes must be at least 1")
        cleaned = []
        for coeff, mono in self.terms:
            coeff = complex(coeff)
            if not (math.isfinite(coeff.real) and math.isfinite(coeff.imag)):
                raise ValidationError("non-finite fermionic coefficient")
            mono = tuple((int(m), bool(d)) for m, d in mono)
            for mode, _ in mono:
                if not 0 <= mode < self.num_modes:
                    raise ValidationError(
                        f"mode {mode} outside [0, {self.num_modes})")
            cleaned.append((coeff, mono))
        object.__setattr__(self, "terms", tuple(cleaned))

    def dagger(self) -> "FermionOperator":
        terms = []
        for coeff, mono in self.terms:
            terms.append((coeff.conjugate(),
                          tuple((m, not d) for m, d in reversed(mono))))
        return FermionOperator(self.num_modes, terms)

    def __add__(self, other: "FermionOperator") -> "FermionOperator":
        if not isinstance(other, FermionOperator):
            return NotImplemented
        n = max(self.num_modes, other.num_modes)
        return FermionOperator(n, self.terms + other.terms)

    def __mul__(self, other):
        if isinstance(other, FermionOperator):
            n = max(self.num_modes, other.num_modes)
            terms = [(c1 * c2, m1 + m2)
                     for c1, m1 in self.terms for c2, m2 in other.terms]
            return FermionOperator(n, terms)
        return FermionOperator(self.num_modes,
                               [(c * other, m) for c, m in self.terms])

    __rmul__ = __mul__

    def scaled(self, factor) -> "FermionOperator":
        return self * factor

    def normal_order(self, drop_tol: float = 1e-12) -> "FermionOperator":
        """Canonical normal-ordered form with anticommutator bookkeeping.

        Swapping two fermionic operators flips the sign; swapping ``a_m`` past
        ``a_m^+`` additionally produces the contracted monomial from
        ``a a^+ = 1 - a^+ a``.  Monomials with a repeated creation (or
        annihilation) vanish.
        """
        acc = {}
        stack = [(coeff, mono) for coeff, mono in self.terms]
        while stack:
            coeff, mono = stack.pop()
            if coeff == 0:
                continue
            for i in range(len(mono) - 1):
                (m1, d1), (m2, d2) = mono[i], mono[i + 1]
                if (not d1) and d2:
                    head, tail = mono[:i], mono[i + 2:]
                    if m1 == m2:
                        stack.append((coeff, head + tail))
                    stack.append((-coeff, head + ((m2, d2), (m1, d1)) + tail))
                    break
                if d1 == d2:
                    if m1 == m2:
                        break  # nilpotent pair, term vanishes
                    if m1 > m2:
                        head, tail = mono[:i], mono[i + 2:]
                        stack.append((-coeff, head + ((m2, d2), (m1, d1)) + tail))
                        break
            else:
                acc[mono] = acc.get(mono, 0.0) + coeff
                continue
        terms = [(c, m) for m, c in acc.items() if abs(c) > drop_tol]
        terms.sort(key=lambda t: (len(t[1]), t[1]))
        return FermionOperator(self.num_modes, terms)

    def __repr__(self):
        return f"FermionOperator(num_modes={self.num_modes}, terms={len(self.terms)})"


def fermion_from_monomial(num_modes: int, coeff, mono) -> FermionOperator:
    return FermionOperator(num_modes, [(coeff, tuple(mono))])


class FockSector:
    """Fixed-particle-number block of the Fock space.

    Basis states are occupation bitstrings with mode 0 leftmost, ordered with
    occupied-leftmost states first; internally a state is an integer whose
    bit ``num_modes - 1 - m`` holds the occupation of mode ``m``.
    """

    def __init__(self, num_modes: int, num_particles: int):
        if num_modes < 1:
            raise ValidationError("num_modes must be at least 1")
        if not 0 <= num_particles <= num_modes:
            raise ValidationError(
                f"num_particles {num_particles} outside [0, {num_modes}]")
        self.num_modes = num_modes
        self.num_particles = num_particles
        states = []
        for occ in combinations(range(num_modes), num_particles):
            state = 0
            for m in occ:
                state |= 1 << (num_modes - 1 - m)
            states.append(state)
        states.sort(reverse=True)
        self.states = tuple(states)
        self.index = {s: i for i, s in enumerate(states)}

    @property
    def dimension(self) -> int:
        return len(self.states)

    def occupations(self, state: int):
        """Occupation tuple ``(n_0, ..., n_{M-1})`` for a basis integer."""
        n = self.num_modes
        return tuple((state >> (n - 1 - m)) & 1 for m in range(n))

    def state_label(self, state: int) -> str:
        return "".join(str(b) for b in self.occupations(state))


def _apply_monomial(mono, state: int, num_modes: int):
    """Apply a monomial to a basis integer; returns (sign, state) or (0, None)."""
    sign = 1
    for mode, dagger in reversed(mono):
        pos = num_modes - 1 - mode
        bit = 1 << pos
        occupied = state & bit
        if dagger:
            if occupied:
                return 0, None
            if (state >> (pos + 1)).bit_count() & 1:
                sign = -sign
            state |= bit
        else:
            if not occupied:
                return 0, None
            if (state >> (pos + 1)).bit_count() & 1:
                sign = -sign
            state &= ~bit
    return sign, state


def realize_fermion(op: FermionOperator, sector: FockSector) -> np.ndarray:
    """Matrix of ``op`` on the sector basis (complex; Hermitian iff op is)."""
    if op.num_modes > sector.num_modes:
        raise ValidationError(
            f"operator on {op.num_modes} modes, sector has {sector.num_modes}")
    dim = sector.dimension
    out = np.zeros((dim, dim), dtype=complex)
    for coeff, mono in op.terms:
        if not mono:
            out[np.diag_indices(dim)] += coeff
            continue
        for col, state in enumerate(sector.states):
            sign, new_state = _apply_monomial(mono, state, sector.num_modes)
            if new_state is None:
                continue
            row = sector.index.get(new_state)
            if row is None:
                # particle number changed; outside this sector
                continue
            out[row, col] += coeff * sign
    return out


def default_site_modes(site: int):
    """Spinful lattice convention: site i holds modes (2i up, 2i+1 down)."""
    return 2 * site, 2 * site + 1


# Single-site Pauli images as on-site bilinears sum_{ss'} P_{ss'} a+_{is} a_{is'}
# with the spin-up mode listed first.
_BILINEAR = {
    "X": (((0, 1), 1.0 + 0.0j), ((1, 0), 1.0 + 0.0j)),
    "Y": (((0, 1), -1.0j), ((1, 0), 1.0j)),
    "Z": (((0, 0), 1.0 + 0.0j), ((1, 1), -1.0 - 0.0j)),
}


def jordan_map_spin_to_fermion(term: PauliTerm, num_sites: int,
                               site_modes=default_site_modes) -> FermionOperator:
    """On-site quadratic image of a Pauli string for spinful fermions.

    Each single-site Pauli ``P_i`` becomes ``sum_{ss'} P_{ss'} a+_{is} a_{is'}``
    on the site's (up, down) mode pair; multi-site strings are products of
    the per-site bilinears, expanded and normal ordered.  On the
    singly-occupied subspace this reproduces the spin matrix exactly.
    """
    num_modes = max(site_modes(s)[1] for s in range(num_sites)) + 1
    out = FermionOperator(num_modes, [(term.coefficient, ())])
    for site, axis in term.factors:
        if site >= num_sites:
            raise ValidationError(f"site {site} outside the {num_sites}-site lattice")
        modes = site_modes(site)
        bilinear = FermionOperator(
            num_modes,
            [(c, ((modes[s1], True), (modes[s2], False)))
             for (s1, s2), c in _BILINEAR[axis]])
        out = out * bilinear
    return out.normal_order()


def singly_occupied_projector(sector: FockSector, num_sites: int,
                              site_modes=default_site_modes) -> np.ndarray:
    """Columns spanning the one-particle-per-site block, in spin basis order.

    Sector ordering makes the singly-occupied states appear in the same
    relative order as the corresponding spin basis (up = |0>), so the columns
    can be filled by a single ordered scan.
    """
    cols = []
    for state in sector.states:
        occ = sector.occupations(state)
        good = all(occ[site_modes(s)[0]] + occ[site_modes(s)[1]] == 1
                   for s in range(num_sites))
        if good:
            cols.append(sector.index[state])
    if len(cols) != 2 ** num_sites:
        raise ValidationError(
            f"expected {2 ** num_sites} singly-occupied states, found {len(cols)}")
    proj = np.zeros((sector.dimension, len(cols)))
    for k, i in enumerate(cols):
        proj[i, k] = 1.0
    return proj


# ---------------------------------------------------------------------------
# Text interchange formats
# ---------------------------------------------------------------------------


def _strip_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def spin_to_text(h: SpinHamiltonian) -> str:
    """Serialize in the line format ``coeff axis@site axis@site ...``."""
    h = h.canonicalize()
    lines = [f"spins {h.num_spins}"]
    for t in h.terms:
        parts = [repr(t.coefficient)]
        parts.extend(f"{axis}@{site}" for site, axis in t.factors)
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def spin_from_text(text: str) -> SpinHamiltonian:
    num_spins = None
    terms = []
    for lineno, line in _strip_lines(text):
        tokens = line.split()
        if num_spins is None:
            if tokens[0] != "spins" or len(tokens) != 2:
                raise ParseError(f"line {lineno}: expected header 'spins N'")
            try:
                num_spins = int(tokens[1])
            except ValueError:
                raise ParseError(f"line {lineno}: bad spin count {tokens[1]!r}")
            continue
        try:
            coeff = float(tokens[0])
        except ValueError:
            raise ParseError(f"line {lineno}: bad coefficient {tokens[0]!r}")
        factors = []
        for tok in tokens[1:]:
            try:
                axis, site = tok.split("@")
                factors.append((int(site), axis))
            except ValueError:
                raise ParseError(f"line {lineno}: bad factor token {tok!r}")
        try:
            terms.append(PauliTerm(coeff, factors))
        except ValidationError as exc:
            raise ParseError(f"line {lineno}: {exc}")
    if num_spins is None:
        raise ParseError("missing 'spins N' header")
    try:
        return SpinHamiltonian(num_spins, terms).canonicalize()
    except ValidationError as exc:
        raise ParseError(str(exc))


def fermion_to_text(op: FermionOperator) -> str:
    """Serialize in the line format ``coeff +i -j ...`` (real coefficients)."""
    lines = [f"modes {op.num_modes}"]
    for coeff, mono in op.terms:
        if abs(coeff.imag) > 1e-12:
            raise ValidationError(
                "the fermionic interchange format only accepts real coefficients")
        parts = [repr(coeff.real)]
        parts.extend(("+" if d else "-") + str(m) for m, d in mono)
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def fermion_from_text(text: str) -> FermionOperator:
    num_modes = None
    terms = []
    for lineno, line in _strip_lines(text):
        tokens = line.split()
        if num_modes is None:
            if tokens[0] != "modes" or len(tokens) != 2:
                raise ParseError(f"line {lineno}: expected header 'modes M'")
            try:
                num_modes = int(tokens[1])
            except ValueError:
                raise ParseError(f"line {lineno}: bad mode count {tokens[1]!r}")
            continue
        try:
            coeff = float(tokens[0])
        except ValueError:
            raise ParseError(f"line {lineno}: bad coefficient {tokens[0]!r}")
        mono = []
        for tok in tokens[1:]:
            if len(tok) < 2 or tok[0] not in "+-":
                raise ParseError(f"line {lineno}: bad operator token {tok!r}")
            try:
                mono.append((int(tok[1:]), tok[0] == "+"))
            except ValueError:
                raise ParseError(f"line {lineno}: bad operator token {tok!r}")
        terms.append((coeff, tuple(mono)))
    if num_modes is None:
        raise ParseError("missing 'modes M' header")
    try:
        return FermionOperator(num_modes, terms)
    except ValidationError as exc:
        raise ParseError(str(exc))
