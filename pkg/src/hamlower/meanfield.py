"""Slater-determinant mean-field solver and classical Ising embeddings.

A problem instance is a second-quantized Hamiltonian

    H = sum_ij h_ij a+_i a_j + (1/2) sum_ijkl w_ijkl a+_i a+_j a_k a_l

with Hermitian one-body part and two-body symmetry ``w_ijkl = conj(w_lkji)``.
The solver minimizes the Slater-determinant energy functional by damped
Roothaan iteration over several deterministic restarts and reports the best
determinant found; the result is variational, never below the exact ground
energy.

Density conventions: ``D = u @ u.conj().T`` so ``D[q, p] = <a+_p a_q>``.
The Wick energy and the Fock matrix (the energy gradient) follow from that
index order.

The Ising section builds L x L x 2 nearest-neighbor spin glasses with
couplings in {-1, 0, +1}, a brute-force oracle over all configurations, and
a fermionic embedding in which every classical spin configuration is a
Slater determinant with exactly the classical energy: site s holds modes
(2s, 2s+1), single occupancy is enforced by an on-site penalty, and the
coupling ``J sigma_i sigma_j`` becomes density-density terms with signs
``(-1)**(a+b)`` over the mode pairs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParseError, ResourceLimitError, ValidationError
from .operators import (
    FermionOperator,
    FockSector,
    _strip_lines,
    eig_hermitian,
    realize_fermion,
)

HERMITICITY_ATOL = 1e-10

# C(12, 6) = 924; larger sectors make dense exact references too slow.
MAX_EXACT_DIMENSION = 5000


class SecondQuantizedHamiltonian:
    """One- and two-body coefficient tensors with validated symmetry."""

    def __init__(self, one_body, two_body=None):
        one_body = np.asarray(one_body, dtype=complex)
        if one_body.ndim != 2 or one_body.shape[0] != one_body.shape[1]:
            raise ValidationError(f"one-body part must be square, got {one_body.shape}")
        m = one_body.shape[0]
        if m < 1:
            raise ValidationError("need at least one mode")
        scale = max(1.0, float(np.abs(one_body).max()))
        if np.abs(one_body - one_body.conj().T).max() > HERMITICITY_ATOL * scale:
            raise ValidationError("one-body part is not Hermitian")
        if two_body is None:
            two_body = np.zeros((m, m, m, m), dtype=complex)
        two_body = np.asarray(two_body, dtype=complex)
        if two_body.shape != (m, m, m, m):
            raise ValidationError(
                f"two-body part must have shape {(m,) * 4}, got {two_body.shape}")
        scale2 = max(1.0, float(np.abs(two_body).max()))
        mirror = two_body.conj().transpose(3, 2, 1, 0)
        if np.abs(two_body - mirror).max() > HERMITICITY_ATOL * scale2:
            raise ValidationError(
                "two-body part violates w[i,j,k,l] == conj(w[l,k,j,i])")
        self.one_body = one_body
        self.two_body = two_body

    @property
    def num_modes(self) -> int:
        return self.one_body.shape[0]

    def __eq__(self, other):
        if not isinstance(other, SecondQuantizedHamiltonian):
            return NotImplemented
        return (np.array_equal(self.one_body, other.one_body)
                and np.array_equal(self.two_body, other.two_body))

    def __repr__(self):
        return f"SecondQuantizedHamiltonian(modes={self.num_modes})"


def fermionic_operator(ham: SecondQuantizedHamiltonian) -> FermionOperator:
    """Expand the coefficient tensors into an explicit operator."""
    m = ham.num_modes
    terms = []
    for i in range(m):
        for j in range(m):
            c = ham.one_body[i, j]
            if c != 0:
                terms.append((c, ((i, True), (j, False))))
    for i in range(m):
        for j in range(m):
            for k in range(m):
                for l in range(m):
                    c = ham.two_body[i, j, k, l]
                    if c != 0:
                        terms.append(
                            (0.5 * c,
                             ((i, True), (j, True), (k, False), (l, False))))
    return FermionOperator(m, terms).normal_order()


def exact_ground_energy(ham: SecondQuantizedHamiltonian, num_particles: int) -> float:
    """Lowest eigenvalue in the fixed-particle-number sector."""
    sector = FockSector(ham.num_modes, num_particles)
    if sector.dimension > MAX_EXACT_DIMENSION:
        raise ResourceLimitError(
            f"sector dimension {sector.dimension} exceeds the exact cap "
            f"{MAX_EXACT_DIMENSION}")
    matrix = realize_fermion(fermionic_operator(ham), sector)
    return float(eig_hermitian(matrix).values[0])


class SlaterState:
    """Orthonormal orbital coefficients of one determinant (modes x particles)."""

    def __init__(self, orbitals):
        orbitals = np.asarray(orbitals, dtype=complex)
        if orbitals.ndim != 2:
            raise ValidationError("orbitals must be a 2d array")
        m, n = orbitals.shape
        if not 1 <= n <= m:
            raise ValidationError(
                f"need between 1 and {m} occupied orbitals, got {n}")
        gram = orbitals.conj().T @ orbitals
        if np.abs(gram - np.eye(n)).max() > HERMITICITY_ATOL:
            raise ValidationError("orbitals are not orthonormal")
        self.orbitals = orbitals

    @property
    def num_modes(self) -> int:
        return self.orbitals.shape[0]

    @property
    def num_particles(self) -> int:
        return self.orbitals.shape[1]

    def density(self) -> np.ndarray:
        return self.orbitals @ self.orbitals.conj().T


def _one_body_total(ham, xc):
    h = ham.one_body
    if xc is None:
        return h
    xc = np.asarray(xc, dtype=complex)
    if xc.shape != h.shape:
        raise ValidationError(f"xc matrix must have shape {h.shape}")
    scale = max(1.0, float(np.abs(xc).max()))
    if np.abs(xc - xc.conj().T).max() > HERMITICITY_ATOL * scale:
        raise ValidationError("xc matrix is not Hermitian")
    return h + xc


def hartree_fock_energy(ham: SecondQuantizedHamiltonian, state, xc=None) -> float:
    """Wick expectation of the Hamiltonian in one determinant."""
    density = state.density() if isinstance(state, SlaterState) else np.asarray(state)
    h = _one_body_total(ham, xc)
    w = ham.two_body
    e_one = np.einsum("ij,ji->", h, density)
    direct = np.einsum("ijkl,li,kj->", w, density, density)
    exchange = np.einsum("ijkl,ki,lj->", w, density, density)
    total = e_one + 0.5 * (direct - exchange)
    if abs(total.imag) > 1e-8 * max(1.0, abs(total)):
        raise ValidationError("energy came out complex; check tensor symmetry")
    return float(total.real)


def fock_matrix(ham: SecondQuantizedHamiltonian, density, xc=None) -> np.ndarray:
    """Gradient of the energy functional with respect to the density."""
    density = np.asarray(density)
    w = ham.two_body
    f = _one_body_total(ham, xc).astype(complex).copy()
    f += 0.5 * (np.einsum("pjkq,kj->pq", w, density)
                + np.einsum("ipql,li->pq", w, density)
                - np.einsum("pjql,lj->pq", w, density)
                - np.einsum("ipkq,ki->pq", w, density))
    return 0.5 * (f + f.conj().T)


@dataclass
class SCFResult:
    """Best determinant over all restarts, with convergence bookkeeping."""

    state: SlaterState
    energy: float
    converged: bool
    iterations: int
    restart: int
    restarts_tried: int
    restarts_converged: int
    history: tuple


def _haar_orbitals(rng, num_modes, num_particles):
    raw = rng.normal(size=(num_modes, num_particles)) \
        + 1j * rng.normal(size=(num_modes, num_particles))
    q, r = np.linalg.qr(raw)
    # Fix the phase gauge so the factorization is unique.
    q = q * np.sign(np.where(np.diag(r) == 0, 1, np.diag(r)))
    return q[:, :num_particles]


def scf_solve(ham: SecondQuantizedHamiltonian, num_particles: int, *,
              restarts: int = 16, seed: int = 0, max_iterations: int = 500,
              tolerance: float = 1e-8, damping: float = 0.5,
              xc=None) -> SCFResult:
    """Damped Roothaan iteration from several deterministic starting points.

    Restart 0 occupies the lowest orbitals of the one-body part; the others
    are seeded Haar-random frames.  Each restart iterates
    diagonalize-occupy-mix until the raw density update falls below
    ``tolerance`` in Frobenius norm.  The reported result minimizes
    (energy, restart index); non-convergence is reported, never raised.
    """
    m = ham.num_modes
    if not 1 <= num_particles <= m:
        raise ValidationError(
            f"particle number must lie in [1, {m}], got {num_particles}")
    if restarts < 1:
        raise ValidationError("need at least one restart")
    if max_iterations < 1:
        raise ValidationError("need at least one iteration")
    if not 0 < damping <= 1:
        raise ValidationError("damping must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    h_tot = _one_body_total(ham, xc)
    # One (m^2, m^2) kernel turns every Fock build and energy evaluation in
    # the iteration loop into a single small matrix product; the column
    # pairs match the density indices contracted in fock_matrix.
    w = ham.two_body
    kernel = 0.5 * (np.einsum("pjkq->pqkj", w) + np.einsum("ipql->pqli", w)
                    - np.einsum("pjql->pqlj", w)
                    - np.einsum("ipkq->pqki", w)).reshape(m * m, m * m)

    def interaction(density):
        return (kernel @ density.reshape(-1)).reshape(m, m)

    best = None
    converged_count = 0
    for attempt in range(restarts):
        if attempt == 0:
            u = eig_hermitian(h_tot).vectors[:, :num_particles]
        else:
            u = _haar_orbitals(rng, m, num_particles)
        density = u @ u.conj().T
        converged = False
        history = []
        iterations = 0
        for iterations in range(1, max_iterations + 1):
            f = h_tot + interaction(density)
            f = 0.5 * (f + f.conj().T)
            u = eig_hermitian(f).vectors[:, :num_particles]
            fresh = u @ u.conj().T
            step = float(np.linalg.norm(fresh - density))
            density = density + damping * (fresh - density)
            # The functional is quadratic, so tr((h + F_int/2) D) is the
            # Wick energy of the fresh determinant.
            value = np.trace((h_tot + 0.5 * interaction(fresh)) @ fresh)
            history.append(float(value.real))
            if step <= tolerance:
                converged = True
                break
        state = SlaterState(u)
        energy = hartree_fock_energy(ham, state, xc)
        converged_count += converged
        candidate = (energy, attempt, state, converged, iterations, tuple(history))
        if best is None or candidate[:2] < best[:2]:
            best = candidate
    energy, attempt, state, converged, iterations, history = best
    return SCFResult(state, energy, converged, iterations, attempt,
                     restarts, converged_count, history)


# ---------------------------------------------------------------------------
# Second-quantized interchange format
# ---------------------------------------------------------------------------


def second_quantized_to_text(ham: SecondQuantizedHamiltonian) -> str:
    """Lines ``1 i j value`` and ``2 i j k l value`` under a mode header.

    The format carries real coefficients only.
    """
    if (np.abs(ham.one_body.imag).max() > 1e-12
            or np.abs(ham.two_body.imag).max() > 1e-12):
        raise ValidationError(
            "the interchange format only accepts real coefficients")
    m = ham.num_modes
    lines = [f"modes {m}"]
    for i in range(m):
        for j in range(m):
            value = float(ham.one_body[i, j].real)
            if value != 0.0:
                lines.append(f"1 {i} {j} {value!r}")
    for index in np.ndindex(m, m, m, m):
        value = float(ham.two_body[index].real)
        if value != 0.0:
            i, j, k, l = index
            lines.append(f"2 {i} {j} {k} {l} {value!r}")
    return "\n".join(lines) + "\n"


def second_quantized_from_text(text: str) -> SecondQuantizedHamiltonian:
    num_modes = None
    one = None
    two = None
    for lineno, line in _strip_lines(text):
        tokens = line.split()
        if num_modes is None:
            if tokens[0] != "modes" or len(tokens) != 2:
                raise ParseError(f"line {lineno}: expected header 'modes M'")
            try:
                num_modes = int(tokens[1])
            except ValueError:
                raise ParseError(f"line {lineno}: bad mode count {tokens[1]!r}")
            if num_modes < 1:
                raise ParseError(f"line {lineno}: need at least one mode")
            one = np.zeros((num_modes, num_modes))
            two = np.zeros((num_modes,) * 4)
            continue
        kind = tokens[0]
        if kind == "1" and len(tokens) == 4:
            indices, value_tok = tokens[1:3], tokens[3]
            target = one
        elif kind == "2" and len(tokens) == 6:
            indices, value_tok = tokens[1:5], tokens[5]
            target = two
        else:
            raise ParseError(f"line {lineno}: expected '1 i j v' or '2 i j k l v'")
        try:
            indices = tuple(int(tok) for tok in indices)
            value = float(value_tok)
        except ValueError:
            raise ParseError(f"line {lineno}: bad record {line!r}")
        if any(not 0 <= ix < num_modes for ix in indices):
            raise ParseError(f"line {lineno}: mode index outside [0, {num_modes})")
        target[indices] += value
    if num_modes is None:
        raise ParseError("missing 'modes M' header")
    try:
        return SecondQuantizedHamiltonian(one, two)
    except ValidationError as exc:
        raise ParseError(f"inconsistent coefficients: {exc}")


# ---------------------------------------------------------------------------
# Ising spin glasses on an L x L x 2 grid
# ---------------------------------------------------------------------------

MAX_GRID_LENGTH = 3


def grid_index(x: int, y: int, z: int, length: int) -> int:
    return z * length * length + y * length + x


def grid_edges(length: int):
    """All nearest-neighbor pairs (i < j), in deterministic scan order."""
    edges = []
    for z in (0, 1):
        for y in range(length):
            for x in range(length):
                here = grid_index(x, y, z, length)
                if x + 1 < length:
                    edges.append((here, grid_index(x + 1, y, z, length)))
                if y + 1 < length:
                    edges.append((here, grid_index(x, y + 1, z, length)))
                if z == 0:
                    edges.append((here, grid_index(x, y, 1, length)))
    return tuple(tuple(sorted(e)) for e in edges)


class IsingInstance:
    """Couplings in {-1, 0, +1} on the nearest-neighbor bonds of the grid."""

    def __init__(self, length: int, couplings):
        length = int(length)
        if length < 1:
            raise ValidationError("grid length must be positive")
        if length > MAX_GRID_LENGTH:
            raise ResourceLimitError(
                f"grids beyond length {MAX_GRID_LENGTH} exceed exact enumeration")
        allowed = set(grid_edges(length))
        table = {}
        for edge, value in dict(couplings).items():
            i, j = sorted((int(edge[0]), int(edge[1])))
            if (i, j) not in allowed:
                raise ValidationError(
                    f"({i}, {j}) is not a nearest-neighbor bond of the grid")
            if (i, j) in table:
                raise ValidationError(f"bond ({i}, {j}) listed twice")
            value = int(value)
            if value not in (-1, 0, 1):
                raise ValidationError(
                    f"coupling on ({i}, {j}) must be -1, 0, or +1, got {value}")
            table[(i, j)] = value
        self.length = length
        self.couplings = {edge: table.get(edge, 0) for edge in grid_edges(length)}

    @property
    def num_sites(self) -> int:
        return 2 * self.length * self.length

    def nonzero_edges(self):
        return tuple((i, j, v) for (i, j), v in self.couplings.items() if v != 0)

    def __eq__(self, other):
        if not isinstance(other, IsingInstance):
            return NotImplemented
        return self.length == other.length and self.couplings == other.couplings


def random_instance(length: int, seed: int) -> IsingInstance:
    rng = np.random.default_rng(seed)
    edges = grid_edges(length)
    values = rng.integers(-1, 2, size=len(edges))
    return IsingInstance(length, dict(zip(edges, (int(v) for v in values))))


def ising_to_text(instance: IsingInstance) -> str:
    lines = [f"ising {instance.length}"]
    for i, j, value in instance.nonzero_edges():
        lines.append(f"{i} {j} {value}")
    return "\n".join(lines) + "\n"


def ising_from_text(text: str) -> IsingInstance:
    length = None
    couplings = {}
    for lineno, line in _strip_lines(text):
        tokens = line.split()
        if length is None:
            if tokens[0] != "ising" or len(tokens) != 2:
                raise ParseError(f"line {lineno}: expected header 'ising L'")
            try:
                length = int(tokens[1])
            except ValueError:
                raise ParseError(f"line {lineno}: bad grid length {tokens[1]!r}")
            continue
        if len(tokens) != 3:
            raise ParseError(f"line {lineno}: expected 'i j J'")
        try:
            i, j, value = int(tokens[0]), int(tokens[1]), int(tokens[2])
        except ValueError:
            raise ParseError(f"line {lineno}: bad bond record {line!r}")
        if (min(i, j), max(i, j)) in couplings:
            raise ParseError(f"line {lineno}: bond ({i}, {j}) listed twice")
        couplings[(min(i, j), max(i, j))] = value
    if length is None:
        raise ParseError("missing 'ising L' header")
    try:
        return IsingInstance(length, couplings)
    except ValidationError as exc:
        raise ParseError(f"bad instance: {exc}")


def index_to_spins(index: int, num_sites: int):
    """Configuration from a basis index; bit 0 means spin up (+1), site 0
    is the most significant bit."""
    return tuple(1 - 2 * ((index >> (num_sites - 1 - s)) & 1)
                 for s in range(num_sites))


def classical_energy(instance: IsingInstance, spins) -> float:
    spins = tuple(int(s) for s in spins)
    if len(spins) != instance.num_sites or any(s not in (-1, 1) for s in spins):
        raise ValidationError(
            f"need {instance.num_sites} spins valued +-1, got {spins}")
    return float(sum(v * spins[i] * spins[j]
                     for (i, j), v in instance.couplings.items()))


@dataclass(frozen=True)
class IsingOracle:
    """Exhaustive minimum over all configurations."""

    energy: float
    spins: tuple
    index: int


def ising_oracle(instance: IsingInstance) -> IsingOracle:
    """Vectorized enumeration of all 2^sites configurations.

    Ties break toward the lowest basis index, i.e. the configuration with
    the most leading up spins.
    """
    n = instance.num_sites
    indices = np.arange(2 ** n, dtype=np.int64)
    sign = [1 - 2 * ((indices >> (n - 1 - s)) & 1) for s in range(n)]
    energies = np.zeros(2 ** n)
    for (i, j), value in instance.couplings.items():
        if value != 0:
            energies += value * (sign[i] * sign[j])
    best = int(np.argmin(energies))
    return IsingOracle(float(energies[best]), index_to_spins(best, n), best)


def default_penalty(instance: IsingInstance) -> float:
    return 10.0 * max(1, len(instance.nonzero_edges()))


def embed_ising(instance: IsingInstance, penalty=None) -> SecondQuantizedHamiltonian:
    """Fermionic encoding whose determinants reproduce classical energies.

    Site s maps to modes (2s, 2s+1); occupying the even mode means spin up.
    With one particle per site the on-site penalty contributes nothing and
    the density-density couplings reproduce ``J sigma_i sigma_j`` exactly.
    The penalty must dominate the couplings: at least four per nonzero bond.
    """
    if penalty is None:
        penalty = default_penalty(instance)
    penalty = float(penalty)
    floor = 4.0 * len(instance.nonzero_edges())
    if penalty <= 0 or penalty < floor:
        raise ValidationError(
            f"penalty {penalty} is below the dominance floor {max(floor, 0.0)}")
    m = 2 * instance.num_sites
    two = np.zeros((m, m, m, m))

    def add_density_pair(p, q, value):
        two[p, q, q, p] += value
        two[q, p, p, q] += value

    for site in range(instance.num_sites):
        add_density_pair(2 * site, 2 * site + 1, penalty)
    for (i, j), value in instance.couplings.items():
        if value == 0:
            continue
        for a in (0, 1):
            for b in (0, 1):
                add_density_pair(2 * i + a, 2 * j + b, value * (-1) ** (a + b))
    return SecondQuantizedHamiltonian(np.zeros((m, m)), two)


def classical_state(instance: IsingInstance, spins) -> SlaterState:
    """The determinant encoding one classical configuration."""
    spins = tuple(int(s) for s in spins)
    if len(spins) != instance.num_sites or any(s not in (-1, 1) for s in spins):
        raise ValidationError(
            f"need {instance.num_sites} spins valued +-1, got {spins}")
    m = 2 * instance.num_sites
    orbitals = np.zeros((m, instance.num_sites))
    for site, spin in enumerate(spins):
        orbitals[2 * site + (0 if spin == 1 else 1), site] = 1.0
    return SlaterState(orbitals)


def decode_spins(instance: IsingInstance, state: SlaterState):
    """Round a determinant's site densities back to classical spins."""
    density = np.diag(state.density()).real
    return tuple(1 if density[2 * s] >= density[2 * s + 1] else -1
                 for s in range(instance.num_sites))
