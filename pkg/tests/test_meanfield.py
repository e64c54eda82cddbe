"""Mean-field solver, Wick energies, and Ising embedding tests.

The energy oracle builds the determinant explicitly in the Fock sector
(amplitudes are minors of the orbital matrix, signs from the canonical
creation order) and evaluates the realized Hamiltonian on that vector, so
the Wick formula and the Fock matrix are tested against first principles.
"""

from itertools import combinations

import numpy as np
import pytest

from hamlower.errors import ParseError, ResourceLimitError, ValidationError
from hamlower.meanfield import (
    IsingInstance,
    SCFResult,
    SecondQuantizedHamiltonian,
    SlaterState,
    classical_energy,
    classical_state,
    decode_spins,
    default_penalty,
    embed_ising,
    exact_ground_energy,
    fermionic_operator,
    fock_matrix,
    grid_edges,
    grid_index,
    hartree_fock_energy,
    index_to_spins,
    ising_from_text,
    ising_oracle,
    ising_to_text,
    random_instance,
    scf_solve,
    second_quantized_from_text,
    second_quantized_to_text,
)
from hamlower.operators import (
    FockSector,
    _apply_monomial,
    realize_fermion,
)


def random_hamiltonian(rng, modes, real=False):
    h = rng.normal(size=(modes, modes))
    w = rng.normal(size=(modes,) * 4)
    if not real:
        h = h + 1j * rng.normal(size=(modes, modes))
        w = w + 1j * rng.normal(size=(modes,) * 4)
    h = (h + h.conj().T) / 2
    w = (w + w.conj().transpose(3, 2, 1, 0)) / 2
    return SecondQuantizedHamiltonian(h, w)


def random_state(rng, modes, particles):
    raw = rng.normal(size=(modes, particles)) + 1j * rng.normal(
        size=(modes, particles))
    q, _ = np.linalg.qr(raw)
    return SlaterState(q[:, :particles])


def determinant_vector(orbitals):
    """Explicit Fock-sector amplitudes of the determinant."""
    modes, particles = orbitals.shape
    sector = FockSector(modes, particles)
    vec = np.zeros(sector.dimension, dtype=complex)
    for chosen in combinations(range(modes), particles):
        mono = tuple((m, True) for m in chosen)
        sign, state = _apply_monomial(mono, 0, modes)
        if sign == 0:
            continue
        vec[sector.index[state]] += sign * np.linalg.det(orbitals[list(chosen), :])
    return sector, vec


def fock_space_energy(ham, state):
    sector, vec = determinant_vector(state.orbitals)
    matrix = realize_fermion(fermionic_operator(ham), sector)
    assert abs(np.linalg.norm(vec) - 1) < 1e-10
    return float((vec.conj() @ matrix @ vec).real)


class TestHamiltonianValidation:
    def test_rejects_non_hermitian_one_body(self):
        with pytest.raises(ValidationError):
            SecondQuantizedHamiltonian(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_rejects_bad_two_body_symmetry(self):
        w = np.zeros((2, 2, 2, 2))
        w[0, 1, 1, 0] = 1.0   # mirror (0,1,1,0) stays itself; break a pair
        w[0, 1, 0, 1] = 0.5
        with pytest.raises(ValidationError):
            SecondQuantizedHamiltonian(np.zeros((2, 2)), w)

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValidationError):
            SecondQuantizedHamiltonian(np.zeros((2, 3)))
        with pytest.raises(ValidationError):
            SecondQuantizedHamiltonian(np.zeros((2, 2)), np.zeros((3, 3, 3, 3)))

    def test_equality(self):
        a = SecondQuantizedHamiltonian(np.eye(2))
        b = SecondQuantizedHamiltonian(np.eye(2))
        assert a == b
        c = SecondQuantizedHamiltonian(2 * np.eye(2))
        assert a != c


class TestSlaterState:
    def test_orthonormality_enforced(self):
        with pytest.raises(ValidationError):
            SlaterState(np.array([[1.0, 1.0], [0.0, 0.0], [0.0, 0.0]]))

    def test_density_is_idempotent_projector(self):
        state = random_state(np.random.default_rng(3), 5, 2)
        d = state.density()
        assert np.abs(d @ d - d).max() < 1e-10
        assert np.trace(d).real == pytest.approx(2.0, abs=1e-10)
        assert state.num_modes == 5
        assert state.num_particles == 2

    def test_particle_count_bounds(self):
        with pytest.raises(ValidationError):
            SlaterState(np.zeros((3, 0)))


class TestWickEnergy:
    @pytest.mark.parametrize("seed,modes,particles", [
        (0, 4, 1), (1, 4, 2), (2, 5, 2), (3, 5, 3), (4, 6, 3),
    ])
    def test_matches_fock_space_expectation(self, seed, modes, particles):
        rng = np.random.default_rng(seed)
        ham = random_hamiltonian(rng, modes)
        state = random_state(rng, modes, particles)
        wick = hartree_fock_energy(ham, state)
        exact = fock_space_energy(ham, state)
        assert wick == pytest.approx(exact, abs=1e-10)

    def test_one_body_closed_form(self):
        h = np.diag([-2.0, -1.0, 1.0, 3.0])
        ham = SecondQuantizedHamiltonian(h)
        u = np.zeros((4, 2))
        u[0, 0] = u[2, 1] = 1.0
        assert hartree_fock_energy(ham, SlaterState(u)) == pytest.approx(-1.0)

    def test_gauge_invariance(self):
        rng = np.random.default_rng(9)
        ham = random_hamiltonian(rng, 5)
        state = random_state(rng, 5, 3)
        mix = np.linalg.qr(rng.normal(size=(3, 3))
                           + 1j * rng.normal(size=(3, 3)))[0]
        rotated = SlaterState(state.orbitals @ mix)
        assert hartree_fock_energy(ham, rotated) == pytest.approx(
            hartree_fock_energy(ham, state), abs=1e-10)

    def test_xc_matrix_contributes(self):
        rng = np.random.default_rng(11)
        ham = random_hamiltonian(rng, 4)
        state = random_state(rng, 4, 2)
        xc = np.diag([1.0, 2.0, 3.0, 4.0])
        shifted = SecondQuantizedHamiltonian(ham.one_body + xc, ham.two_body)
        assert hartree_fock_energy(ham, state, xc=xc) == pytest.approx(
            hartree_fock_energy(shifted, state), abs=1e-12)
        with pytest.raises(ValidationError):
            hartree_fock_energy(ham, state, xc=np.array([[0.0, 1.0], [0.0, 0.0]]))


class TestFockMatrix:
    def test_matches_numeric_gradient(self):
        rng = np.random.default_rng(5)
        ham = random_hamiltonian(rng, 5)
        density = random_state(rng, 5, 2).density()
        fock = fock_matrix(ham, density)
        eps = 1e-6
        for _ in range(8):
            direction = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
            direction = (direction + direction.conj().T) / 2
            plus = hartree_fock_energy(ham, density + eps * direction)
            minus = hartree_fock_energy(ham, density - eps * direction)
            numeric = (plus - minus) / (2 * eps)
            predicted = float(np.einsum("pq,qp->", fock, direction).real)
            assert numeric == pytest.approx(predicted, abs=1e-6)

    def test_hermitian_output(self):
        rng = np.random.default_rng(6)
        ham = random_hamiltonian(rng, 4)
        fock = fock_matrix(ham, random_state(rng, 4, 2).density())
        assert np.abs(fock - fock.conj().T).max() < 1e-12

    def test_free_case_returns_one_body(self):
        h = np.diag([1.0, 2.0, 3.0])
        ham = SecondQuantizedHamiltonian(h)
        fock = fock_matrix(ham, np.zeros((3, 3)))
        assert np.abs(fock - h).max() < 1e-14


class TestSCF:
    def test_non_interacting_converges_immediately(self):
        ham = SecondQuantizedHamiltonian(np.diag([-2.0, -1.0, 0.5, 2.0]))
        result = scf_solve(ham, 2, restarts=1)
        assert result.converged
        assert result.iterations == 1
        assert result.energy == pytest.approx(-3.0, abs=1e-12)

    @pytest.mark.parametrize("seed", range(6))
    def test_variational_bound(self, seed):
        rng = np.random.default_rng(100 + seed)
        ham = random_hamiltonian(rng, 5)
        result = scf_solve(ham, 2, restarts=6, seed=seed)
        exact = exact_ground_energy(ham, 2)
        assert result.energy >= exact - 1e-9

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(42)
        ham = random_hamiltonian(rng, 5)
        first = scf_solve(ham, 2, restarts=5, seed=7)
        second = scf_solve(ham, 2, restarts=5, seed=7)
        assert first.energy == second.energy
        assert first.restart == second.restart
        assert first.history == second.history

    def test_more_restarts_never_hurt(self):
        rng = np.random.default_rng(13)
        ham = random_hamiltonian(rng, 6)
        one = scf_solve(ham, 3, restarts=1, seed=0)
        many = scf_solve(ham, 3, restarts=10, seed=0)
        assert many.energy <= one.energy + 1e-12

    def test_non_convergence_is_reported_not_raised(self):
        rng = np.random.default_rng(17)
        ham = random_hamiltonian(rng, 5)
        result = scf_solve(ham, 2, restarts=2, max_iterations=1)
        assert isinstance(result, SCFResult)
        assert not result.converged

    def test_restart_accounting(self):
        ham = SecondQuantizedHamiltonian(np.diag([-1.0, 0.0, 1.0]))
        result = scf_solve(ham, 1, restarts=4)
        assert result.restarts_tried == 4
        assert 1 <= result.restarts_converged <= 4
        assert result.energy == pytest.approx(-1.0, abs=1e-10)

    def test_argument_validation(self):
        ham = SecondQuantizedHamiltonian(np.eye(3))
        with pytest.raises(ValidationError):
            scf_solve(ham, 0)
        with pytest.raises(ValidationError):
            scf_solve(ham, 4)
        with pytest.raises(ValidationError):
            scf_solve(ham, 1, restarts=0)
        with pytest.raises(ValidationError):
            scf_solve(ham, 1, max_iterations=0)
        with pytest.raises(ValidationError):
            scf_solve(ham, 1, damping=0.0)

    def test_exact_reference_guard(self):
        big = SecondQuantizedHamiltonian(np.eye(16))
        with pytest.raises(ResourceLimitError):
            exact_ground_energy(big, 8)


class TestSecondQuantizedText:
    def test_round_trip(self):
        rng = np.random.default_rng(21)
        ham = random_hamiltonian(rng, 4, real=True)
        text = second_quantized_to_text(ham)
        assert second_quantized_from_text(text) == ham

    def test_duplicate_records_accumulate(self):
        text = "modes 2\n1 0 0 1.5\n1 0 0 0.5\n"
        ham = second_quantized_from_text(text)
        assert ham.one_body[0, 0] == pytest.approx(2.0)

    def test_complex_instances_not_serializable(self):
        rng = np.random.default_rng(22)
        with pytest.raises(ValidationError):
            second_quantized_to_text(random_hamiltonian(rng, 3))

    def test_parse_errors(self):
        with pytest.raises(ParseError, match="modes"):
            second_quantized_from_text("1 0 0 1.0\n")
        with pytest.raises(ParseError, match="line 2"):
            second_quantized_from_text("modes 2\n1 0 1.0\n")
        with pytest.raises(ParseError, match="line 2"):
            second_quantized_from_text("modes 2\n1 0 5 1.0\n")
        with pytest.raises(ParseError, match="line 2"):
            second_quantized_from_text("modes 2\n2 0 0 0 0 x\n")

    def test_comments_ignored(self):
        text = "# instance\nmodes 2\n1 0 0 1.0  # diagonal\n1 1 1 1.0\n"
        ham = second_quantized_from_text(text)
        assert ham.one_body[1, 1] == pytest.approx(1.0)


class TestGrid:
    def test_index_layout(self):
        assert grid_index(0, 0, 0, 2) == 0
        assert grid_index(1, 0, 0, 2) == 1
        assert grid_index(0, 1, 0, 2) == 2
        assert grid_index(0, 0, 1, 2) == 4
        assert grid_index(2, 1, 1, 3) == 14

    @pytest.mark.parametrize("length,count", [(1, 1), (2, 12), (3, 33)])
    def test_edge_counts(self, length, count):
        edges = grid_edges(length)
        assert len(edges) == count
        assert len(set(edges)) == count
        for i, j in edges:
            assert i < j

    def test_edges_are_nearest_neighbor(self):
        length = 3
        for i, j in grid_edges(length):
            xi, yi, zi = i % length, (i // length) % length, i // (length * length)
            xj, yj, zj = j % length, (j // length) % length, j // (length * length)
            assert abs(xi - xj) + abs(yi - yj) + abs(zi - zj) == 1


class TestIsingInstance:
    def test_missing_bonds_default_to_zero(self):
        inst = IsingInstance(2, {(0, 1): 1})
        assert inst.couplings[(0, 1)] == 1
        assert sum(abs(v) for v in inst.couplings.values()) == 1
        assert inst.num_sites == 8

    def test_validation(self):
        with pytest.raises(ValidationError):
            IsingInstance(2, {(0, 3): 1})          # diagonal, not a bond
        with pytest.raises(ValidationError):
            IsingInstance(2, {(0, 1): 2})
        with pytest.raises(ValidationError):
            IsingInstance(0, {})
        with pytest.raises(ResourceLimitError):
            IsingInstance(4, {})

    def test_random_instance_deterministic(self):
        a = random_instance(2, 0)
        b = random_instance(2, 0)
        assert a == b
        assert random_instance(2, 1) != a
        assert all(v in (-1, 0, 1) for v in a.couplings.values())

    def test_text_round_trip(self):
        inst = random_instance(2, 3)
        assert ising_from_text(ising_to_text(inst)) == inst

    def test_text_parse_errors(self):
        with pytest.raises(ParseError, match="ising"):
            ising_from_text("grid 2\n")
        with pytest.raises(ParseError, match="line 2"):
            ising_from_text("ising 2\n0 1\n")
        with pytest.raises(ParseError):
            ising_from_text("ising 2\n0 1 1\n1 0 1\n")
        with pytest.raises(ParseError):
            ising_from_text("ising 2\n0 3 1\n")


class TestOracle:
    def test_single_antiferromagnetic_bond(self):
        inst = IsingInstance(1, {(0, 1): 1})
        oracle = ising_oracle(inst)
        assert oracle.energy == -1.0
        # Two-fold tie: the lower basis index flips the later site.
        assert oracle.index == 1
        assert oracle.spins == (1, -1)

    def test_single_ferromagnetic_bond_prefers_all_up(self):
        inst = IsingInstance(1, {(0, 1): -1})
        oracle = ising_oracle(inst)
        assert oracle.energy == -1.0
        assert oracle.index == 0
        assert oracle.spins == (1, 1)

    def test_oracle_matches_direct_recount(self):
        inst = random_instance(2, 5)
        oracle = ising_oracle(inst)
        best = None
        for idx in range(2 ** inst.num_sites):
            spins = index_to_spins(idx, inst.num_sites)
            energy = classical_energy(inst, spins)
            if best is None or energy < best[0]:
                best = (energy, idx)
        assert oracle.energy == best[0]
        assert oracle.index == best[1]

    def test_classical_energy_validation(self):
        inst = IsingInstance(1, {(0, 1): 1})
        with pytest.raises(ValidationError):
            classical_energy(inst, (1,))
        with pytest.raises(ValidationError):
            classical_energy(inst, (1, 0))


class TestEmbedding:
    def test_every_configuration_is_exact(self):
        inst = IsingInstance(1, {(0, 1): 1})
        emb = embed_ising(inst)
        for idx in range(4):
            spins = index_to_spins(idx, 2)
            wick = hartree_fock_energy(emb, classical_state(inst, spins))
            assert wick == pytest.approx(classical_energy(inst, spins), abs=1e-12)

    def test_penalty_floor(self):
        inst = random_instance(2, 0)
        floor = 4.0 * len(inst.nonzero_edges())
        with pytest.raises(ValidationError):
            embed_ising(inst, penalty=floor - 1)
        embed_ising(inst, penalty=floor)
        assert default_penalty(inst) >= floor

    def test_double_occupancy_costs_the_penalty(self):
        inst = IsingInstance(1, {(0, 1): 1})
        emb = embed_ising(inst, penalty=10.0)
        orbitals = np.zeros((4, 2))
        orbitals[0, 0] = orbitals[1, 1] = 1.0   # both particles on site 0
        energy = hartree_fock_energy(emb, SlaterState(orbitals))
        assert energy == pytest.approx(10.0, abs=1e-12)

    def test_decode_round_trip(self):
        inst = IsingInstance(1, {(0, 1): -1})
        for idx in range(4):
            spins = index_to_spins(idx, 2)
            assert decode_spins(inst, classical_state(inst, spins)) == spins

    def test_scf_reaches_the_oracle_after_decoding(self):
        inst = IsingInstance(1, {(0, 1): 1})
        emb = embed_ising(inst)
        oracle = ising_oracle(inst)
        result = scf_solve(emb, inst.num_sites, restarts=4, seed=0)
        decoded = decode_spins(inst, result.state)
        assert classical_energy(inst, decoded) == oracle.energy
        assert result.energy >= oracle.energy - 1e-9
