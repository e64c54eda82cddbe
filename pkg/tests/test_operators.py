"""Operator core: realizations, algebra, sectors, and text round-trips."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hamlower.errors import ParseError, ResourceLimitError, ValidationError
from hamlower.operators import (
    AXES,
    PAULI_MATRICES,
    FermionOperator,
    FockSector,
    PauliTerm,
    SpinHamiltonian,
    apply_spin,
    dense_spin_limit,
    eig_hermitian,
    fermion_from_monomial,
    fermion_from_text,
    fermion_to_text,
    jordan_map_spin_to_fermion,
    low_spectrum,
    multiply_factor_tuples,
    pauli_product,
    realize_fermion,
    realize_spin,
    singly_occupied_projector,
    spin_from_text,
    spin_to_text,
)


def kron_realize(h: SpinHamiltonian) -> np.ndarray:
    """Independent oracle: literal kron chain, site 0 leftmost."""
    dim = 2 ** h.num_spins
    out = np.zeros((dim, dim), dtype=complex)
    for term in h.terms:
        axes = {site: axis for site, axis in term.factors}
        m = np.array([[term.coefficient]], dtype=complex)
        for site in range(h.num_spins):
            m = np.kron(m, PAULI_MATRICES[axes.get(site, "I")])
        out += m
    return out


@st.composite
def spin_hamiltonians(draw, max_spins=4):
    n = draw(st.integers(1, max_spins))
    num_terms = draw(st.integers(0, 5))
    terms = []
    for _ in range(num_terms):
        sites = draw(st.sets(st.integers(0, n - 1), min_size=0, max_size=n))
        factors = [(s, draw(st.sampled_from(AXES))) for s in sorted(sites)]
        coeff = draw(st.floats(-3, 3, allow_nan=False, width=32))
        terms.append(PauliTerm(coeff, factors))
    return SpinHamiltonian(n, terms)


class TestRealizeSpin:
    def test_z_on_first_of_two_spins(self):
        h = SpinHamiltonian(2, [PauliTerm(1.0, [(0, "Z")])])
        assert np.allclose(realize_spin(h), np.diag([1.0, 1.0, -1.0, -1.0]))

    def test_x_on_second_of_two_spins(self):
        h = SpinHamiltonian(2, [PauliTerm(1.0, [(1, "X")])])
        expected = np.kron(np.eye(2), PAULI_MATRICES["X"])
        assert np.allclose(realize_spin(h), expected)

    def test_heisenberg_pair_spectrum(self):
        terms = [PauliTerm(1.0, [(0, a), (1, a)]) for a in AXES]
        h = SpinHamiltonian(2, terms)
        vals = eig_hermitian(realize_spin(h)).values
        assert np.allclose(vals, [-3.0, 1.0, 1.0, 1.0])

    def test_y_phases(self):
        h = SpinHamiltonian(1, [PauliTerm(1.0, [(0, "Y")])])
        assert np.allclose(realize_spin(h), PAULI_MATRICES["Y"])

    @settings(max_examples=60, deadline=None)
    @given(spin_hamiltonians())
    def test_matches_kron_oracle(self, h):
        assert np.allclose(realize_spin(h), kron_realize(h), atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(spin_hamiltonians(max_spins=3))
    def test_hermitian(self, h):
        m = realize_spin(h)
        assert np.allclose(m, m.conj().T)

    def test_embedding_in_larger_register(self):
        h = SpinHamiltonian(1, [PauliTerm(2.0, [(0, "Z")])])
        m = realize_spin(h, num_spins=2)
        assert np.allclose(m, np.diag([2.0, 2.0, -2.0, -2.0]))

    def test_dense_limit_enforced(self, monkeypatch):
        monkeypatch.setenv("HAMLOWER_DENSE_LIMIT", "3")
        assert dense_spin_limit() == 3
        h = SpinHamiltonian(4, [PauliTerm(1.0, [(0, "Z")])])
        with pytest.raises(ResourceLimitError):
            realize_spin(h)

    def test_dense_limit_env_validation(self, monkeypatch):
        monkeypatch.setenv("HAMLOWER_DENSE_LIMIT", "zero")
        with pytest.raises(ValidationError):
            dense_spin_limit()


class TestApplySpin:
    @settings(max_examples=40, deadline=None)
    @given(spin_hamiltonians(max_spins=3), st.integers(0, 2 ** 31 - 1))
    def test_matches_dense_matvec(self, h, seed):
        rng = np.random.default_rng(seed)
        dim = 2 ** h.num_spins
        vec = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        assert np.allclose(apply_spin(h, vec), realize_spin(h) @ vec, atol=1e-10)

    def test_dimension_check(self):
        h = SpinHamiltonian(2, [PauliTerm(1.0, [(0, "Z")])])
        with pytest.raises(ValidationError):
            apply_spin(h, np.zeros(3))


class TestLowSpectrum:
    def test_dense_path(self):
        terms = [PauliTerm(1.0, [(0, a), (1, a)]) for a in AXES]
        h = SpinHamiltonian(2, terms)
        assert np.allclose(low_spectrum(h, 2), [-3.0, 1.0])

    def test_iterative_path_agrees(self, monkeypatch):
        terms = [PauliTerm(1.0, [(i, a), (i + 1, a)])
                 for i in range(3) for a in AXES]
        terms += [PauliTerm(0.3, [(i, "Z")]) for i in range(4)]
        h = SpinHamiltonian(4, terms)
        dense = low_spectrum(h, 3)
        monkeypatch.setenv("HAMLOWER_DENSE_LIMIT", "3")
        lanczos = low_spectrum(h, 3)
        assert np.allclose(dense, lanczos, atol=1e-8)


class TestPauliAlgebra:
    def test_product_table(self):
        assert pauli_product("X", "Y") == (1.0j, "Z")
        assert pauli_product("Y", "X") == (-1.0j, "Z")
        assert pauli_product("Z", "Z") == (1.0 + 0.0j, "I")
        assert pauli_product("I", "Y") == (1.0 + 0.0j, "Y")

    @settings(max_examples=60, deadline=None)
    @given(st.data())
    def test_factor_product_matches_matrices(self, data):
        n = data.draw(st.integers(1, 3))

        def draw_factors():
            sites = data.draw(st.sets(st.integers(0, n - 1)))
            return tuple((s, data.draw(st.sampled_from(AXES))) for s in sorted(sites))

        f1, f2 = draw_factors(), draw_factors()
        phase, prod = multiply_factor_tuples(f1, f2)
        m1 = kron_realize(SpinHamiltonian(n, [PauliTerm(1.0, f1)]))
        m2 = kron_realize(SpinHamiltonian(n, [PauliTerm(1.0, f2)]))
        mp = kron_realize(SpinHamiltonian(n, [PauliTerm(1.0, prod)]))
        assert np.allclose(m1 @ m2, phase * mp, atol=1e-12)

    def test_term_validation(self):
        with pytest.raises(ValidationError):
            PauliTerm(1.0, [(0, "X"), (0, "Y")])
        with pytest.raises(ValidationError):
            PauliTerm(1.0, [(0, "Q")])
        with pytest.raises(ValidationError):
            PauliTerm(float("nan"), [])
        with pytest.raises(ValidationError):
            PauliTerm(1.0 + 0.5j, [])

    def test_canonicalize_merges_and_sorts(self):
        h = SpinHamiltonian(2, [
            PauliTerm(1.0, [(1, "X"), (0, "Z")]),
            PauliTerm(0.5, [(0, "Z"), (1, "X")]),
            PauliTerm(2.0, [(0, "Y")]),
            PauliTerm(1e-15, [(1, "Z")]),
        ]).canonicalize()
        assert h.terms == (
            PauliTerm(2.0, [(0, "Y")]),
            PauliTerm(1.5, [(0, "Z"), (1, "X")]),
        )

    def test_addition_cancels(self):
        a = SpinHamiltonian(1, [PauliTerm(1.0, [(0, "X")])])
        b = SpinHamiltonian(1, [PauliTerm(-1.0, [(0, "X")])])
        assert (a + b).terms == ()


class TestFockSector:
    def test_half_filled_two_modes_order(self):
        sector = FockSector(2, 1)
        assert [sector.state_label(s) for s in sector.states] == ["10", "01"]

    def test_half_filled_four_modes_order(self):
        sector = FockSector(4, 2)
        labels = [sector.state_label(s) for s in sector.states]
        assert labels == ["1100", "1010", "1001", "0110", "0101", "0011"]

    def test_dimension(self):
        assert FockSector(6, 3).dimension == 20

    def test_validation(self):
        with pytest.raises(ValidationError):
            FockSector(2, 3)


class TestRealizeFermion:
    def test_number_operator(self):
        n0 = fermion_from_monomial(2, 1.0, [(0, True), (0, False)])
        sector = FockSector(2, 1)
        assert np.allclose(realize_fermion(n0, sector), np.diag([1.0, 0.0]))

    def test_hopping_is_symmetric(self):
        hop = fermion_from_monomial(2, 1.0, [(0, True), (1, False)])
        hop = hop + hop.dagger()
        sector = FockSector(2, 1)
        assert np.allclose(realize_fermion(hop, sector),
                           np.array([[0.0, 1.0], [1.0, 0.0]]))

    def test_anticommutation_relations(self):
        num_modes = 3
        # a_m changes particle number, so realize on the full Fock space
        mats = {}
        for m in range(num_modes):
            a_m = fermion_from_monomial(num_modes, 1.0, [(m, False)])
            mats[m] = _full_fock_matrix(a_m, num_modes)
        for p in range(num_modes):
            for q in range(num_modes):
                ap, aq = mats[p], mats[q]
                acc = ap @ aq + aq @ ap
                assert np.allclose(acc, 0.0, atol=1e-12)
                acc2 = ap @ aq.conj().T + aq.conj().T @ ap
                expected = np.eye(2 ** num_modes) if p == q else 0.0
                assert np.allclose(acc2, expected, atol=1e-12)

    def test_jw_sign_across_occupied_mode(self):
        # a+_2 on |100> passes one occupied mode (mode 0): sign -1
        op = fermion_from_monomial(3, 1.0, [(2, True)])
        m = _full_fock_matrix(op, 3)
        # |100> has bits 0b100 = 4, |101> = 5 in mode-0-leftmost encoding
        assert m[_fock_index(5, 3), _fock_index(4, 3)] == -1.0

    def test_normal_order_contraction(self):
        # a_0 a+_0 = 1 - a+_0 a_0
        op = FermionOperator(1, [(1.0, ((0, False), (0, True)))]).normal_order()
        assert op.terms == ((1.0 + 0.0j, ()),
                            (-1.0 + 0.0j, ((0, True), (0, False))))

    def test_normal_order_preserves_matrix(self):
        rng = np.random.default_rng(7)
        terms = []
        for _ in range(5):
            mono = tuple((int(rng.integers(0, 3)), bool(rng.integers(0, 2)))
                         for _ in range(int(rng.integers(1, 4))))
            terms.append((complex(rng.standard_normal()), mono))
        op = FermionOperator(3, terms)
        before = _full_fock_matrix(op, 3)
        after = _full_fock_matrix(op.normal_order(), 3)
        assert np.allclose(before, after, atol=1e-12)

    def test_nilpotency(self):
        op = FermionOperator(2, [(1.0, ((0, True), (0, True)))]).normal_order()
        assert op.terms == ()


def _fock_index(state: int, num_modes: int) -> int:
    """Position of a basis integer in the particle-number-blocked full space."""
    offset = 0
    n = state.bit_count()
    for k in range(n):
        offset += len(FockSector(num_modes, k).states)
    return offset + FockSector(num_modes, n).index[state]


def _full_fock_matrix(op: FermionOperator, num_modes: int) -> np.ndarray:
    """Dense matrix on the whole Fock space, sectors stacked by particle count."""
    from hamlower.operators import _apply_monomial

    dim = 2 ** num_modes
    out = np.zeros((dim, dim), dtype=complex)
    states = [s for k in range(num_modes + 1)
              for s in FockSector(num_modes, k).states]
    index = {s: i for i, s in enumerate(states)}
    for coeff, mono in op.terms:
        for state in states:
            sign, new_state = _apply_monomial(mono, state, num_modes)
            if new_state is None:
                continue
            out[index[new_state], index[state]] += coeff * sign
    return out


class TestSpinFermionMap:
    @pytest.mark.parametrize("axis", AXES)
    def test_single_site_image(self, axis):
        term = PauliTerm(1.0, [(0, axis)])
        op = jordan_map_spin_to_fermion(term, num_sites=1)
        sector = FockSector(2, 1)
        assert np.allclose(realize_fermion(op, sector), PAULI_MATRICES[axis])

    def test_two_site_string_image(self):
        term = PauliTerm(0.7, [(0, "X"), (1, "Y")])
        op = jordan_map_spin_to_fermion(term, num_sites=2)
        sector = FockSector(4, 2)
        proj = singly_occupied_projector(sector, num_sites=2)
        got = proj.T @ realize_fermion(op, sector) @ proj
        want = kron_realize(SpinHamiltonian(2, [term]))
        assert np.allclose(got, want, atol=1e-12)

    def test_zz_image(self):
        term = PauliTerm(1.0, [(0, "Z"), (1, "Z")])
        op = jordan_map_spin_to_fermion(term, num_sites=2)
        sector = FockSector(4, 2)
        proj = singly_occupied_projector(sector, num_sites=2)
        got = proj.T @ realize_fermion(op, sector) @ proj
        assert np.allclose(got, np.diag([1.0, -1.0, -1.0, 1.0]), atol=1e-12)

    def test_projector_shape(self):
        sector = FockSector(4, 2)
        proj = singly_occupied_projector(sector, num_sites=2)
        assert proj.shape == (6, 4)
        assert np.allclose(proj.T @ proj, np.eye(4))


class TestTextFormats:
    def test_spin_round_trip(self):
        h = SpinHamiltonian(3, [
            PauliTerm(0.5, [(0, "X"), (2, "Y")]),
            PauliTerm(-1.25, [(1, "Z")]),
        ])
        assert spin_from_text(spin_to_text(h)) == h

    def test_spin_parse_errors_carry_line_numbers(self):
        with pytest.raises(ParseError, match="line 2"):
            spin_from_text("spins 2\n1.0 Q@0\n")
        with pytest.raises(ParseError, match="line 1"):
            spin_from_text("nonsense\n")
        with pytest.raises(ParseError):
            spin_from_text("")

    def test_spin_comments_and_blank_lines(self):
        text = "# a comment\nspins 1\n\n1.0 Z@0  # trailing\n"
        h = spin_from_text(text)
        assert h.terms == (PauliTerm(1.0, [(0, "Z")]),)

    def test_fermion_round_trip(self):
        op = FermionOperator(3, [
            (1.5, ((0, True), (1, False))),
            (-2.0, ((2, True), (2, False))),
        ])
        back = fermion_from_text(fermion_to_text(op))
        assert back.terms == op.terms

    def test_fermion_rejects_complex(self):
        op = FermionOperator(1, [(1.0j, ((0, True), (0, False)))])
        with pytest.raises(ValidationError):
            fermion_to_text(op)

    def test_fermion_parse_errors(self):
        with pytest.raises(ParseError, match="line 2"):
            fermion_from_text("modes 2\n1.0 *1\n")
        with pytest.raises(ParseError):
            fermion_from_text("modes 2\n1.0 +5\n")

    @settings(max_examples=30, deadline=None)
    @given(spin_hamiltonians())
    def test_spin_round_trip_property(self, h):
        assert spin_from_text(spin_to_text(h)) == h
