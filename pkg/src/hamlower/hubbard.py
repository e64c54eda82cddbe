"""Spinful Fermi-Hubbard lattices and their strong-coupling spin physics.

A model is a graph of sites with hopping ``-t`` on each undirected edge for
both spin species, on-site repulsion ``U n_up n_down``, and optional Zeeman
fields ``b . sigma`` (Pauli normalization).  At half filling and large U the
low sector is the singly-occupied subspace, where second-order virtual
hopping produces the exchange interaction

    (t**2 / U) * (sigma_i . sigma_j - I)   per edge,

an antiferromagnetic coupling with singlet ground state and singlet-triplet
splitting ``4 t**2 / U`` on a single edge.  ``verify_exchange`` rebuilds
that prediction from the block-decoupling engine and compares elementwise.

``lower_to_hubbard`` maps a compiled gadget plan's Heisenberg couplings onto
lattice edges, solving ``t**2 / U = |J|`` for the hopping.  The map is a
consistency check, not part of the verified chain: exchange couplings are
always antiferromagnetic, so negative plan couplings are flagged rather
than realized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, RegimeError, ResourceLimitError, ValidationError
from .operators import (
    AXES,
    FermionOperator,
    FockSector,
    PauliTerm,
    SpinHamiltonian,
    _strip_lines,
    default_site_modes,
    eig_hermitian,
    fermion_from_monomial,
    fermion_to_text,
    jordan_map_spin_to_fermion,
    realize_fermion,
    realize_spin,
    singly_occupied_projector,
)
from . import sw

# Half filling of 6 sites is a 924-dimensional sector; beyond that dense
# exact work stops being interactive.
MAX_EXACT_SITES = 6

REGIME_FACTOR = 10.0


@dataclass(frozen=True)
class HubbardModel:
    """Hopping graph with uniform t, on-site U, and per-site Zeeman fields."""

    sites: int
    t: float
    u: float
    edges: tuple
    fields: tuple = ()

    def __post_init__(self):
        if self.sites < 1:
            raise ValidationError("model needs at least one site")
        if not (math.isfinite(self.t) and self.t >= 0):
            raise ValidationError(f"hopping must be finite and >= 0, got {self.t}")
        if not (math.isfinite(self.u) and self.u > 0):
            raise ValidationError(f"repulsion must be positive, got {self.u}")
        seen = set()
        edges = []
        for edge in self.edges:
            i, j = (int(edge[0]), int(edge[1]))
            if i == j:
                raise ValidationError(f"edge ({i}, {j}) is a self loop")
            if not (0 <= i < self.sites and 0 <= j < self.sites):
                raise ValidationError(f"edge ({i}, {j}) leaves the lattice")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValidationError(f"edge ({i}, {j}) appears twice")
            seen.add(key)
            edges.append(key)
        object.__setattr__(self, "edges", tuple(edges))
        fields = [f for f in self.fields]
        if len(fields) not in (0, self.sites):
            raise ValidationError(
                f"field table needs one row per site ({self.sites}), "
                f"got {len(fields)}")
        if not fields:
            fields = [(0.0, 0.0, 0.0)] * self.sites
        fields = tuple(tuple(float(b) for b in row) for row in fields)
        for row in fields:
            if len(row) != 3 or any(not math.isfinite(b) for b in row):
                raise ValidationError(f"bad field row {row}")
        object.__setattr__(self, "fields", fields)

    @property
    def num_modes(self) -> int:
        return 2 * self.sites

    def max_degree(self) -> int:
        degree = [0] * self.sites
        for i, j in self.edges:
            degree[i] += 1
            degree[j] += 1
        return max(degree, default=0)


def _check_exact_size(model: HubbardModel):
    if model.sites > MAX_EXACT_SITES:
        raise ResourceLimitError(
            f"exact work is capped at {MAX_EXACT_SITES} sites; "
            f"model has {model.sites}")


def build_hubbard(model: HubbardModel) -> FermionOperator:
    """Second-quantized Hamiltonian: hopping, repulsion, Zeeman fields."""
    _check_exact_size(model)
    modes = model.num_modes
    out = FermionOperator(modes, [])
    for i, j in model.edges:
        for spin in (0, 1):
            a = default_site_modes(i)[spin]
            b = default_site_modes(j)[spin]
            out = out + fermion_from_monomial(
                modes, -model.t, ((a, True), (b, False)))
            out = out + fermion_from_monomial(
                modes, -model.t, ((b, True), (a, False)))
    for site in range(model.sites):
        up, down = default_site_modes(site)
        out = out + fermion_from_monomial(
            modes, model.u, ((up, True), (up, False), (down, True), (down, False)))
    for site, row in enumerate(model.fields):
        for axis, b in zip(AXES, row):
            if b != 0.0:
                out = out + jordan_map_spin_to_fermion(
                    PauliTerm(b, [(site, axis)]), model.sites)
    return out.normal_order()


def half_filling_sector(model: HubbardModel) -> FockSector:
    _check_exact_size(model)
    return FockSector(model.num_modes, model.sites)


def interaction_operator(model: HubbardModel) -> FermionOperator:
    """Repulsion plus Zeeman fields: the unperturbed part of the splitting."""
    modes = model.num_modes
    out = FermionOperator(modes, [])
    for site in range(model.sites):
        up, down = default_site_modes(site)
        out = out + fermion_from_monomial(
            modes, model.u, ((up, True), (up, False), (down, True), (down, False)))
    for site, row in enumerate(model.fields):
        for axis, b in zip(AXES, row):
            if b != 0.0:
                out = out + jordan_map_spin_to_fermion(
                    PauliTerm(b, [(site, axis)]), model.sites)
    return out.normal_order()


def hopping_operator(model: HubbardModel) -> FermionOperator:
    modes = model.num_modes
    out = FermionOperator(modes, [])
    for i, j in model.edges:
        for spin in (0, 1):
            a = default_site_modes(i)[spin]
            b = default_site_modes(j)[spin]
            out = out + fermion_from_monomial(
                modes, -model.t, ((a, True), (b, False)))
            out = out + fermion_from_monomial(
                modes, -model.t, ((b, True), (a, False)))
    return out.normal_order()


def check_regime(model: HubbardModel):
    """Strong-coupling guard: U must dominate the total hopping per site."""
    bound = REGIME_FACTOR * model.t * model.max_degree()
    if model.edges and model.u < bound:
        raise RegimeError(
            f"U = {model.u} is below {REGIME_FACTOR} * t * max_degree = {bound}; "
            "the exchange picture does not apply")


def heisenberg_from_hubbard(model: HubbardModel) -> SpinHamiltonian:
    """Effective spin model at half filling: exchange per edge plus fields.

    Raises ``RegimeError`` outside the strong-coupling window.
    """
    check_regime(model)
    exchange = model.t ** 2 / model.u
    terms = []
    for i, j in model.edges:
        for axis in AXES:
            terms.append(PauliTerm(exchange, [(i, axis), (j, axis)]))
        terms.append(PauliTerm(-exchange, []))
    for site, row in enumerate(model.fields):
        for axis, b in zip(AXES, row):
            if b != 0.0:
                terms.append(PauliTerm(b, [(site, axis)]))
    return SpinHamiltonian(model.sites, terms).canonicalize()


def exchange_error_budget(model: HubbardModel) -> float:
    """Third-order scale of the exchange approximation."""
    return 10.0 * len(model.edges) * model.t ** 3 / model.u ** 2


@dataclass(frozen=True)
class ExchangeReport:
    """Elementwise comparison of derived vs. closed-form exchange models."""

    model: HubbardModel
    measured: float
    tolerance: float
    passed: bool
    first_order_norm: float
    splitting_derived: float
    splitting_closed_form: float


def verify_exchange(model: HubbardModel, tolerance=None) -> ExchangeReport:
    """Derive the half-filling effective model and compare to the closed form.

    The unperturbed part is repulsion plus fields, the perturbation is the
    hopping, and the low space is the singly-occupied block.  First-order
    hopping vanishes on that block identically; the second-order block must
    match ``heisenberg_from_hubbard`` elementwise within tolerance (default
    ``10 * edges * t**3 / U**2``).
    """
    check_regime(model)
    sector = half_filling_sector(model)
    h0 = realize_fermion(interaction_operator(model), sector)
    v = realize_fermion(hopping_operator(model), sector)
    if np.abs(h0.imag).max() > 1e-12 or np.abs(v.imag).max() > 1e-12:
        h0_r, v_r = h0, v
    else:
        h0_r, v_r = h0.real, v.real
    columns = singly_occupied_projector(sector, model.sites)
    result = sw.effective_hamiltonian(h0_r, v_r, 1.0, low_columns=columns)
    first_order = columns.T @ v_r @ columns
    closed = realize_spin(heisenberg_from_hubbard(model))
    measured = float(np.abs(result.h_eff - closed).max())
    if tolerance is None:
        tolerance = exchange_error_budget(model)
    spectrum = eig_hermitian(realize_fermion(build_hubbard(model), sector))
    exact = spectrum.values
    # Singlet-triplet splitting of the first edge's pure-exchange prediction;
    # only meaningful without fields, reported regardless.
    derived = float(exact[1] - exact[0]) if exact.size > 1 else 0.0
    closed_split = 4 * model.t ** 2 / model.u
    return ExchangeReport(model, measured, float(tolerance),
                          bool(measured <= tolerance),
                          float(np.abs(first_order).max()),
                          derived, closed_split)


def exact_spectrum(model: HubbardModel) -> np.ndarray:
    """Half-filling eigenvalues of the full lattice Hamiltonian."""
    sector = half_filling_sector(model)
    return eig_hermitian(realize_fermion(build_hubbard(model), sector)).values


def singlet_triplet_splitting(model: HubbardModel) -> float:
    """Gap above the ground state at half filling."""
    values = exact_spectrum(model)
    if values.size < 2:
        raise ValidationError("model has no excited state at half filling")
    return float(values[1] - values[0])


# ---------------------------------------------------------------------------
# Plan handoff
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HubbardLowering:
    """Lattice realization of a plan's Heisenberg layer, for inspection.

    ``sign_flips`` lists plan edges whose coupling is negative; exchange
    cannot produce those, so the lattice realizes their magnitude only.
    """

    model: HubbardModel
    exchange_strength: float
    edge_couplings: tuple
    sign_flips: tuple


def lower_to_hubbard(plan, u=None) -> HubbardLowering:
    """Map a compiled plan's couplings onto a Hubbard lattice via t**2/U = J.

    All plan couplings must share one magnitude (they do by construction).
    The default U sits at ``2 * (regime bound)**2 / J`` so the strong-coupling
    guard holds with headroom.
    """
    couplings = tuple(plan.heisenberg)
    if not couplings:
        raise ValidationError("plan has no Heisenberg couplings to lower")
    magnitudes = {abs(j) for _, _, j in couplings}
    j0 = max(magnitudes)
    if any(abs(m - j0) > 1e-9 * j0 for m in magnitudes):
        raise ValidationError("plan couplings do not share one magnitude")
    edges = tuple((a, b) for a, b, _ in couplings)
    degree = {}
    for a, b in edges:
        degree[a] = degree.get(a, 0) + 1
        degree[b] = degree.get(b, 0) + 1
    max_degree = max(degree.values())
    if u is None:
        u = 2.0 * (REGIME_FACTOR * max_degree) ** 2 * j0
    u = float(u)
    t = math.sqrt(u * j0)
    model = HubbardModel(plan.num_spins, t, u, edges)
    check_regime(model)
    flips = tuple((a, b) for a, b, j in couplings if j < 0)
    return HubbardLowering(model, j0, couplings, flips)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def hubbard_to_text(model: HubbardModel) -> str:
    """Model header plus, when representable, the realized operator body.

    Zeeman fields along Y give the fermionic form complex coefficients the
    interchange format cannot carry; the operator section is omitted then.
    """
    lines = ["hubbard", f"sites {model.sites}", f"t {model.t!r}", f"U {model.u!r}"]
    lines.append(f"edges {len(model.edges)}")
    for i, j in model.edges:
        lines.append(f"{i} {j}")
    nonzero = [(s, row) for s, row in enumerate(model.fields)
               if any(b != 0.0 for b in row)]
    lines.append(f"fields {len(nonzero)}")
    for s, (bx, by, bz) in nonzero:
        lines.append(f"{s} {bx!r} {by!r} {bz!r}")
    if model.sites <= MAX_EXACT_SITES:
        op = build_hubbard(model)
        if all(abs(c.imag) <= 1e-12 for c, _ in op.terms):
            lines.append("operator")
            lines.append(fermion_to_text(op).rstrip("\n"))
            lines.append("end")
    return "\n".join(lines) + "\n"


def hubbard_from_text(text: str) -> HubbardModel:
    lines = list(_strip_lines(text))
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(lines):
            raise ParseError("unexpected end of model document")
        line = lines[pos]
        pos += 1
        return line

    lineno, header = take()
    if header != "hubbard":
        raise ParseError(f"line {lineno}: expected 'hubbard' header")
    scalars = {}
    for key, cast in (("sites", int), ("t", float), ("U", float)):
        lineno, line = take()
        tokens = line.split()
        if len(tokens) != 2 or tokens[0] != key:
            raise ParseError(f"line {lineno}: expected '{key} <value>'")
        try:
            scalars[key] = cast(tokens[1])
        except ValueError:
            raise ParseError(f"line {lineno}: bad {key} value {tokens[1]!r}")
    sites, t, u = scalars["sites"], scalars["t"], scalars["U"]

    def counted(keyword, width, casts):
        lineno, line = take()
        tokens = line.split()
        if len(tokens) != 2 or tokens[0] != keyword:
            raise ParseError(f"line {lineno}: expected '{keyword} <count>'")
        try:
            count = int(tokens[1])
        except ValueError:
            raise ParseError(f"line {lineno}: bad count {tokens[1]!r}")
        rows = []
        for _ in range(count):
            lineno, line = take()
            tokens = line.split()
            if len(tokens) != width:
                raise ParseError(f"line {lineno}: bad {keyword} record {line!r}")
            try:
                rows.append(tuple(cast(tok) for cast, tok in zip(casts, tokens)))
            except ValueError:
                raise ParseError(f"line {lineno}: bad {keyword} record {line!r}")
        return rows

    edges = counted("edges", 2, (int, int))
    field_rows = counted("fields", 4, (int, float, float, float))
    fields = [(0.0, 0.0, 0.0)] * sites
    for site, bx, by, bz in field_rows:
        if not 0 <= site < sites:
            raise ParseError(f"field row targets site {site} outside the lattice")
        fields[site] = (bx, by, bz)
    try:
        return HubbardModel(sites, t, u, tuple(edges), tuple(fields))
    except ValidationError as exc:
        raise ParseError(f"bad model document: {exc}")
