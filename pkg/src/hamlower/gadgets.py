"""Mediator-gadget compiler: 2-local Pauli sources down to Heisenberg form.

A mediator gadget is one auxiliary spin with a strong splitting field
``delta * |h><h|`` and weak couplings ``sum_P P_w (x) S_P`` attaching a system
operator ``S_P`` to each used mediator axis ("slot").  The dressed basis
comes from the rotation

    M(theta, phi) = [[cos t, -sin t e^{-i phi}], [sin t e^{i phi}, cos t]]

with ``|l> = M|0>``, ``|h> = M|1>``.  At second order the low sector sees

    sum_P d_P S_P  -  (1/delta) (sum_P o_P S_P)(sum_Q conj(o_Q) S_Q)

with ``d_P = <l|P|l>`` and ``o_P = <l|P|h>``.  The compiler chains four
gadget layers (decompose same-axis couplings, entangle, freeze to a
two-axis pattern, freeze to full Heisenberg couplings), schedules the
(lambda, delta) ladder against a precision target, and emits exact
compensation fields for every first- and second-order local byproduct so the
compiled low spectrum reproduces the source up to a scalar offset.

Sub-coupling strengths are emitted *down-scaled* so that each layer's
realized second-order coupling equals its bookkeeping target exactly; the
error budget sum(lambda^3/delta^2) then refers to realized magnitudes.

The same module builds unary-clock history Hamiltonians as a source
generator for the compiler.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace
from itertools import combinations

import numpy as np

from .errors import (
    HamlowerError,
    ParseError,
    ResourceLimitError,
    ScheduleError,
    ValidationError,
)
from .operators import (
    AXES,
    PAULI_MATRICES,
    PauliTerm,
    SpinHamiltonian,
    Spectrum,
    dense_spin_limit,
    eig_hermitian,
    multiply_factor_tuples,
    realize_spin,
    spin_from_text,
    spin_to_text,
)

SAFETY = 10.0

NEXT_AXIS = {"X": "Y", "Y": "Z", "Z": "X"}

# Splitting angles that freeze the mediator into the +1 eigenstate of an
# axis, making that axis's cross element <l|P|h> vanish identically.
FROZEN_ANGLES = {
    "X": (math.pi / 4, 0.0),
    "Y": (math.pi / 4, math.pi / 2),
    "Z": (0.0, 0.0),
}

LAYER_DECOMPOSE = "decompose"
LAYER_ENTANGLE = "entangle"
LAYER_FREEZE_PAIR = "freeze-pair"
LAYER_FREEZE_HEIS = "freeze-heisenberg"
LAYER_ORDER = (LAYER_DECOMPOSE, LAYER_ENTANGLE, LAYER_FREEZE_PAIR, LAYER_FREEZE_HEIS)


def third_axis(a: str, b: str) -> str:
    rest = {"X", "Y", "Z"} - {a, b}
    if len(rest) != 1:
        raise ValidationError(f"axes {a!r}, {b!r} do not determine a third axis")
    return rest.pop()


def mediator_matrix(theta: float, phi: float) -> np.ndarray:
    return np.array(
        [[math.cos(theta), -math.sin(theta) * cmath.exp(-1j * phi)],
         [math.sin(theta) * cmath.exp(1j * phi), math.cos(theta)]])


def dressed_states(theta: float, phi: float):
    """(|l>, |h>) columns of the splitting rotation."""
    m = mediator_matrix(theta, phi)
    return m[:, 0], m[:, 1]


def cross_element(theta: float, phi: float, axis: str) -> complex:
    """Numeric <l|P|h> for one mediator axis."""
    l, h = dressed_states(theta, phi)
    return complex(l.conj() @ PAULI_MATRICES[axis] @ h)


def dressed_element(theta: float, phi: float, axis: str) -> float:
    """Numeric <l|P|l> (real by Hermiticity)."""
    l, _ = dressed_states(theta, phi)
    return float((l.conj() @ PAULI_MATRICES[axis] @ l).real)


@dataclass(frozen=True)
class MediatorCoefficients:
    """Per-axis dressed (d) and cross (o) elements of one splitting choice."""

    theta: float
    phi: float
    d: dict
    o: dict

    def pair_factor(self, p: str, q: str) -> float:
        """Closed-form coefficient of P_i Q_j per lambda**2/delta.

        Equals -2 Re(o_P conj(o_Q)); in trigonometric form the three slot
        pairs give sin^2(2t) sin(2phi) for XY, sin(4t) cos(phi) for XZ and
        sin(4t) sin(phi) for YZ.
        """
        return float(-2.0 * (self.o[p] * self.o[q].conjugate()).real)


def mediator_coefficients(theta: float, phi: float) -> MediatorCoefficients:
    d = {p: dressed_element(theta, phi, p) for p in AXES}
    o = {p: cross_element(theta, phi, p) for p in AXES}
    return MediatorCoefficients(theta, phi, d, o)


@dataclass(frozen=True)
class EffectiveCoefficients:
    """Second-order output of a uniform-strength mediator gadget."""

    pairs: dict
    fields: dict
    constant: float


def mediator_effective(theta, phi, lam, delta, axes=AXES) -> EffectiveCoefficients:
    """Closed-form effective coefficients for slots of equal strength ``lam``.

    ``pairs[(P, Q)]`` multiplies the cross coupling carried by slots P and Q,
    ``fields[P]`` is the first-order local factor on slot P's operator, and
    ``constant`` collects the second-order identity part.
    """
    _validate_gadget_scales(lam, delta)
    co = mediator_coefficients(theta, phi)
    scale = lam * lam / delta
    pairs = {(p, q): scale * co.pair_factor(p, q) for p, q in combinations(axes, 2)}
    fields = {p: lam * co.d[p] for p in axes}
    constant = -scale * sum(abs(co.o[p]) ** 2 for p in axes)
    return EffectiveCoefficients(pairs, fields, constant)


def _validate_gadget_scales(lam, delta):
    if not (lam > 0 and delta > 0):
        raise ValidationError(f"scales must be positive, got lambda={lam}, delta={delta}")
    if delta < SAFETY * lam * (1 - 1e-9):
        raise ValidationError(
            f"splitting {delta} is not at least {SAFETY}x the coupling {lam}")


@dataclass(frozen=True)
class MediatorGadget:
    """One auxiliary spin with its splitting angles, scales, and slots.

    ``slots`` maps a mediator axis to a tuple of ``(site, axis, strength)``
    system attachments; the physical perturbation is
    ``sum_P P_mediator (x) sum_entries strength * axis_site``.  ``lam`` is the
    layer's bookkeeping coupling scale; individual slot strengths never
    exceed it.  ``frozen_axis`` is set on freezing gadgets only.
    """

    mediator: int
    layer: str
    theta: float
    phi: float
    lam: float
    delta: float
    slots: dict
    frozen_axis: str = None

    def __post_init__(self):
        if not 0 <= self.theta <= math.pi / 2 + 1e-12:
            raise ValidationError(f"theta {self.theta} outside [0, pi/2]")
        if not 0 <= self.phi < 2 * math.pi:
            raise ValidationError(f"phi {self.phi} outside [0, 2*pi)")
        _validate_gadget_scales(self.lam, self.delta)
        if self.layer not in LAYER_ORDER:
            raise ValidationError(f"unknown layer {self.layer!r}")
        for axis, entries in self.slots.items():
            if axis not in AXES:
                raise ValidationError(f"unknown slot axis {axis!r}")
            for site, sys_axis, strength in entries:
                if site == self.mediator:
                    raise ValidationError("slot may not touch the mediator itself")
                if sys_axis not in AXES:
                    raise ValidationError(f"unknown system axis {sys_axis!r}")
                if abs(strength) > self.lam * (1 + 1e-9):
                    raise ValidationError(
                        f"slot strength {strength} exceeds the layer scale {self.lam}")

    def sites(self):
        """Distinct non-mediator sites this gadget touches, sorted."""
        return tuple(sorted({site for entries in self.slots.values()
                             for site, _, _ in entries}))


def gadget_hamiltonian(g: MediatorGadget):
    """Bare physical terms of one gadget: (SpinHamiltonian terms, offset).

    The splitting ``delta |h><h|`` is emitted as the field
    ``-(delta/2) * (d . sigma)`` on the mediator plus the scalar ``delta/2``
    returned as the offset.
    """
    co = mediator_coefficients(g.theta, g.phi)
    terms = []
    for axis in AXES:
        if abs(co.d[axis]) > 1e-15:
            terms.append(PauliTerm(-0.5 * g.delta * co.d[axis], [(g.mediator, axis)]))
    for axis, entries in g.slots.items():
        for site, sys_axis, strength in entries:
            factors = sorted([(g.mediator, axis), (site, sys_axis)])
            terms.append(PauliTerm(strength, factors))
    return terms, 0.5 * g.delta


def gadget_model(g: MediatorGadget) -> SpinHamiltonian:
    """Second-order effective Hamiltonian of one gadget on its low sector.

    Includes the first-order dressed fields, all cross and diagonal
    second-order products (expanded through the Pauli algebra), and the
    identity part.  Imaginary parts must cancel; a residual signals a bug.
    """
    co = mediator_coefficients(g.theta, g.phi)
    acc = {}

    def add(factors, coeff):
        acc[factors] = acc.get(factors, 0.0) + coeff

    for axis, entries in g.slots.items():
        for site, sys_axis, strength in entries:
            add(((site, sys_axis),), co.d[axis] * strength)
    for axis_p, entries_p in g.slots.items():
        for axis_q, entries_q in g.slots.items():
            oo = co.o[axis_p] * co.o[axis_q].conjugate()
            if abs(oo) < 1e-15:
                continue
            c_pq = -oo / g.delta
            for site_p, ax_p, s_p in entries_p:
                for site_q, ax_q, s_q in entries_q:
                    phase, factors = multiply_factor_tuples(
                        ((site_p, ax_p),), ((site_q, ax_q),))
                    add(factors, c_pq * phase * s_p * s_q)
    scale = max((abs(c) for c in acc.values()), default=1.0)
    terms = []
    for factors, coeff in acc.items():
        if abs(coeff.imag) > 1e-8 * scale:
            raise HamlowerError(
                "gadget model has a non-real coefficient; slot layout is invalid")
        if abs(coeff.real) > 1e-14 * scale:
            terms.append(PauliTerm(coeff.real, factors))
    num = max(s for entries in g.slots.values() for s, _, _ in entries) + 1
    return SpinHamiltonian(num, terms)


# ---------------------------------------------------------------------------
# Scale scheduling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LayerScales:
    """Scheduled scales for one gadget layer."""

    index: int
    name: str
    lam: float
    delta: float
    count: int
    budget: float
    mediators: tuple = ()


def schedule_scales(counts, precision, *, safety=SAFETY):
    """Greedy ladder of (lambda, delta) per layer for a precision target.

    ``counts`` is an ordered list of ``(layer_name, gadget_count)``.  Each
    layer's ratio k = delta/lambda is the smallest value satisfying
    k >= safety, k >= safety * k_previous, and an equal split of the error
    budget sum(count * lambda^3/delta^2) <= precision across layers.
    ``precision`` may be ``inf`` (scales sit at the safety boundary).
    """
    if isinstance(precision, bool) or not isinstance(precision, (int, float)):
        raise ScheduleError(f"precision must be a number, got {precision!r}")
    precision = float(precision)
    if math.isnan(precision) or precision <= 0:
        raise ScheduleError(
            f"precision must be positive (got {precision}); "
            "the budget constraint sum(lambda^3/delta^2) <= precision is infeasible")
    counts = [(name, int(n)) for name, n in counts]
    for name, n in counts:
        if name not in LAYER_ORDER:
            raise ScheduleError(f"unknown layer {name!r}")
        if n < 1:
            raise ScheduleError(f"layer {name!r} has no gadgets")
    names = [name for name, _ in counts]
    if names != sorted(names, key=LAYER_ORDER.index) or len(set(names)) != len(names):
        raise ScheduleError("layers must appear once each, in chain order")
    num_layers = len(counts)
    layers = []
    lam_prev = 1.0
    k_prev = None
    for name, n in counts:
        k = safety if k_prev is None else safety * k_prev
        if math.isfinite(precision):
            k = max(k, num_layers * n * lam_prev / precision)
        lam = k * lam_prev
        delta = k * lam
        if not (math.isfinite(lam) and math.isfinite(delta)):
            raise ScheduleError(
                f"scale ladder exceeds the float range at layer {name!r}; "
                "the precision target cannot be met at finite scales")
        budget = n * lam ** 3 / delta ** 2
        layers.append(LayerScales(LAYER_ORDER.index(name), name, lam, delta, n, budget))
        lam_prev, k_prev = lam, k
    return layers


# ---------------------------------------------------------------------------
# Compilation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GadgetPlan:
    """Compiled reduction: layer stack, gadgets, couplings, bookkeeping.

    ``compiled`` holds only Heisenberg couplings (three same-coefficient
    terms per edge in ``heisenberg``) and single-spin fields.  Adding
    ``offset`` to the low spectrum of ``compiled`` reproduces the source
    spectrum within ``total_error_budget`` times the verification factor.
    """

    source: SpinHamiltonian
    target_precision: float
    safety: float
    layers: tuple
    gadgets: tuple
    heisenberg: tuple
    compiled: SpinHamiltonian
    offset: float
    total_error_budget: float

    @property
    def num_spins(self) -> int:
        return self.compiled.num_spins

    def layer_gadgets(self, name):
        return tuple(g for g in self.gadgets if g.layer == name)

    def freezing_gadgets(self):
        return tuple(g for g in self.gadgets if g.frozen_axis is not None)


def _classify_source(source: SpinHamiltonian):
    source = source.canonicalize()
    constant = 0.0
    fields = []
    couplings = []
    for t in source.terms:
        if t.weight == 0:
            constant += t.coefficient
        elif t.weight == 1:
            fields.append(t)
        elif t.weight == 2:
            if abs(t.coefficient) > 1.0 + 1e-12:
                raise ValidationError(
                    f"coupling strength {t.coefficient} exceeds 1; rescale the "
                    "source so every coupling satisfies |J| <= 1")
            couplings.append(t)
        else:
            raise ValidationError(
                f"source term touches {t.weight} sites; only 2-local inputs compile")
    return source, constant, fields, couplings


def _solve_angles(axis_pair, target):
    """Splitting angles whose pair factor equals ``target`` for these slots.

    theta is pi/8 when either slot axis is Z, else pi/4; phi solves the
    matching trigonometric family.  |target| <= 1 is required.
    """
    if abs(target) > 1 + 1e-12:
        raise ValidationError(
            f"required gadget coefficient {target} exceeds the attainable range "
            "[-1, 1]; no splitting angle solves it")
    target = min(1.0, max(-1.0, target))
    pair = frozenset(axis_pair)
    if pair == frozenset(("X", "Y")):
        theta = math.pi / 4
        phi = 0.5 * math.asin(target)
    elif pair == frozenset(("X", "Z")):
        theta = math.pi / 8
        phi = math.acos(target)
    elif pair == frozenset(("Y", "Z")):
        theta = math.pi / 8
        phi = math.asin(target)
    else:
        raise ValidationError(f"slot axes {axis_pair} must be two distinct Paulis")
    if phi < 0:
        phi += 2 * math.pi
    return theta, phi


@dataclass(frozen=True)
class _Cross:
    """Pending single-Pauli coupling coeff * P_a Q_b awaiting realization."""

    site_a: int
    axis_a: str
    site_b: int
    axis_b: str
    coefficient: float


@dataclass(frozen=True)
class _TwoAxis:
    """Pending coeff * (A_a A_b + B_a B_b) awaiting a Heisenberg freezer."""

    site_a: int
    site_b: int
    axis_one: str
    axis_two: str
    coefficient: float


class _Assembler:
    """Mutable state threaded through one compile call."""

    def __init__(self, num_source_spins):
        self.next_spin = num_source_spins
        self.gadgets = []
        self.heisenberg = []
        self.extra_terms = []   # penalty fields + compensation fields
        self.offset = 0.0
        self.layer_mediators = {name: [] for name in LAYER_ORDER}

    def alloc(self):
        spin = self.next_spin
        self.next_spin += 1
        return spin

    def register(self, g: MediatorGadget, intended_pairs):
        """Record a gadget: penalty, compensation, and model verification."""
        terms, penalty_offset = gadget_hamiltonian(g)
        self.extra_terms.extend(t for t in terms if t.weight == 1)
        self.offset += penalty_offset
        model = gadget_model(g)
        got_pairs = {}
        for t in model.terms:
            if t.weight == 0:
                self.offset -= t.coefficient
            elif t.weight == 1:
                self.extra_terms.append(t.scaled(-1.0))
            else:
                got_pairs[t.factors] = t.coefficient
        want = {}
        for (sa, pa), (sb, pb), coeff in intended_pairs:
            factors = tuple(sorted([(sa, pa), (sb, pb)]))
            want[factors] = want.get(factors, 0.0) + coeff
        scale = max([abs(c) for c in want.values()] + [1.0])
        if set(got_pairs) != set(want) or any(
                abs(got_pairs[f] - want[f]) > 1e-9 * scale for f in want):
            raise HamlowerError(
                "gadget output does not match its target couplings; "
                "this indicates a compiler bug")
        self.gadgets.append(g)
        self.layer_mediators[g.layer].append(g.mediator)


def _compile_freeze_heisenberg(asm, rec, pending: _TwoAxis):
    y = asm.alloc()
    frozen = third_axis(pending.axis_one, pending.axis_two)
    theta, phi = FROZEN_ANGLES[frozen]
    h = math.sqrt(abs(pending.coefficient) * rec.delta / 2.0)
    h_a = h
    h_b = -math.copysign(h, pending.coefficient)
    slots = {axis: ((pending.site_a, axis, h_a), (pending.site_b, axis, h_b))
             for axis in AXES}
    g = MediatorGadget(y, LAYER_FREEZE_HEIS, theta, phi, rec.lam, rec.delta,
                       slots, frozen_axis=frozen)
    intended = [((pending.site_a, axis), (pending.site_b, axis), pending.coefficient)
                for axis in (pending.axis_one, pending.axis_two)]
    asm.register(g, intended)
    asm.heisenberg.append((pending.site_a, y, h_a))
    asm.heisenberg.append((pending.site_b, y, h_b))


def _compile_freeze_pair(asm, rec, rec3, pending: _Cross):
    if pending.axis_a != pending.axis_b:
        raise HamlowerError("pair freezer input must share one axis")
    wanted = pending.axis_a
    partner = NEXT_AXIS[wanted]
    u = asm.alloc()
    theta, phi = FROZEN_ANGLES[partner]
    s = math.sqrt(abs(pending.coefficient) * rec.delta / 2.0)
    c_a = s
    c_b = -math.copysign(s, pending.coefficient)
    slots = {
        wanted: ((pending.site_a, wanted, c_a), (pending.site_b, wanted, c_b)),
        partner: ((pending.site_a, partner, c_a), (pending.site_b, partner, c_b)),
    }
    g = MediatorGadget(u, LAYER_FREEZE_PAIR, theta, phi, rec.lam, rec.delta,
                       slots, frozen_axis=partner)
    intended = [((pending.site_a, wanted), (pending.site_b, wanted),
                 pending.coefficient)]
    asm.register(g, intended)
    for site, strength in ((pending.site_a, c_a), (pending.site_b, c_b)):
        _compile_freeze_heisenberg(
            asm, rec3, _TwoAxis(site, u, wanted, partner, strength))


def _compile_entangle(asm, rec, rec2, rec3, pending: _Cross, prefactor):
    if pending.axis_a == pending.axis_b:
        raise HamlowerError("entangler input must mix two axes")
    m = asm.alloc()
    target = pending.coefficient / prefactor
    theta, phi = _solve_angles((pending.axis_a, pending.axis_b), target)
    slots = {
        pending.axis_a: ((pending.site_a, pending.axis_a, rec.lam),),
        pending.axis_b: ((pending.site_b, pending.axis_b, rec.lam),),
    }
    g = MediatorGadget(m, LAYER_ENTANGLE, theta, phi, rec.lam, rec.delta, slots)
    intended = [((pending.site_a, pending.axis_a),
                 (pending.site_b, pending.axis_b), pending.coefficient)]
    asm.register(g, intended)
    for site, axis in ((pending.site_a, pending.axis_a),
                       (pending.site_b, pending.axis_b)):
        _compile_freeze_pair(asm, rec2, rec3,
                             _Cross(site, axis, m, axis, rec.lam))


def _compile_decompose(asm, rec0, rec1, rec2, rec3, term: PauliTerm):
    (site_i, axis), (site_j, _) = term.factors
    m0 = asm.alloc()
    slot_i = NEXT_AXIS[axis]
    slot_j = NEXT_AXIS[slot_i]
    theta, phi = _solve_angles((slot_i, slot_j), term.coefficient)
    slots = {
        slot_i: ((site_i, axis, rec0.lam),),
        slot_j: ((site_j, axis, rec0.lam),),
    }
    g = MediatorGadget(m0, LAYER_DECOMPOSE, theta, phi, rec0.lam, rec0.delta, slots)
    intended = [((site_i, axis), (site_j, axis), term.coefficient)]
    asm.register(g, intended)
    for site, slot_axis in ((site_i, slot_i), (site_j, slot_j)):
        _compile_entangle(asm, rec1, rec2, rec3,
                          _Cross(site, axis, m0, slot_axis, rec0.lam),
                          prefactor=rec0.lam)


def compile(source: SpinHamiltonian, precision, *, safety=SAFETY) -> GadgetPlan:
    """Compile a 2-local source into Heisenberg couplings plus fields.

    Couplings must satisfy |J| <= 1 (rescale the source first).  Single-spin
    fields and constants pass through.  Every mixed-axis coupling expands to
    exactly 8 Heisenberg couplings; same-axis couplings decompose through an
    extra layer into 16.
    """
    source, constant, fields, couplings = _classify_source(source)
    same = [t for t in couplings if t.factors[0][1] == t.factors[1][1]]
    mixed = [t for t in couplings if t.factors[0][1] != t.factors[1][1]]
    counts = []
    if same:
        counts.append((LAYER_DECOMPOSE, len(same)))
    n1 = len(mixed) + 2 * len(same)
    if n1:
        counts.extend([(LAYER_ENTANGLE, n1),
                       (LAYER_FREEZE_PAIR, 2 * n1),
                       (LAYER_FREEZE_HEIS, 4 * n1)])
    layers = schedule_scales(counts, precision, safety=safety) if counts else []
    by_name = {rec.name: rec for rec in layers}
    asm = _Assembler(source.num_spins)
    asm.offset += constant
    if couplings:
        rec1 = by_name[LAYER_ENTANGLE]
        rec2 = by_name[LAYER_FREEZE_PAIR]
        rec3 = by_name[LAYER_FREEZE_HEIS]
        rec0 = by_name.get(LAYER_DECOMPOSE)
        prefactor = rec0.lam if rec0 is not None else 1.0
        for t in couplings:
            (site_i, axis_a), (site_j, axis_b) = t.factors
            if axis_a == axis_b:
                _compile_decompose(asm, rec0, rec1, rec2, rec3, t)
            else:
                _compile_entangle(asm, rec1, rec2, rec3,
                                  _Cross(site_i, axis_a, site_j, axis_b,
                                         t.coefficient),
                                  prefactor=prefactor)
    heis_terms = []
    for a, b, strength in asm.heisenberg:
        for axis in AXES:
            heis_terms.append(PauliTerm(strength, sorted([(a, axis), (b, axis)])))
    num_total = asm.next_spin
    compiled = SpinHamiltonian(
        num_total, heis_terms + asm.extra_terms + list(fields)).canonicalize()
    for t in compiled.terms:
        if t.weight > 2:
            raise HamlowerError("compiled Hamiltonian grew a >2-local term; bug")
    layers = tuple(replace(rec, mediators=tuple(asm.layer_mediators[rec.name]))
                   for rec in layers)
    budget = float(sum(rec.budget for rec in layers))
    return GadgetPlan(source, float(precision), float(safety), layers,
                      tuple(asm.gadgets), tuple(asm.heisenberg), compiled,
                      asm.offset, budget)


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlanVerification:
    """Measured low-spectrum deviation of a compiled plan vs. its source."""

    measured: float
    budget: float
    tolerance_factor: float
    tolerance: float
    passed: bool
    compiled_low: np.ndarray
    source_spectrum: np.ndarray


def verify_plan(plan: GadgetPlan, tolerance_factor: float = 10.0) -> PlanVerification:
    """Diagonalize both sides and compare the low spectrum within tolerance.

    The lowest 2^(source spins) eigenvalues of the compiled Hamiltonian,
    shifted by the plan offset, are compared to the full source spectrum.
    Raises ``ResourceLimitError`` when the compiled system exceeds the dense
    limit.
    """
    if plan.num_spins > dense_spin_limit():
        raise ResourceLimitError(
            f"compiled system has {plan.num_spins} spins; dense verification "
            f"is capped at {dense_spin_limit()}")
    compiled_vals = eig_hermitian(realize_spin(plan.compiled)).values
    source_vals = eig_hermitian(realize_spin(plan.source)).values
    k = 2 ** plan.source.num_spins
    low = compiled_vals[:k] + plan.offset
    measured = float(np.abs(low - source_vals).max())
    budget = plan.total_error_budget
    tolerance = tolerance_factor * budget
    return PlanVerification(measured, budget, float(tolerance_factor), tolerance,
                            bool(measured <= tolerance), low, source_vals)


def frozen_cross_residuals(plan: GadgetPlan):
    """|<l|P|h>| of the unwanted Pauli for every freezing gadget."""
    out = []
    for g in plan.freezing_gadgets():
        out.append((g.mediator, g.frozen_axis,
                    abs(cross_element(g.theta, g.phi, g.frozen_axis))))
    return out


@dataclass(frozen=True)
class EntanglerCheck:
    """Single-gadget realization of one mixed-axis coupling, for spot checks.

    ``hamiltonian`` holds the bare 3-spin gadget (penalty field plus the two
    slot couplings, no compensation); adding ``offset`` to its spectrum
    aligns it with ``model`` = target + first/second-order locals + constant.
    """

    gadget: MediatorGadget
    hamiltonian: SpinHamiltonian
    offset: float
    model: SpinHamiltonian
    budget: float


def entangler_realization(term: PauliTerm, precision, *, safety=SAFETY) -> EntanglerCheck:
    """Realize one coupling J * A_i B_j with a single scheduled mediator."""
    if term.weight != 2 or term.factors[0][1] == term.factors[1][1]:
        raise ValidationError("expected one mixed-axis 2-local coupling")
    if abs(term.coefficient) > 1 + 1e-12:
        raise ValidationError("coupling must satisfy |J| <= 1; rescale first")
    (rec,) = schedule_scales([(LAYER_ENTANGLE, 1)], precision, safety=safety)
    (site_i, axis_a), (site_j, axis_b) = term.factors
    theta, phi = _solve_angles((axis_a, axis_b), term.coefficient)
    m = max(site_i, site_j) + 1
    slots = {axis_a: ((site_i, axis_a, rec.lam),),
             axis_b: ((site_j, axis_b, rec.lam),)}
    g = MediatorGadget(m, LAYER_ENTANGLE, theta, phi, rec.lam, rec.delta, slots)
    terms, offset = gadget_hamiltonian(g)
    hamiltonian = SpinHamiltonian(m + 1, terms).canonicalize()
    model = gadget_model(g)
    return EntanglerCheck(g, hamiltonian, offset, model, rec.budget)


# ---------------------------------------------------------------------------
# Plan serialization
# ---------------------------------------------------------------------------


def plan_to_text(plan: GadgetPlan) -> str:
    lines = ["gadget-plan v1"]
    lines.append(f"precision {plan.target_precision!r}")
    lines.append(f"safety {plan.safety!r}")
    lines.append(f"budget {plan.total_error_budget!r}")
    lines.append(f"offset {plan.offset!r}")
    lines.append(f"spins {plan.num_spins}")
    lines.append("")
    lines.append(f"layers {len(plan.layers)}")
    lines.append("# index name lambda delta count budget")
    for rec in plan.layers:
        lines.append(f"{rec.index} {rec.name} {rec.lam!r} {rec.delta!r} "
                     f"{rec.count} {rec.budget!r}")
    lines.append("")
    lines.append(f"gadgets {len(plan.gadgets)}")
    lines.append("# mediator layer frozen theta phi lambda delta slots")
    for g in plan.gadgets:
        slot_txt = " ".join(
            f"{axis}:{site}:{sys_axis}:{strength!r}"
            for axis, entries in g.slots.items()
            for site, sys_axis, strength in entries)
        frozen = g.frozen_axis if g.frozen_axis is not None else "-"
        lines.append(f"{g.mediator} {g.layer} {frozen} {g.theta!r} {g.phi!r} "
                     f"{g.lam!r} {g.delta!r} {slot_txt}")
    lines.append("")
    lines.append(f"heisenberg {len(plan.heisenberg)}")
    lines.append("# site mediator coupling")
    for a, b, strength in plan.heisenberg:
        lines.append(f"{a} {b} {strength!r}")
    lines.append("")
    lines.append("source")
    lines.append(spin_to_text(plan.source).rstrip("\n"))
    lines.append("end")
    lines.append("")
    lines.append("compiled")
    lines.append(spin_to_text(plan.compiled).rstrip("\n"))
    lines.append("end")
    return "\n".join(lines) + "\n"


def _plan_lines(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        yield lineno, stripped


def plan_from_text(text: str) -> GadgetPlan:
    lines = list(_plan_lines(text))
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(lines):
            raise ParseError("unexpected end of plan document")
        line = lines[pos]
        pos += 1
        return line

    lineno, header = take()
    if header != "gadget-plan v1":
        raise ParseError(f"line {lineno}: expected 'gadget-plan v1' header")
    scalars = {}
    for key in ("precision", "safety", "budget", "offset", "spins"):
        lineno, line = take()
        tokens = line.split()
        if len(tokens) != 2 or tokens[0] != key:
            raise ParseError(f"line {lineno}: expected '{key} <value>'")
        try:
            scalars[key] = int(tokens[1]) if key == "spins" else float(tokens[1])
        except ValueError:
            raise ParseError(f"line {lineno}: bad {key} value {tokens[1]!r}")

    def section_count(keyword):
        lineno, line = take()
        tokens = line.split()
        if len(tokens) != 2 or tokens[0] != keyword:
            raise ParseError(f"line {lineno}: expected '{keyword} <count>'")
        try:
            return int(tokens[1])
        except ValueError:
            raise ParseError(f"line {lineno}: bad count {tokens[1]!r}")

    try:
        layer_rows = []
        for _ in range(section_count("layers")):
            lineno, line = take()
            tokens = line.split()
            if len(tokens) != 6:
                raise ParseError(f"line {lineno}: bad layer record")
            try:
                layer_rows.append(LayerScales(
                    int(tokens[0]), tokens[1], float(tokens[2]),
                    float(tokens[3]), int(tokens[4]), float(tokens[5])))
            except ValueError:
                raise ParseError(f"line {lineno}: bad layer record {line!r}")
        gadgets = []
        for _ in range(section_count("gadgets")):
            lineno, line = take()
            tokens = line.split()
            if len(tokens) < 8:
                raise ParseError(f"line {lineno}: bad gadget record")
            slots = {}
            for tok in tokens[7:]:
                parts = tok.split(":")
                if len(parts) != 4:
                    raise ParseError(f"line {lineno}: bad slot token {tok!r}")
                axis, site, sys_axis, strength = parts
                try:
                    slots.setdefault(axis, []).append(
                        (int(site), sys_axis, float(strength)))
                except ValueError:
                    raise ParseError(f"line {lineno}: bad slot token {tok!r}")
            slots = {axis: tuple(entries) for axis, entries in slots.items()}
            frozen = None if tokens[2] == "-" else tokens[2]
            try:
                scalars_row = (int(tokens[0]), float(tokens[3]),
                               float(tokens[4]), float(tokens[5]),
                               float(tokens[6]))
            except ValueError:
                raise ParseError(f"line {lineno}: bad gadget record {line!r}")
            gadgets.append(MediatorGadget(
                scalars_row[0], tokens[1], scalars_row[1], scalars_row[2],
                scalars_row[3], scalars_row[4], slots, frozen_axis=frozen))
        heis = []
        for _ in range(section_count("heisenberg")):
            lineno, line = take()
            tokens = line.split()
            if len(tokens) != 3:
                raise ParseError(f"line {lineno}: bad coupling record")
            try:
                heis.append((int(tokens[0]), int(tokens[1]), float(tokens[2])))
            except ValueError:
                raise ParseError(f"line {lineno}: bad coupling record {line!r}")

        def block(keyword):
            lineno, line = take()
            if line != keyword:
                raise ParseError(f"line {lineno}: expected '{keyword}' section")
            body = []
            while True:
                _, line = take()
                if line == "end":
                    break
                body.append(line)
            return "\n".join(body) + "\n"

        source = spin_from_text(block("source"))
        compiled = spin_from_text(block("compiled"))
    except ParseError:
        raise
    except (ValueError, ValidationError) as exc:
        raise ParseError(f"bad plan document: {exc}")
    precision = scalars["precision"]
    safety = scalars["safety"]
    budget = scalars["budget"]
    offset = scalars["offset"]
    mediators = {name: [] for name in LAYER_ORDER}
    for g in gadgets:
        mediators[g.layer].append(g.mediator)
    layer_rows = tuple(replace(rec, mediators=tuple(mediators[rec.name]))
                       for rec in layer_rows)
    return GadgetPlan(source, precision, safety, layer_rows, tuple(gadgets),
                      tuple(heis), compiled, offset, budget)


# ---------------------------------------------------------------------------
# History Hamiltonians (unary domain-wall clock)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HistorySpec:
    """A short circuit to encode: gates in order, each with its target spins."""

    num_computation_spins: int
    gates: tuple

    def __post_init__(self):
        n = self.num_computation_spins
        if not 1 <= n <= 3:
            raise ValidationError("computation register must have 1 to 3 spins")
        gates = []
        for matrix, sites in self.gates:
            matrix = np.asarray(matrix, dtype=complex)
            sites = tuple(int(s) for s in sites)
            if not 1 <= len(sites) <= 2 or len(set(sites)) != len(sites):
                raise ValidationError("each gate acts on 1 or 2 distinct spins")
            if any(not 0 <= s < n for s in sites):
                raise ValidationError(f"gate sites {sites} outside the register")
            dim = 2 ** len(sites)
            if matrix.shape != (dim, dim):
                raise ValidationError(
                    f"gate on {len(sites)} spins needs shape {(dim, dim)}, "
                    f"got {matrix.shape}")
            if np.abs(matrix @ matrix.conj().T - np.eye(dim)).max() > 1e-12:
                raise ValidationError("gate is not unitary to 1e-12")
            gates.append((matrix, sites))
        if not 1 <= len(gates) <= 8:
            raise ValidationError("circuit must contain 1 to 8 gates")
        object.__setattr__(self, "gates", tuple(gates))

    @property
    def num_steps(self) -> int:
        return len(self.gates)


def encode_time(t: int, num_steps: int):
    """Unary clock bitstring for time t: t ones then zeros."""
    if not 0 <= t <= num_steps:
        raise ValidationError(f"time {t} outside [0, {num_steps}]")
    return tuple(1 if i < t else 0 for i in range(num_steps))


def decode_clock(bits) -> int:
    """Time encoded by a legal domain-wall bitstring (ones then zeros)."""
    bits = tuple(int(b) for b in bits)
    if any(b not in (0, 1) for b in bits):
        raise ValidationError("clock bits must be 0 or 1")
    t = sum(bits)
    if bits != encode_time(t, len(bits)):
        raise ValidationError(f"illegal clock state {bits}: more than one domain wall")
    return t


def embed_gate(matrix, sites, num_spins) -> np.ndarray:
    """Unitary on the full register from a 1- or 2-spin gate."""
    matrix = np.asarray(matrix, dtype=complex)
    dim = 2 ** num_spins
    full = np.zeros((dim, dim), dtype=complex)
    rest = [s for s in range(num_spins) if s not in sites]
    for col in range(dim):
        in_bits = [(col >> (num_spins - 1 - s)) & 1 for s in range(num_spins)]
        sub_col = 0
        for s in sites:
            sub_col = (sub_col << 1) | in_bits[s]
        for sub_row in range(matrix.shape[0]):
            amp = matrix[sub_row, sub_col]
            if amp == 0:
                continue
            out_bits = list(in_bits)
            for idx, s in enumerate(reversed(sites)):
                out_bits[s] = (sub_row >> idx) & 1
            row = 0
            for b in out_bits:
                row = (row << 1) | b
            full[row, col] += amp
    return full


@dataclass(frozen=True)
class HistoryResult:
    """Clock Hamiltonian on computation (x) legal-clock space, plus checks."""

    hamiltonian: np.ndarray
    history_state: np.ndarray
    spectrum: Spectrum
    ground_energy: float
    ground_degeneracy: int
    history_energy: float
    ground_overlap: float

    @property
    def certified(self) -> bool:
        return (self.history_energy - self.ground_energy <= 1e-10
                and self.ground_overlap >= 1 - 1e-10)


def history_state(spec: HistorySpec, psi0=None) -> np.ndarray:
    """Normalized equal superposition of the partially executed circuit."""
    n = spec.num_computation_spins
    dim = 2 ** n
    if psi0 is None:
        psi = np.zeros(dim, dtype=complex)
        psi[0] = 1.0
    else:
        psi = np.asarray(psi0, dtype=complex)
        if psi.shape != (dim,):
            raise ValidationError(f"initial state must have dimension {dim}")
        norm = np.linalg.norm(psi)
        if norm < 1e-12:
            raise ValidationError("initial state has zero norm")
        psi = psi / norm
    steps = spec.num_steps
    out = np.zeros(dim * (steps + 1), dtype=complex)
    current = psi
    for t in range(steps + 1):
        if t > 0:
            matrix, sites = spec.gates[t - 1]
            current = embed_gate(matrix, sites, n) @ current
        clock = np.zeros(steps + 1)
        clock[t] = 1.0
        out += np.kron(current, clock)
    return out / math.sqrt(steps + 1)


def build_history_hamiltonian(spec: HistorySpec, psi0=None, *,
                              initial_projector=None, final_projector=None,
                              penalty=1.0) -> HistoryResult:
    """Propagation Hamiltonian on the legal clock subspace, with certificate.

    The propagation term for step t is
    (|t><t| + |t-1><t-1|)/2 (x) I - (U_t (x) |t><t-1| + h.c.)/2, acting on
    computation (x) (T+1)-dimensional legal clock space.  Optional penalty
    projectors restrict the t = 0 and t = T computation states to the ranges
    of the given projectors.
    """
    n = spec.num_computation_spins
    dim = 2 ** n
    steps = spec.num_steps
    cdim = steps + 1
    ham = np.zeros((dim * cdim, dim * cdim), dtype=complex)
    eye = np.eye(dim)
    for t in range(1, steps + 1):
        u_t = embed_gate(*spec.gates[t - 1], n)
        proj = np.zeros((cdim, cdim))
        proj[t, t] = proj[t - 1, t - 1] = 0.5
        hop = np.zeros((cdim, cdim))
        hop[t, t - 1] = 1.0
        ham += np.kron(eye, proj)
        ham -= 0.5 * (np.kron(u_t, hop) + np.kron(u_t.conj().T, hop.T))
    for projector, t_slot in ((initial_projector, 0), (final_projector, steps)):
        if projector is None:
            continue
        projector = np.asarray(projector, dtype=complex)
        if projector.shape != (dim, dim):
            raise ValidationError(f"penalty projector must be {dim}x{dim}")
        if np.abs(projector @ projector - projector).max() > 1e-10:
            raise ValidationError("penalty projector is not idempotent")
        clock = np.zeros((cdim, cdim))
        clock[t_slot, t_slot] = 1.0
        ham += penalty * np.kron(eye - projector, clock)
    spectrum = eig_hermitian(ham)
    state = history_state(spec, psi0)
    ground = float(spectrum.values[0])
    scale = max(1.0, float(np.abs(spectrum.values).max()))
    ground_mask = spectrum.values <= ground + 1e-9 * scale
    degeneracy = int(ground_mask.sum())
    energy = float((state.conj() @ ham @ state).real)
    ground_vecs = spectrum.vectors[:, ground_mask]
    overlap = float(np.linalg.norm(ground_vecs.conj().T @ state) ** 2)
    return HistoryResult(ham, state, spectrum, ground, degeneracy, energy, overlap)
