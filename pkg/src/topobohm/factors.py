"""Topological factors attached to deck groups.

Three kinds of factor relate the wave function's values on different sheets
of a covering space:

* ``Character``       -- unit-modulus phases, one per deck element, obeying
                         gamma(s t) = gamma(s) gamma(t).  Compatible with
                         every potential.
* ``MatrixRep``       -- a unitary representation of the deck group on a
                         k-dimensional value space.  Defines a dynamics only
                         when it commutes with the potential everywhere.
* ``TwistedRepTable`` -- a holonomy-twisted table obeying
                         G(s1 s2) = h(s2) G(s1) h(s2)^-1 G(s2),
                         covering the N-fermion semidirect construction.

The module also houses the executable classifier (trivial / character /
matrix-compatible / incompatible) and the generated-algebra span test that
backs the genericity verdict.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .covering import (
    CoveringSpace,
    FreeWord,
    Permutation,
    SemidirectElement,
    Winding,
    deck_compose,
)
from .errors import ConfigError, NonUnimodularFactorError

UNIT_MODULUS_TOL = 1e-12
UNITARITY_TOL = 1e-12
RELATION_TOL = 1e-12
COMMUTE_TOL = 1e-10
HERMITIAN_TOL = 1e-12
SPAN_SINGULAR_VALUE_CUT = 1e-8

NFERMION_TENSOR_DIM_CAP = 27


def max_abs(a):
    return float(np.max(np.abs(a))) if np.size(a) else 0.0


def unitarity_residual(u):
    u = np.asarray(u)
    return max_abs(u.conj().T @ u - np.eye(u.shape[0]))


def hermiticity_residual(m):
    m = np.asarray(m)
    return max_abs(m - m.conj().T)


# ---------------------------------------------------------------------------
# characters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Character:
    """Unit-modulus multiplicative factor on a deck group.

    Payload by group:
      ring      -- a real twist angle ``beta``; winding k maps to exp(i k beta)
      sym       -- parity exponent 0 (trivial) or 1 (alternating)
      free      -- one unit phase per generator
      nfermion  -- parity exponent plus shared per-generator phases
    """

    group_id: tuple
    beta: float = 0.0
    parity_exponent: int = 0
    generator_phases: tuple = ()

    @classmethod
    def ring(cls, beta):
        return cls(group_id=("ring",), beta=float(beta))

    @classmethod
    def exchange(cls, n, sign):
        if sign not in (+1, -1):
            raise ConfigError("exchange character sign must be +1 or -1")
        return cls(group_id=("sym", n), parity_exponent=0 if sign == 1 else 1)

    @classmethod
    def free(cls, phases):
        phases = tuple(complex(p) for p in phases)
        for p in phases:
            _require_unimodular(p)
        return cls(group_id=("free", len(phases)), generator_phases=phases)

    @classmethod
    def nfermion(cls, n, phases, sign=-1):
        phases = tuple(complex(p) for p in phases)
        for p in phases:
            _require_unimodular(p)
        return cls(group_id=("nfermion", n, len(phases)),
                   parity_exponent=0 if sign == 1 else 1,
                   generator_phases=phases)

    @property
    def dim(self):
        return 1

    @property
    def is_trivial(self):
        kind = self.group_id[0]
        if kind == "ring":
            return abs(_principal_angle(self.beta)) < 1e-15
        if kind == "sym":
            return self.parity_exponent == 0
        if kind == "free":
            return all(abs(p - 1) < 1e-15 for p in self.generator_phases)
        return self.parity_exponent == 0 and all(
            abs(p - 1) < 1e-15 for p in self.generator_phases)

    def value(self, sigma):
        """Evaluate on a deck element through the homomorphism property."""
        kind = self.group_id[0]
        if kind == "ring":
            if not isinstance(sigma, Winding):
                raise TypeError("ring character evaluates on windings")
            return complex(np.exp(1j * sigma.k * self.beta))
        if sigma.group_id != self.group_id:
            raise TypeError(f"character on {self.group_id} cannot evaluate a "
                            f"deck element of {sigma.group_id}")
        if kind == "sym":
            return complex(sigma.sign ** self.parity_exponent)
        if kind == "free":
            return self._word_value(sigma)
        out = complex(sigma.perm.sign ** self.parity_exponent)
        for word in sigma.words:
            out *= self._word_value(word)
        return out

    def _word_value(self, word):
        out = 1.0 + 0.0j
        for gen, exp in word.syllables:
            out *= self.generator_phases[gen] ** exp
        return complex(out)

    def generator_values(self, space):
        return [self.value(g) for g in space.deck_generators()]


def _principal_angle(beta):
    return math.remainder(beta, 2.0 * math.pi)


def _require_unimodular(value):
    if abs(abs(value) - 1.0) > UNIT_MODULUS_TOL:
        raise NonUnimodularFactorError(
            f"factor value {value!r} has modulus {abs(value):.12f}; values off "
            "the unit circle admit no equivariant |psi|^2 distribution (the "
            "sheet-summed density diverges) and are rejected"
        )


def make_character(deck, generator_values):
    """Build a character of the deck group from its generator values.

    ``deck`` is a group id tuple (("ring",), ("sym", N), ("free", g)) or a
    CoveringSpace.  Values must be unit modulus and satisfy the group
    relations (transpositions square to the identity, so exchange values
    must be +-1).
    """
    if isinstance(deck, CoveringSpace):
        deck = deck.deck_identity().group_id
    values = [complex(v) for v in generator_values]
    for v in values:
        _require_unimodular(v)
    kind = deck[0]
    if kind == "ring":
        if len(values) != 1:
            raise ConfigError("ring character takes one generator value")
        return Character.ring(float(np.angle(values[0])))
    if kind == "sym":
        n = deck[1]
        if len(values) != max(1, n - 1):
            raise ConfigError(f"expected {max(1, n - 1)} transposition values")
        if any(abs(v - values[0]) > UNIT_MODULUS_TOL for v in values):
            raise ConfigError(
                "all adjacent transpositions are conjugate; their character "
                "values must coincide")
        v = values[0]
        if abs(v - 1) <= UNIT_MODULUS_TOL:
            return Character.exchange(n, +1)
        if abs(v + 1) <= UNIT_MODULUS_TOL:
            return Character.exchange(n, -1)
        raise ConfigError(
            f"transposition value {v!r} violates the relation value^2 = 1")
    if kind == "free":
        if len(values) != deck[1]:
            raise ConfigError(f"expected {deck[1]} generator values")
        return Character.free(values)
    raise ConfigError(f"unsupported deck group for make_character: {deck}")


def homomorphism_residual(factor, space, n_pairs=1000, seed=0, max_word_length=5):
    """Max |f(s t) - f(s) f(t)| over seeded random deck pairs.

    Works for characters and matrix representations alike (matrix case uses
    the max-abs matrix norm).
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        s = space.random_deck(rng, max_word_length=max_word_length)
        t = space.random_deck(rng, max_word_length=max_word_length)
        st = deck_compose(s, t)
        if isinstance(factor, Character):
            err = abs(factor.value(st) - factor.value(s) * factor.value(t))
        else:
            err = max_abs(factor.evaluate(st)
                          - factor.evaluate(s) @ factor.evaluate(t))
        worst = max(worst, float(err))
    return worst


# ---------------------------------------------------------------------------
# finite groups and character enumeration
# ---------------------------------------------------------------------------

class FiniteGroup:
    """Explicitly presented finite group (order capped at 10^4)."""

    ORDER_CAP = 10_000

    def __init__(self, elements, compose, name="group"):
        self.elements = list(elements)
        if len(self.elements) > self.ORDER_CAP:
            raise ConfigError(
                f"group order {len(self.elements)} exceeds cap {self.ORDER_CAP}")
        self.compose = compose
        self.name = name
        self._index = {g: i for i, g in enumerate(self.elements)}
        self.identity = self._find_identity()

    @classmethod
    def symmetric(cls, n):
        if math.factorial(n) > cls.ORDER_CAP:
            raise ConfigError(f"S_{n} exceeds the order cap")
        elements = [tuple(p) for p in itertools.permutations(range(n))]

        def compose(p, q):
            return tuple(p[q[i]] for i in range(n))

        return cls(elements, compose, name=f"S{n}")

    @classmethod
    def cyclic(cls, n):
        return cls(list(range(n)), lambda a, b: (a + b) % n, name=f"Z{n}")

    def __len__(self):
        return len(self.elements)

    def _find_identity(self):
        probe = self.elements[0]
        for e in self.elements:
            if self.compose(e, probe) == probe and self.compose(probe, e) == probe:
                return e
        raise ConfigError("group has no identity element")

    def inverse(self, g):
        for h in self.elements:
            if self.compose(g, h) == self.identity:
                return h
        raise ConfigError(f"element {g!r} has no inverse")

    def element_order(self, g):
        order, acc = 1, g
        while acc != self.identity:
            acc = self.compose(acc, g)
            order += 1
        return order

    def subgroup_closure(self, seed_elements):
        members = {self.identity}
        frontier = [self.identity]
        seeds = list(seed_elements)
        for s in seeds:
            if s not in members:
                members.add(s)
                frontier.append(s)
        while frontier:
            g = frontier.pop()
            for s in seeds:
                for h in (self.compose(g, s), self.compose(s, g)):
                    if h not in members:
                        members.add(h)
                        frontier.append(h)
        return members

    def commutator_subgroup(self):
        """Brute-force closure of all commutators (normal in any group)."""
        commutators = set()
        for a in self.elements:
            a_inv = self.inverse(a)
            for b in self.elements:
                c = self.compose(self.compose(a, b),
                                 self.compose(a_inv, self.inverse(b)))
                commutators.add(c)
        return self.subgroup_closure(commutators)

    def generating_set(self):
        """Greedy small generating set."""
        gens = []
        generated = {self.identity}
        for g in self.elements:
            if g not in generated:
                gens.append(g)
                generated = self.subgroup_closure(gens)
                if len(generated) == len(self.elements):
                    break
        return gens


class FiniteGroupCharacter:
    """Homomorphism from a finite group into the unit circle, as a table."""

    def __init__(self, group, table):
        self.group = group
        self.table = dict(table)

    def value(self, g):
        return self.table[g]

    @property
    def is_trivial(self):
        return all(abs(v - 1) < 1e-12 for v in self.table.values())

    def homomorphism_residual(self):
        worst = 0.0
        for a in self.group.elements:
            for b in self.group.elements:
                worst = max(worst, abs(self.table[self.group.compose(a, b)]
                                       - self.table[a] * self.table[b]))
        return worst

    def __repr__(self):
        kind = "trivial" if self.is_trivial else "nontrivial"
        return f"FiniteGroupCharacter({self.group.name}, {kind})"


def conjugacy_residual(rep_a, rep_b, u):
    """How far rep_b is from u rep_a u^dagger on the generators.

    Conjugate representations define the same dynamics whenever the
    conjugating unitary also commutes with the potential; this check detects
    conjugacy over a supplied unitary (no canonical form is computed).
    """
    if rep_a.group_id != rep_b.group_id:
        raise ConfigError("representations live on different deck groups")
    u = np.asarray(u, dtype=complex)
    if unitarity_residual(u) > UNITARITY_TOL:
        raise ConfigError("conjugator must be unitary")
    worst = 0.0
    for ga, gb in zip(rep_a.generators, rep_b.generators):
        worst = max(worst, max_abs(gb - u @ ga @ u.conj().T))
    return worst


def character_table(group):
    """JSON-ready character table of a finite group."""
    chars = enumerate_characters(group)
    elements = [repr(g) for g in group.elements]
    rows = []
    for i, c in enumerate(chars):
        rows.append({
            "index": i,
            "trivial": bool(c.is_trivial),
            "values": [[float(np.real(c.value(g))), float(np.imag(c.value(g)))]
                       for g in group.elements],
        })
    return {"group": group.name, "order": len(group),
            "elements": elements, "characters": rows}


def enumerate_characters(group):
    """All homomorphisms of a finite group into the unit circle.

    Characters factor through the abelianization, computed here by the
    brute-force commutator-subgroup closure; candidate generator phases are
    roots of unity propagated over the Cayley graph, which rejects any
    ill-defined assignment.  Infinite groups are unsupported: the ring's
    characters form the one-parameter family beta -> exp(i k beta) and are
    handled symbolically by ``Character.ring``.
    """
    if isinstance(group, (tuple, CoveringSpace)) or group in ("ring", "free"):
        raise ConfigError(
            "enumerate_characters needs a finite group; infinite deck groups "
            "carry continuous character families (use Character.ring / "
            "Character.free)")
    derived = group.commutator_subgroup()
    gens = group.generating_set()
    if not gens:
        return [FiniteGroupCharacter(group, {group.identity: 1.0 + 0j})]

    # Phases may only depend on the coset modulo the derived subgroup, so the
    # effective order of each generator is its order in the quotient.
    def coset_order(g):
        order, acc = 1, g
        while acc not in derived:
            acc = group.compose(acc, g)
            order += 1
        return order

    orders = [coset_order(g) for g in gens]
    characters = []
    seen_tables = set()
    for exponents in itertools.product(*(range(m) for m in orders)):
        assignment = {g: np.exp(2j * np.pi * k / m)
                      for g, k, m in zip(gens, exponents, orders)}
        table = _propagate_character(group, gens, assignment)
        if table is None:
            continue
        key = tuple(np.round([table[g] for g in group.elements], 9))
        if key in seen_tables:
            continue
        seen_tables.add(key)
        characters.append(FiniteGroupCharacter(group, table))
    return characters


def _propagate_character(group, gens, assignment, tol=1e-9):
    """Extend generator phases over the Cayley graph; None if inconsistent."""
    table = {group.identity: 1.0 + 0j}
    frontier = [group.identity]
    while frontier:
        x = frontier.pop()
        vx = table[x]
        for g in gens:
            y = group.compose(x, g)
            vy = vx * assignment[g]
            if y in table:
                if abs(table[y] - vy) > tol:
                    return None
            else:
                table[y] = vy
                frontier.append(y)
    if len(table) != len(group):
        return None
    return table


# ---------------------------------------------------------------------------
# matrix representations
# ---------------------------------------------------------------------------

@dataclass
class MatrixRep:
    """Unitary representation of a deck group given by generator matrices.

    ``generators`` follows the order of ``CoveringSpace.deck_generators``:
    the single winding for the ring, the adjacent transpositions for the
    symmetric group, the free letters for a free cover.
    """

    group_id: tuple
    generators: tuple
    verified_potentials: set = field(default_factory=set, compare=False)

    def __post_init__(self):
        mats = tuple(np.asarray(m, dtype=complex) for m in self.generators)
        object.__setattr__(self, "generators", mats)
        dims = {m.shape for m in mats}
        if len(dims) != 1 or mats[0].shape[0] != mats[0].shape[1]:
            raise ConfigError("generator matrices must share one square shape")
        for m in mats:
            res = unitarity_residual(m)
            if res > UNITARITY_TOL:
                raise NonUnimodularFactorError(
                    f"generator is not unitary (residual {res:.2e}); only "
                    "unitary factors admit an equivariant density")
        self._check_relations()

    @classmethod
    def ring(cls, matrix):
        return cls(group_id=("ring",), generators=(matrix,))

    @classmethod
    def exchange(cls, n, transposition_matrices):
        return cls(group_id=("sym", n), generators=tuple(transposition_matrices))

    @classmethod
    def free(cls, matrices):
        return cls(group_id=("free", len(matrices)), generators=tuple(matrices))

    @classmethod
    def from_character(cls, character, dim, space):
        gens = [val * np.eye(dim) for val in character.generator_values(space)]
        return cls(group_id=character.group_id, generators=tuple(gens))

    def _check_relations(self):
        if self.group_id[0] == "sym":
            n = self.group_id[1]
            if len(self.generators) != n - 1:
                raise ConfigError(f"S_{n} needs {n - 1} transposition matrices")
            eye = np.eye(self.dim)
            for i, s in enumerate(self.generators):
                if max_abs(s @ s - eye) > RELATION_TOL:
                    raise ConfigError(
                        f"transposition matrix {i} fails s^2 = 1")
            for i in range(n - 2):
                braid = self.generators[i] @ self.generators[i + 1]
                if max_abs(np.linalg.matrix_power(braid, 3) - eye) > RELATION_TOL:
                    raise ConfigError(f"braid relation fails at {i}")
            for i in range(n - 1):
                for j in range(i + 2, n - 1):
                    comm = (self.generators[i] @ self.generators[j]
                            - self.generators[j] @ self.generators[i])
                    if max_abs(comm) > RELATION_TOL:
                        raise ConfigError(
                            f"distant transpositions {i},{j} must commute")
        elif self.group_id[0] == "ring":
            if len(self.generators) != 1:
                raise ConfigError("ring representation takes one generator")

    @property
    def dim(self):
        return self.generators[0].shape[0]

    @property
    def is_trivial(self):
        eye = np.eye(self.dim)
        return all(max_abs(g - eye) < 1e-12 for g in self.generators)

    @property
    def is_scalar(self):
        """True when every generator is a unit phase times the identity."""
        eye = np.eye(self.dim)
        for g in self.generators:
            phase = np.trace(g) / self.dim
            if max_abs(g - phase * eye) > 1e-12:
                return False
        return True

    def evaluate(self, sigma):
        kind = self.group_id[0]
        if kind == "ring":
            if not isinstance(sigma, Winding):
                raise TypeError("ring representation evaluates on windings")
            g = self.generators[0]
            if sigma.k >= 0:
                return np.linalg.matrix_power(g, sigma.k)
            return np.linalg.matrix_power(g.conj().T, -sigma.k)
        if sigma.group_id != self.group_id:
            raise TypeError(f"representation of {self.group_id} cannot evaluate "
                            f"a deck element of {sigma.group_id}")
        if kind == "sym":
            out = np.eye(self.dim, dtype=complex)
            for i in _adjacent_transposition_word(sigma):
                out = out @ self.generators[i]
            return out
        if kind == "free":
            out = np.eye(self.dim, dtype=complex)
            for gen, exp in sigma.syllables:
                g = self.generators[gen]
                step = g if exp > 0 else g.conj().T
                for _ in range(abs(exp)):
                    out = out @ step
            return out
        raise ConfigError(f"unsupported group for MatrixRep: {self.group_id}")

    def fractional_generator_power(self, t):
        """Gamma^t for the single ring generator, eigenphases in (-pi, pi].

        The branch makes t -> Gamma^t the continuous one-parameter family
        through the identity, which is the interpolation the gauge-fixed
        storage and covariant potentials rely on.
        """
        if self.group_id != ("ring",):
            raise ConfigError("fractional powers defined for the ring generator")
        return unitary_fractional_power(self.generators[0], t)


def _adjacent_transposition_word(perm):
    """Decompose a permutation into adjacent transposition indices."""
    images = list(perm.images)
    word = []
    n = len(images)
    for _ in range(n * n):
        done = True
        for i in range(n - 1):
            if images[i] > images[i + 1]:
                images[i], images[i + 1] = images[i + 1], images[i]
                word.append(i)
                done = False
        if done:
            break
    # bubble sort wrote p as (product of recorded swaps) applied to sorted;
    # the recorded sequence, reversed, multiplies out to p.
    return list(reversed(word))


def unitary_eig(u, tol=1e-9):
    """Eigen-decomposition of a (normal) unitary matrix with unitary basis."""
    u = np.asarray(u, dtype=complex)
    t, z = scipy.linalg.schur(u, output="complex")
    off = max_abs(t - np.diag(np.diag(t)))
    if off > tol:
        raise ConfigError(f"matrix is not normal (Schur off-diagonal {off:.2e})")
    return np.diag(t).copy(), z


def unitary_fractional_power(u, t):
    eigvals, basis = unitary_eig(u)
    phases = np.angle(eigvals)  # principal branch (-pi, pi]
    powered = np.exp(1j * phases * t)
    return (basis * powered) @ basis.conj().T


def random_unitary(dim, rng):
    """Haar-ish random unitary via QR with phase-fixed diagonal."""
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(a)
    d = np.diag(r)
    return q * (d / np.abs(d))


# ---------------------------------------------------------------------------
# commutation gate and classifier
# ---------------------------------------------------------------------------

def _potential_digest(potential_samples):
    stacked = np.ascontiguousarray(np.stack([np.asarray(v) for v in potential_samples]))
    return hash(stacked.tobytes())


def check_commutes(factor, potential_samples, tol=COMMUTE_TOL):
    """True iff every generator factor commutes with every sampled potential.

    Samples must be Hermitian k x k matrices on the factor's value space.
    Scalar factors (characters) commute with everything.  A passing check is
    recorded on the representation as a certificate keyed by a digest of the
    samples.
    """
    samples = [np.asarray(v, dtype=complex) for v in potential_samples]
    if not samples:
        raise ConfigError("need at least one potential sample")
    for i, v in enumerate(samples):
        if hermiticity_residual(v) > HERMITIAN_TOL:
            raise ConfigError(f"potential sample {i} is not Hermitian")
    if isinstance(factor, Character):
        return True
    dim = factor.dim
    for v in samples:
        if v.shape != (dim, dim):
            raise ConfigError("potential sample dimension does not match factor")
    worst = 0.0
    for g in factor.generators:
        for v in samples:
            worst = max(worst, max_abs(g @ v - v @ g))
    ok = worst <= tol
    if ok:
        factor.verified_potentials.add(_potential_digest(samples))
    return ok


def generated_algebra_span(potential_samples, word_length_cap=6):
    """Dimension of the linear span of sample products up to the length cap.

    Rank is counted by singular values above 1e-8 after normalizing each
    product to unit max entry; the span equals the full matrix algebra when
    the rank reaches k^2.
    """
    samples = [np.asarray(v, dtype=complex) for v in potential_samples]
    k = samples[0].shape[0]
    products = [np.eye(k, dtype=complex)]
    level = [np.eye(k, dtype=complex)]
    for _ in range(word_length_cap):
        level = [v @ p for v in samples for p in level]
        products.extend(level)
        if len(products) > 4000:
            break
    rows = []
    for p in products:
        scale = max_abs(p)
        if scale > 0:
            rows.append((p / scale).ravel())
    matrix = np.stack(rows)
    singular_values = np.linalg.svd(matrix, compute_uv=False)
    return int(np.sum(singular_values > SPAN_SINGULAR_VALUE_CUT))


@dataclass(frozen=True)
class Classification:
    label: str                 # "C0" | "C1" | "C2" | "incompatible"
    commutes: bool
    scalar_factor: bool
    span_dim: int
    spans_full_algebra: bool
    detail: str

    @property
    def compatible(self):
        return self.label != "incompatible"


def classify_dynamics(factor, potential_samples, word_length_cap=6):
    """Sort a factor/potential pair into its dynamics class.

    C0: trivial factor (the plain dynamics on the base).
    C1: every generator a unit scalar, i.e. the factor is a character.
    C2: genuinely matrix valued, commuting with every sampled potential.
    incompatible: the commutation gate fails, or the sampled potentials
    already generate the full matrix algebra while the factor is not scalar
    (only characters survive a generic potential).
    """
    samples = [np.asarray(v, dtype=complex) for v in potential_samples]
    if not samples:
        raise ConfigError("need at least one potential sample")
    if isinstance(factor, Character):
        scalar = True
        trivial = factor.is_trivial
        commutes = True
        dim = 1
    else:
        scalar = factor.is_scalar
        trivial = factor.is_trivial
        commutes = check_commutes(factor, samples)
        dim = factor.dim
    if samples[0].ndim == 0 or samples[0].shape == ():
        samples = [np.atleast_2d(v) for v in samples]
    span_dim = generated_algebra_span(samples, word_length_cap)
    spans_full = span_dim == samples[0].shape[0] ** 2
    if not commutes:
        return Classification("incompatible", False, scalar, span_dim, spans_full,
                              "factor fails to commute with the sampled potential")
    if spans_full and not scalar and dim == samples[0].shape[0]:
        return Classification("incompatible", commutes, scalar, span_dim, spans_full,
                              "sampled potentials generate the full matrix algebra; "
                              "only scalar factors are compatible")
    if trivial:
        return Classification("C0", True, scalar, span_dim, spans_full,
                              "trivial factor: plain dynamics")
    if scalar:
        return Classification("C1", True, True, span_dim, spans_full,
                              "character factor: compatible with every potential")
    return Classification("C2", True, False, span_dim, spans_full,
                          "matrix factor commuting with the sampled potentials")


# ---------------------------------------------------------------------------
# character decomposition of abelian matrix factors
# ---------------------------------------------------------------------------

def decompose_by_character(factor, tol=1e-10):
    """Split a matrix factor over an abelian deck group into character sectors.

    Returns a list of (Character, basis) pairs, where basis columns span the
    joint eigenspace carrying that character.  The projectors reconstruct
    the generators: sum_i gamma_sigma^(i) P_i = Gamma_sigma.
    """
    if factor.group_id[0] not in ("ring", "free"):
        raise ConfigError("character decomposition needs an abelian deck group")
    gens = factor.generators
    for a, b in itertools.combinations(gens, 2):
        if max_abs(a @ b - b @ a) > tol:
            raise ConfigError(
                "generators do not commute; no simultaneous character "
                "decomposition exists")
    basis = _simultaneous_unitary_diagonalization(gens, tol)
    k = factor.dim
    phase_rows = []
    for g in gens:
        d = basis.conj().T @ g @ basis
        phase_rows.append(np.angle(np.diag(d)))
    phase_rows = np.array(phase_rows)  # (n_gens, k)
    keys = [tuple(np.round(phase_rows[:, j], 9)) for j in range(k)]
    sectors = {}
    for j, key in enumerate(keys):
        sectors.setdefault(key, []).append(j)
    out = []
    for key in sorted(sectors):
        cols = sectors[key]
        if factor.group_id[0] == "ring":
            character = Character.ring(float(key[0]))
        else:
            character = Character.free([np.exp(1j * a) for a in key])
        out.append((character, basis[:, cols].copy()))
    return out


def _simultaneous_unitary_diagonalization(unitaries, tol, attempts=4):
    k = unitaries[0].shape[0]
    rng = np.random.default_rng(20240917)
    for _ in range(attempts):
        h = np.zeros((k, k), dtype=complex)
        for u in unitaries:
            c = rng.normal() + 1j * rng.normal()
            h += c * u + np.conj(c) * u.conj().T
        # h is Hermitian and commutes with every generator; a generic
        # combination separates all joint eigenspaces.
        _, basis = np.linalg.eigh(h)
        ok = True
        for u in unitaries:
            d = basis.conj().T @ u @ basis
            if max_abs(d - np.diag(np.diag(d))) > tol:
                ok = False
                break
        if ok:
            return basis
    raise ConfigError("failed to simultaneously diagonalize the generators")


# ---------------------------------------------------------------------------
# N-fermion factor and holonomy-twisted tables
# ---------------------------------------------------------------------------

def permutation_operator(perm, dim):
    """Natural left action of a permutation on the N-fold tensor power.

    Sends basis vector e_{i_1} x ... x e_{i_N} to the basis vector whose
    slot p(j) holds i_j (slot j of the output draws from slot p^-1(j)).
    """
    n = perm.n
    size = dim ** n
    op = np.zeros((size, size))
    pinv = perm.inverse()
    for src in itertools.product(range(dim), repeat=n):
        dst = tuple(src[pinv(j)] for j in range(n))
        op[np.ravel_multi_index(dst, (dim,) * n),
           np.ravel_multi_index(src, (dim,) * n)] = 1.0
    return op


def nfermion_factor(n_particles, w_dim, generator_matrices, sigma, qhat_tag=None):
    """Topological factor of the N-fermion cover at a tagged configuration.

    The factor of the deck element sigma = (p, words) is the permutation
    sign times the tensor product of the per-particle word evaluations; the
    tensor slots are ordered by sorting the base labels in ``qhat_tag``, and
    the slot holding label l evaluates the word of the particle that carries
    l in the tag (the index bookkeeping that ties the abstract fiber to a
    concrete ordered tuple).  Default tag is (0, 1, ..., N-1).
    """
    if w_dim ** n_particles > NFERMION_TENSOR_DIM_CAP:
        raise ConfigError(
            f"tensor dimension {w_dim ** n_particles} exceeds cap "
            f"{NFERMION_TENSOR_DIM_CAP}")
    if not isinstance(sigma, SemidirectElement):
        raise TypeError("expected a semidirect deck element")
    if sigma.n != n_particles:
        raise ConfigError("deck element size does not match particle count")
    mats = [np.asarray(m, dtype=complex) for m in generator_matrices]
    for m in mats:
        if unitarity_residual(m) > UNITARITY_TOL:
            raise NonUnimodularFactorError("generator matrices must be unitary")
    word_rep = MatrixRep.free(tuple(mats)) if mats else None
    if qhat_tag is None:
        qhat_tag = tuple(range(n_particles))
    if len(set(qhat_tag)) != n_particles:
        raise ConfigError("tag labels must be distinct")
    slot_order = sorted(range(n_particles), key=lambda j: qhat_tag[j])
    factors = []
    for j in slot_order:
        word = sigma.words[j]
        factors.append(word_rep.evaluate(word) if word_rep is not None
                       else np.eye(w_dim, dtype=complex))
    out = factors[0]
    for m in factors[1:]:
        out = np.kron(out, m)
    return sigma.perm.sign * out


class TwistedRepTable:
    """Holonomy-twisted factor table at a fixed base configuration.

    Provides the factor Gamma(sigma) and the holonomy h(sigma) of the loop
    associated with sigma, in one fixed fiber basis, obeying

        Gamma(s1 s2) = h(s2) Gamma(s1) h(s2)^-1 Gamma(s2).

    Ordinary representations embed with trivial holonomy.  The N-fermion
    table uses permutation operators as holonomies (the bundle transport
    permutes tensor slots) and the sign-times-tensor factor.
    """

    def __init__(self, space, factor_fn, holonomy_fn, dim, description=""):
        self.space = space
        self._factor_fn = factor_fn
        self._holonomy_fn = holonomy_fn
        self.dim = dim
        self.description = description
        self._overrides = {}

    @classmethod
    def from_matrix_rep(cls, rep, space):
        return cls(space,
                   factor_fn=rep.evaluate,
                   holonomy_fn=lambda sigma: np.eye(rep.dim),
                   dim=rep.dim,
                   description="untwisted (trivial holonomy)")

    @classmethod
    def nfermion(cls, n_particles, w_dim, generator_matrices, qhat_tag=None):
        space = CoveringSpace.nfermion_cover(n_particles, len(generator_matrices))
        if qhat_tag is None:
            qhat_tag = tuple(range(n_particles))
        slot_order = sorted(range(n_particles), key=lambda j: qhat_tag[j])
        relabel = Permutation(tuple(slot_order)).inverse()

        def factor_fn(sigma):
            return nfermion_factor(n_particles, w_dim, generator_matrices,
                                   sigma, qhat_tag)

        def holonomy_fn(sigma):
            # transport along the loop of sigma permutes the tensor slots by
            # the inverse of sigma's permutation part, expressed in the
            # slot order fixed by the tag
            p = relabel.compose(sigma.perm.inverse()).compose(relabel.inverse())
            return permutation_operator(p, w_dim)

        return cls(space, factor_fn, holonomy_fn, dim=w_dim ** n_particles,
                   description=f"{n_particles}-fermion twisted table")

    def factor(self, sigma):
        if sigma in self._overrides:
            return self._overrides[sigma]
        return np.asarray(self._factor_fn(sigma), dtype=complex)

    def holonomy(self, sigma):
        return np.asarray(self._holonomy_fn(sigma), dtype=complex)

    def corrupted(self, sigma, matrix):
        """Copy of the table with the entry for one deck element replaced."""
        clone = TwistedRepTable(self.space, self._factor_fn, self._holonomy_fn,
                                self.dim, self.description + " [corrupted]")
        clone._overrides = dict(self._overrides)
        clone._overrides[sigma] = np.asarray(matrix, dtype=complex)
        return clone


def verify_twisted_law(table, samples=1000, seed=0, max_word_length=4):
    """Max residual of the twisted composition law over seeded random pairs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        s1 = table.space.random_deck(rng, max_word_length=max_word_length)
        s2 = table.space.random_deck(rng, max_word_length=max_word_length)
        lhs = table.factor(deck_compose(s1, s2))
        h2 = table.holonomy(s2)
        rhs = h2 @ table.factor(s1) @ h2.conj().T @ table.factor(s2)
        worst = max(worst, max_abs(lhs - rhs))
    return worst


# ---------------------------------------------------------------------------
# covariant potentials on the cover
# ---------------------------------------------------------------------------

def check_covariant_potential(vstar_sheets, factor, tol):
    """Verify the cover-side covariance rule against a matrix factor.

    ``vstar_sheets`` maps deck elements (ring windings) to Hermitian fields
    sampled at matching base points, shape (n_points, k, k).  The field is
    covariant when the sheet-sigma samples equal the conjugation of the
    identity-sheet samples by the factor of sigma.
    """
    if len(vstar_sheets) < 2:
        raise ConfigError("need the field on at least 2 sheets")
    identity_key = next((k for k in vstar_sheets if k.is_identity), None)
    if identity_key is None:
        raise ConfigError("sheet samples must include the identity sheet")
    base = np.asarray(vstar_sheets[identity_key], dtype=complex)
    shape = base.shape
    for sigma, field_sigma in vstar_sheets.items():
        arr = np.asarray(field_sigma, dtype=complex)
        if arr.shape != shape:
            raise ConfigError("sheet grids do not match")
        gamma = factor.evaluate(sigma) if isinstance(factor, MatrixRep) \
            else factor.value(sigma) * np.eye(shape[-1])
        expected = np.einsum("ab,nbc,cd->nad", gamma, base, gamma.conj().T)
        if max_abs(arr - expected) > tol:
            return False
    return True
