"""Covering spaces, deck transformations, lifts and projections.

Supported covers:

* ``ring``          -- the circle covered by the real line; deck group is the
                       integers acting by full turns.
* ``two_particle_ring`` -- the torus of ordered angle pairs covering the space
                       of unordered pairs; deck action is coordinate exchange.
* ``free_cover``    -- an abstract base with free fundamental group F_g; deck
                       elements are reduced words, cover points are symbolic.
* ``nfermion_cover`` -- N indistinguishable particles each living on a base
                       with free fundamental group; the deck group is the
                       semidirect product of the permutations with the N-fold
                       product of word groups.

Only a finite window of deck translates is ever materialized for cover-side
checks; every invariant used here is local in the deck group.  Ring cover
points are stored as (sheet index, angle in [0, 2pi)) so that many windings
cost no floating-point precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np

from .errors import ConfigError, PhysicsError

TWO_PI = 2.0 * math.pi

MAX_WORD_LENGTH = 64


# ---------------------------------------------------------------------------
# deck elements
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Winding:
    """Deck translation of the ring cover by ``k`` full turns."""

    k: int

    @property
    def group_id(self):
        return ("ring",)

    def inverse(self):
        return Winding(-self.k)

    @property
    def is_identity(self):
        return self.k == 0

    def __repr__(self):
        return f"Winding({self.k})"


def _perm_sign(images):
    n = len(images)
    seen = [False] * n
    sign = 1
    for i in range(n):
        if seen[i]:
            continue
        length = 0
        j = i
        while not seen[j]:
            seen[j] = True
            j = images[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


@dataclass(frozen=True)
class Permutation:
    """Permutation of {1..N}, stored 0-indexed: images[i] = p(i)."""

    images: tuple

    def __post_init__(self):
        if sorted(self.images) != list(range(len(self.images))):
            raise ConfigError(f"not a permutation of 0..{len(self.images) - 1}: {self.images}")

    @classmethod
    def identity(cls, n):
        return cls(tuple(range(n)))

    @classmethod
    def swap(cls, n, i, j):
        images = list(range(n))
        images[i], images[j] = images[j], images[i]
        return cls(tuple(images))

    @property
    def n(self):
        return len(self.images)

    @property
    def group_id(self):
        return ("sym", self.n)

    @property
    def sign(self):
        return _perm_sign(self.images)

    @property
    def is_identity(self):
        return self.images == tuple(range(self.n))

    def __call__(self, i):
        return self.images[i]

    def compose(self, other):
        """(self * other)(i) = self(other(i))."""
        if other.n != self.n:
            raise TypeError("permutation sizes differ")
        return Permutation(tuple(self.images[other.images[i]] for i in range(self.n)))

    def inverse(self):
        inv = [0] * self.n
        for i, v in enumerate(self.images):
            inv[v] = i
        return Permutation(tuple(inv))

    def __repr__(self):
        return f"Permutation{self.images}"


@dataclass(frozen=True)
class FreeWord:
    """Reduced word over generators a_1..a_g of a free group.

    ``syllables`` is a tuple of (generator index, nonzero integer exponent)
    with no two adjacent syllables sharing a generator.  Construction always
    reduces; words longer than ``MAX_WORD_LENGTH`` letters are rejected.
    """

    syllables: tuple
    n_generators: int

    def __post_init__(self):
        for gen, exp in self.syllables:
            if not (0 <= gen < self.n_generators):
                raise ConfigError(f"generator index {gen} out of range")
            if exp == 0:
                raise ConfigError("zero exponent in word syllable")
        for (g1, _), (g2, _) in zip(self.syllables, self.syllables[1:]):
            if g1 == g2:
                raise ConfigError("word is not reduced (adjacent equal generators)")
        if self.length > MAX_WORD_LENGTH:
            raise ConfigError(
                f"word length {self.length} exceeds cap {MAX_WORD_LENGTH}"
            )

    @classmethod
    def identity(cls, n_generators):
        return cls((), n_generators)

    @classmethod
    def generator(cls, index, n_generators, power=1):
        if power == 0:
            return cls.identity(n_generators)
        return cls(((index, power),), n_generators)

    @classmethod
    def from_letters(cls, letters, n_generators):
        """Build (and reduce) from a sequence of (generator, +-1) letters."""
        word = cls.identity(n_generators)
        for gen, exp in letters:
            word = word * cls.generator(gen, n_generators, exp)
        return word

    @property
    def group_id(self):
        return ("free", self.n_generators)

    @property
    def is_identity(self):
        return not self.syllables

    @property
    def length(self):
        return sum(abs(exp) for _, exp in self.syllables)

    def __mul__(self, other):
        if other.n_generators != self.n_generators:
            raise TypeError("free-group ranks differ")
        merged = list(self.syllables)
        for gen, exp in other.syllables:
            if merged and merged[-1][0] == gen:
                total = merged[-1][1] + exp
                if total == 0:
                    merged.pop()
                else:
                    merged[-1] = (gen, total)
            else:
                merged.append((gen, exp))
        return FreeWord(tuple(merged), self.n_generators)

    def inverse(self):
        return FreeWord(
            tuple((gen, -exp) for gen, exp in reversed(self.syllables)),
            self.n_generators,
        )

    def __repr__(self):
        if not self.syllables:
            return "FreeWord(e)"
        body = "*".join(
            f"a{g + 1}" + (f"^{e}" if e != 1 else "") for g, e in self.syllables
        )
        return f"FreeWord({body})"


@dataclass(frozen=True)
class SemidirectElement:
    """Deck element (p, words) of the N-fermion cover.

    The product is (p1, w1)(p2, w2) = (p1 p2, (p2^-1 w1 p2) w2), where the
    conjugated tuple has slot i equal to w1's slot p2(i), and word tuples
    multiply slotwise.
    """

    perm: Permutation
    words: tuple

    def __post_init__(self):
        if len(self.words) != self.perm.n:
            raise ConfigError("word tuple length must equal permutation size")
        ranks = {w.n_generators for w in self.words}
        if len(ranks) > 1:
            raise ConfigError("mixed free-group ranks in semidirect element")

    @classmethod
    def identity(cls, n, n_generators):
        return cls(
            Permutation.identity(n),
            tuple(FreeWord.identity(n_generators) for _ in range(n)),
        )

    @property
    def n(self):
        return self.perm.n

    @property
    def n_generators(self):
        return self.words[0].n_generators

    @property
    def group_id(self):
        return ("nfermion", self.n, self.n_generators)

    @property
    def is_identity(self):
        return self.perm.is_identity and all(w.is_identity for w in self.words)

    def compose(self, other):
        if other.group_id != self.group_id:
            raise TypeError("semidirect elements from different groups")
        p2 = other.perm
        conjugated = tuple(self.words[p2(i)] for i in range(self.n))
        return SemidirectElement(
            self.perm.compose(p2),
            tuple(c * w for c, w in zip(conjugated, other.words)),
        )

    def inverse(self):
        # (p, w)^-1 = (p^-1, v) with v such that (p^-1 w p^-1-conj) v = e:
        # slot i of the conjugate of w by p^-1 is w[p^-1(i)], so
        # v[i] = (w[p^-1(i)])^-1 ... verified by compose() round trip.
        pinv = self.perm.inverse()
        words = tuple(self.words[pinv(i)].inverse() for i in range(self.n))
        return SemidirectElement(pinv, words)

    def __repr__(self):
        return f"Semidirect({self.perm.images}, {list(self.words)})"


def deck_compose(s1, s2):
    """Group product s1 * s2 of two deck elements of the same group."""
    if s1.group_id != s2.group_id:
        raise TypeError(f"mixed deck groups: {s1.group_id} vs {s2.group_id}")
    if isinstance(s1, Winding):
        return Winding(s1.k + s2.k)
    if isinstance(s1, Permutation):
        return s1.compose(s2)
    if isinstance(s1, FreeWord):
        return s1 * s2
    if isinstance(s1, SemidirectElement):
        return s1.compose(s2)
    raise TypeError(f"unknown deck element type {type(s1)!r}")


# ---------------------------------------------------------------------------
# cover points
# ---------------------------------------------------------------------------

class RingPoint(NamedTuple):
    """Point on the ring cover: sheet index plus angle in [0, 2pi)."""

    sheet: int
    angle: float

    @property
    def unwrapped(self):
        return self.angle + TWO_PI * self.sheet

    @classmethod
    def from_unwrapped(cls, theta):
        sheet = math.floor(theta / TWO_PI)
        return cls(sheet, theta - TWO_PI * sheet)


class FreePoint(NamedTuple):
    """Symbolic cover point of a free cover: a word and a base label."""

    word: FreeWord
    base: object


# ---------------------------------------------------------------------------
# covering spaces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoveringSpace:
    """Declaration of a covering space and its materialized deck window."""

    kind: str
    radius: float = 1.0
    sheet_window: int = 3
    n_particles: int = 1
    n_generators: int = 1
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("ring", "two_particle_ring", "free_cover", "nfermion_cover"):
            raise ConfigError(f"unknown covering space kind {self.kind!r}")
        if self.sheet_window < 3:
            raise ConfigError("sheet_window must be at least 3")
        if self.radius <= 0:
            raise ConfigError("radius must be positive")

    @classmethod
    def ring(cls, radius=1.0, sheet_window=3):
        return cls(kind="ring", radius=radius, sheet_window=sheet_window)

    @classmethod
    def two_particle_ring(cls, radius=1.0, sheet_window=3):
        return cls(kind="two_particle_ring", radius=radius,
                   sheet_window=sheet_window, n_particles=2)

    @classmethod
    def free_cover(cls, n_generators, sheet_window=3):
        return cls(kind="free_cover", n_generators=n_generators,
                   sheet_window=sheet_window)

    @classmethod
    def nfermion_cover(cls, n_particles, n_generators, sheet_window=3):
        return cls(kind="nfermion_cover", n_particles=n_particles,
                   n_generators=n_generators, sheet_window=sheet_window)

    @property
    def circumference(self):
        return TWO_PI * self.radius

    def deck_identity(self):
        if self.kind == "ring":
            return Winding(0)
        if self.kind == "two_particle_ring":
            return Permutation.identity(2)
        if self.kind == "free_cover":
            return FreeWord.identity(self.n_generators)
        return SemidirectElement.identity(self.n_particles, self.n_generators)

    def deck_generators(self):
        if self.kind == "ring":
            return [Winding(1)]
        if self.kind == "two_particle_ring":
            return [Permutation.swap(2, 0, 1)]
        if self.kind == "free_cover":
            return [FreeWord.generator(i, self.n_generators)
                    for i in range(self.n_generators)]
        gens = []
        n, g = self.n_particles, self.n_generators
        for i in range(n - 1):
            gens.append(SemidirectElement(
                Permutation.swap(n, i, i + 1),
                tuple(FreeWord.identity(g) for _ in range(n))))
        for slot in range(n):
            for j in range(g):
                words = [FreeWord.identity(g) for _ in range(n)]
                words[slot] = FreeWord.generator(j, g)
                gens.append(SemidirectElement(Permutation.identity(n), tuple(words)))
        return gens

    def random_deck(self, rng, max_word_length=6):
        """Seeded random deck element, used by the randomized law checks."""
        if self.kind == "ring":
            return Winding(int(rng.integers(-self.sheet_window, self.sheet_window + 1)))
        if self.kind == "two_particle_ring":
            return Permutation(tuple(rng.permutation(2)))
        if self.kind == "free_cover":
            return _random_word(rng, self.n_generators, max_word_length)
        perm = Permutation(tuple(int(i) for i in rng.permutation(self.n_particles)))
        words = tuple(_random_word(rng, self.n_generators, max_word_length)
                      for _ in range(self.n_particles))
        return SemidirectElement(perm, words)


def _random_word(rng, n_generators, max_length):
    length = int(rng.integers(0, max_length + 1))
    letters = [(int(rng.integers(0, n_generators)), int(rng.choice((-1, 1))))
               for _ in range(length)]
    return FreeWord.from_letters(letters, n_generators)


# ---------------------------------------------------------------------------
# deck action
# ---------------------------------------------------------------------------

def deck_apply(space, sigma, qhat):
    """Apply the deck transformation ``sigma`` to the cover point ``qhat``.

    Ring points must stay inside the materialized sheet window; symbolic
    cover points (free covers) have no window.
    """
    if sigma.group_id[0] == "ring":
        if space.kind != "ring":
            raise TypeError("winding acts on the ring cover only")
        if isinstance(qhat, RingPoint):
            point = qhat
        else:
            point = RingPoint.from_unwrapped(float(qhat))
        new_sheet = point.sheet + sigma.k
        if abs(new_sheet) > space.sheet_window:
            raise PhysicsError(
                f"sheet {new_sheet} outside materialized window "
                f"+-{space.sheet_window}"
            )
        return RingPoint(new_sheet, point.angle)

    if sigma.group_id[0] == "sym":
        if space.kind != "two_particle_ring" or sigma.n != 2:
            raise TypeError("permutation action supported on the two-particle ring")
        q = tuple(qhat)
        pinv = sigma.inverse()
        return tuple(q[pinv(i)] for i in range(sigma.n))

    if sigma.group_id[0] == "free":
        if not isinstance(qhat, FreePoint):
            raise TypeError("free-cover points are symbolic FreePoint values")
        return FreePoint(sigma * qhat.word, qhat.base)

    if sigma.group_id[0] == "nfermion":
        q = tuple(qhat)
        if len(q) != sigma.n:
            raise TypeError("configuration size does not match deck element")
        pinv = sigma.perm.inverse()
        out = []
        for i in range(sigma.n):
            j = pinv(i)
            out.append(FreePoint(sigma.words[j] * q[j].word, q[j].base))
        return tuple(out)

    raise TypeError(f"unknown deck element {sigma!r}")


def check_free_action(space, elements, points):
    """A deck action is free: sigma q = q forces sigma = identity.

    Returns the list of (sigma, qhat) violations (empty when the action
    is free on the given samples).
    """
    bad = []
    for sigma in elements:
        if sigma.is_identity:
            continue
        for qhat in points:
            if deck_apply(space, sigma, qhat) == qhat:
                bad.append((sigma, qhat))
    return bad


# ---------------------------------------------------------------------------
# projectability and projection
# ---------------------------------------------------------------------------

def is_projectable_field(samples: Mapping, tol: float) -> bool:
    """Check deck equivariance of a cover-side field.

    ``samples`` maps each materialized deck element sigma to the array of
    pushed-forward field values at the translated points, expressed in base
    coordinates (so for the ring, entry sigma holds v(theta + 2 pi k) as a
    function of theta, and the pushforward is trivial).  The field is
    projectable iff all entries agree with the identity entry within ``tol``.
    """
    if len(samples) < 2:
        raise ConfigError("need samples on at least 2 deck translates")
    identity_key = None
    for key in samples:
        if key.is_identity:
            identity_key = key
            break
    if identity_key is None:
        raise ConfigError("samples must include the identity deck element")
    base = np.asarray(samples[identity_key])
    for sigma, values in samples.items():
        arr = np.asarray(values)
        if arr.shape != base.shape:
            raise ConfigError("sample arrays must share one base-grid shape")
        if np.max(np.abs(arr - base)) > tol:
            return False
    return True


def projectability_residual(samples: Mapping) -> float:
    """Max deviation over deck translates from the identity sheet."""
    identity_key = next(k for k in samples if k.is_identity)
    base = np.asarray(samples[identity_key])
    residual = 0.0
    for values in samples.values():
        residual = max(residual, float(np.max(np.abs(np.asarray(values) - base))))
    return residual


def project_density(samples: Mapping, dx: float, tol: float = 1e-9):
    """Project a deck-invariant cover-side density to the base.

    Raises when the samples are not deck-invariant within ``tol`` (the
    signature of a non-unit-modulus factor or a corrupted state).  The
    returned base density is normalized to unit mass with cell size ``dx``.
    """
    if len(samples) < 2:
        raise ConfigError("need samples on at least 2 deck translates")
    residual = projectability_residual(samples)
    if residual > tol:
        raise PhysicsError(
            f"density is not deck-invariant (residual {residual:.3e} > {tol:.1e}); "
            "no equivariant base density exists"
        )
    identity_key = next(k for k in samples if k.is_identity)
    rho = np.asarray(samples[identity_key], dtype=float).copy()
    mass = float(np.sum(rho) * dx)
    if mass <= 0:
        raise PhysicsError("density has no mass")
    return rho / mass


def lift_base_function(values, deck_elements):
    """Lift a base-grid function to the given ring deck translates.

    The lift of a base function is the same array on every sheet; projection
    is the left inverse of this map.
    """
    return {sigma: np.array(values, copy=True) for sigma in deck_elements}
