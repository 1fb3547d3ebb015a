"""Characters, matrix representations, twisted tables, classification."""

import numpy as np
import pytest
import scipy.linalg

from topobohm.covering import (
    CoveringSpace,
    FreeWord,
    Permutation,
    SemidirectElement,
    Winding,
)
from topobohm.errors import ConfigError, NonUnimodularFactorError
from topobohm.factors import (
    Character,
    FiniteGroup,
    MatrixRep,
    TwistedRepTable,
    check_commutes,
    check_covariant_potential,
    classify_dynamics,
    decompose_by_character,
    enumerate_characters,
    homomorphism_residual,
    make_character,
    nfermion_factor,
    permutation_operator,
    random_unitary,
    unitary_fractional_power,
    verify_twisted_law,
)
from topobohm.scenario import spin_exponential


class TestMakeCharacter:
    def test_antiperiodic_ring_character(self):
        ch = make_character(("ring",), [-1.0])
        assert ch.value(Winding(1)) == pytest.approx(-1.0)
        for k in range(-4, 5):
            assert ch.value(Winding(k)) == pytest.approx((-1.0) ** k)

    def test_trivial_character(self):
        ch = make_character(("ring",), [1.0])
        assert ch.is_trivial
        assert ch.value(Winding(3)) == pytest.approx(1.0)

    def test_non_unimodular_rejected(self):
        with pytest.raises(NonUnimodularFactorError):
            make_character(("ring",), [1.1])

    def test_exchange_relation_enforced(self):
        with pytest.raises(ConfigError, match="relation"):
            make_character(("sym", 3), [1j, 1j])

    def test_exchange_sign_character(self):
        ch = make_character(("sym", 3), [-1.0, -1.0])
        odd = Permutation.swap(3, 0, 1)
        even = odd.compose(Permutation.swap(3, 1, 2))
        assert ch.value(odd) == -1
        assert ch.value(even) == 1


class TestHomomorphism:
    @pytest.mark.parametrize("factor,space", [
        (Character.ring(0.9), CoveringSpace.ring(sheet_window=30)),
        (Character.free([np.exp(0.4j), np.exp(-1.2j)]), CoveringSpace.free_cover(2)),
        (Character.nfermion(3, [np.exp(0.8j)], sign=-1),
         CoveringSpace.nfermion_cover(3, 1)),
    ])
    def test_character_residual(self, factor, space):
        assert homomorphism_residual(factor, space, n_pairs=1000, seed=1) <= 1e-12

    def test_matrix_rep_residual(self, rng):
        rep = MatrixRep.free((random_unitary(3, rng), random_unitary(3, rng)))
        space = CoveringSpace.free_cover(2)
        assert homomorphism_residual(rep, space, n_pairs=300, seed=2) <= 1e-12

    def test_long_products_stay_unitary(self, rng):
        rep = MatrixRep.free((random_unitary(3, rng), random_unitary(3, rng)))
        letters = [(int(rng.integers(0, 2)), int(rng.choice((-1, 1))))
                   for _ in range(64)]
        value = rep.evaluate(FreeWord.from_letters(letters, 2))
        assert np.max(np.abs(value.conj().T @ value - np.eye(3))) <= 1e-10


class TestEnumerateCharacters:
    def test_s3_has_two(self):
        chars = enumerate_characters(FiniteGroup.symmetric(3))
        assert len(chars) == 2
        assert sorted(c.is_trivial for c in chars) == [False, True]

    def test_s4_has_two(self):
        assert len(enumerate_characters(FiniteGroup.symmetric(4))) == 2

    def test_z2(self):
        chars = enumerate_characters(FiniteGroup.cyclic(2))
        values = sorted(np.real(c.value(1)) for c in chars)
        assert np.allclose(values, [-1.0, 1.0])

    def test_z3_has_three(self):
        assert len(enumerate_characters(FiniteGroup.cyclic(3))) == 3

    def test_enumerated_are_homomorphisms(self):
        for c in enumerate_characters(FiniteGroup.symmetric(4)):
            assert c.homomorphism_residual() <= 1e-12

    def test_infinite_group_unsupported(self):
        with pytest.raises(ConfigError, match="continuous character families"):
            enumerate_characters("ring")


class TestMatrixRep:
    def test_rejects_non_unitary(self):
        with pytest.raises(NonUnimodularFactorError):
            MatrixRep.ring(np.array([[1.0, 0.1], [0.0, 1.0]]))

    def test_sym_relations_enforced(self):
        good = [np.array([[0, 1, 0], [1, 0, 0], [0, 0, 1]], dtype=complex),
                np.array([[1, 0, 0], [0, 0, 1], [0, 1, 0]], dtype=complex)]
        rep = MatrixRep.exchange(3, good)
        rng = np.random.default_rng(0)
        # permutation-matrix rep reproduces the action on basis vectors
        for _ in range(50):
            p = Permutation(tuple(int(i) for i in rng.permutation(3)))
            q = Permutation(tuple(int(i) for i in rng.permutation(3)))
            lhs = rep.evaluate(p.compose(q))
            rhs = rep.evaluate(p) @ rep.evaluate(q)
            assert np.max(np.abs(lhs - rhs)) <= 1e-12
        bad = [np.diag([1j, 1, 1]), good[1]]
        with pytest.raises(ConfigError, match="s\\^2"):
            MatrixRep.exchange(3, bad)

    def test_fractional_power_branch(self, pauli):
        gamma = spin_exponential(0.9, [1, 0, 0])
        rep = MatrixRep.ring(gamma)
        assert np.allclose(rep.fractional_generator_power(1.0), gamma)
        assert np.allclose(rep.fractional_generator_power(0.0), np.eye(2))
        half = rep.fractional_generator_power(0.5)
        assert np.allclose(half @ half, gamma)


class TestCheckCommutes:
    def test_scalar_factor_commutes_with_anything(self, pauli, rng):
        v = rng.normal(size=(2, 2))
        v = v + v.T
        rep = MatrixRep.ring(np.exp(0.3j) * np.eye(2))
        assert check_commutes(rep, [v])

    def test_minus_identity_commutes(self, pauli):
        gamma = spin_exponential(np.pi, [0.6, 0.0, 0.8])
        assert np.allclose(gamma, -np.eye(2), atol=1e-12)
        assert check_commutes(MatrixRep.ring(gamma), [pauli["x"], pauli["z"]])

    def test_quarter_turn_fails_against_sigma_x(self, pauli):
        gamma = spin_exponential(np.pi / 2, [0, 0, 1])
        assert not check_commutes(MatrixRep.ring(gamma), [pauli["x"]])

    def test_non_hermitian_sample_rejected(self):
        rep = MatrixRep.ring(np.eye(2))
        with pytest.raises(ConfigError, match="Hermitian"):
            check_commutes(rep, [np.array([[0, 1], [0, 0]])])

    def test_certificate_recorded(self, pauli):
        rep = MatrixRep.ring(spin_exponential(0.4, [0, 0, 1]))
        assert check_commutes(rep, [pauli["z"]])
        assert len(rep.verified_potentials) == 1


class TestClassify:
    def test_character_is_c1(self):
        verdict = classify_dynamics(Character.ring(np.pi), [np.eye(1) * 0.3])
        assert verdict.label == "C1"

    def test_trivial_is_c0(self):
        verdict = classify_dynamics(Character.ring(0.0), [np.eye(1) * 0.3])
        assert verdict.label == "C0"

    def test_magnetic_moment_factor_is_c2(self, pauli):
        gamma = spin_exponential(0.7, [0, 0, 1])  # non-scalar SU(2) element
        verdict = classify_dynamics(MatrixRep.ring(gamma),
                                    [np.zeros((2, 2))])
        assert verdict.label == "C2"
        assert not verdict.scalar_factor

    def test_generic_potential_incompatible(self, rng, pauli):
        gamma = spin_exponential(0.5, [0, 0, 1])
        samples = []
        for _ in range(2):
            a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
            samples.append(a + a.conj().T)
        verdict = classify_dynamics(MatrixRep.ring(gamma), samples)
        assert verdict.label == "incompatible"
        assert verdict.span_dim == 4
        assert verdict.spans_full_algebra

    def test_conjugation_invariance(self, rng, pauli):
        u = random_unitary(2, rng)
        gamma = spin_exponential(0.7, [0, 0, 1])
        samples = [pauli["z"], 0.4 * pauli["z"] + 0.2 * np.eye(2)]
        before = classify_dynamics(MatrixRep.ring(gamma), samples)
        after = classify_dynamics(
            MatrixRep.ring(u @ gamma @ u.conj().T),
            [u @ v @ u.conj().T for v in samples])
        assert before.label == after.label == "C2"
        assert before.span_dim == after.span_dim


class TestDecompose:
    def test_already_diagonal(self):
        rep = MatrixRep.ring(np.diag([np.exp(1j * np.pi / 3),
                                      np.exp(-1j * np.pi / 3)]))
        sectors = decompose_by_character(rep)
        betas = sorted(c.beta for c, _ in sectors)
        assert np.allclose(betas, [-np.pi / 3, np.pi / 3])
        for _, basis in sectors:
            assert abs(np.abs(basis.ravel()).max() - 1.0) < 1e-12  # axes

    def test_pauli_x_rotation(self):
        phi = 0.8
        rep = MatrixRep.ring(spin_exponential(phi, [1, 0, 0]))
        sectors = decompose_by_character(rep)
        betas = sorted(c.beta for c, _ in sectors)
        assert np.allclose(betas, [-phi, phi], atol=1e-12)
        for _, basis in sectors:
            assert np.allclose(np.abs(basis.ravel()), [np.sqrt(0.5)] * 2)

    def test_identity_single_sector(self):
        sectors = decompose_by_character(MatrixRep.ring(np.eye(3)))
        assert len(sectors) == 1
        character, basis = sectors[0]
        assert character.is_trivial
        assert basis.shape == (3, 3)

    def test_reconstruction(self, rng):
        u = random_unitary(3, rng)
        rep = MatrixRep.ring(u @ np.diag(np.exp(1j * np.array([0.3, 0.3, -1.1]))) @ u.conj().T)
        sectors = decompose_by_character(rep)
        for k in (-3, 1, 2):
            rebuilt = sum(c.value(Winding(k)) * (b @ b.conj().T)
                          for c, b in sectors)
            assert np.max(np.abs(rebuilt - rep.evaluate(Winding(k)))) <= 1e-10

    def test_noncommuting_rejected(self, rng, pauli):
        rep = MatrixRep.free((scipy.linalg.expm(1j * pauli["x"]),
                              scipy.linalg.expm(1j * pauli["z"])))
        with pytest.raises(ConfigError, match="commute"):
            decompose_by_character(rep)


class TestNFermionFactor:
    def test_pure_swap_is_minus_identity(self, rng):
        u = random_unitary(2, rng)
        sigma = SemidirectElement(Permutation.swap(2, 0, 1),
                                  (FreeWord.identity(1), FreeWord.identity(1)))
        assert np.allclose(nfermion_factor(2, 2, [u], sigma), -np.eye(4))

    def test_identity_is_identity(self, rng):
        u = random_unitary(2, rng)
        sigma = SemidirectElement.identity(2, 1)
        assert np.allclose(nfermion_factor(2, 2, [u], sigma), np.eye(4))

    def test_single_word_tensor_slot(self, rng):
        u = random_unitary(2, rng)
        sigma = SemidirectElement(Permutation.identity(2),
                                  (FreeWord.generator(0, 1), FreeWord.identity(1)))
        assert np.allclose(nfermion_factor(2, 2, [u], sigma),
                           np.kron(u, np.eye(2)))

    def test_tag_reorders_slots(self, rng):
        u = random_unitary(2, rng)
        sigma = SemidirectElement(Permutation.identity(2),
                                  (FreeWord.generator(0, 1), FreeWord.identity(1)))
        # particle 0 carries the larger label, so it sits in the second slot
        assert np.allclose(nfermion_factor(2, 2, [u], sigma, qhat_tag=(1.0, 0.5)),
                           np.kron(np.eye(2), u))

    def test_dimension_cap(self, rng):
        sigma = SemidirectElement.identity(3, 1)
        # 3 particles with a dim-3 value space is exactly the 27 cap
        out = nfermion_factor(3, 3, [random_unitary(3, rng)], sigma)
        assert out.shape == (27, 27)
        with pytest.raises(ConfigError, match="cap"):
            nfermion_factor(3, 4, [random_unitary(4, rng)], sigma)

    def test_output_unitary(self, rng):
        u = random_unitary(2, rng)
        space = CoveringSpace.nfermion_cover(3, 1)
        for _ in range(20):
            sigma = space.random_deck(rng, max_word_length=4)
            m = nfermion_factor(3, 2, [u], sigma)
            assert np.max(np.abs(m.conj().T @ m - np.eye(8))) <= 1e-10


class TestTwistedLaw:
    def test_matrix_rep_embeds_with_trivial_holonomy(self, rng):
        rep = MatrixRep.free((random_unitary(2, rng),))
        table = TwistedRepTable.from_matrix_rep(rep, CoveringSpace.free_cover(1))
        assert verify_twisted_law(table, samples=300, seed=3) <= 1e-12

    def test_nfermion_table(self, rng):
        table = TwistedRepTable.nfermion(2, 2, [random_unitary(2, rng)])
        assert verify_twisted_law(table, samples=500, seed=4) <= 1e-12

    def test_three_particles_with_tag(self, rng):
        table = TwistedRepTable.nfermion(3, 2, [random_unitary(2, rng)],
                                         qhat_tag=(2.5, 0.1, 1.3))
        assert verify_twisted_law(table, samples=200, seed=5) <= 1e-12

    def test_corruption_detected(self, rng):
        table = TwistedRepTable.nfermion(2, 2, [random_unitary(2, rng)])
        sigma = table.space.random_deck(np.random.default_rng(0))
        bad = table.corrupted(sigma, 1j * np.eye(4))
        assert verify_twisted_law(bad, samples=300, seed=4) > 0.1

    def test_permutation_operator_is_action(self, rng):
        # operator of p acts on slot contents like p acts on particle slots
        d, n = 2, 3
        for _ in range(10):
            p = Permutation(tuple(int(i) for i in rng.permutation(n)))
            q = Permutation(tuple(int(i) for i in rng.permutation(n)))
            lhs = permutation_operator(p.compose(q), d)
            rhs = permutation_operator(p, d) @ permutation_operator(q, d)
            assert np.allclose(lhs, rhs)


class TestCovariantPotential:
    def test_projectable_field_with_scalar_factor(self):
        rep = MatrixRep.ring(np.exp(0.7j) * np.eye(2))
        field = np.broadcast_to(np.diag([1.0, -0.5]), (16, 2, 2)).copy()
        sheets = {Winding(0): field, Winding(1): field}
        assert check_covariant_potential(sheets, rep, tol=1e-12)

    def test_conjugation_built_field(self, pauli):
        gamma = spin_exponential(0.6, [1, 0, 0])
        rep = MatrixRep.ring(gamma)
        theta = np.linspace(0, 2 * np.pi, 16, endpoint=False)
        sheets = {}
        for s in range(3):
            field = np.empty((16, 2, 2), dtype=complex)
            for i, th in enumerate(theta):
                g = unitary_fractional_power(gamma, (th + 2 * np.pi * s) / (2 * np.pi))
                field[i] = g @ pauli["z"] @ g.conj().T
            sheets[Winding(s)] = field
        assert check_covariant_potential(sheets, rep, tol=1e-10)

    def test_lifted_field_with_noncommuting_factor_fails(self, pauli):
        gamma = spin_exponential(np.pi / 2, [1, 0, 0])
        rep = MatrixRep.ring(gamma)
        field = np.broadcast_to(pauli["z"], (16, 2, 2)).copy()
        sheets = {Winding(0): field, Winding(1): field}
        assert not check_covariant_potential(sheets, rep, tol=1e-10)


class TestConjugacyAndTables:
    def test_conjugacy_residual_detects_match(self, rng):
        base = MatrixRep.free((random_unitary(2, rng), random_unitary(2, rng)))
        u = random_unitary(2, rng)
        conj = MatrixRep.free(tuple(u @ g @ u.conj().T for g in base.generators))
        from topobohm.factors import conjugacy_residual
        assert conjugacy_residual(base, conj, u) <= 1e-12
        assert conjugacy_residual(base, conj, np.eye(2)) > 1e-3

    def test_character_table_export(self):
        import json
        from topobohm.factors import character_table
        table = character_table(FiniteGroup.symmetric(3))
        payload = json.loads(json.dumps(table))
        assert payload["order"] == 6
        assert len(payload["characters"]) == 2
        signs = {tuple(np.round([v[0] for v in c["values"]], 6))
                 for c in payload["characters"]}
        assert (1.0,) * 6 in signs


def test_decompose_commuting_free_generators(rng):
    # two commuting unitaries split into joint character sectors
    u = random_unitary(3, rng)
    d1 = np.diag(np.exp(1j * np.array([0.3, -0.7, 0.3])))
    d2 = np.diag(np.exp(1j * np.array([1.1, 0.2, -0.4])))
    rep = MatrixRep.free((u @ d1 @ u.conj().T, u @ d2 @ u.conj().T))
    sectors = decompose_by_character(rep)
    assert len(sectors) == 3   # the (0.3, 1.1), (-0.7, 0.2), (0.3, -0.4) joints
    from topobohm.covering import CoveringSpace
    space = CoveringSpace.free_cover(2)
    rng2 = np.random.default_rng(1)
    for _ in range(20):
        sigma = space.random_deck(rng2, max_word_length=3)
        rebuilt = sum(c.value(sigma) * (b @ b.conj().T) for c, b in sectors)
        assert np.max(np.abs(rebuilt - rep.evaluate(sigma))) <= 1e-10
