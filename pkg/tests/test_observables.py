import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import I2, KET0, KET1, MINUS, PLUS, proj
from oracles import sqrtm_eigh
from qmulti.ensembles import random_observable, random_state
from qmulti.errors import DimensionError, NotApplicableError, StructureError, ValidationError
from qmulti.linalg import partial_trace
from qmulti.observables import (Observable, State, commuting_joint, distribution,
                                identity_observable_check, luders_sequential, marginal,
                                observable_deviation, part, reduced_observable,
                                tensor_observables, validate_observable, verify_joint,
                                verify_product_structure)
from qmulti.outcomes import OutcomeMap

DIAG = {"0": np.diag([0.75, 0.25]), "1": np.diag([0.25, 0.75])}


def sharp(v, w):
    return validate_observable({"0": proj(v), "1": proj(w)})


def test_single_outcome_identity_observable():
    a = validate_observable({"a": np.eye(3)})
    assert a.is_trivial and a.dim == 3


def test_diagonal_observable_is_valid():
    a = validate_observable(DIAG)
    assert a.outcomes == [("0",), ("1",)]
    assert np.array_equal(a["1"], np.diag([0.25, 0.75]))


def test_incomplete_observable_reports_residual():
    with pytest.raises(ValidationError) as info:
        validate_observable({"0": np.diag([0.9, 0.9]), "1": np.diag([0.2, 0.2])})
    assert np.allclose(info.value.residual, np.diag([0.1, 0.1]))
    assert "completeness" in str(info.value)


def test_invalid_effect_is_named():
    with pytest.raises(ValidationError) as info:
        validate_observable({"0": np.diag([1.5, 0]), "1": np.diag([-0.5, 1])})
    assert any("eigenvalue 1.5 > 1" in p for p in info.value.problems)


def test_effects_are_read_only():
    a = validate_observable(DIAG)
    with pytest.raises(ValueError):
        a["0"][0, 0] = 0


def test_two_axis_keys_are_inferred():
    a = validate_observable({"a|x": I2 / 4, "a|y": I2 / 4, "b|x": I2 / 4, "b|y": I2 / 4})
    assert a.space.axes == (("a", "b"), ("x", "y"))


def test_state_validation():
    with pytest.raises(ValidationError):
        State(np.diag([0.7, 0.7]))
    with pytest.raises(ValidationError):
        State(np.diag([1.2, -0.2]))
    assert State.pure([1, 1j]).matrix[0, 1] == pytest.approx(-0.5j)


def test_distribution_diagonal_example():
    p = distribution(validate_observable(DIAG), proj(KET0))
    assert p == {("0",): 0.75, ("1",): 0.25}


def test_distribution_of_plus_minus_on_zero():
    p = distribution(sharp(PLUS, MINUS), proj(KET0))
    assert p[("0",)] == pytest.approx(0.5, abs=1e-15)
    assert p[("1",)] == pytest.approx(0.5, abs=1e-15)


def test_distribution_rejects_wrong_dimension():
    with pytest.raises(DimensionError):
        distribution(validate_observable(DIAG), np.eye(3) / 3)


@pytest.mark.parametrize("d,shape", [(2, 2), (3, (2, 2)), (4, (2, 3))])
def test_distribution_of_all_outcomes_is_one(rng, d, shape):
    a = random_observable(rng, d, shape)
    rho = random_state(rng, d)
    assert distribution(a, rho, a.outcomes) == pytest.approx(1.0, abs=1e-12)
    assert sum(distribution(a, rho).values()) == pytest.approx(1.0, abs=1e-12)


def test_part_identity_constant_and_merge(rng):
    a = random_observable(rng, 3, 3)
    same = part(a, OutcomeMap.identity(a.space))
    assert observable_deviation(same, a) == 0.0
    trivial = part(a, OutcomeMap.from_function(a.space, lambda x: "all"))
    assert trivial.is_trivial
    assert np.allclose(trivial["all"], np.eye(3), atol=1e-12)
    merged = part(a, OutcomeMap.from_function(a.space, lambda x: "0" if x == ("0",) else "12"))
    assert np.array_equal(merged["0"], a["0"])
    assert np.array_equal(merged["12"], a["1"] + a["2"])


def test_part_of_part_is_part_of_composition(rng):
    a = random_observable(rng, 2, 4)
    f = OutcomeMap.from_function(a.space, lambda x: {"0": "a", "1": "b", "2": "c", "3": "c"}[x[0]])
    g = OutcomeMap.from_function(f.target, lambda y: "lo" if y[0] == "a" else "hi")
    gf = OutcomeMap.from_function(a.space, lambda x: g(f(x))[0])
    assert observable_deviation(part(part(a, f), g), part(a, gf)) <= 1e-15


def test_marginal_of_commuting_joint_recovers_part():
    a = validate_observable(DIAG)
    b = validate_observable({"u": np.diag([0.4, 0.1]), "v": np.diag([0.6, 0.9])})
    c = commuting_joint([a, b])
    assert np.allclose(c["1|v"], np.diag([0.25 * 0.6, 0.75 * 0.9]))
    assert observable_deviation(marginal(c, 0), a) <= 1e-15
    assert observable_deviation(marginal(c, 1), b) <= 1e-15


def test_marginal_axis_out_of_range(rng):
    with pytest.raises(StructureError):
        marginal(random_observable(rng, 2, (2, 2)), 2)


def test_marginal_of_single_axis_is_itself(rng):
    a = random_observable(rng, 2, 3)
    assert marginal(a, 0) is a


def test_luders_first_marginal_is_first_observable(rng):
    a, b = random_observable(rng, 3, 2), random_observable(rng, 3, 3)
    assert observable_deviation(marginal(luders_sequential([a, b]), 0), a) <= 1e-12


def test_luders_sequential_matches_dense_oracle(rng):
    a, b, c = (random_observable(rng, 2, 2) for _ in range(3))
    abc = luders_sequential([a, b, c])
    for (x, y, z), e in abc.items():
        sa, sb = sqrtm_eigh(a[x]), sqrtm_eigh(b[y])
        assert np.allclose(e, sa @ sb @ c[z] @ sb @ sa, atol=1e-12)


def test_luders_of_diagonal_is_entrywise_product():
    a = validate_observable(DIAG)
    b = validate_observable({"u": np.diag([0.4, 0.1]), "v": np.diag([0.6, 0.9])})
    ab = luders_sequential([a, b])
    assert np.allclose(ab["0|u"], np.diag([0.3, 0.025]), atol=1e-15)


def test_tensor_of_trivial_observables():
    one = validate_observable({"*": I2})
    t = tensor_observables([one, one])
    assert t.outcomes == [("*", "*")]
    assert np.array_equal(t["*|*"], np.eye(4))
    assert t.factors == (2, 2)


def test_tensor_marginals_are_padded_parts(rng):
    a1, a2, a3 = random_observable(rng, 2, 2), random_observable(rng, 3, 3), random_observable(rng, 2, 2)
    t = tensor_observables([a1, a2, a3])
    m2 = marginal(t, 1)
    for (y,), e in m2.items():
        assert np.allclose(e, np.kron(np.kron(I2, a2[y]), I2), atol=1e-12)


def test_tensor_product_state_factorizes(rng):
    a1, a2 = random_observable(rng, 2, 2), random_observable(rng, 3, 2)
    r1, r2 = random_state(rng, 2), random_state(rng, 3)
    p = distribution(tensor_observables([a1, a2]), np.kron(r1.matrix, r2.matrix))
    p1, p2 = distribution(a1, r1), distribution(a2, r2)
    for (x, y), v in p.items():
        assert v == pytest.approx(p1[(x,)] * p2[(y,)], abs=1e-12)


def test_reduced_observable_normalized_partial_trace(rng):
    a = random_observable(rng, 6, (2, 2), )
    r = reduced_observable(a, 1, dims=(2, 3))
    for x, e in r.items():
        assert np.allclose(e, partial_trace(a[x], (2, 3), {0}) / 2, atol=1e-12)
    assert r.space == a.space


def test_reduced_observable_single_factor_is_unchanged(rng):
    a = random_observable(rng, 3, 2)
    assert observable_deviation(reduced_observable(a, 0, dims=(3,)), a) == 0.0


def test_reduced_observable_rejects_bad_dims(rng):
    a = random_observable(rng, 4, 2)
    with pytest.raises(DimensionError):
        reduced_observable(a, 0, dims=(2, 3))
    with pytest.raises(StructureError):
        reduced_observable(a, 0)


def test_identity_observable_check_examples():
    assert identity_observable_check(validate_observable({"0": I2 / 2, "1": I2 / 2})) == {("0",): 0.5, ("1",): 0.5}
    assert identity_observable_check(sharp(KET0, KET1)) is None


def test_commuting_joint_with_trivial_factor(rng):
    a = validate_observable(DIAG)
    c = commuting_joint([a, validate_observable({"*": I2})])
    assert c.outcomes == [("0", "*"), ("1", "*")]
    assert np.allclose(c["1|*"], a["1"])


def test_commuting_joint_not_applicable():
    with pytest.raises(NotApplicableError, match="construction not applicable"):
        commuting_joint([sharp(PLUS, MINUS), sharp(KET0, KET1)])


def test_verify_joint_tensor_marginals(rng):
    a1, a2 = random_observable(rng, 2, 2), random_observable(rng, 2, 3)
    pad1 = Observable(a1.space, {x: np.kron(e, I2) for x, e in a1.items()})
    pad2 = Observable(a2.space, {x: np.kron(I2, e) for x, e in a2.items()})
    assert verify_joint(tensor_observables([a1, a2]), [pad1, pad2]).passed


def test_verify_joint_luders_against_its_own_marginals(rng):
    a, b = random_observable(rng, 3, 2), random_observable(rng, 3, 2)
    ab = luders_sequential([a, b])
    assert verify_joint(ab, [a, marginal(ab, 1)]).passed


def test_verify_joint_noncommuting_luders_fails_on_second_axis():
    # sum_x P_x |+><+| P_x = I/2 differs from |+><+| by 1/2 entrywise
    a, b = sharp(KET0, KET1), sharp(PLUS, MINUS)
    report = verify_joint(luders_sequential([a, b]), [a, b])
    assert not report.passed
    assert report.worst_axis == 1
    assert report.deviations[0] <= 1e-15
    assert report.deviations[1] == pytest.approx(0.5, abs=1e-15)


def test_verify_joint_structure_errors(rng):
    ab = random_observable(rng, 2, (2, 2))
    with pytest.raises(StructureError):
        verify_joint(ab, [random_observable(rng, 2, 2)])


def test_product_structure_of_projections(rng):
    a = random_observable(rng, 2, (2, 3))
    report = verify_product_structure(a, [OutcomeMap.projection(a.space, i) for i in range(2)])
    assert report.passed
    assert all(report.bijection[x] == x for x in a.outcomes)
    assert max(report.part_deviations) == 0.0


def test_product_structure_of_flat_relabelling(rng):
    a = random_observable(rng, 2, 4)
    bits = {"0": "00", "1": "01", "2": "10", "3": "11"}
    fs = [OutcomeMap.from_function(a.space, lambda x, k=k: bits[x[0]][k]) for k in range(2)]
    report = verify_product_structure(a, fs)
    assert report.passed
    assert np.array_equal(report.reindexed["1|0"], a["2"])


def test_product_structure_fails_on_three_outcomes(rng):
    a = random_observable(rng, 2, 3)
    f1 = OutcomeMap.from_function(a.space, lambda x: "a" if x[0] == "0" else "b")
    f2 = OutcomeMap.from_function(a.space, lambda x: "c" if x[0] == "2" else "d")
    report = verify_product_structure(a, [f1, f2])
    assert not report.passed
    assert report.bad_intersection is not None


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(2, 2), (3, 2), (2, 2, 2)]), st.integers(2, 4))
def test_marginal_equals_projection_part_exactly(seed, shape, d):
    a = random_observable(np.random.default_rng(seed), d, shape)
    for i in range(len(shape)):
        m = marginal(a, i)
        p = part(a, OutcomeMap.projection(a.space, i))
        assert all(np.array_equal(m[x], p[x]) for x in m.outcomes)
