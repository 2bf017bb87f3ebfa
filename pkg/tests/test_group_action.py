import random
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

import oracles
from cliqueslab.errors import ContextError, InvalidPointError, ParameterError
from cliqueslab.group_action import (INFINITY, PRESETS, EllipticAction, ModExpAction,
                                     action_from_dict, is_prime)


def test_oracle_reproduces_frozen_values():
    assert oracles.modexp_act(3, 2) == 8
    assert oracles.scalar_inverse(3, 11) == 4
    assert oracles.scalar_inverse(4, 11) == 3
    assert len(oracles.curve_points()) + 1 == 19
    assert oracles.point_order((5, 1)) == 19
    assert oracles.curve_act(2, (5, 1)) == (6, 3)


def test_presets_checked_by_enumeration():
    # the subgroup generated by 2 in F_23^* has order 11
    assert {pow(2, k, 23) for k in range(11)} == {pow(2, k, 23) for k in range(100)}
    assert len({pow(2, k, 23) for k in range(11)}) == 11
    # the curve group has 19 elements, so every affine point has order 19
    assert all(oracles.point_order(P) == 19 for P in oracles.curve_points())


def test_act_modexp(modexp):
    assert modexp.act(3, 2) == 8
    assert modexp.act(1, 13) == 13


def test_act_elliptic(elliptic):
    assert elliptic.act(2, (5, 1)) == (6, 3)
    assert elliptic.act(1, (5, 1)) == (5, 1)


@pytest.mark.parametrize("g", range(1, 19))
def test_double_and_add_matches_repeated_addition(elliptic, g):
    assert elliptic.act(g, (5, 1)) == oracles.curve_act(g, (5, 1))


@pytest.mark.parametrize("g", range(1, 11))
@pytest.mark.parametrize("x", [2, 3, 13, 18])
def test_square_and_multiply_matches_pow(modexp, g, x):
    assert modexp.act(g, x) == pow(x, g, 23)


def test_compose_and_invert(modexp):
    assert modexp.compose(3, 4) == 1
    assert modexp.compose(5, 7) == 2
    assert modexp.compose(6, 1) == 6
    assert modexp.invert(3) == 4
    assert modexp.invert(4) == 3
    assert modexp.invert(1) == 1


def test_invert_against_pow(action):
    for g in range(1, action.q):
        assert action.invert(g) == oracles.scalar_inverse(g, action.q)


def test_validate_point(modexp, elliptic):
    assert pow(8, 11, 23) == 1 and pow(5, 11, 23) != 1
    assert modexp.validate_point(8)
    assert not modexp.validate_point(5)
    assert elliptic.validate_point((5, 1))
    assert not elliptic.validate_point((5, 2))
    assert not elliptic.validate_point(INFINITY)
    # the identity of the subgroup is not reachable from s with scalars in Z_q^*
    assert not modexp.validate_point(1)


def test_orbit_and_subgroup_sizes(modexp, elliptic):
    orbit = modexp.orbit()
    assert len(set(orbit)) == 10
    assert set(orbit) | {1} == {pow(2, k, 23) for k in range(11)}
    assert len(set(elliptic.orbit())) == 18
    assert set(elliptic.orbit()) == set(oracles.curve_points())


def test_context_and_point_errors(modexp, elliptic):
    with pytest.raises(ContextError):
        modexp.act(3, (5, 1))
    with pytest.raises(ContextError):
        elliptic.act(3, 8)
    with pytest.raises(ContextError):
        modexp.act(11, 2)
    with pytest.raises(ContextError):
        modexp.act(0, 2)
    with pytest.raises(InvalidPointError):
        modexp.act(3, 5)
    with pytest.raises(InvalidPointError):
        elliptic.act(3, (0, 0))


def test_random_scalar_is_deterministic(modexp):
    a = modexp.random_scalar(random.Random(42))
    b = modexp.random_scalar(random.Random(42))
    assert a == b and 1 <= a <= 10


def test_random_scalar_singleton_range():
    tiny = ModExpAction(p=3, q=2, s=2)
    rng = random.Random(0)
    assert {tiny.random_scalar(rng) for _ in range(50)} == {1}
    with pytest.raises(ParameterError):
        tiny.random_scalar(rng, nontrivial=True)


def test_random_scalar_uniform(modexp):
    rng = random.Random(7)
    draws = 10_000
    counts = Counter(modexp.random_scalar(rng) for _ in range(draws))
    assert set(counts) == set(range(1, 11))
    expected = draws / 10
    sigma = (draws * 0.1 * 0.9) ** 0.5
    assert all(abs(c - expected) <= 5 * sigma for c in counts.values())


def test_random_orbit_point(modexp, elliptic):
    r = modexp.random_orbit_point(random.Random(1), 2)
    assert pow(r, 11, 23) == 1
    P = elliptic.random_orbit_point(random.Random(1), (5, 1))
    assert P in oracles.curve_points()
    assert elliptic.random_orbit_point(random.Random(9)) == elliptic.random_orbit_point(random.Random(9))
    with pytest.raises(InvalidPointError):
        modexp.random_orbit_point(random.Random(1), 5)


def test_parameter_invariants():
    with pytest.raises(ParameterError):
        ModExpAction(p=23, q=7, s=2)        # 7 does not divide 22
    with pytest.raises(ParameterError):
        ModExpAction(p=23, q=11, s=5)       # 5 has order 22
    with pytest.raises(ParameterError):
        EllipticAction(p=17, a=2, b=2, s=(5, 2), q=19)
    with pytest.raises(ParameterError):
        EllipticAction(p=17, a=0, b=0, s=(0, 0), q=19)
    with pytest.raises(ParameterError):
        EllipticAction(p=17, a=2, b=2, s=(5, 1), q=17)
    assert is_prime(19) and not is_prime(21) and not is_prime(1)


def test_explicit_params_round_trip():
    for act in PRESETS.values():
        assert action_from_dict(act.to_dict()) == act


def test_encoding(modexp, elliptic):
    assert modexp.encode(13) == "13" and modexp.decode("13") == 13
    assert elliptic.encode((6, 3)) == "6,3" and elliptic.decode("6,3") == (6, 3)
    assert elliptic.encode(INFINITY) == "inf" and elliptic.decode("inf") is INFINITY



@settings(max_examples=200)
@given(data=st.data(), name=st.sampled_from(["modexp", "elliptic"]))
def test_action_axioms(data, name):
    a = PRESETS[name]
    g = data.draw(st.integers(1, a.q - 1))
    h = data.draw(st.integers(1, a.q - 1))
    x = a.act(data.draw(st.integers(1, a.q - 1)), a.base)
    assert a.act(1, x) == x
    assert a.act(a.compose(g, h), x) == a.act(g, a.act(h, x))
    assert a.act(g, a.act(a.invert(g), x)) == x
    assert a.act(g, a.act(h, x)) == a.act(h, a.act(g, x))
    assert a.validate_point(a.act(g, x))
