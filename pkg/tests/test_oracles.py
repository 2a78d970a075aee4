"""The frozen reference values still agree with the oracles that produced them."""

import mpmath as mp
import pytest

import oracles


@pytest.mark.parametrize("key", sorted(oracles.FROZEN))
def test_frozen_value_matches_oracle(key):
    fresh = oracles.compute_all()[key]
    frozen = oracles.FROZEN[key]
    if isinstance(frozen, tuple):
        assert len(fresh) == len(frozen)
        for a, b in zip(fresh, frozen):
            assert abs(float(a) - b) < 1e-15
    else:
        assert abs(float(fresh) - frozen) < 1e-15


def test_quadrature_bisection_oracle_agrees_with_closed_form():
    root = oracles.gauss_legendre_bisection(lambda y: y + y * y, lambda y: 1, mp.mpf("-0.5"), 2, 80)
    assert abs(float(root) - oracles.FROZEN["planar_cubic"]) < 1e-15
