import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenerylab.ifs import ConformalMap1D, DiagonalAffineMap2D, IfsSystem, cantor_system, similarity_system
from scenerylab.measure import DyadicMeasure, SupportError, discretize, product, sample_points
from scenerylab.metrics import MeasureDistribution
from scenerylab.experiments import (
    SeparationError,
    dissonance_experiment,
    entropy_dimension,
    expected_projected_dimension,
    local_dimension,
    lyapunov_spectrum,
    normality_experiment,
    product_structure_distance,
    projection_experiment,
)
from scenerylab.beta import PrecisionError

CANTOR_DIM = math.log(2) / math.log(3)
SQUARE = ((0.0, 1.0), (0.0, 1.0))


def dirac_system():
    return IfsSystem([ConformalMap1D.affine("1/2", 0)])


def carpet_system():
    return IfsSystem([DiagonalAffineMap2D("1/2", "1/3", "-1/2", "-2/3"), DiagonalAffineMap2D("1/2", "1/3", "1/2", "2/3")])


def product_fixture():
    # four quarter-size squares at the corners: the measure is p x q exactly on the dyadic grid
    p, q = (0.3, 0.7), (0.6, 0.4)
    maps, weights = [], []
    for i, ax in enumerate(("-3/4", "3/4")):
        for j, ay in enumerate(("-3/4", "3/4")):
            maps.append(DiagonalAffineMap2D("1/4", "1/4", ax, ay))
            weights.append(p[i] * q[j])
    return IfsSystem(maps, weights)


# ---- dimensions ---------------------------------------------------------------------


def test_entropy_dimension_fixtures():
    assert entropy_dimension(DyadicMeasure.lebesgue(14)).slope == pytest.approx(1.0, abs=1e-6)
    assert entropy_dimension(DyadicMeasure.dirac(0.3, 14)).slope == pytest.approx(0.0, abs=1e-12)
    est = entropy_dimension(discretize(cantor_system(), 20))
    assert est.slope == pytest.approx(CANTOR_DIM, abs=0.02)
    assert [r["n"] for r in est.rows] == list(range(10, 21))


def test_local_dimension_fixtures():
    leb = DyadicMeasure.lebesgue(16)
    assert local_dimension(leb, 0.4, range(2, 12)).slope == pytest.approx(1.0, abs=1e-9)
    assert local_dimension(dirac_system(), 0.0, range(1, 10)).slope == pytest.approx(0.0, abs=1e-12)
    # closed form: the ball of radius 3^-k about the endpoint carries mass 2^-k
    scales = [k * math.log2(3) for k in range(2, 12)]
    est = local_dimension(cantor_system(), 0.0, scales)
    assert est.slope == pytest.approx(CANTOR_DIM, abs=1e-6)
    assert [r["ball_mass"] for r in est.rows] == pytest.approx([2.0**-k for k in range(2, 12)], rel=1e-9)


def test_local_dimension_outside_support():
    with pytest.raises(SupportError):
        local_dimension(cantor_system(), 0.5, [4, 5])


@settings(max_examples=10, deadline=None)
@given(st.sampled_from([(0.5, 0.5), (0.75, 0.25), (0.9, 0.1)]), st.sampled_from([(0.5, 0.5), (0.6, 0.4)]))
def test_entropy_dimension_is_additive_on_products(p, q):
    mu = discretize(similarity_system("1/2", [0, "1/2"], list(p)), 10)
    eta = discretize(similarity_system("1/2", [0, "1/2"], list(q)), 10)
    total = entropy_dimension(product(mu, eta)).slope
    assert total == pytest.approx(entropy_dimension(mu).slope + entropy_dimension(eta).slope, abs=2e-2)


# ---- dissonance -----------------------------------------------------------------------


def test_self_convolution_resonates():
    rep = dissonance_experiment(cantor_system(), cantor_system(), 18)
    # the sum measure is self-similar with weights (1/4, 1/2, 1/4) and ratio 1/3
    closed_form = -(0.25 * math.log(0.25) * 2 + 0.5 * math.log(0.5)) / math.log(3)
    assert closed_form == pytest.approx(1.5 * CANTOR_DIM)
    assert rep.summary["dim_convolution"] == pytest.approx(closed_form, abs=0.03)
    assert rep.summary["predicted"] == 1.0
    assert not rep.summary["dissonant"]
    assert rep.summary["independence_gap"] == pytest.approx(math.log(3))


def test_independent_pair_dissonates():
    quarter = similarity_system("1/4", [0, "3/4"])
    rep = dissonance_experiment(cantor_system(), quarter, 18)
    assert rep.summary["dim_nu"] == pytest.approx(0.5, abs=0.02)
    assert rep.summary["dim_convolution"] >= 0.97
    assert rep.summary["dissonant"]


def test_dirac_convolution_keeps_dimension():
    rep = dissonance_experiment(dirac_system(), cantor_system(), 16)
    assert rep.summary["dim_mu"] == pytest.approx(0.0, abs=1e-12)
    assert rep.summary["dim_convolution"] == pytest.approx(rep.summary["dim_nu"], abs=1e-9)


@pytest.mark.parametrize("ratio,offset,weights", [("1/3", "2/3", [0.5, 0.5]), ("1/4", "3/4", [0.3, 0.7]),
                                                  ("1/5", "4/5", [0.5, 0.5]), ("1/2", "1/2", [0.8, 0.2])])
def test_convolution_never_drops_below_factors(ratio, offset, weights):
    other = similarity_system(ratio, [0, offset], weights)
    rep = dissonance_experiment(cantor_system(), other, 14)
    s = rep.summary
    assert s["dim_convolution"] >= max(s["dim_mu"], s["dim_nu"]) - 2e-2


# ---- normality ---------------------------------------------------------------------------


def test_atom_orbit_has_full_discrepancy():
    rep = normality_experiment(dirac_system(), beta=2, point_count=3, orbit_length=100, precision_bits=512)
    assert rep.summary["min_final_discrepancy"] == 1.0
    assert all(r["start"] == "0.000000000000" for r in rep.rows)


def test_binary_orbits_of_cantor_points_improve():
    rep = normality_experiment(cantor_system(), beta=2, point_count=6, orbit_length=800, precision_bits=1024)
    assert rep.summary["improved_fraction"] >= 0.8
    assert rep.summary["reference"] == "lebesgue"
    assert rep.summary["nonlinearity"] == "assumed"


def test_triadic_control_stays_far_from_lebesgue():
    rep = normality_experiment(cantor_system(), beta=3, point_count=6, orbit_length=500, precision_bits=1024)
    assert rep.summary["min_final_discrepancy"] > 0.2
    assert rep.summary["gap_shrank"] is False


def test_golden_orbits_use_parry_reference():
    rep = normality_experiment(cantor_system(), beta="golden", point_count=3, orbit_length=300, precision_bits=512)
    assert rep.summary["reference"] == "parry"


def test_normality_refuses_short_precision():
    with pytest.raises(PrecisionError):
        normality_experiment(cantor_system(), beta=2, orbit_length=2000, precision_bits=1024)


def test_normality_is_seeded():
    a = normality_experiment(cantor_system(), beta=2, point_count=3, orbit_length=200, precision_bits=512, seed=4)
    b = normality_experiment(cantor_system(), beta=2, point_count=3, orbit_length=200, precision_bits=512, seed=4)
    assert a.rows == b.rows


# ---- self-affine systems -------------------------------------------------------------------


def test_lyapunov_examples():
    chi_x, chi_y, simple = lyapunov_spectrum(carpet_system())
    assert (chi_x, chi_y, simple) == (pytest.approx(math.log(2)), pytest.approx(math.log(3)), True)
    assert lyapunov_spectrum(carpet_system()).major_axis == "y"
    same = IfsSystem([DiagonalAffineMap2D("1/2", "1/2", "-1/2", "-1/2"), DiagonalAffineMap2D("1/2", "1/2", "1/2", "1/2")])
    assert lyapunov_spectrum(same).simple is False
    mixed = IfsSystem([DiagonalAffineMap2D("1/2", "1/3", "-1/2", "-2/3"), DiagonalAffineMap2D("1/4", "1/3", "3/4", "2/3")])
    assert lyapunov_spectrum(mixed).chi_x == pytest.approx(1.5 * math.log(2))
    assert lyapunov_spectrum(mixed).chi_x == pytest.approx(1.0397, abs=1e-4)


@pytest.mark.parametrize("r", [2, 4, 6])
def test_product_measure_has_exact_product_structure(r):
    system = product_fixture()
    for x0 in sample_points(system, 3, seed=r)[:, 0]:
        assert product_structure_distance(system, x0, r, level=8) == 0.0


def test_projection_refuses_overlapping_system():
    overlapping = IfsSystem([DiagonalAffineMap2D("1/2", "1/3", 0, 0), DiagonalAffineMap2D("1/2", "1/3", "1/2", "2/3")])
    with pytest.raises(SeparationError) as info:
        projection_experiment(overlapping, [math.pi / 4], 8)
    assert info.value.witness == (0, 1)


def test_one_column_system_projects_to_an_atom():
    # both maps share the x-part x/2 + 1/3, so every point has x = 2/3
    column = IfsSystem([DiagonalAffineMap2D("1/2", "1/3", "1/3", "-2/3"), DiagonalAffineMap2D("1/2", "1/3", "1/3", "2/3")])
    rep = projection_experiment(column, [0.0, math.pi / 4], 12, radii=(2,), point_count=2, strip_level=6)
    row = next(r for r in rep.rows if r.get("theta") == 0.0)
    assert row["principal"] and row["dim"] == pytest.approx(0.0, abs=1e-9)


def test_carpet_projection_small():
    rep = projection_experiment(carpet_system(), [0.0, math.pi / 4, math.pi / 2], 12, radii=(2, 4), point_count=3,
                                strip_level=8)
    s = rep.summary
    dim45 = next(r["dim"] for r in rep.rows if r.get("theta") == pytest.approx(math.pi / 4))
    assert abs(dim45 - s["target"]) < 0.08
    assert s["lyapunov"]["simple"]
    assert len([r for r in rep.rows if r["kind"] == "product_structure"]) == 6


def test_expected_projected_dimension():
    square = DyadicMeasure.lebesgue(9, SQUARE)
    dirac = DyadicMeasure.dirac((0.25, 0.5), 9, SQUARE)
    assert expected_projected_dimension(MeasureDistribution([square]), 0.0) == pytest.approx(1.0, abs=1e-6)
    assert expected_projected_dimension(MeasureDistribution([dirac]), 0.0) == pytest.approx(0.0, abs=1e-9)
    both = MeasureDistribution([square, dirac], [0.5, 0.5])
    assert expected_projected_dimension(both, 0.0) == pytest.approx(0.5, abs=1e-6)
