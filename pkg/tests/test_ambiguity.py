import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize, special

from drafd.ambiguity import RoiBox, build_roi, contains
from drafd.distfit import MomentPdf, tv_density

BOX = (0.0, 0.75)


def tv(m1, s1, m2, s2):
    return tv_density(MomentPdf("normal", m1, s1), MomentPdf("normal", m2, s2))


def test_zero_radius_is_a_point():
    nom = MomentPdf("normal", 0.4, 0.05)
    box = build_roi(nom, 0.0, BOX)
    assert box.mu_interval == (0.4, 0.4)
    assert box.sigma_interval == (0.05, 0.05)


def test_unit_radius_spans_the_box():
    nom = MomentPdf("normal", 0.4, 0.05)
    box = build_roi(nom, 1.0, BOX)
    assert box.mu_interval == BOX
    assert box.delta == pytest.approx(0.25, abs=1e-12)
    assert box.gamma <= 1e-6


@pytest.mark.parametrize("radius", [-0.1, 1.5, float("nan")])
def test_radius_out_of_range(radius):
    with pytest.raises(ValueError):
        build_roi(MomentPdf("normal", 0.4, 0.05), radius, BOX)


def test_endpoints_tight_for_reference_case():
    nom = MomentPdf("normal", 0.5, 0.1)
    R = 0.3
    box = build_roi(nom, R, BOX)
    for m in box.mu_interval:
        assert tv(m, 0.1, 0.5, 0.1) <= R + 1e-6
    for s in box.sigma_interval:
        assert tv(0.5, s, 0.5, 0.1) <= R + 1e-6
    # a 5% larger excursion from the nominal breaks the radius where the box is interior
    assert tv(0.5 - 1.05 * (0.5 - box.alpha), 0.1, 0.5, 0.1) > R
    assert tv(0.5, 0.1 - 1.05 * (0.1 - box.gamma), 0.5, 0.1) > R
    assert tv(0.5, 0.1 + 1.05 * (box.delta - 0.1), 0.5, 0.1) > R
    assert tv(0.5 + 1.05 * (box.beta - 0.5), 0.1, 0.5, 0.1) > R


def test_mean_shift_matches_root_finding_oracle():
    # independent oracle: solve erf(d / (2 sigma sqrt 2)) = R for the shift d
    for R in (0.05, 0.2, 0.5, 0.8):
        sigma = 0.02
        d = optimize.brentq(lambda d: special.erf(d / (2 * sigma * math.sqrt(2))) - R, 0, 1, xtol=1e-15)
        box = build_roi(MomentPdf("normal", 0.4, sigma), R, BOX)
        assert box.beta - 0.4 == pytest.approx(d, rel=1e-9)
        assert 0.4 - box.alpha == pytest.approx(d, rel=1e-9)


def test_contains():
    box = build_roi(MomentPdf("normal", 0.4, 0.05), 0.2, BOX)
    assert contains(box, 0.4, 0.05)
    assert not contains(box, box.beta + 1e-9, 0.05)
    assert all(contains(box, m, s) for m, s in box.corners())


def test_corner_warning_is_logged(caplog):
    with caplog.at_level(logging.WARNING, logger="drafd.ambiguity"):
        box = build_roi(MomentPdf("normal", 0.4, 0.05), 0.3, BOX)
    assert box.corner_tv > 0.3
    assert "corner" in caplog.text


nominal = st.builds(lambda m, s: MomentPdf("normal", m, s), st.floats(0.05, 0.7), st.floats(0.005, 0.2))


@settings(max_examples=60, deadline=None)
@given(nom=nominal, R=st.floats(0.01, 0.99))
def test_per_coordinate_soundness(nom, R):
    box = build_roi(nom, R, BOX)
    rng = np.random.default_rng(0)
    for m in rng.uniform(box.alpha, box.beta, 30):
        assert tv(m, nom.sigma, nom.mu, nom.sigma) <= R + 1e-6
    for s in rng.uniform(box.gamma, box.delta, 30):
        assert tv(nom.mu, s, nom.mu, nom.sigma) <= R + 1e-6


@settings(max_examples=60, deadline=None)
@given(nom=nominal, r1=st.floats(0, 1), r2=st.floats(0, 1))
def test_nesting_in_radius(nom, r1, r2):
    r1, r2 = sorted((r1, r2))
    a, b = build_roi(nom, r1, BOX), build_roi(nom, r2, BOX)
    assert b.alpha <= a.alpha <= a.beta <= b.beta
    assert b.gamma <= a.gamma <= a.delta <= b.delta


@settings(max_examples=40, deadline=None)
@given(nom=nominal, R=st.floats(1e-3, 1))
def test_nominal_is_interior(nom, R):
    box = build_roi(nom, R, BOX)
    assert box.alpha < nom.mu < box.beta
    assert box.gamma < nom.sigma < box.delta
    assert box.gamma > 0


@pytest.mark.parametrize("nom", [MomentPdf("gamma", 2.0, 0.5), MomentPdf("beta", 0.4, 0.1)])
def test_other_families_by_bisection(nom):
    box = build_roi(nom, 0.25, (0.0, 5.0) if nom.family == "gamma" else (0.0, 1.0))
    for m in box.mu_interval:
        assert tv_density(MomentPdf(nom.family, m, nom.sigma), nom) <= 0.25 + 1e-6
    for s in box.sigma_interval:
        assert tv_density(MomentPdf(nom.family, nom.mu, s), nom) <= 0.25 + 1e-6
    assert box.alpha < nom.mu < box.beta


def test_roibox_fields():
    box = RoiBox(1, (0.1, 0.2), (0.01, 0.02), 0.5)
    assert (box.alpha, box.beta, box.gamma, box.delta) == (0.1, 0.2, 0.01, 0.02)
    assert len(box.corners()) == 4


def test_radius_one_ulp_below_one():
    # the closed-form shift rounds to infinity here; endpoints must still respect the radius
    R = np.nextafter(1.0, 0.0)
    for m, s in [(0.05, 0.005), (0.4, 0.05), (0.7, 0.2)]:
        nom = MomentPdf("normal", m, s)
        box = build_roi(nom, R, BOX)
        for e in box.mu_interval:
            assert tv(e, s, m, s) <= R
        assert box.alpha < m < box.beta
