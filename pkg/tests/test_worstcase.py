import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from drafd.ambiguity import RoiBox, build_roi
from drafd.distfit import MomentPdf, common_area
from drafd.worstcase import (
    KKT_TOL,
    UndefinedBound,
    bound_gradient,
    kkt_multipliers,
    pair_bound,
    solve_inner,
    total_bound,
    worst_case_common_area,
)

BOX = (0.0, 0.75)


def grid_max_two(b0, b1, n=50):
    """Brute-force oracle: best bound on an n^4 grid over two boxes."""
    m0 = np.linspace(b0.alpha, b0.beta, n)[:, None, None, None]
    s0 = np.linspace(b0.gamma, b0.delta, n)[None, :, None, None]
    m1 = np.linspace(b1.alpha, b1.beta, n)[None, None, :, None]
    s1 = np.linspace(b1.gamma, b1.delta, n)[None, None, None, :]
    val = 1.0 - (m0 - m1) ** 2 / (2.0 * (m0**2 + m1**2 + s0**2 + s1**2))
    return float(val.max())


def random_boxes(rng, n_models, radius=None):
    boxes = []
    for j in range(n_models):
        nom = MomentPdf("normal", rng.uniform(0.05, 0.7), rng.uniform(0.005, 0.1))
        R = rng.uniform(0, 0.6) if radius is None else radius
        boxes.append(build_roi(nom, R, BOX, model_index=j))
    return boxes


def test_pair_bound_examples():
    assert pair_bound(0.3, 0.1, 0.3, 0.7) == 1.0
    assert pair_bound(1, 1, 0, 1) == pytest.approx(1 - 1 / 6, abs=1e-15)
    assert pair_bound(1, 1e-12, -1, 1e-12) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(UndefinedBound):
        pair_bound(0, 0, 0, 0)


def test_total_bound_sums_pairs():
    rng = np.random.default_rng(4)
    m = np.column_stack([rng.normal(size=4), rng.uniform(0.1, 1, 4)])
    expected = sum(pair_bound(*m[i], *m[j]) for i in range(4) for j in range(i + 1, 4))
    assert total_bound(m) == expected
    assert total_bound([(0.2, 0.1)] * 2) == 1.0
    assert total_bound([(0.2, 0.1)] * 3) == 3.0
    with pytest.raises(ValueError):
        total_bound([(0.2, 0.1)])


@settings(max_examples=300)
@given(m1=st.floats(-5, 5), s1=st.floats(1e-3, 3), m2=st.floats(-5, 5), s2=st.floats(1e-3, 3))
def test_bound_dominates_common_area(m1, s1, m2, s2):
    area = common_area([MomentPdf("normal", m1, s1), MomentPdf("normal", m2, s2)])
    assert area <= pair_bound(m1, s1, m2, s2) + 1e-9
    assert 0.0 <= pair_bound(m1, s1, m2, s2) <= 1.0


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    h = 1e-6
    for _ in range(100):
        x = np.column_stack([rng.uniform(-1, 1, 3), rng.uniform(0.05, 1, 3)])
        g = np.column_stack(bound_gradient(x))
        fd = np.zeros_like(x)
        for idx in np.ndindex(x.shape):
            e = np.zeros_like(x)
            e[idx] = h
            fd[idx] = (total_bound(x + e) - total_bound(x - e)) / (2 * h)
        assert np.all(np.abs(g - fd) <= 1e-5 * np.maximum(np.abs(fd), 1e-3))


def test_gradient_vanishes_at_equal_means():
    g_mu, g_sigma = bound_gradient([(0.4, 0.1), (0.4, 0.3), (0.4, 0.05)])
    assert np.all(g_mu == 0) and np.all(g_sigma == 0)


@settings(max_examples=100)
@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(1e-3, 2)), min_size=2, max_size=5))
def test_sigma_gradient_nonnegative(moments):
    assert np.all(bound_gradient(moments)[1] >= 0)


def test_zero_radius_returns_nominal():
    rng = np.random.default_rng(1)
    boxes = random_boxes(rng, 3, radius=0.0)
    sol = solve_inner(boxes)
    noms = [(b.nominal.mu, b.nominal.sigma) for b in boxes]
    assert np.array_equal(sol.moments, np.array(noms))
    assert sol.objective == pytest.approx(total_bound(noms), abs=1e-15)
    assert sol.certified
    area, _ = worst_case_common_area(boxes)
    assert area == common_area([b.nominal for b in boxes])


def test_overlapping_means_reach_one():
    b0 = RoiBox(0, (0.1, 0.4), (0.01, 0.05), 0.5, MomentPdf("normal", 0.2, 0.02))
    b1 = RoiBox(1, (0.3, 0.6), (0.02, 0.07), 0.5, MomentPdf("normal", 0.5, 0.03))
    sol = solve_inner([b0, b1])
    assert sol.objective == 1.0
    assert sol.mu[0] == sol.mu[1]
    assert 0.3 <= sol.mu[0] <= 0.4
    assert list(sol.sigma) == [0.05, 0.07]
    assert sol.certified


def test_identical_nominals_give_full_area():
    nom = MomentPdf("normal", 0.3, 0.04)
    boxes = [build_roi(nom, 0.4, BOX, j) for j in range(3)]
    area, sol = worst_case_common_area(boxes)
    assert area == 3.0


def test_grid_oracle_two_models():
    rng = np.random.default_rng(2024)
    for _ in range(10):
        b0, b1 = random_boxes(rng, 2)
        sol = solve_inner([b0, b1])
        assert sol.objective >= grid_max_two(b0, b1) - 1e-3
        assert sol.objective <= total_bound(sol.moments) + 1e-15


def test_three_models_against_multistart_oracle():
    # oracle: L-BFGS-B from many random starts with numerical gradients
    rng = np.random.default_rng(99)
    for _ in range(5):
        boxes = random_boxes(rng, 3)
        lo = np.array([[b.alpha, b.gamma] for b in boxes]).ravel()
        hi = np.array([[b.beta, b.delta] for b in boxes]).ravel()
        best = -np.inf
        for _ in range(40):
            x0 = rng.uniform(lo, hi)
            res = optimize.minimize(lambda x: -total_bound(x.reshape(-1, 2)), x0, method="L-BFGS-B",
                                    bounds=list(zip(lo, hi)))
            best = max(best, -res.fun)
        sol = solve_inner(boxes)
        assert sol.objective >= best - 1e-6


def test_kkt_certificate_coordinatewise():
    rng = np.random.default_rng(5)
    for _ in range(30):
        boxes = random_boxes(rng, 3)
        sol = solve_inner(boxes)
        assert sol.certified and sol.kkt_residual <= KKT_TOL
        x = sol.moments
        lo = np.array([[b.alpha, b.gamma] for b in boxes])
        hi = np.array([[b.beta, b.delta] for b in boxes])
        assert np.all(x >= lo) and np.all(x <= hi)
        g = np.column_stack(bound_gradient(x))
        lam = np.column_stack([sol.lam_mu, sol.lam_sigma])
        s = np.column_stack([sol.s_mu, sol.s_sigma])
        assert np.all(lam >= 0) and np.all(s >= 0)
        interior = (x > lo) & (x < hi)
        assert np.all(np.abs(g[interior]) <= KKT_TOL)
        assert np.all(lam[x < hi] == 0) and np.all(s[x > lo] == 0)
        assert np.all(lam * s == 0)


def test_kkt_multipliers_signs():
    x = np.array([[0.1, 0.2], [0.5, 0.2]])
    lo = np.array([[0.1, 0.1], [0.4, 0.1]])
    hi = np.array([[0.3, 0.2], [0.5, 0.2]])
    lam, s, res = kkt_multipliers(x, lo, hi)
    # the bound pulls the means together: mu_0 up, mu_1 down
    assert res > 0  # mu_0 sits at its lower bound while its gradient points up
    assert np.all(lam[:, 1] > 0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), r1=st.floats(0, 1), r2=st.floats(0, 1))
def test_objective_monotone_in_radius(seed, r1, r2):
    r1, r2 = sorted((r1, r2))
    rng = np.random.default_rng(seed)
    noms = [MomentPdf("normal", rng.uniform(0.05, 0.7), rng.uniform(0.005, 0.1)) for _ in range(3)]
    f1 = solve_inner([build_roi(n, r1, BOX, j) for j, n in enumerate(noms)]).objective
    f2 = solve_inner([build_roi(n, r2, BOX, j) for j, n in enumerate(noms)]).objective
    assert f2 >= f1 - 1e-9


def test_bound_is_not_concave_on_a_segment():
    # along mu_0 = t with (mu_1, s_0, s_1) = (0, 0.5, 0.5) the bound is
    # 1 - t^2 / (2 t^2 + 1), which is convex for t > 1/sqrt(6)
    a = np.array([[0.0, 0.5], [0.0, 0.5]])
    b = np.array([[3.0, 0.5], [0.0, 0.5]])
    mid = total_bound(0.5 * (a + b))
    chord = 0.5 * (total_bound(a) + total_bound(b))
    assert mid < chord - 1e-3


@pytest.mark.xfail(strict=True, reason="the common-area bound is not concave on the whole box")
@settings(max_examples=300, deadline=None)
@given(seed=st.integers(0, 100_000), t=st.sampled_from([0.25, 0.5, 0.75]))
def test_concavity_along_segments(seed, t):
    rng = np.random.default_rng(seed)
    boxes = random_boxes(rng, 3, radius=1.0)
    lo = np.array([[b.alpha, b.gamma] for b in boxes])
    hi = np.array([[b.beta, b.delta] for b in boxes])
    a, b = rng.uniform(lo, hi), rng.uniform(lo, hi)
    assert total_bound(t * a + (1 - t) * b) >= t * total_bound(a) + (1 - t) * total_bound(b) - 1e-9


def test_other_family_pdfs_at_the_optimum():
    nom = [MomentPdf("gamma", 2.0, 0.4), MomentPdf("gamma", 2.6, 0.5)]
    boxes = [build_roi(n, 0.1, (0.0, 6.0), j) for j, n in enumerate(nom)]
    area, sol = worst_case_common_area(boxes, family="gamma")
    assert 0.0 <= area <= 1.0
    assert sol.certified
