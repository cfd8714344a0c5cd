import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy.integrate import quad
from scipy.stats import wasserstein_distance

from consensus_lab.dynamics import (
    Constant,
    RationalDecay,
    random_state,
    simulate_alignment,
    simulate_linear,
    simulate_second_order,
)
from consensus_lab.errors import (
    OutOfRangeError,
    ScalingMismatchError,
    ShapeError,
    UnsupportedDimensionError,
    UnsupportedKernelError,
    VacuousTestError,
)
from consensus_lab.io import read_csv
from consensus_lab.limits import (
    PROFILES,
    Alignment,
    DistributionField,
    EmpiricalMeasure,
    FractionalPower,
    IndicatorBand,
    ZeroKernel,
    get_profile,
    graph_limit_convergence,
    kernel_distance,
    kernel_distance_quadrature,
    kernel_from_model,
    limit_kernel,
    meanfield_convergence,
    second_order_weak_residual,
    solve_nonlocal_diffusion,
    subordination_residual,
    to_distribution,
    to_empirical,
    wasserstein1,
    write_distance_table,
)
from consensus_lab.network import build_dense_periodic, build_fractional, build_path, neighbour_count


def test_distribution_field_basics(tmp_path):
    traj = simulate_linear(build_path(4), [1.0, 2.0, 3.0, 4.0], 0.1, 0.05)
    fld = to_distribution(traj)
    assert fld.n_cells == 4
    np.testing.assert_allclose(fld.midpoints, [0.125, 0.375, 0.625, 0.875])
    # L^2 norm of the step function is the scaled Euclidean norm
    assert fld.l2_norm(0) == pytest.approx(np.linalg.norm([1, 2, 3, 4]) / 2)
    np.testing.assert_array_equal(fld.refined(8)[0], [1, 1, 2, 2, 3, 3, 4, 4])
    with pytest.raises(ShapeError):
        fld.refined(6)
    fld.snapshot_csv(tmp_path / "s.csv", 0)
    header, data = read_csv(tmp_path / "s.csv")
    assert header == ["s_mid", "value"] and data.shape == (4, 2)
    traj2 = simulate_alignment(3, Constant(1.0), random_state(3, seed=0, dim=2), 0.1, 0.05)
    with pytest.raises(UnsupportedDimensionError):
        to_distribution(traj2)


@given(st.integers(2, 40), st.integers(0, 2 ** 31 - 1))
def test_l2_identity(n, seed):
    x = random_state(n, seed=seed)
    fld = DistributionField([0.0], x[None, :])
    fine = np.linspace(0, 1, 40 * n, endpoint=False) + 0.5 / (40 * n)
    vals = x[np.minimum((fine * n).astype(int), n - 1)]
    assert fld.l2_norm() == pytest.approx(np.sqrt(np.mean(vals ** 2)), rel=1e-12)


def test_kernel_from_model():
    k = kernel_from_model(build_dense_periodic(4, 0.5))
    np.testing.assert_array_equal(k.weights, [[0, 1, 2, 1], [1, 0, 1, 2], [2, 1, 0, 1], [1, 2, 1, 0]])
    k = kernel_from_model(build_path(3), "dynamics")
    np.testing.assert_array_equal(k.weights, [[0, 3, 0], [3, 0, 3], [0, 3, 0]])
    assert k(0.1, 0.5) == 3 and k(0.1, 0.9) == 0
    with pytest.raises(ScalingMismatchError):
        kernel_from_model(build_path(3, True))
    with pytest.raises(OutOfRangeError):
        kernel_from_model(build_path(3), "rows")


def test_limit_kernels():
    assert limit_kernel("dense_periodic", r=0.25) == IndicatorBand(0.25, 4.0)
    assert limit_kernel("dense_periodic", "adjacency", r=0.25) == IndicatorBand(0.25, 1.0)
    assert isinstance(limit_kernel("path"), ZeroKernel)
    frac = limit_kernel("fractional", alpha=0.5)
    assert isinstance(frac, FractionalPower) and frac.singular
    assert frac(0.0, 0.5) == pytest.approx(4.0)
    with pytest.raises(UnsupportedKernelError):
        frac.nystrom_matrix(8)
    with pytest.raises(UnsupportedKernelError):
        limit_kernel("grid")
    assert IndicatorBand(0.1)(0.02, 0.95) == 1.0
    assert IndicatorBand(0.1, periodic=False)(0.02, 0.95) == 0.0


def test_path_kernel_distance_exact():
    for n in (2, 5, 40):
        step = kernel_from_model(build_path(n))
        assert kernel_distance(step, ZeroKernel()) == pytest.approx(2 * (n - 1) / n ** 2)


def test_dense_kernel_distance_small_case():
    # N = 16, r = 1/4: l = 4 offsets either side; exact value 1/8
    d = kernel_distance(kernel_from_model(build_dense_periodic(16, 0.25)), IndicatorBand(0.25))
    assert d == pytest.approx(0.125, abs=1e-14)


@given(st.integers(3, 48), st.floats(0.05, 0.5), st.booleans())
def test_kernel_distance_routes_agree(n, r, periodic):
    assume(neighbour_count(n, r) >= 1)
    step = kernel_from_model(build_dense_periodic(n, r))
    band = IndicatorBand(r, 1.0, periodic)
    exact = kernel_distance(step, band)
    m = 60 * n
    approx = kernel_distance_quadrature(step, band, m)
    # the midpoint rule misplaces O(1/m) of the band boundary, which has length O(1)
    assert abs(exact - approx) <= 8.0 * (1 + step.weights.max()) ** 2 / m


def test_kernel_distance_unsupported():
    with pytest.raises(UnsupportedKernelError):
        kernel_distance(kernel_from_model(build_path(4)), FractionalPower(0.5))


@pytest.mark.parametrize("name", sorted(PROFILES))
def test_profile_cell_averages(name):
    prof = get_profile(name)
    avgs = prof.cell_averages(7)
    ref = [7 * quad(prof, i / 7, (i + 1) / 7)[0] for i in range(7)]
    np.testing.assert_allclose(avgs, ref, atol=1e-13)
    assert get_profile(2.5).cell_averages(3).tolist() == pytest.approx([2.5] * 3)
    with pytest.raises(OutOfRangeError):
        get_profile("gauss")


def test_nystrom_reproduces_network_ode():
    model = build_dense_periodic(24, 0.25)
    x0 = random_state(24, seed=9)
    fld = solve_nonlocal_diffusion(kernel_from_model(model, "dynamics"), x0, 24, 1.0, 0.01,
                                   min_cells=1)
    traj = simulate_linear(model, x0, 1.0, 0.01)
    np.testing.assert_allclose(fld.values[-1], traj.final, atol=1e-13)


def test_nystrom_with_constant_alignment_is_the_alignment_model():
    m = 40
    x0 = get_profile("sin").cell_averages(m)
    fld = solve_nonlocal_diffusion(IndicatorBand(0.5), "sin", m, 0.5, 0.01,
                                   psi=Alignment(RationalDecay(1.0)))
    traj = simulate_alignment(m, RationalDecay(1.0), x0, 0.5, 0.01)
    np.testing.assert_allclose(fld.values[-1], traj.final, atol=1e-13)


def test_nystrom_preconditions_and_invariants():
    with pytest.raises(OutOfRangeError):
        solve_nonlocal_diffusion(IndicatorBand(0.25), "sin", 16, 1.0, 0.01)
    with pytest.raises(UnsupportedKernelError):
        solve_nonlocal_diffusion(FractionalPower(0.5), "sin", 64, 1.0, 0.01)
    fld = solve_nonlocal_diffusion(IndicatorBand(0.25, 4.0), "constant", 32, 1.0, 0.05)
    np.testing.assert_allclose(fld.values, 1.0, atol=1e-14)
    fld = solve_nonlocal_diffusion(IndicatorBand(0.25, 4.0), "linear", 64, 1.0, 0.05)
    np.testing.assert_allclose(fld.values.mean(axis=1), 0.5, atol=1e-12)


def test_graph_limit_distances_decrease():
    rows = graph_limit_convergence("dense_periodic", [16, 32, 64], r=0.25)
    d = [r[1] for r in rows]
    assert d[0] > d[1] > d[2]
    rows = graph_limit_convergence("path", [8, 16, 32], g="sin")
    assert rows[0][1] > rows[1][1] > rows[2][1]
    with pytest.raises(OutOfRangeError):
        graph_limit_convergence("dense_periodic", [16, 32], r=0.25, m_ref=96)


def test_empirical_example():
    mu = to_empirical([-1.0, 0.0, 1.0])
    np.testing.assert_array_equal(mu.locations, [-1, 0, 1])
    np.testing.assert_allclose(mu.weights, [1 / 3] * 3)
    mu = to_empirical([0.5, 0.5, 2.0, 0.5])
    np.testing.assert_allclose(mu.weights, [0.75, 0.25])
    assert mu.cdf(0.4) == 0 and mu.cdf(0.5) == 0.75 and mu.cdf(3.0) == 1.0
    with pytest.raises(OutOfRangeError):
        EmpiricalMeasure([0.0, 1.0], [0.5, 0.6])
    two_d = to_empirical(np.zeros((3, 2)))
    with pytest.raises(UnsupportedDimensionError):
        wasserstein1(two_d, two_d)


def test_projection_forgets_agent_labels():
    xa, xb = np.array([1.0, 0.0, -1.0]), np.array([1.0, -1.0, 0.0])
    assert to_empirical(xa).same_as(to_empirical(xb))
    ta = simulate_linear(build_path(3), xa, 0.1, 0.01)
    tb = simulate_linear(build_path(3), xb, 0.1, 0.01)
    assert np.linalg.norm(ta.final - tb.final) > 0.01


finite = st.floats(-5, 5, allow_nan=False)
samples = st.lists(finite, min_size=1, max_size=25)


@given(samples, samples)
def test_w1_matches_reference(a, b):
    d = wasserstein1(to_empirical(a), to_empirical(b))
    assert d == pytest.approx(wasserstein_distance(a, b), abs=1e-12)


@given(samples, samples, samples)
def test_w1_is_a_metric(a, b, c):
    A, B, C = to_empirical(a), to_empirical(b), to_empirical(c)
    ab = wasserstein1(A, B)
    assert ab >= 0
    assert ab == pytest.approx(wasserstein1(B, A), abs=1e-12)
    assert wasserstein1(A, A) == 0.0
    assert ab <= wasserstein1(A, C) + wasserstein1(C, B) + 1e-12


@given(samples, finite)
def test_w1_translation(a, shift):
    shifted = [v + shift for v in a]
    assert wasserstein1(to_empirical(a), to_empirical(shifted)) == pytest.approx(abs(shift), abs=1e-9)


def test_meanfield_convergence_decreases():
    rows = meanfield_convergence(RationalDecay(1.0), "sin", [8, 16, 32], T=1.0, dt=0.02)
    d = [r[1] for r in rows]
    # first order in 1/N: each doubling roughly halves the distance
    assert d[1] / d[0] <= 0.6 and d[2] / d[1] <= 0.6
    with pytest.raises(OutOfRangeError):
        meanfield_convergence(RationalDecay(1.0), "sin", [8], n_ref=32)


def test_subordination_residuals():
    fld = solve_nonlocal_diffusion(IndicatorBand(0.5), "linear", 64, 1.0, 0.02,
                                   psi=Alignment(Constant(1.0)))
    tab = subordination_residual(fld, Constant(1.0), (1, 2, 3))
    res = tab.max()
    assert res["1"] <= 1e-8
    assert res["2"] < 1e-3 and res["3"] < 1e-3
    assert tab.times[0] == pytest.approx(0.02) and tab.times[-1] == pytest.approx(0.98)
    coarse = subordination_residual(fld, Constant(1.0), (2,), dt_fd=0.04).max()["2"]
    assert coarse > res["2"]
    with pytest.raises(VacuousTestError):
        subordination_residual(fld, Constant(1.0), (0,))
    with pytest.raises(OutOfRangeError):
        subordination_residual(fld, Constant(1.0), (1,), dt_fd=0.03)


def test_subordination_table_csv(tmp_path):
    fld = solve_nonlocal_diffusion(IndicatorBand(0.5), "sin", 32, 0.2, 0.02,
                                   psi=Alignment(RationalDecay(1.0)))
    subordination_residual(fld, RationalDecay(1.0), (1, 2)).to_csv(tmp_path / "r.csv")
    header, data = read_csv(tmp_path / "r.csv")
    assert header == ["t", "residual_1", "residual_2"] and data.shape == (9, 3)
    write_distance_table([(8, 0.1), (16, 0.05)], tmp_path / "d.csv")
    assert read_csv(tmp_path / "d.csv")[0] == ["n", "distance"]


def test_second_order_residuals():
    n = 32
    x0 = get_profile("cos").cell_averages(n)
    v0 = 0.5 + get_profile("sin").cell_averages(n)
    traj = simulate_second_order(Constant(1.0), x0, v0, 1.0, 1e-3, n=n)
    tab = second_order_weak_residual(traj, Constant(1.0), ((0, 1), (1, 1), (2, 0)))
    res = tab.max()
    assert res["x0v1"] <= 1e-6
    assert res["x1v1"] < 1e-4 and res["x2v0"] < 1e-4
    with pytest.raises(VacuousTestError):
        second_order_weak_residual(traj, Constant(1.0), ((0, 0),))
    with pytest.raises(OutOfRangeError):
        second_order_weak_residual(traj, Constant(1.0), ((2, 2),))
    with pytest.raises(ShapeError):
        second_order_weak_residual(simulate_linear(build_path(3), [1, 0, -1], 0.1, 0.01),
                                   Constant(1.0))


def test_fractional_kernel_matches_weights():
    # the scaled family's weights are the kernel at cell centres over N
    n, alpha = 12, 0.4
    W = -build_fractional(n, alpha, 1.0, scaled=True).laplacian
    k = FractionalPower(alpha)
    for i, j in ((2, 7), (0, 11), (5, 6)):
        assert W[i, j] == pytest.approx(float(k((i + 0.5) / n, (j + 0.5) / n)) / n, rel=1e-12)
