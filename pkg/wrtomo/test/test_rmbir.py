import pickle

import numpy as np
import pytest

import wrtomo
from wrtomo.rmbir import (
    QGGMRF,
    ChannelError,
    InitKind,
    RmbirParams,
    RmbirParamsError,
    SurrogateObjective,
    WeightMatrix,
    cost,
    estimate_weights,
    inpaint_rows,
    normalized_residuals,
    ogm,
    power_iteration,
    reconstruct_all,
    rmbir_reconstruct,
    select_threshold,
)
from wrtomo.rmbir.penalty import talwar


def test_estimate_weights():
    W = estimate_weights(np.array([500.0, 0.0, 3.0]), floor=0.5)
    assert isinstance(W, WeightMatrix)
    assert W.data.tolist() == [500.0, 0.5, 3.0]
    assert np.allclose(W.sqrt() ** 2, W.data)
    with pytest.raises(ValueError):
        estimate_weights(np.array([-1.0]))
    with pytest.raises(ValueError):
        WeightMatrix(np.array([1.0, 0.0]))


def test_select_threshold():
    residuals = np.arange(1, 11, dtype=float)
    assert select_threshold(residuals, None, 0.2) == 8
    assert select_threshold(-residuals, None, 0.2) == 8
    assert select_threshold(residuals, None, 1e-9) == 10
    assert select_threshold(residuals / 2, np.full(10, 4.0), 0.2) == 8
    constant = select_threshold(np.full(5, 2.0), None, 0.1)
    assert constant > 2.0
    assert np.all(np.abs(np.full(5, 2.0)) < constant)
    for rho in (0, 1):
        with pytest.raises(ValueError):
            select_threshold(residuals, None, rho)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(threshold=None, outlier_fraction=None),
        dict(threshold=-1.0),
        dict(outlier_fraction=1.5),
        dict(sigma=0),
        dict(p=1.2, q=1.2),
        dict(c=0),
        dict(max_outer=0),
        dict(max_inner=2.5),
        dict(tol=-1),
        dict(weight_floor=0),
        dict(lipschitz_margin=0.5),
        dict(init="random"),
        dict(min_threshold=np.inf),
    ],
)
def test_params_validation(kwargs):
    with pytest.raises(RmbirParamsError):
        RmbirParams(**kwargs).validate()


def test_params_per_channel():
    params = RmbirParams(threshold=[2.0, 3.0, 4.0], sigma=1e-4, init="zero")
    params.validate(n_channels=3)
    assert params.init is InitKind.ZERO
    assert params.threshold_for(1) == 3.0
    assert params.sigma_for(2) == 1e-4
    with pytest.raises(RmbirParamsError):
        params.validate(n_channels=4)
    assert RmbirParams().threshold_for(0) is None
    assert RmbirParams().outlier_fraction_for(5) == 0.1


def dense_matrix(model):
    columns = []
    for i in range(model.n_voxels):
        unit = np.zeros(model.n_voxels)
        unit[i] = 1
        columns.append(model.forward(unit.reshape(model.volume_shape)).ravel())
    return np.array(columns).T


def test_cost_matches_brute_force(rng):
    geometry = wrtomo.ViewGeometry.uniform(10, nx=8, nz=1)
    model = wrtomo.SystemModel(geometry)
    A = dense_matrix(model)
    f = rng.uniform(0, 1e-3, size=geometry.volume_shape)
    g = rng.uniform(0, 0.5, size=geometry.sinogram_shape)
    W = rng.uniform(10, 100, size=g.shape)
    T, sigma = 2.0, 1e-4
    e = (g.ravel() - A @ f.ravel()) * np.sqrt(W.ravel())
    data = 0.5 * sum(min(x * x, T * T) for x in e)
    prior = QGGMRF(sigma)
    expected = data + prior.value(f)
    assert np.isclose(cost(f, g, W, T, sigma, model), expected, rtol=1e-10)
    assert np.allclose(normalized_residuals(f, g, W, model).ravel(), e)


def test_saturated_measurement(disk_model, disk_volume):
    g = disk_model.forward(disk_volume)
    W = np.full(g.shape, 100.0)
    T = 3.0
    values = []
    for scale in (3, 10, 1000):
        corrupted = g.copy()
        corrupted[4, 0, 7] += scale * T / 10
        values.append(cost(disk_volume, corrupted, W, T, 1.0, disk_model))
    assert np.allclose(values, 0.5 * T**2 + QGGMRF(1.0).value(disk_volume))


def test_surrogate_gradient(rng):
    geometry = wrtomo.ViewGeometry.uniform(8, nx=6, nz=2)
    model = wrtomo.SystemModel(geometry)
    f = rng.uniform(0, 1e-3, size=geometry.volume_shape)
    g = model.forward(rng.uniform(0, 1e-3, size=geometry.volume_shape))
    W = rng.uniform(50, 500, size=g.shape)
    prior = QGGMRF(2e-4)
    objective = SurrogateObjective.at(f, g, W, 1.0, prior, model)
    direction = rng.standard_normal(f.shape) * 1e-3
    eps = 1e-6
    numeric = (
        objective.value(f + eps * direction) - objective.value(f - eps * direction)
    ) / (2 * eps)
    assert np.isclose(np.vdot(objective.gradient(f), direction), numeric, rtol=1e-5)

    x = rng.uniform(0, 1e-3, size=f.shape)
    e = normalized_residuals(x, g, W, model)
    robust = 0.5 * float(np.sum(talwar(e, 1.0))) + prior.value(x)
    assert objective.value(x) >= robust - 1e-9 * abs(robust)
    e0 = normalized_residuals(f, g, W, model)
    touching = 0.5 * float(np.sum(talwar(e0, 1.0))) + prior.value(f)
    assert np.isclose(objective.value(f), touching, rtol=1e-12)


def test_power_iteration(rng):
    geometry = wrtomo.ViewGeometry.uniform(6, nx=5, nz=1)
    model = wrtomo.SystemModel(geometry)
    A = dense_matrix(model)
    w = rng.uniform(0.5, 2, size=geometry.sinogram_shape)
    exact = np.linalg.eigvalsh(A.T @ (w.ravel()[:, None] * A)).max()
    estimate = power_iteration(model, w, n_iter=200)
    assert np.isclose(estimate, exact, rtol=1e-3)
    assert power_iteration(model, 0 * w) == 0


def test_ogm_decreases(disk_model, disk_volume):
    g = disk_model.forward(disk_volume)
    W = np.full(g.shape, 1000.0)
    objective = SurrogateObjective(g, W, 0.0, QGGMRF(1.0), disk_model)
    x0 = np.zeros(disk_model.volume_shape)
    L = 1.1 * power_iteration(disk_model, W) + QGGMRF(1.0).lipschitz()
    best, value = ogm(objective, x0, L, n_iter=50)
    assert value < objective.value(x0)
    assert np.isclose(value, objective.value(best))
    assert best.min() >= 0


@pytest.fixture(scope="module")
def disk_problem(disk_model, disk_volume):
    g = disk_model.forward(disk_volume)
    W = 2000 * np.exp(-g)
    params = RmbirParams(threshold=np.inf, sigma=1.0, max_outer=40, max_inner=50, tol=0)
    return g, W, params


def test_noiseless_reconstruction(disk_problem, disk_model, disk_volume):
    g, W, params = disk_problem
    result = rmbir_reconstruct(g, disk_model, params, weights=W)
    assert wrtomo.nrmse(result.volume, disk_volume) < 0.02
    assert not result.bragg_map.any()
    assert result.threshold == np.inf
    assert result.volume.min() >= 0
    trace = result.trace
    assert np.all(np.diff(trace) <= 1e-9 * np.abs(trace[:-1]))


def test_single_outlier(disk_problem, disk_model, disk_volume, rng):
    g, W, _ = disk_problem
    noisy = g + rng.standard_normal(g.shape) / np.sqrt(W)
    params = RmbirParams(
        threshold=5.0, sigma=1e-5, c=1.0, max_outer=40, max_inner=50, tol=0
    )
    clean = rmbir_reconstruct(noisy, disk_model, params, weights=W)
    corrupted = noisy.copy()
    corrupted[5, 0, 8] += 10
    result = rmbir_reconstruct(corrupted, disk_model, params, weights=W)
    assert result.bragg_map[5, 0, 8] == 1
    assert result.bragg_map.sum() <= clean.bragg_map.sum() + 1
    clean_error = wrtomo.nrmse(clean.volume, disk_volume)
    assert wrtomo.nrmse(result.volume, disk_volume) <= 1.2 * clean_error

    e = normalized_residuals(result.volume, corrupted, W, disk_model)
    assert np.array_equal(result.bragg_map, (np.abs(e) >= 5.0).astype(np.uint8))


def test_inpaint_rows():
    g = np.arange(24, dtype=float).reshape(2, 2, 6) ** 2
    mask = np.zeros(g.shape, dtype=bool)
    mask[0, 1, 2:4] = True
    mask[1, 0, 0] = True
    mask[1, 1, :] = True
    out = inpaint_rows(g, mask)
    assert np.array_equal(out[~mask], g[~mask])
    assert np.allclose(out[0, 1, 2:4], g[0, 1, 1] + (g[0, 1, 4] - g[0, 1, 1]) * np.array([1, 2]) / 3)
    assert out[1, 0, 0] == g[1, 0, 1]
    assert np.array_equal(out[1, 1], g[1, 1])
    with pytest.raises(ValueError):
        inpaint_rows(g, mask[:1])


def test_start_excludes_outlier_streak(disk_problem, disk_model, disk_volume):
    g, W, _ = disk_problem
    corrupted = g.copy()
    corrupted[5, 0, 8] += 10
    params = RmbirParams(threshold=5.0, sigma=1.0, max_outer=1, max_inner=1)
    start = rmbir_reconstruct(corrupted, disk_model, params, weights=W)
    streaked = np.maximum(wrtomo.fbp_reconstruct(corrupted, disk_model), 0)
    clean = np.maximum(wrtomo.fbp_reconstruct(g, disk_model), 0)
    assert wrtomo.nrmse(streaked, disk_volume) > 5 * wrtomo.nrmse(clean, disk_volume)
    assert wrtomo.nrmse(start.volume, disk_volume) < 2 * wrtomo.nrmse(clean, disk_volume)


def test_quantile_threshold(disk_problem, disk_model):
    g, W, _ = disk_problem
    params = RmbirParams(outlier_fraction=0.05, min_threshold=3.0, sigma=1.0, max_outer=3)
    result = rmbir_reconstruct(g, disk_model, params, weights=W)
    assert result.threshold >= 3.0
    assert np.all(np.diff(result.trace) <= 1e-9 * np.abs(result.trace[:-1]))


def test_quantile_sets_threshold_above_floor(disk_problem, disk_model, rng):
    g, W, _ = disk_problem
    noisy = g + rng.standard_normal(g.shape) / np.sqrt(W)
    corrupted = np.zeros(g.shape, dtype=bool)
    corrupted.flat[rng.choice(g.size, size=g.size // 12, replace=False)] = True
    noisy[corrupted] += 12 / np.sqrt(W[corrupted])
    params = RmbirParams(
        outlier_fraction=0.06, min_threshold=3.0, sigma=2e-5, c=1.0,
        max_outer=10, max_inner=30,
    )
    result = rmbir_reconstruct(noisy, disk_model, params, weights=W)
    assert result.threshold > params.min_threshold
    assert np.sum(result.bragg_map & ~corrupted) <= 1
    assert np.sum(result.bragg_map & corrupted) >= 0.6 * corrupted.sum()


def test_scale_consistency(disk_problem, disk_model):
    g, W, _ = disk_problem
    params = RmbirParams(threshold=3.0, sigma=2e-5, max_outer=3, max_inner=10)
    alpha = 10.0
    scaled = RmbirParams(threshold=3.0, sigma=alpha * 2e-5, max_outer=3, max_inner=10)
    a = rmbir_reconstruct(g, disk_model, params, weights=W)
    b = rmbir_reconstruct(alpha * g, disk_model, scaled, weights=W / alpha**2)
    assert np.allclose(b.volume, alpha * a.volume, rtol=1e-4, atol=1e-10)
    assert np.array_equal(a.bragg_map, b.bragg_map)


def test_reconstruct_validation(disk_model, disk_problem):
    g, W, params = disk_problem
    with pytest.raises(ValueError):
        rmbir_reconstruct(g[:, :, :-1], disk_model, params)
    with pytest.raises(ValueError):
        rmbir_reconstruct(g, disk_model, params, weights=W[:-1])


@pytest.fixture(scope="module")
def two_channel_counts(small_simulation):
    data = small_simulation.counts.data[:2]
    return wrtomo.HyperSinogram(data, "counts", small_simulation.counts.incident_flux)


def test_reconstruct_all_single_channel(two_channel_counts, small_geometry):
    model = wrtomo.SystemModel(small_geometry)
    params = RmbirParams(outlier_fraction=0.1, max_outer=2, max_inner=5)
    first = wrtomo.HyperSinogram(two_channel_counts.data[:1], "counts", 2000)
    result = reconstruct_all(first, model, params)
    g = wrtomo.counts_to_projection(first, floor=params.weight_floor)
    single = rmbir_reconstruct(
        g.data[0], model, params, weights=estimate_weights(first.data[0], params.weight_floor)
    )
    assert np.array_equal(result.volumes.data[0], single.volume)
    assert np.array_equal(result.bragg_maps.data[0], single.bragg_map)
    assert result.thresholds[0] == single.threshold
    assert len(result.traces) == 1


def test_reconstruct_all_channel_order(two_channel_counts, small_geometry):
    model = wrtomo.SystemModel(small_geometry)
    params = RmbirParams(threshold=3.0, max_outer=2, max_inner=5)
    forward = reconstruct_all(two_channel_counts, model, params)
    flipped = wrtomo.HyperSinogram(two_channel_counts.data[::-1], "counts", 2000)
    backward = reconstruct_all(flipped, model, params, workers=2)
    assert np.array_equal(forward.volumes.data, backward.volumes.data[::-1])
    assert np.array_equal(forward.bragg_maps.data, backward.bragg_maps.data[::-1])
    assert forward.volumes.shape == (2,) + small_geometry.volume_shape


def test_reconstruct_all_projection_input(two_channel_counts, small_geometry):
    model = wrtomo.SystemModel(small_geometry)
    params = RmbirParams(threshold=[3.0, 4.0], max_outer=1, max_inner=3)
    g = wrtomo.counts_to_projection(two_channel_counts)
    result = reconstruct_all(g, model, params)
    assert result.thresholds.tolist() == [3.0, 4.0]
    with pytest.raises(RmbirParamsError):
        reconstruct_all(g, model, RmbirParams(threshold=[1.0, 2.0, 3.0]))


def test_channel_error():
    error = ChannelError(3, "ValueError: bad")
    restored = pickle.loads(pickle.dumps(error))
    assert restored.channel == 3
    assert str(restored) == "Channel 3: ValueError: bad"
