import numpy as np
import pytest

from dpbary.datagen import (
    default_mixture_centers,
    gen_circle_instability,
    gen_counterexample_1d,
    gen_gaussian_mixture,
    image_to_measure,
    sample_from_measure,
)
from dpbary.dataio import emit_measure_csv, ingest_measure_csv
from dpbary.measures import DiscreteMeasure
from dpbary.ot import wasserstein_p

from helpers import random_uniform_measure, random_weighted_measure


# ---------------------------------------------------------------------------
# gaussian mixture generator
# ---------------------------------------------------------------------------


def test_mixture_zero_stddev_hits_centers():
    mu = gen_gaussian_mixture(400, 10, stddev=0.0, seed=0)
    centers = default_mixture_centers(10)
    for pt in mu.points:
        assert min(np.linalg.norm(pt - c) for c in centers) < 1e-12
    # multiplicities roughly n/4
    counts = [np.sum(np.all(np.isclose(mu.points, c), axis=1)) for c in centers]
    assert min(counts) > 50


def test_mixture_component_means():
    n, d, s = 4000, 10, 0.03
    mu = gen_gaussian_mixture(n, d, stddev=s, seed=1)
    centers = default_mixture_centers(d)
    labels = np.argmin(
        np.linalg.norm(mu.points[:, None, :2] - centers[None, :, :2], axis=2), axis=1
    )
    for j, c in enumerate(centers):
        pts = mu.points[labels == j]
        assert np.linalg.norm(pts.mean(axis=0) - c) < 3 * s / np.sqrt(len(pts) / 4)


def test_mixture_respects_ball():
    mu = gen_gaussian_mixture(2000, 10, stddev=0.2, seed=2)
    assert np.all(np.linalg.norm(mu.points, axis=1) <= 0.5 + 1e-12)
    assert mu.bounded


def test_mixture_paper_default_shape():
    mu = gen_gaussian_mixture(100, 10, seed=3)
    assert mu.dim == 10 and mu.n_atoms == 100


# ---------------------------------------------------------------------------
# 1-D counterexample
# ---------------------------------------------------------------------------


def test_counterexample_1d_construction():
    base, pert = gen_counterexample_1d(3)
    # supports {1/3, 2/3, 1} rescaled onto [-1/2, 1/2]
    assert np.allclose(np.sort(base.points[:, 0]), [-0.5, 0.0, 0.5])
    # smallest atom moved past the second
    assert np.sort(pert.points[:, 0])[0] > np.sort(base.points[:, 0])[1] - 1e-12


def test_counterexample_1d_w1_magnitude():
    n, e = 50, 0.5
    base, pert = gen_counterexample_1d(n, e=e)
    # move = (1+e)/n pre-rescaling, stretched by 1/(1 - 1/n), mass 1/n
    expected = (1 + e) / n / (1 - 1 / n) / n
    assert wasserstein_p(base, pert, p=1) == pytest.approx(expected, rel=1e-9)


def test_counterexample_rejects_tiny_n():
    with pytest.raises(ValueError):
        gen_counterexample_1d(2)


# ---------------------------------------------------------------------------
# circle instance and cluster sampler
# ---------------------------------------------------------------------------


def test_circle_instance_shapes():
    mu, pert, init = gen_circle_instability(8)
    assert mu.n_atoms == pert.n_atoms == 8
    assert init.shape == (2, 2)
    radii = np.linalg.norm(mu.points, axis=1)
    assert np.allclose(radii, radii[0])
    # exactly one point differs
    assert np.sum(np.any(mu.points != pert.points, axis=1)) == 1


def test_sample_from_measure_reproducible():
    rng = np.random.default_rng(3)
    mu = random_weighted_measure(rng, 6, 2)
    a = sample_from_measure(mu, 50, seed=1)
    b = sample_from_measure(mu, 50, seed=1)
    assert np.array_equal(a.points, b.points)


# ---------------------------------------------------------------------------
# image_to_measure
# ---------------------------------------------------------------------------


def test_image_single_pixel_is_dirac():
    grid = np.zeros((4, 4))
    grid[1, 2] = 3.0
    mu = image_to_measure(grid)
    assert mu.n_atoms == 1
    assert mu.weights[0] == 1.0
    assert np.all(np.abs(mu.points) <= 0.25)


def test_image_uniform_grid():
    mu = image_to_measure(np.ones((2, 2)))
    assert mu.n_atoms == 4
    assert np.allclose(mu.weights, 0.25)


def test_image_mass_normalized():
    rng = np.random.default_rng(4)
    grid = rng.uniform(0, 5, size=(7, 9))
    mu = image_to_measure(grid)
    assert mu.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.abs(mu.points) <= 0.25 + 1e-12)


def test_image_rejects_empty():
    with pytest.raises(ValueError, match="mass"):
        image_to_measure(np.zeros((3, 3)))


# ---------------------------------------------------------------------------
# CSV round trips
# ---------------------------------------------------------------------------


def test_csv_round_trip_exact(tmp_path):
    rng = np.random.default_rng(5)
    mu = random_weighted_measure(rng, 1000, 3)
    path = tmp_path / "m.csv"
    emit_measure_csv(mu, path, metadata={"seed": 7})
    back = ingest_measure_csv(path)
    assert np.array_equal(back.points, mu.points)  # bit-exact via repr round trip
    assert np.array_equal(back.weights, mu.weights)


def test_csv_headerless_two_rows(tmp_path):
    path = tmp_path / "raw.csv"
    path.write_text("0,0\n1,0\n")
    mu = ingest_measure_csv(path)
    assert mu.n_atoms == 2 and mu.dim == 2
    assert np.allclose(mu.weights, 0.5)


def test_csv_explicit_weights(tmp_path):
    path = tmp_path / "w.csv"
    path.write_text("x1,weight\n0.0,0.25\n1.0,0.75\n")
    mu = ingest_measure_csv(path)
    assert np.allclose(mu.weights, [0.25, 0.75])


def test_csv_renormalizes_with_warning(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x1,weight\n0.0,0.5\n1.0,0.6\n")
    with pytest.warns(UserWarning, match="renormalizing"):
        mu = ingest_measure_csv(path)
    assert mu.weights.sum() == pytest.approx(1.0)


def test_csv_rejects_ragged_and_nonfinite(tmp_path):
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("0,0\n1\n")
    with pytest.raises(ValueError, match="fields"):
        ingest_measure_csv(ragged)
    bad = tmp_path / "nan.csv"
    bad.write_text("0,nan\n1,0\n")
    with pytest.raises(ValueError, match="non-finite"):
        ingest_measure_csv(bad)
