import sys
import os
import itertools

import numpy as np
import pytest
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..', '..')))

from src.graphcut.energy import FIXED_POINT_SCALE, EnergyField, data_term, energy_of, grid_pairwise, smoothness_term
from src.graphcut.solver import max_flow, min_cut


def _random_field(seed: int, ny: int = 3, nx: int = 3) -> EnergyField:
    rng = np.random.default_rng(seed)
    return EnergyField(
        rng.uniform(0, 10, size=(ny, nx)),
        rng.uniform(0, 10, size=(ny, nx)),
        rng.uniform(0, 4, size=(ny, nx - 1)),
        rng.uniform(0, 4, size=(ny - 1, nx)),
    )


def _brute_force(e: EnergyField, locked=None) -> float:
    """Minimum energy over every labeling of the grid."""
    best = np.inf
    n = e.shape[0] * e.shape[1]
    for bits in itertools.product((False, True), repeat=n):
        f = np.array(bits).reshape(e.shape)
        if locked is not None and not np.all(f[locked]):
            continue
        best = min(best, energy_of(e, f))
    return best


def _all_labelings(n: int) -> np.ndarray:
    """Every binary labeling of n pixels, one per row."""
    return ((np.arange(2 ** n)[:, np.newaxis] >> np.arange(n)) & 1).astype(bool)


def _fixed_point_energies(e: EnergyField, labelings: np.ndarray) -> np.ndarray:
    """Integer energies (in units of 1/FIXED_POINT_SCALE) of flattened labelings."""
    def fixed(values):
        return np.rint(np.asarray(values).ravel() * FIXED_POINT_SCALE).astype(np.int64)

    ny, nx = e.shape
    energies = np.where(labelings, fixed(e.source_cost), fixed(e.sink_cost)).sum(axis=1)
    index = np.arange(ny * nx).reshape(ny, nx)
    for weights, p, q in ((e.right, index[:, :-1], index[:, 1:]), (e.down, index[:-1, :], index[1:, :])):
        cut = labelings[:, p.ravel()] != labelings[:, q.ravel()]
        energies = energies + (cut * fixed(weights)).sum(axis=1)
    return energies


def test_data_term_blend():
    assert data_term(1, 1.0, 0.0) == pytest.approx(np.exp(-1))
    assert data_term(1, 0.0, 1.0) == pytest.approx(1 - np.exp(-1))
    assert data_term(50, 3.0, 7.0) == pytest.approx(7.0)
    with pytest.raises(ValueError):
        data_term(0, 1.0, 1.0)


def test_smoothness_term():
    assert smoothness_term(1, 5.0, 5.0) == pytest.approx(1.0)
    assert smoothness_term(2, 0.0, 2.0) == pytest.approx(2 * np.exp(-1))
    right, down = grid_pairwise(np.zeros((3, 4)), 1)
    assert right.shape == (3, 3)
    assert down.shape == (2, 4)


def test_energy_field_rejects_negative():
    with pytest.raises(ValueError):
        EnergyField(-np.ones((2, 2)), np.ones((2, 2)), np.ones((2, 1)), np.ones((1, 2)))


def test_energy_of_counts_cut_edges():
    e = EnergyField(np.zeros((1, 2)), np.zeros((1, 2)), np.array([[3.0]]), np.zeros((0, 2)))
    assert energy_of(e, np.array([[True, False]])) == 3.0
    assert energy_of(e, np.array([[True, True]])) == 0.0


@pytest.mark.parametrize('seed', range(6))
def test_min_cut_matches_brute_force(seed):
    e = _random_field(seed).quantized()
    f = min_cut(e)
    assert energy_of(e, f) == pytest.approx(_brute_force(e), abs=1e-6)


@pytest.mark.parametrize('seed', range(3))
def test_locked_pixels_stay_foreground(seed):
    e = _random_field(seed).quantized()
    locked = np.zeros(e.shape, dtype=bool)
    locked[1, 1] = True
    locked[0, 2] = True
    f = min_cut(e, locked)
    assert f[locked].all()
    assert energy_of(e, f) == pytest.approx(_brute_force(e, locked), abs=1e-6)


def test_flow_equals_energy():
    e = _random_field(11, 4, 3).quantized()
    result = max_flow(e)
    assert result.flow == pytest.approx(energy_of(e, result.labeling), abs=1e-6)


def test_strong_data_terms_win():
    source = np.full((4, 4), 10.0)
    sink = np.zeros((4, 4))
    source[1:3, 1:3] = 0.0
    sink[1:3, 1:3] = 10.0
    e = EnergyField.from_image(source, sink, np.zeros((4, 4)), 1)
    expected = np.zeros((4, 4), dtype=bool)
    expected[1:3, 1:3] = True
    assert np.array_equal(min_cut(e), expected)


@pytest.mark.parametrize('shape', [(3, 3), (4, 4)])
def test_min_cut_exact_on_random_grids(shape):
    ny, nx = shape
    labelings = _all_labelings(ny * nx)
    for seed in range(200):
        e = _random_field(1000 + seed, ny, nx)
        f = min_cut(e)
        solved = _fixed_point_energies(e, f.ravel()[np.newaxis])[0]
        assert solved == _fixed_point_energies(e, labelings).min(), f"seed {seed}"


def test_terminal_shift_keeps_the_cut():
    rng = np.random.default_rng(5)
    for seed in range(50):
        e = _random_field(seed, 4, 4).quantized()
        shift = rng.integers(0, 400, size=e.shape) / 8.0
        shifted = EnergyField(e.source_cost + shift, e.sink_cost + shift, e.right, e.down)
        base = max_flow(e)
        moved = max_flow(shifted)
        assert energy_of(e, moved.labeling) == pytest.approx(energy_of(e, base.labeling), abs=1e-9)
        assert moved.flow == pytest.approx(base.flow + shift.sum(), abs=1e-6)
