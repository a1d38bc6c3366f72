import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helios.dsm import (
    IndicatorField,
    SamplingGrid,
    find_peaks,
    indicator_at,
    indicator_field,
    localization_error,
    mae,
)
from helios.errors import DomainError, InvalidInputError
from helios.forward import Aperture, NoiseModel, PointSource, SourceConfig, Trace, measure

EX21_SOURCE = SourceConfig((PointSource((1.0, 0.0), 5.0),))


def _random_traces(rng, n_k, m):
    out = {}
    for i in range(n_k):
        angles = np.sort(rng.uniform(-1.5, 1.5, m))
        values = rng.normal(size=m) + 1j * rng.normal(size=m)
        out[4.0 + i] = Trace(angles, values)
    return out


class TestGrid:
    def test_node_count(self):
        g = SamplingGrid(-2, 2, -2, 2, 0.04)
        assert g.shape == (101, 101)
        assert g.xs[75] == 1.0 and g.ys[50] == 0.0

    def test_node_count_floor(self):
        assert SamplingGrid(0, 1, 0, 1, 0.3).shape == (4, 4)


class TestIndicatorAt:
    ap = Aperture(7.0, math.pi / 2, 51)

    def test_zero_traces(self):
        tr = Trace(np.linspace(-1, 1, 5), np.zeros(5))
        assert indicator_at({4.0: tr}, self.ap, (0.3, 0.2)) == 0.0

    def test_single_sensor(self):
        tr = Trace([0.3], [0.2 - 0.7j])
        assert indicator_at({4.0: tr}, self.ap, (0.5, -1.0)) == 1.0

    def test_peak_at_source(self):
        tr = measure(EX21_SOURCE, self.ap, 4.0)
        at_source = indicator_at({4.0: tr}, self.ap, (1.0, 0.0))
        g = SamplingGrid()
        field = indicator_field({4.0: tr}, self.ap, g)
        nodes = g.nodes()
        far = np.hypot(nodes[:, 0] - 1.0, nodes[:, 1]) > 0.5
        assert at_source > field.values.ravel()[far].max()

    def test_errors(self):
        with pytest.raises(InvalidInputError):
            indicator_at({}, self.ap, (0, 0))
        with pytest.raises(InvalidInputError):
            indicator_at({4.0: Trace([], [])}, self.ap, (0, 0))
        tr = Trace([0.0], [1.0])
        with pytest.raises(DomainError):
            indicator_at({4.0: tr}, self.ap, (7.0, 0.0))

    @given(st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_bounded_and_scale_invariant(self, seed):
        rng = np.random.default_rng(seed)
        traces = _random_traces(rng, rng.integers(1, 4), rng.integers(1, 20))
        z = rng.uniform(-2, 2, 2)
        v = indicator_at(traces, self.ap, z)
        assert 0.0 <= v <= 1.0
        c = complex(*rng.normal(size=2)) * 10 ** rng.uniform(-3, 3)
        scaled = {k: Trace(t.angles, c * t.values) for k, t in traces.items()}
        assert indicator_at(scaled, self.ap, z) == pytest.approx(v, abs=1e-12)


class TestIndicatorField:
    def test_bounds(self):
        ap = Aperture(6.5, math.pi / 2, 10)
        cfg = SourceConfig((PointSource((0.5, 0.3), 6.0), PointSource((-1.0, -1.2), 5.5)))
        f = indicator_field({4.0: measure(cfg, ap, 4.0, NoiseModel(0.05, 3))}, ap)
        assert f.values.shape == (101, 101)
        assert f.values.min() >= 0 and f.values.max() <= 1

    def test_reflection_symmetry(self):
        ap = Aperture(7.0, math.pi / 3, 21)
        cfg = SourceConfig((PointSource((0.0, 0.0), 5.0),))
        f = indicator_field({4.0: measure(cfg, ap, 4.0)}, ap)
        np.testing.assert_allclose(f.values, f.values[:, ::-1], atol=1e-12)

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_example_single_source_argmax(self, n):
        ap = Aperture(7.0, math.pi / n, 51)
        f = indicator_field({4.0: measure(EX21_SOURCE, ap, 4.0)}, ap)
        np.testing.assert_array_equal(f.argmax(), [1.0, 0.0])

    def test_peak_stability_under_tiny_noise(self):
        ap = Aperture(7.0, math.pi / 2, 51)
        clean = indicator_field({4.0: measure(EX21_SOURCE, ap, 4.0)}, ap).argmax()
        noisy = indicator_field({4.0: measure(EX21_SOURCE, ap, 4.0, NoiseModel(1e-6, 5))}, ap).argmax()
        assert np.max(np.abs(clean - noisy)) <= 0.04 + 1e-12

    def test_threads_do_not_change_result(self):
        ap = Aperture(6.5, math.pi / 2, 10)
        tr = {4.0: measure(EX21_SOURCE, ap, 4.0, NoiseModel(0.05, 1))}
        np.testing.assert_array_equal(indicator_field(tr, ap, threads=1).values,
                                      indicator_field(tr, ap, threads=3).values)

    def test_csv_export(self):
        g = SamplingGrid(0, 0.08, 0, 0.04, 0.04)
        f = IndicatorField(g, np.arange(6, dtype=float).reshape(3, 2) / 7)
        lines = f.to_csv().splitlines()
        assert lines[0] == "x,y,value"
        assert lines[1] == "0,0,0"
        assert lines[2] == f"0,0.040000000000000001,{1 / 7:.17g}"
        assert len(lines) == 7
        assert float(lines[3].split(",")[0]) == 0.04


class TestFindPeaks:
    grid = SamplingGrid(0, 0.4, 0, 0.4, 0.04)

    def test_single_spike(self):
        v = np.zeros((11, 11))
        v[4, 6] = 1.0
        for n in (1, 3, 10):
            np.testing.assert_allclose(find_peaks(IndicatorField(self.grid, v), n), [[0.16, 0.24]])

    def test_constant(self):
        assert len(find_peaks(IndicatorField(self.grid, np.ones((11, 11))), 3)) == 0

    def test_order_and_separation(self):
        v = np.zeros((11, 11))
        v[1, 1] = 0.5
        v[9, 9] = 0.9
        v[9, 6] = 0.8  # 3 cells from the strongest peak: suppressed
        v[4, 9] = 0.7
        pk = find_peaks(IndicatorField(self.grid, v), 3)
        np.testing.assert_allclose(pk, [[0.36, 0.36], [0.16, 0.36], [0.04, 0.04]])

    def test_tie_break(self):
        v = np.zeros((11, 11))
        v[8, 2] = 1.0
        v[2, 8] = 1.0
        pk = find_peaks(IndicatorField(self.grid, v), 1)
        np.testing.assert_allclose(pk, [[0.08, 0.32]])

    def test_too_small(self):
        with pytest.raises(InvalidInputError):
            find_peaks(IndicatorField(SamplingGrid(0, 0.04, 0, 0.04, 0.04), np.zeros((2, 2))), 1)
        with pytest.raises(InvalidInputError):
            find_peaks(IndicatorField(self.grid, np.zeros((11, 11))), 0)


class TestMae:
    def test_identical_any_order(self):
        a = [(0.1, 0.2), (1.0, -1.0), (-0.5, 0.3)]
        assert mae(a[::-1], a) == 0.0

    def test_single(self):
        assert mae([(3, 4)], [(0, 0)]) == 5.0

    def test_crossed(self):
        assert mae([(1, 0), (0, 0)], [(0, 0), (1, 0)]) == 0.0

    def test_mismatch(self):
        with pytest.raises(InvalidInputError):
            mae([(0, 0)], [(0, 0), (1, 1)])

    @given(st.integers(0, 10_000))
    @settings(max_examples=50, deadline=None)
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 6))
        p, t = rng.uniform(-2, 2, (n, 2)), rng.uniform(-2, 2, (n, 2))
        base = mae(p, t)
        assert mae(rng.permutation(p), rng.permutation(t)) == pytest.approx(base, abs=1e-12)
        assert mae(p, p) == 0.0

    def test_large_n_uses_assignment(self):
        rng = np.random.default_rng(0)
        t = rng.uniform(-2, 2, (8, 2))
        assert mae(rng.permutation(t), t) == pytest.approx(0.0, abs=1e-15)


class TestLocalizationError:
    def test_complete(self):
        assert localization_error([(3, 4)], [(0, 0)]) == (5.0, True)

    def test_missing_peak(self):
        err, complete = localization_error([(0, 0)], [(0, 0), (0, 2)])
        assert not complete and err == pytest.approx(1.0)

    def test_no_peaks(self):
        assert localization_error(np.zeros((0, 2)), [(0, 0)]) == (math.inf, False)
