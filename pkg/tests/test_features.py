import math
import time

import numpy as np
import pytest

from barsrate.errors import InvalidParameter, SeriesTooShort
from barsrate.features import (
    APEN_R_VALUES,
    FEATURE_NAMES,
    FeatureVector,
    apen,
    direction_changes,
    duration_features,
    featurize,
)
from barsrate.segment import Cycle, CycleSet, Designation, segment_signal
from tests.helpers import make_signal, oscillation


def apen_by_definition(series, m, r):
    """Прямой подсчет ApEn двойным циклом, с самосовпадениями"""
    series = list(series)
    n = len(series)
    sigma = float(np.std(series))
    if sigma == 0:
        return 0.0
    tol = r * sigma

    def phi(k):
        windows = [series[i:i + k] for i in range(n - k + 1)]
        total = 0.0
        for a in windows:
            count = sum(1 for b in windows if max(abs(p - q) for p, q in zip(a, b)) <= tol)
            total += math.log(count / len(windows))
        return total / len(windows)

    return max(phi(m) - phi(m + 1), 0.0)


def single_cycle_set(n_frames=10, mid=4, designation=Designation.NOSE_FINGER_NOSE):
    return CycleSet(designation, [Cycle(0, mid, n_frames)], [], n_frames)


class TestFeatureVector:
    """Тесты вектора признаков"""

    def test_canonical_order(self):
        """Тест канонического порядка имен"""
        assert len(FEATURE_NAMES) == 14
        assert FEATURE_NAMES[0] == "log_mean_cycle_s"
        assert FEATURE_NAMES[-1] == "apen_r018"

    def test_round_trip_array(self):
        """Тест преобразования в массив и обратно"""
        values = np.arange(14, dtype=float)
        vector = FeatureVector.from_array(values)
        np.testing.assert_array_equal(vector.as_array(), values)
        assert vector.as_dict()["dirchg_x_raw"] == 3.0

    def test_non_finite_rejected(self):
        """Тест отказа для нечислового признака"""
        values = np.zeros(14)
        values[0] = np.nan
        with pytest.raises(InvalidParameter):
            FeatureVector.from_array(values)

    def test_negative_count_rejected(self):
        """Тест отказа для отрицательного числа смен направления"""
        values = np.zeros(14)
        values[3] = -1.0
        with pytest.raises(InvalidParameter):
            FeatureVector.from_array(values)

    def test_wrong_length(self):
        """Тест отказа для неверного числа признаков"""
        with pytest.raises(InvalidParameter):
            FeatureVector.from_array(np.zeros(13))


class TestDurationFeatures:
    """Тесты признаков длительности"""

    def test_single_cycle(self):
        """Тест одного цикла 10 кадров при 10 кадрах в секунду"""
        values = duration_features(single_cycle_set(), fps=10.0)
        assert values[0] == pytest.approx(math.log(1.0))
        assert values[1] == pytest.approx(math.log(0.4))
        assert values[2] == pytest.approx(math.log(0.6))
        assert values[3:] == (0.0, 0.0, 0.0)

    def test_population_std(self):
        """Тест популяционного стандартного отклонения"""
        cycles = CycleSet(Designation.NOSE_FINGER_NOSE,
                          [Cycle(0, 2, 4), Cycle(4, 7, 10)], [], 10)
        values = duration_features(cycles, fps=1.0)
        assert values[3] == pytest.approx(1.0)
        assert values[4] == pytest.approx(0.5)
        assert values[5] == pytest.approx(0.5)

    def test_designation_swaps_halves(self):
        """Тест половин цикла для разметки палец-нос-палец"""
        values = duration_features(single_cycle_set(designation=Designation.FINGER_NOSE_FINGER), 10.0)
        assert values[1] == pytest.approx(math.log(0.6))
        assert values[2] == pytest.approx(math.log(0.4))


class TestDirectionChanges:
    """Тесты числа смен направления"""

    def test_monotone_cycle(self):
        """Тест одного разворота в цикле туда-обратно"""
        x = np.array([0, 1, 2, 3, 4, 3, 2, 1, 0, 0], dtype=float)
        raw_x, raw_y, per_x, per_y = direction_changes(make_signal(x), single_cycle_set())
        assert raw_x == 1.0
        assert raw_y == 0.0
        assert per_x == 1.0

    def test_plateaus_skipped(self):
        """Тест пропуска нулевых разностей"""
        x = np.array([0, 1, 1, 1, 2, 2, 1, 1, 0, 0], dtype=float)
        assert direction_changes(make_signal(x), single_cycle_set())[0] == 1.0

    def test_jitter_counted(self):
        """Тест подсчета дрожания"""
        x = np.array([0, 2, 1, 3, 2, 4, 3, 1, 0, 0], dtype=float)
        assert direction_changes(make_signal(x), single_cycle_set())[0] == 5.0

    def test_per_cycle(self):
        """Тест деления на число циклов"""
        x = np.array([0, 1, 0, 1, 0, 1, 0, 1, 0, 0], dtype=float)
        cycles = CycleSet(Designation.NOSE_FINGER_NOSE, [Cycle(0, 1, 4), Cycle(4, 5, 8)], [(8, 10)], 10)
        raw_x, _, per_x, _ = direction_changes(make_signal(x), cycles)
        assert per_x == raw_x / 2

    def test_sine_cycle(self):
        """Тест sin(2πt) на 100 Гц за t из [0, 2): четыре смены направления"""
        x = np.sin(2 * np.pi * np.arange(200) / 100.0)
        cycles = CycleSet(Designation.NOSE_FINGER_NOSE, [Cycle(0, 100, 200)], [], 200)
        raw_x, raw_y, per_x, _ = direction_changes(make_signal(x, fps=100.0), cycles)
        assert raw_x == 4.0
        assert per_x == 4.0
        assert raw_y == 0.0

    def test_repeated_cycle(self):
        """Тест повтора цикла: сырое число удваивается, на цикл не меняется"""
        x = np.sin(2 * np.pi * np.arange(200) / 100.0)
        once = direction_changes(make_signal(x, fps=100.0),
                                 CycleSet(Designation.NOSE_FINGER_NOSE, [Cycle(0, 100, 200)], [], 200))
        twice = direction_changes(
            make_signal(np.tile(x, 2), fps=100.0),
            CycleSet(Designation.NOSE_FINGER_NOSE, [Cycle(0, 100, 200), Cycle(200, 300, 400)], [], 400),
        )
        assert twice[0] == 2 * once[0]
        assert twice[2] == once[2]

    @pytest.mark.parametrize("scale", [0.01, 3.7, 250.0])
    def test_scale_invariance(self, rng, scale):
        """Тест неизменности сырых чисел при положительном масштабе сигнала"""
        x, y = rng.normal(size=(2, 60))
        cycles = CycleSet(Designation.NOSE_FINGER_NOSE, [Cycle(0, 10, 25), Cycle(25, 40, 55)], [(55, 60)], 60)
        base = direction_changes(make_signal(x, y), cycles)
        scaled = direction_changes(make_signal(scale * x, scale * y), cycles)
        assert scaled == base


class TestApEn:
    """Тесты приближенной энтропии"""

    @pytest.mark.parametrize("m", [2, 3])
    def test_matches_definition(self, m):
        """Тест совпадения с прямым подсчетом на 100 рядах длиной до 200"""
        rng = np.random.default_rng(99 + m)
        lengths = [200] + rng.integers(10, 201, size=99).tolist()
        for n in lengths:
            series = rng.normal(size=n) if rng.random() < 0.5 else np.round(rng.uniform(0, 3, n))
            r = float(rng.choice(APEN_R_VALUES + (0.2, 0.5)))
            assert apen(series, m, r) == pytest.approx(apen_by_definition(series, m, r), abs=1e-10)

    def test_alternating_series(self):
        """Тест чередования 0, 1 длиной 50 при m=2, r=0.5"""
        series = np.tile([0.0, 1.0], 25)
        assert apen(series, 2, 0.5) == pytest.approx(apen_by_definition(series, 2, 0.5), abs=1e-12)

    @pytest.mark.parametrize("a, b", [(0.5, 0.0), (4.0, 10.0), (3.3, -2.5)])
    def test_affine_invariance(self, rng, a, b):
        """Тест инвариантности к положительному аффинному преобразованию ряда"""
        series = rng.normal(size=120)
        for r in APEN_R_VALUES:
            assert apen(a * series + b, 3, r) == pytest.approx(apen(series, 3, r), abs=1e-9)

    def test_constant_series(self):
        """Тест нулевой энтропии постоянного ряда"""
        assert apen(np.full(50, 3.0), 3, 0.1) == 0.0

    def test_regular_below_random(self, rng):
        """Тест меньшей энтропии для периодического ряда"""
        periodic = np.tile([0.0, 1.0, 2.0, 1.0], 50)
        assert apen(periodic, 2, 0.2) < apen(rng.normal(size=200), 2, 0.2)

    def test_non_negative(self, rng):
        """Тест неотрицательности"""
        for _ in range(20):
            assert apen(rng.normal(size=12), 3, 0.1) >= 0.0

    def test_too_short(self):
        """Тест ошибки для короткого ряда"""
        with pytest.raises(SeriesTooShort):
            apen([1.0, 2.0, 3.0, 4.0], m=3)

    def test_invalid_parameters(self):
        """Тест отказа для неверных параметров"""
        with pytest.raises(InvalidParameter):
            apen(np.arange(10.0), m=0)
        with pytest.raises(InvalidParameter):
            apen(np.arange(10.0), m=2, r=0.0)

    @pytest.mark.slow
    def test_long_series(self, rng):
        """Тест ряда длиной 10000 за разумное время"""
        start = time.perf_counter()
        assert apen(rng.normal(size=10_000), 3, 0.18) > 0
        assert time.perf_counter() - start < 30.0


class TestFeaturize:
    """Тесты сборки признаков"""

    def test_oscillation_features(self):
        """Тест признаков чистых колебаний"""
        signal = make_signal(oscillation(n_cycles=5, samples_per_cycle=30))
        cycles = segment_signal(signal)
        vector = featurize(signal, cycles)
        assert vector.log_mean_cycle_s == pytest.approx(math.log(1.0))
        assert vector.std_cycle_s == pytest.approx(0.0, abs=1e-12)
        assert vector.dirchg_x_per_cycle == pytest.approx(2.0)
        assert vector.dirchg_y_raw == 0.0

    def test_per_cycle_mode(self):
        """Тест усреднения ApEn по циклам"""
        signal = make_signal(oscillation(n_cycles=4))
        cycles = segment_signal(signal)
        concatenated = featurize(signal, cycles)
        per_cycle = featurize(signal, cycles, apen_mode="per_cycle")
        spans = [signal.x[c.start:c.end] for c in cycles.cycles]
        expected = np.mean([apen(s, 3, 0.10) for s in spans])
        assert per_cycle.apen_r010 == pytest.approx(expected)
        assert concatenated.log_mean_cycle_s == per_cycle.log_mean_cycle_s

    def test_unknown_mode(self):
        """Тест отказа для неизвестного режима ApEn"""
        signal = make_signal(oscillation())
        with pytest.raises(InvalidParameter):
            featurize(signal, segment_signal(signal), apen_mode="windowed")

    def test_fps_override(self):
        """Тест явной частоты кадров"""
        signal = make_signal(oscillation(n_cycles=3, samples_per_cycle=30))
        cycles = segment_signal(signal)
        vector = featurize(signal, cycles, fps=15.0)
        assert vector.log_mean_cycle_s == pytest.approx(math.log(2.0))

    def test_deterministic(self, rng):
        """Тест побитно одинакового вектора при повторном вызове"""
        x = oscillation(n_cycles=4) + 0.01 * rng.normal(size=180)
        signal = make_signal(x, y=rng.normal(size=180))
        cycles = segment_signal(signal)
        a = featurize(signal, cycles).as_array()
        b = featurize(make_signal(x.copy(), y=signal.y.copy()), cycles).as_array()
        np.testing.assert_array_equal(a, b)

    def test_y_flip_symmetry(self, rng):
        """Тест одинаковых признаков для сигналов, отраженных по оси y"""
        x = oscillation(n_cycles=4)
        y = rng.normal(size=len(x))
        signal = make_signal(x, y)
        flipped = make_signal(x, -y)
        cycles = segment_signal(signal)
        assert segment_signal(flipped) == cycles
        assert featurize(flipped, cycles) == featurize(signal, cycles)

    def test_time_rescaling(self, rng):
        """Тест удвоенной частоты кадров при том же движении: длительности и смены направления не меняются"""
        n = 40
        x, y = rng.normal(size=(2, n))
        cycles = CycleSet(Designation.NOSE_FINGER_NOSE, [Cycle(0, 5, 12), Cycle(12, 20, 30)], [(30, n)], n)
        fine = np.arange(2 * n - 1) / 2.0
        doubled = make_signal(np.interp(fine, np.arange(n), x), np.interp(fine, np.arange(n), y), fps=60.0)
        doubled_cycles = CycleSet(
            Designation.NOSE_FINGER_NOSE,
            [Cycle(0, 10, 24), Cycle(24, 40, 60)],
            [(60, 2 * n - 1)],
            2 * n - 1,
        )
        base = featurize(make_signal(x, y, fps=30.0), cycles)
        fast = featurize(doubled, doubled_cycles)
        for name in FEATURE_NAMES:
            if name.startswith(("log_mean_", "std_", "dirchg_")):
                assert getattr(fast, name) == getattr(base, name), name
