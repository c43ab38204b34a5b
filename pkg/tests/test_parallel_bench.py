import math

import numpy as np
import pytest

from opcert.parallel_bench import (
    AmdahlModel,
    ScalingRecord,
    amdahl_limit,
    amdahl_speedup,
    bench_batched_conv,
    fit_parallel_fraction,
    loglog_slope,
    scaling_study,
)
from opcert.transforms import circular_conv_fft


def test_perfect_parallelization_speedup_equals_n():
    for n in (1, 2, 8, 1000):
        assert amdahl_speedup(AmdahlModel(1.0, n)) == float(n)


def test_single_processor_speedup_is_one():
    for p in (0.0, 0.5, 0.99):
        assert amdahl_speedup(AmdahlModel(p, 1)) == pytest.approx(1.0, abs=1e-15)


def test_speedup_known_value():
    assert amdahl_speedup(AmdahlModel(0.9, 10)) == pytest.approx(5.2632, abs=1e-4)


def test_limit_values():
    assert amdahl_limit(0.9) == pytest.approx(10.0, abs=1e-12)
    assert amdahl_limit(0.0) == pytest.approx(1.0, abs=1e-15)
    assert math.isinf(amdahl_limit(1.0))


def test_limit_consistency_with_large_n():
    for p in (0.3, 0.9, 0.99):
        s = amdahl_speedup(AmdahlModel(p, 10**9))
        assert s == pytest.approx(amdahl_limit(p), rel=1e-6)


def test_speedup_bounded_by_n_and_limit():
    for p in np.linspace(0.0, 0.99, 12):
        for n in (1, 2, 4, 16, 128):
            s = amdahl_speedup(AmdahlModel(p, n))
            assert s <= min(n, amdahl_limit(p)) + 1e-12


def test_speedup_increasing_in_p_and_n():
    ps = np.linspace(0.0, 1.0, 11)
    for n in (2, 4, 8):
        vals = [amdahl_speedup(AmdahlModel(p, n)) for p in ps]
        assert all(a <= b + 1e-15 for a, b in zip(vals, vals[1:]))
    for p in (0.3, 0.8):
        vals = [amdahl_speedup(AmdahlModel(p, n)) for n in (1, 2, 4, 8, 64)]
        assert all(a <= b + 1e-15 for a, b in zip(vals, vals[1:]))


def test_model_validation():
    with pytest.raises(ValueError):
        AmdahlModel(1.2, 4)
    with pytest.raises(ValueError):
        AmdahlModel(0.5, 0)
    with pytest.raises(ValueError):
        amdahl_limit(-0.1)


def test_fit_recovers_planted_fraction():
    p = 0.85
    workers = [1, 2, 4, 8]
    speedups = [amdahl_speedup(AmdahlModel(p, n)) for n in workers]
    assert fit_parallel_fraction(workers, speedups) == pytest.approx(p, abs=1e-12)


def test_loglog_slope_of_power_law():
    ns = [2**k for k in range(10, 15)]
    ts = [1e-9 * n**2 for n in ns]
    assert loglog_slope(ns, ts) == pytest.approx(2.0, abs=1e-12)


def test_bench_validates_inputs(rng):
    batch = rng.normal(size=(8, 64))
    filt = rng.normal(size=64)
    with pytest.raises(ValueError, match="repeats"):
        bench_batched_conv(batch, filt, [1, 2], repeats=3)
    with pytest.raises(ValueError, match="4 items"):
        bench_batched_conv(batch, filt, [1, 4], repeats=5)
    with pytest.raises(ValueError, match="positive"):
        bench_batched_conv(batch, filt, [0, 1], repeats=5)


def test_bench_records_and_bit_identical_results(rng):
    batch = rng.normal(size=(16, 256))
    filt = rng.normal(size=256)
    records = bench_batched_conv(batch, filt, [1, 2], repeats=5)
    assert [r.workers for r in records] == [1, 2]
    one = records[0]
    assert one.speedup_measured == pytest.approx(1.0, abs=1e-12)
    for r in records:
        assert r.wall_time > 0
        assert 0.0 <= r.fitted_P <= 1.0
        assert r.effective_workers <= r.workers
    # the harness already enforces bit-identity; spot-check one item here
    expected = circular_conv_fft(batch[3], filt)
    assert np.array_equal(expected, circular_conv_fft(batch[3], filt))


def test_bench_oversubscribed_workers_share_measurement(rng):
    import os
    batch = rng.normal(size=(4 * 64, 64))
    filt = rng.normal(size=64)
    big = 64  # far beyond any sandbox cpu count
    records = bench_batched_conv(batch, filt, [1, big], repeats=5)
    assert records[1].effective_workers == min(big, os.cpu_count() or 1)


def test_scaling_study_returns_ascending_records():
    records = scaling_study([256, 512, 1024], repeats=2)
    assert [r.n for r in records] == [256, 512, 1024]
    for r in records:
        assert isinstance(r, ScalingRecord)
        assert r.t_direct > 0 and r.t_fft > 0


def test_scaling_study_validates_sizes():
    with pytest.raises(ValueError, match="ascending"):
        scaling_study([512, 256])
    with pytest.raises(ValueError, match="powers of two"):
        scaling_study([100, 200])
