import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ebm_bridge import FixedPointConfig, draw_sample_set, gaussian_model, gaussian_proposal, optimal_bridge
from ebm_bridge.experiments import (
    CSV_HEADER,
    ExperimentSpec,
    SweepRow,
    UsageError,
    default_theta_spec,
    default_z_spec,
    emit_csv,
    run_theta_sweep,
    run_z_sweep,
    scenario_init,
    summarize,
    sweep_errors,
)
from ebm_bridge.numerics import trial_seed

SQRT_2PI = math.sqrt(2 * math.pi)


def small_z(**kw):
    base = dict(replications=40, chunk_size=15, sigma_grid=(0.5, 1.0, 2.0))
    base.update(kw)
    return default_z_spec(**base)


def test_scenario_mapping():
    assert scenario_init("ideal", 2.5) == (2.5, 1)
    assert scenario_init("almost-ideal", 2.5) == (2.5 * 1.001, 10)
    assert scenario_init("realistic-low", 2.5) == (0.1, 10)
    assert scenario_init("realistic-high", 2.5) == (5.0, 10)
    with pytest.raises(UsageError):
        scenario_init("optimistic", 2.5)


def test_default_grid():
    spec = default_z_spec()
    assert len(spec.sigma_grid) == 12
    assert spec.sigma_grid[0] == pytest.approx(0.3) and spec.sigma_grid[-1] == pytest.approx(5.0)
    assert default_theta_spec().splits == ((5, 5), (5, 15), (1, 20), (1, 100))


@pytest.mark.parametrize(
    "bad",
    [
        dict(methods=("opt-bridge", "nope")),
        dict(sigma_grid=()),
        dict(sigma_grid=(0.0,)),
        dict(replications=0),
        dict(splits=((0, 3),)),
        dict(scenario="sunny"),
    ],
)
def test_spec_validation(bad):
    with pytest.raises(UsageError):
        default_z_spec(**bad)


def test_theta_spec_rejects_z_estimators():
    with pytest.raises(UsageError):
        default_theta_spec(methods=("opt-bridge",))


def test_row_cardinality():
    spec = default_z_spec(replications=3, chunk_size=3)
    rows = run_z_sweep(spec)
    assert len(rows) == 3 * 12 * 3


def test_ideal_scenario_exact_at_matching_proposal():
    spec = small_z(scenario="ideal", methods=("opt-bridge", "self-is-mix", "mis", "quad-score", "multi-bridge"))
    rows = [r for r in run_z_sweep(spec) if r.sigma_p == 1.0 and r.estimator != "multi-bridge"]
    for r in rows:
        assert r.mse < 1e-28 and r.failures == 0


def test_trials_reproduce_single_sample_sets():
    spec = small_z(scenario="realistic-high", splits=((6, 4),), methods=("opt-bridge",))
    errors = sweep_errors(spec)
    m = gaussian_model()
    for j, sigma in enumerate(spec.sigma_grid):
        p = gaussian_proposal(0.0, sigma)
        for t in (0, 17, 39):
            s = draw_sample_set(m, 1.0, p, 6, 4, trial_seed(spec.root_seed, 0, t))
            z = optimal_bridge(s, m, 1.0, p, FixedPointConfig.fixed(5.0, 10)).Z_hat
            assert errors["opt-bridge", j, 0][0][t] == pytest.approx(z - SQRT_2PI, rel=1e-12, abs=1e-15)


def test_chunking_and_workers_do_not_change_output(tmp_path):
    a = run_z_sweep(small_z(chunk_size=7))
    b = run_z_sweep(small_z(chunk_size=40))
    assert [r.mse for r in a] != [] and [r.mse for r in a] == [r.mse for r in b]
    c = run_z_sweep(small_z(chunk_size=7), workers=2)
    assert a == c


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=60))
def test_summary_moments(errs):
    mse, bias, var, _, failures = summarize(np.array(errs), np.zeros(len(errs)))
    assert failures == 0
    assert mse == pytest.approx(bias**2 + var, rel=1e-10, abs=1e-300)


def test_summary_counts_failures():
    mse, bias, var, iters, failures = summarize(np.array([1.0, np.nan, 3.0]), np.array([2, 0, 4]))
    assert failures == 1 and mse == 5.0 and bias == 2.0 and var == 1.0 and iters == 3.0
    assert math.isnan(summarize(np.array([np.nan]), np.array([0]))[0])


def test_umbrella_failures_counted_not_fatal():
    spec = small_z(replications=4, sigma_grid=(1.0, 2.0), methods=("opt-umbrella",), splits=((2, 2),))
    rows = {r.sigma_p: r for r in run_z_sweep(spec)}
    assert rows[1.0].failures == 4 and math.isnan(rows[1.0].mse)
    assert rows[2.0].failures < 4


def test_theta_sweep_ml_constant_and_closed_form():
    spec = default_theta_spec(replications=30, chunk_size=30, splits=((5, 5),), methods=("ml", "nce-log"),
                              sigma_grid=(0.5, 2.0, 4.0))
    errors = sweep_errors(spec)
    rows = [r for r in run_theta_sweep(spec) if r.estimator == "ml"]
    assert len({r.mse for r in rows}) == 1
    # closed form: theta_hat^2 = mean y^2
    m = gaussian_model()
    for t in range(30):
        y = draw_sample_set(m, 1.0, gaussian_proposal(), 5, 5, trial_seed(0, 0, t)).y
        assert errors["ml", 0, 0][0][t] + 1.0 == pytest.approx(math.sqrt(np.mean(y**2)), rel=1e-7)


def test_emit_csv_format(tmp_path):
    spec = small_z(replications=5, chunk_size=5)
    rows = run_z_sweep(spec)
    path = tmp_path / "out.csv"
    emit_csv(rows, path, spec)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == len(rows) + 1
    keys = [(f[0], int(f[2]), int(f[3]), float(f[1])) for f in (ln.split(",") for ln in lines[1:])]
    assert keys == sorted(keys)
    first = lines[1].split(",")
    assert float(first[6]) == rows[0].mse and first[6] == repr(rows[0].mse)
    meta = json.loads((tmp_path / "out.csv.meta.json").read_text())
    assert meta["root_seed"] == 0 and meta["spec"]["replications"] == 5 and "library_version" in meta


def test_emit_csv_empty_table(tmp_path):
    with pytest.raises(ValueError):
        emit_csv([], tmp_path / "x.csv")


def test_emit_csv_unwritable(tmp_path):
    row = SweepRow("opt-bridge", 1.0, 1, 1, "ideal", 1, 0.0, 0.0, 0.0, 1.0, 0)
    with pytest.raises(OSError):
        emit_csv([row], tmp_path / "missing" / "x.csv")


def test_emit_csv_byte_identical(tmp_path):
    spec = small_z(replications=10, chunk_size=4)
    emit_csv(run_z_sweep(spec), tmp_path / "a.csv", spec)
    emit_csv(run_z_sweep(spec), tmp_path / "b.csv", spec)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.csv.meta.json").read_bytes() == (tmp_path / "b.csv.meta.json").read_bytes()
