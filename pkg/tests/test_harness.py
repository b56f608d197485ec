"""Sweep orchestration: seeding, config validation, record emission,
collapse measurement, and the flat config-file parser."""

import dataclasses

import numpy as np
import pytest

from nucrec.harness import (CSV_HEADER, ExperimentConfig, TrialRecord,
                            collapse_metric, derive_seed, emit_csv, emit_plot,
                            load_config, read_csv, run_experiment)
from nucrec.solver import SolverConfig

_TINY = dict(p_list=(6,), r=2, rescaled_grid=(4.0,), trials_per_point=1)


def test_derive_seed_determinism_and_sensitivity():
    base = derive_seed(0, "regression", 40, 0, 0)
    assert derive_seed(0, "regression", 40, 0, 0) == base
    assert all(isinstance(s, int) for s in base)
    assert base[0] != base[1]
    seen = {base}
    for variant in [derive_seed(1, "regression", 40, 0, 0),
                    derive_seed(0, "var", 40, 0, 0),
                    derive_seed(0, "regression", 41, 0, 0),
                    derive_seed(0, "regression", 40, 1, 0),
                    derive_seed(0, "regression", 40, 0, 1)]:
        assert variant not in seen
        seen.add(variant)


def test_config_validation():
    good = ExperimentConfig(model="regression", **_TINY)
    assert good._k_of(6) == 6
    cases = [
        dict(model="lasso"),
        dict(model="regression", p_list=()),
        dict(model="regression", p_list=(0,)),
        dict(model="regression", k_rule=0),
        dict(model="regression", k_rule=2.5),
        dict(model="regression", rescaled_grid=()),
        dict(model="regression", rescaled_grid=(0.5, 2.0)),
        dict(model="regression", rescaled_grid=(2.0, 2.0)),
        dict(model="regression", rescaled_grid=(3.0, 2.0)),
        dict(model="regression", trials_per_point=0),
        dict(model="regression", p_list=(6,), r=7),
        dict(model="regression", p_list=(10,), k_rule=3, r=4),
        dict(model="regression", nu=-1.0),
        dict(model="var", gamma=1.0),
        dict(model="var", gamma=-0.1),
        dict(model="regression", workers=0),
        dict(model="regression", lambda_rule="big"),
        dict(model="regression", signal_scale="loud"),
        dict(model="compressed", p_list=(80,)),
    ]
    for bad in cases:
        with pytest.raises(ValueError):
            ExperimentConfig(**bad)
    # the compressed size cap is an opt-in, not a hard limit
    ExperimentConfig(model="compressed", p_list=(80,), allow_large=True)


def test_sample_size_rounding():
    cfg = ExperimentConfig(model="regression", p_list=(6,), r=2,
                           rescaled_grid=(2.0, 3.5), trials_per_point=1)
    records = run_experiment(cfg)
    assert [rec.N for rec in records] == [24, 42]
    assert [rec.rescaled_N for rec in records] == [2.0, 3.5]
    for rec in records:
        assert rec.rescaled_N == rec.N / (rec.r * rec.p)


@pytest.mark.parametrize("model", ["regression", "var", "compressed"])
def test_single_trial_record_fields(model):
    cfg = ExperimentConfig(model=model, **_TINY)
    records = run_experiment(cfg)
    assert len(records) == 1
    rec = records[0]
    assert rec.model == model and rec.failure is None
    assert (rec.p, rec.k, rec.r, rec.N) == (6, 6, 2, 48)
    assert rec.lam > 0 and rec.iterations >= 1
    assert np.isfinite(rec.frob_error) and rec.frob_error > 0
    assert rec.relative_error > 0 and rec.nuclear_error >= rec.frob_error
    assert rec.bound_ratio == pytest.approx(rec.frob_error / rec.bound_value)
    assert rec.seed == derive_seed(0, model, 6, 0, 0)[0]


def test_fixed_lambda_rule_is_used_verbatim():
    cfg = ExperimentConfig(model="regression", lambda_rule=0.375, **_TINY)
    assert run_experiment(cfg)[0].lam == 0.375


def _rec(p, t, rel, failure=None):
    n = int(round(t * 2 * p))
    return TrialRecord(model="regression", p=p, k=p, r=2, N=n, rescaled_N=t,
                       trial=0, seed=0, lam=0.1, frob_error=rel,
                       relative_error=rel, nuclear_error=rel, iterations=5,
                       runtime_ms=1.0, bound_value=2.0, bound_ratio=rel / 2.0,
                       failure=failure)


def test_collapse_metric_hand_values():
    same = [_rec(10, 4.0, 0.7), _rec(20, 4.0, 0.7)]
    assert collapse_metric(same, 4.0) == 0.0
    pair = [_rec(10, 4.0, 1.0), _rec(20, 4.0, 1.2)]
    assert collapse_metric(pair, 4.0) == pytest.approx(
        0.18181818181818177, rel=1e-12)
    with pytest.raises(ValueError):
        collapse_metric([_rec(10, 4.0, 1.0)], 4.0)


def test_collapse_metric_filters():
    records = [
        _rec(10, 4.0, 1.0),
        _rec(20, 4.0, 1.0),
        _rec(20, 4.5, 50.0),                  # outside the match window
        _rec(40, 4.0, 99.0, failure="boom"),  # aborted trial is ignored
        _rec(40, 4.0, float("nan")),          # non-finite metric is ignored
    ]
    assert collapse_metric(records, 4.0) == 0.0
    # widening the window pulls in the off-grid point
    assert collapse_metric(records, 4.0, match_tol=0.2) > 1.0


def test_csv_round_trip(tmp_path):
    cfg = ExperimentConfig(model="regression", p_list=(6, 8), r=2,
                           rescaled_grid=(2.0, 4.0), trials_per_point=2)
    records = run_experiment(cfg)
    assert records == sorted(
        records, key=lambda r: (r.model, r.p, r.rescaled_N, r.trial))
    path = tmp_path / "sweep.csv"
    emit_csv(records, str(path))
    lines = path.read_text(encoding="ascii").splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 1 + len(records)
    back = read_csv(str(path))
    assert back == records  # repr round-trips every float exactly
    assert not (tmp_path / "sweep.csv.failures.txt").exists()
    with pytest.raises(ValueError):
        emit_csv([], str(tmp_path / "empty.csv"))


def test_csv_rejects_foreign_content(tmp_path):
    bad_header = tmp_path / "foreign.csv"
    bad_header.write_text("a,b,c\n1,2,3\n", encoding="ascii")
    with pytest.raises(ValueError):
        read_csv(str(bad_header))
    truncated = tmp_path / "short.csv"
    truncated.write_text(CSV_HEADER + "\nregression,6,6\n", encoding="ascii")
    with pytest.raises(ValueError):
        read_csv(str(truncated))


def test_failure_sidecar(tmp_path):
    # a negative fixed weight aborts every trial inside the worker
    cfg = ExperimentConfig(model="regression", lambda_rule=-1.0,
                           p_list=(6,), r=2, rescaled_grid=(4.0,),
                           trials_per_point=2)
    records = run_experiment(cfg)
    assert all(rec.failure is not None for rec in records)
    assert all(np.isnan(rec.frob_error) for rec in records)
    path = tmp_path / "failed.csv"
    emit_csv(records, str(path))
    sidecar = tmp_path / "failed.csv.failures.txt"
    text = sidecar.read_text(encoding="utf-8")
    assert text.count("ValueError") == 2 and "p=6" in text


def test_run_determinism_and_worker_independence():
    cfg = ExperimentConfig(model="regression", p_list=(6,), r=2,
                           rescaled_grid=(2.0, 4.0), trials_per_point=2)
    first = run_experiment(cfg)
    second = run_experiment(cfg)
    strip = lambda recs: [dataclasses.replace(rec, runtime_ms=0.0)
                          for rec in recs]
    assert strip(first) == strip(second)
    pooled = run_experiment(dataclasses.replace(cfg, workers=2))
    assert strip(pooled) == strip(first)


def test_error_decreases_along_grid():
    cfg = ExperimentConfig(model="regression", p_list=(10,), r=2,
                           rescaled_grid=(2.0, 10.0), trials_per_point=3)
    records = run_experiment(cfg)
    mean_at = lambda t: np.mean([rec.relative_error for rec in records
                                 if rec.rescaled_N == t])
    assert mean_at(10.0) < mean_at(2.0)


def test_emit_plot_svg(tmp_path):
    cfg = ExperimentConfig(model="regression", p_list=(6, 8), r=2,
                           rescaled_grid=(2.0, 4.0), trials_per_point=1)
    records = run_experiment(cfg)
    path = tmp_path / "curves.svg"
    emit_plot(records, str(path))
    text = path.read_text()
    assert text.lstrip().startswith("<?xml") and "</svg>" in text
    assert "rescaled sample size" in text
    with pytest.raises(ValueError):
        emit_plot([], str(tmp_path / "none.svg"))


def test_load_config_full(tmp_path):
    path = tmp_path / "sweep.cfg"
    path.write_text(
        "# regression sweep\n"
        "model = regression\n"
        "p_list = 6, 12\n"
        "k_rule = 4\n"
        "r = 2\n"
        "nu = 0.5          # noise level\n"
        "gamma = 0.25\n"
        "rescaled_grid = 2.0, 3.5\n"
        "trials_per_point = 3\n"
        "master_seed = 7\n"
        "lambda_rule = 0.3\n"
        "signal_scale = 2.5\n"
        "sigma_spec = identity\n"
        "workers = 1\n"
        "allow_large = false\n"
        "max_iters = 500\n"
        "rel_tol = 1e-7\n"
        "output_path = out.csv\n",
        encoding="utf-8")
    cfg = load_config(str(path))
    assert cfg.model == "regression" and cfg.p_list == (6, 12)
    assert cfg.k_rule == 4 and cfg.r == 2
    assert cfg.nu == 0.5 and cfg.gamma == 0.25
    assert cfg.rescaled_grid == (2.0, 3.5)
    assert cfg.trials_per_point == 3 and cfg.master_seed == 7
    assert cfg.lambda_rule == 0.3 and cfg.signal_scale == 2.5
    assert cfg.allow_large is False and cfg.output_path == "out.csv"
    assert cfg.solver_cfg.max_iters == 500
    assert cfg.solver_cfg.rel_tol == 1e-7


def test_load_config_minimal_and_auto(tmp_path):
    path = tmp_path / "min.cfg"
    path.write_text("model = var\nlambda_rule = auto\nallow_large = true\n",
                    encoding="utf-8")
    cfg = load_config(str(path))
    assert cfg.model == "var" and cfg.lambda_rule == "auto"
    assert cfg.allow_large is True
    assert cfg.solver_cfg == SolverConfig(lam=0.0)


def test_load_config_rejections(tmp_path):
    cases = [
        "p_list = 6\n",                          # missing model
        "model = regression\nfoo = 1\n",         # unknown key
        "model = regression\nr = 2\nr = 3\n",    # duplicate key
        "model = regression\njust text\n",       # no assignment
        "model = regression\nsigma_spec = diag\n",
        "model = regression\nallow_large = yes\n",
    ]
    for i, body in enumerate(cases):
        path = tmp_path / f"bad{i}.cfg"
        path.write_text(body, encoding="utf-8")
        with pytest.raises(ValueError):
            load_config(str(path))
