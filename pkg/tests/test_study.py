import csv
import json

import pytest

import mvj.study as study
from mvj.study import (
    GRID_ORDERS,
    SETTINGS,
    StudyConfig,
    aggregate_estimates,
    aggregate_selection,
    model,
    param_names,
    replicate,
    run_study,
)


def _cfg(tmp_path, **kw):
    base = dict(reps=1, T=[150], out_dir=str(tmp_path / "out"))
    base.update(kw)
    return StudyConfig(**base)


class TestModels:
    @pytest.mark.parametrize("setting", ["a", "b"])
    def test_all_models_build(self, setting):
        for name, (order, vec) in SETTINGS[setting].items():
            spec, theta = model(setting, name)
            assert spec.order == order
            assert len(param_names(spec)) == len(vec)

    def test_unknown(self):
        with pytest.raises(ValueError):
            model("a", "M9")

    def test_config_validation(self):
        with pytest.raises(ValueError):
            StudyConfig(setting="z")
        with pytest.raises(ValueError):
            StudyConfig(reps=0)
        with pytest.raises(ValueError):
            StudyConfig(models=["M7"])


class TestReplicate:
    def test_record_shape(self):
        rec = replicate("a", "M1", 200, 0, 1, grid=study.OrderGrid(1, 1))
        assert set(rec) >= {"ols", "owls", "aic_order", "bic_order"}
        assert len(rec["ols"]["theta"]) == 2
        assert rec["ols"]["converged"]

    def test_streams_independent_of_order(self):
        a = replicate("a", "M2", 150, 3, 9)
        replicate("a", "M2", 150, 2, 9)
        b = replicate("a", "M2", 150, 3, 9)
        assert a == b


class TestRunStudy:
    def test_smoke_single_rep(self, tmp_path):
        rep = run_study(_cfg(tmp_path))
        assert len(rep.records) == 1 and not rep.failures
        out = tmp_path / "out"
        for f in ("replications.csv", "estimates.csv", "selection.csv", "acf.csv", "summary.json"):
            assert (out / f).exists()
        with open(out / "estimates.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0]) == ["model", "T", "method", "param", "true", "mean", "rmse", "n"]
        assert {r["param"] for r in rows} == {"c", "phi1", "vartheta1", "vartheta2"}
        with open(out / "selection.csv") as fh:
            header = next(csv.reader(fh))
        assert header == ["model", "T", "criterion"] + [f"({a},{b})" for a, b in GRID_ORDERS]

    def test_byte_identical(self, tmp_path):
        files = ("replications.csv", "estimates.csv", "selection.csv", "acf.csv", "summary.json")
        run_study(_cfg(tmp_path, reps=2))
        first = {f: (tmp_path / "out" / f).read_bytes() for f in files}
        run_study(_cfg(tmp_path, reps=2))
        assert first == {f: (tmp_path / "out" / f).read_bytes() for f in files}

    def test_failures_counted(self, tmp_path, monkeypatch):
        real = study.replicate

        def flaky(setting, name, T, rep, seed, **kw):
            if rep == 1:
                raise RuntimeError("injected")
            return real(setting, name, T, rep, seed, **kw)

        monkeypatch.setattr(study, "replicate", flaky)
        rep = run_study(_cfg(tmp_path, reps=3, select=False))
        assert len(rep.records) == 2
        assert rep.failures == [{"model": "M1", "T": 150, "rep": 1, "error": "injected"}]
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["n_failures"] == 1

    def test_from_file(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"setting": "b", "models": ["M2"], "grid": [1, 1]}))
        cfg = StudyConfig.from_file(p)
        assert cfg.setting == "b" and cfg.grid == (1, 1)


class TestAggregate:
    def test_rmse_and_mean(self):
        recs = [
            {"model": "M1", "T": 100, "rep": i, "ols": {"theta": [t, 0.5], "vartheta": [0.5, 1 / 3]}}
            for i, t in enumerate([-0.1, -0.3])
        ]
        rows = aggregate_estimates(recs, "a")
        c = next(r for r in rows if r["param"] == "c")
        assert c["mean"] == pytest.approx(-0.2)
        assert c["rmse"] == pytest.approx(0.1)
        assert c["n"] == 2

    def test_selection_counts(self):
        recs = [
            {"model": "M1", "T": 100, "aic_order": (1, 0), "bic_order": (1, 0)},
            {"model": "M1", "T": 100, "aic_order": (2, 2), "bic_order": None},
        ]
        rows = aggregate_selection(recs)
        aic = next(r for r in rows if r["criterion"] == "AIC")
        bic = next(r for r in rows if r["criterion"] == "BIC")
        assert aic["(1,0)"] == 1 and aic["(2,2)"] == 1
        assert sum(bic[f"({a},{b})"] for a, b in GRID_ORDERS) == 1
