"""Study orchestration checks: determinism, resumability, persistence."""

import json
import math
from datetime import date
from pathlib import Path

import numpy as np
import pytest

from arrivalsim.backtest import (
    RunConfig,
    cell_seed,
    merge_reports,
    run,
)
from arrivalsim.errors import ParameterError
from arrivalsim.fitting import FitOptions
from arrivalsim.ingest import build_series, parse_csv, slice_window
from arrivalsim.models import model_from_name
from arrivalsim.synth import synth_generate


def tiny_config(input_path, outdir, **kw):
    defaults = dict(
        input=str(input_path),
        outdir=None if outdir is None else str(outdir),
        window_days=3,
        out_days=2,
        trajectories=20,
        products=(5, 6),
        models=("Exp.Const", "Exp.Lin"),
        tau_grid_size=9,
        seed=11,
        start_date="2017-09-08",
        fit=FitOptions(restarts=1),
    )
    defaults.update(kw)
    return RunConfig(**defaults)


@pytest.fixture(scope="module")
def synth_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "raw.csv"
    synth_generate(
        model_from_name("Exp.Expon"),
        [20.0, 5.0, 0.8],
        days=10,
        seed=3,
        out_path=path,
        products=(5, 6),
        gen_start=-4.25,
    )
    return path


def tree_bytes(root: Path) -> dict[str, bytes]:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


class TestSynth:
    def test_poisson_total_count(self, tmp_path):
        """Homogeneous rate 300/h over 2.75 h and 28 days."""
        path = synth_generate(
            model_from_name("Exp.Const"),
            [300.0],
            days=28,
            seed=5,
            out_path=tmp_path / "poisson.csv",
            products=(12,),
            gen_start=-3.25,
        )
        n = len(path.read_text().splitlines()) - 1
        expect = 300.0 * 2.75 * 28
        assert abs(n - expect) < 3.0 * math.sqrt(expect)

    def test_zero_days_writes_header_only(self, tmp_path):
        path = synth_generate(
            model_from_name("Exp.Const"), [10.0], days=0, seed=0,
            out_path=tmp_path / "empty.csv",
        )
        lines = path.read_text().splitlines()
        assert len(lines) == 1
        assert lines[0].startswith("delivery_date,product,timestamp")

    def test_refit_recovers_rate(self, tmp_path):
        from arrivalsim.fitting import fit
        from arrivalsim.ingest import merge_samples

        path = synth_generate(
            model_from_name("Exp.Const"), [120.0], days=6, seed=9,
            out_path=tmp_path / "r.csv", products=(12,), gen_start=-4.25,
        )
        cells = build_series(parse_csv(path))
        samples = [slice_window(s, -3.25) for s in cells.values()]
        result = fit(model_from_name("Exp.Const"), merge_samples(samples))
        assert result.theta[0] == pytest.approx(120.0, rel=0.05)

    def test_infeasible_theta_rejected(self, tmp_path):
        with pytest.raises(ParameterError):
            synth_generate(
                model_from_name("Exp.Lin"), [1.0, 1.0], days=1, seed=0,
                out_path=tmp_path / "x.csv", gen_start=-4.25,
            )

    def test_deterministic(self, tmp_path):
        kw = dict(days=2, seed=4, products=(5,), gen_start=-2.0)
        a = synth_generate(model_from_name("Exp.Const"), [50.0],
                           out_path=tmp_path / "a.csv", **kw)
        b = synth_generate(model_from_name("Exp.Const"), [50.0],
                           out_path=tmp_path / "b.csv", **kw)
        assert a.read_bytes() == b.read_bytes()


class TestRunConfig:
    def test_json_roundtrip_and_overrides(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({
            "input": "raw.csv",
            "window_days": 5,
            "models": ["Exp.Const"],
            "products": [1, 2],
            "trading_begin": {"1": -9.0, "2": -10.0},
            "fit": {"restarts": 1},
        }))
        cfg = RunConfig.from_json(cfg_path)
        assert cfg.window_days == 5
        assert cfg.trading_begin == {1: -9.0, 2: -10.0}
        assert cfg.fit.restarts == 1
        over = cfg.with_overrides({"seed": "7", "models": '["Exp.Lin"]',
                                   "fit.restarts": "2"})
        assert over.seed == 7
        assert over.models == ("Exp.Lin",)
        assert over.fit.restarts == 2

    def test_models_all(self):
        cfg = RunConfig.from_dict({"input": "x.csv", "models": "all"})
        assert len(cfg.models) == 37

    def test_unknown_key_rejected(self):
        with pytest.raises(ParameterError):
            RunConfig.from_dict({"input": "x.csv", "bogus": 1})

    def test_validation(self):
        with pytest.raises(ParameterError):
            tiny_config("x.csv", None, out_days=0).validate()
        with pytest.raises(ParameterError):
            tiny_config("x.csv", None, t1=-20.0).validate()  # before trading begin
        with pytest.raises(ParameterError):
            tiny_config("x.csv", None, models=("Nope.Const",)).validate()

    def test_cell_seed_stable(self):
        a = cell_seed(1, "Exp.Const", date(2017, 10, 1), 12)
        assert a == cell_seed(1, "Exp.Const", date(2017, 10, 1), 12)
        assert a != cell_seed(2, "Exp.Const", date(2017, 10, 1), 12)
        assert a != cell_seed(1, "Exp.Lin", date(2017, 10, 1), 12)


class TestRun:
    def test_minimal_run(self, tmp_path):
        path = synth_generate(
            model_from_name("Exp.Const"), [60.0], days=2, seed=1,
            out_path=tmp_path / "two.csv", products=(5,), gen_start=-4.25,
        )
        cfg = tiny_config(
            path, tmp_path / "out", window_days=1, out_days=1, trajectories=1,
            products=(5,), models=("Exp.Const",), start_date="2017-09-04",
            dump_trajectories=True,
        )
        report = run(cfg)
        assert report.missing.sum() == 0
        assert report.crps.shape == (1, 1)
        fit_file = tmp_path / "out" / "Exp.Const" / "5" / "2017-09-04" / "fit.json"
        assert fit_file.exists()
        dump = fit_file.parent / "trajectories.csv"
        assert dump.exists()
        indices = {
            line.split(",")[0] for line in dump.read_text().splitlines()[1:]
        }
        assert indices == {"0"}  # exactly one trajectory

    def test_rerun_byte_identical(self, synth_csv, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        run(tiny_config(synth_csv, out_a))
        run(tiny_config(synth_csv, out_b))
        assert tree_bytes(out_a) == tree_bytes(out_b)

    def test_parallelism_invariant(self, synth_csv, tmp_path):
        out_a, out_b = tmp_path / "p1", tmp_path / "p4"
        run(tiny_config(synth_csv, out_a, parallelism=1))
        run(tiny_config(synth_csv, out_b, parallelism=4))
        assert tree_bytes(out_a) == tree_bytes(out_b)

    def test_resumable_without_refitting(self, synth_csv, tmp_path):
        out = tmp_path / "out"
        cfg = tiny_config(synth_csv, out)
        run(cfg)
        before = tree_bytes(out)
        fit_stats = {p: p.stat().st_mtime_ns for p in out.rglob("fit.json")}
        assert fit_stats
        for report_csv in out.glob("*.csv"):
            report_csv.unlink()
        run(cfg)
        assert tree_bytes(out) == before
        for p, mtime in fit_stats.items():
            assert p.stat().st_mtime_ns == mtime  # loaded, not refit

    def test_split_products_merge_to_single_run(self, synth_csv, tmp_path):
        full = run(tiny_config(synth_csv, None))
        part_a = run(tiny_config(synth_csv, None, products=(5,)))
        part_b = run(tiny_config(synth_csv, None, products=(6,)))
        merged = merge_reports([part_a, part_b])
        assert merged.products == full.products
        np.testing.assert_array_equal(merged.crps, full.crps)
        np.testing.assert_array_equal(merged.daily_crps, full.daily_crps)

    def test_emitted_table_satisfies_pinball_identity(self, synth_csv, tmp_path):
        out = tmp_path / "out"
        cfg = tiny_config(synth_csv, out, tau_grid_size=9)
        run(cfg)
        main = (out / "main_table.csv").read_text().splitlines()
        pb = (out / "pb_by_tau.csv").read_text().splitlines()
        mae = {
            row.split(",")[0]: float(row.split(",")[2]) for row in main[1:]
        }
        header = pb[0].split(",")
        mid = [row for row in pb[1:] if float(row.split(",")[0]) == 0.5][0].split(",")
        for i, model in enumerate(header[1:], start=1):
            assert 2.0 * float(mid[i]) == pytest.approx(mae[model], abs=1e-9)

    def test_insufficient_history_marks_missing(self, synth_csv, tmp_path):
        cfg = tiny_config(
            synth_csv, None, window_days=5, start_date="2017-09-04", out_days=1,
            max_gap_days=0,
        )
        report = run(cfg)
        assert report.missing.sum() == report.missing.size  # every cell skipped
        assert np.isnan(report.crps).all()

    def test_missing_observed_day_skipped(self, synth_csv, tmp_path):
        cfg = tiny_config(synth_csv, None, start_date="2017-09-14", out_days=1)
        report = run(cfg)
        assert report.missing.sum() == report.missing.size
