"""End-to-end runs, artifact layout, and the command-line surface."""

import numpy as np
import pytest

from dropreg import cli, runner
from dropreg.config import load_config
from dropreg.data import read_delimited
from dropreg.errors import UsageError
from dropreg.evaluation import classify_counts, pavpu
from dropreg.regulation import read_trace_csv
from dropreg.uncertainty import decompose, read_mc_dump

TINY = """
method = {method}
seed = {seed}
dataset.source = blobs
dataset.per_class = 40
dataset.spread = 0.8
dataset.n_train = 40
dataset.n_val = 20
dataset.n_test = 20
network.hidden = 8
optimizer.lr = 0.1
optimizer.batch_size = 20
optimizer.epochs = 6
{extra}mc.samples = 8
eval.grid = 10
"""


def tiny_cfg(tmp_path, method="regulation", seed=3, extra="", name="tiny.cfg"):
    if method == "regulation" and not extra:
        extra = "method.kp = 5\nmethod.ti = 1000\n"
    path = tmp_path / name
    path.write_text(TINY.format(method=method, seed=seed, extra=extra))
    return path


def read_report(path):
    out = {}
    for line in path.read_text().splitlines():
        key, _, value = line.partition(" = ")
        out[key] = value
    return out


class TestRun:
    def test_artifacts_written(self, tmp_path):
        rep = runner.run(tiny_cfg(tmp_path), out_dir=tmp_path / "out", quiet=True)
        for name in runner.RUN_FILES:
            assert (tmp_path / "out" / name).is_file(), name
        assert rep.trace.best_epoch >= 1
        assert 0.0 <= rep.pavpu_mean <= 1.0

    def test_report_recomputable_from_artifacts(self, tmp_path):
        out = tmp_path / "out"
        runner.run(tiny_cfg(tmp_path), out_dir=out, quiet=True)
        report = read_report(out / "report.txt")
        mc = read_mc_dump(out / "mc_dump.csv")
        test_ds = read_delimited(out / "test_data.csv", 2)
        unc = getattr(decompose(mc), report["uncertainty_measure"])
        thr = float(np.mean(unc))
        counts = classify_counts(mc.mean_probs, test_ds.labels, unc, thr)
        assert repr(thr) == report["mean_uncertainty_threshold"]
        assert repr(pavpu(counts)) == report["pavpu_at_mean"]

    def test_rerun_byte_identical(self, tmp_path):
        cfg = tiny_cfg(tmp_path)
        runner.run(cfg, out_dir=tmp_path / "a", quiet=True)
        runner.run(cfg, out_dir=tmp_path / "b", quiet=True)
        for name in ("trace.csv", "sweep.csv", "mc_dump.csv", "counts.csv"):
            assert (tmp_path / "a" / name).read_bytes() == \
                   (tmp_path / "b" / name).read_bytes(), name

    def test_deterministic_method_has_zero_epistemic(self, tmp_path):
        out = tmp_path / "det"
        rep = runner.run(tiny_cfg(tmp_path, method="deterministic"), out_dir=out,
                         quiet=True)
        assert rep.measure == "aleatoric"
        mc = read_mc_dump(out / "mc_dump.csv")
        assert mc.sample_count == 1
        assert np.all(decompose(mc).epistemic == 0.0)

    def test_regulation_kp0_matches_fixed_p0(self, tmp_path):
        reg_cfg = tiny_cfg(tmp_path, method="regulation",
                           extra="method.kp = 0\nmethod.ti = 1000\n",
                           name="reg0.cfg")
        fix_cfg = tiny_cfg(tmp_path, method="mc_fixed",
                           extra="method.p_fixed = 0\n", name="fix0.cfg")
        a = runner.run(reg_cfg, out_dir=tmp_path / "ra", quiet=True)
        b = runner.run(fix_cfg, out_dir=tmp_path / "rb", quiet=True)
        assert a.test_accuracy == b.test_accuracy
        assert (tmp_path / "ra" / "trace.csv").read_bytes() == \
               (tmp_path / "rb" / "trace.csv").read_bytes()

    def test_trace_echoes_controller_outputs(self, tmp_path):
        out = tmp_path / "out"
        rep = runner.run(tiny_cfg(tmp_path), out_dir=out, quiet=True)
        back = read_trace_csv(out / "trace.csv")
        assert back.best_epoch == rep.trace.best_epoch
        assert len(back.records) == len(rep.trace.records)


class TestCompare:
    def test_two_methods_tabulated(self, tmp_path, capsys):
        a = tiny_cfg(tmp_path, method="deterministic", name="det.cfg")
        b = tiny_cfg(tmp_path, method="regulation", name="reg.cfg")
        rows, failures = runner.compare([a, b], out_dir=tmp_path / "cmp",
                                        quiet=True)
        assert not failures
        assert {r["method"] for r in rows} == {"deterministic", "regulation"}
        assert any(r["best_accuracy"] for r in rows)
        table = (tmp_path / "cmp" / "comparison.csv").read_text().splitlines()
        assert table[0] == "config,method,accuracy,pavpu_at_mean,best_accuracy,best_pavpu"
        assert len(table) == 3

    def test_identical_configs_identical_rows(self, tmp_path):
        a = tiny_cfg(tmp_path, name="one.cfg")
        b = tiny_cfg(tmp_path, name="two.cfg")
        rows, _ = runner.compare([a, b], out_dir=tmp_path / "cmp", quiet=True)
        assert rows[0]["accuracy"] == rows[1]["accuracy"]
        assert rows[0]["pavpu"] == rows[1]["pavpu"]

    def test_failures_noted_and_completed_runs_kept(self, tmp_path):
        good = tiny_cfg(tmp_path, name="good.cfg")
        bad = tmp_path / "bad.cfg"
        bad.write_text("method = bogus\n")
        other = tiny_cfg(tmp_path, method="deterministic", name="other.cfg")
        rows, failures = runner.compare([good, bad, other],
                                        out_dir=tmp_path / "cmp", quiet=True)
        assert len(rows) == 2
        assert len(failures) == 1
        assert "bad.cfg" in failures[0][0]

    def test_fewer_than_two_rejected(self, tmp_path):
        with pytest.raises(UsageError):
            runner.compare([tiny_cfg(tmp_path)], quiet=True)


class TestKpSweep:
    def test_zero_gain_gives_flat_trace(self, tmp_path):
        base = tiny_cfg(tmp_path, method="deterministic", name="base.cfg")
        results = runner.kp_sweep(base, [0.0], [1.0], out_dir=tmp_path / "sweep",
                                  quiet=True)
        assert len(results) == 1
        kp, frac, rep = results[0]
        assert all(r.p == 0.0 for r in rep.trace.records)
        manifest = (tmp_path / "sweep" / "kp_sweep.csv").read_text().splitlines()
        assert manifest[0] == "kp,fraction,run_dir,best_epoch,final_p"
        assert len(manifest) == 2

    def test_fraction_shrinks_train_split(self, tmp_path):
        base = tiny_cfg(tmp_path, name="base.cfg")
        results = runner.kp_sweep(base, [5.0], [0.5], out_dir=tmp_path / "s2",
                                  quiet=True)
        _, _, rep = results[0]
        assert rep.config.fraction == 0.5

    def test_empty_lists_rejected(self, tmp_path):
        with pytest.raises(UsageError):
            runner.kp_sweep(tiny_cfg(tmp_path), [], [1.0], quiet=True)


class TestCli:
    def test_run_exit_zero(self, tmp_path):
        cfg = tiny_cfg(tmp_path)
        assert cli.main(["run", str(cfg), "--out-dir", str(tmp_path / "o"),
                         "--quiet"]) == 0

    def test_missing_config_exit_two(self, tmp_path, capsys):
        assert cli.main(["run", str(tmp_path / "absent.cfg")]) == 2
        assert "absent.cfg" in capsys.readouterr().err

    def test_invalid_config_exit_two_lists_problems(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("method = bogus\noptimizer.lr = -2\n")
        assert cli.main(["run", str(bad)]) == 2
        err = capsys.readouterr().err
        assert "method" in err and "optimizer.lr" in err

    def test_compare_exit_codes(self, tmp_path):
        a = tiny_cfg(tmp_path, method="deterministic", name="a.cfg")
        b = tiny_cfg(tmp_path, name="b.cfg")
        assert cli.main(["compare", str(a), str(b), "--out-dir",
                         str(tmp_path / "c"), "--quiet"]) == 0
        bad = tmp_path / "bad.cfg"
        bad.write_text("method = bogus\n")
        assert cli.main(["compare", str(a), str(bad), "--out-dir",
                         str(tmp_path / "c2"), "--quiet"]) == 1

    def test_kp_sweep_cli(self, tmp_path):
        base = tiny_cfg(tmp_path, name="base.cfg")
        assert cli.main(["kp-sweep", str(base), "--kp", "0,2", "--fraction",
                         "1.0", "--out-dir", str(tmp_path / "ks"),
                         "--quiet"]) == 0
        assert (tmp_path / "ks" / "kp_sweep.csv").is_file()

    def test_eval_cli(self, tmp_path, capsys):
        cfg = tiny_cfg(tmp_path)
        out = tmp_path / "o"
        assert cli.main(["run", str(cfg), "--out-dir", str(out), "--quiet"]) == 0
        code = cli.main(["eval", str(out / "checkpoint.ckpt"),
                         str(out / "test_data.csv"), "--k", "4"])
        assert code == 0
        stdout = capsys.readouterr().out
        assert "pavpu_at_mean = " in stdout
        assert "mc_samples = 4" in stdout

    def test_seed_override_changes_run(self, tmp_path):
        cfg = tiny_cfg(tmp_path)
        runner.run(cfg, out_dir=tmp_path / "s3", quiet=True)
        runner.run(cfg, seed=4, out_dir=tmp_path / "s4", quiet=True)
        a = (tmp_path / "s3" / "trace.csv").read_text()
        b = (tmp_path / "s4" / "trace.csv").read_text()
        assert a != b
