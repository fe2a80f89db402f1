import json
import math
import subprocess
import sys
from dataclasses import replace

import pytest

from dpbandit.bounds import lower_bound_rate
from dpbandit.cli import main
from dpbandit.config import ConfigError, content_hash, load_config, parse_config
from dpbandit.harness import cmd_run, cmd_sweep, read_csv
from dpbandit.lab import ConcentrationConfig, run_concentration, standard_panel
from dpbandit.policies import Kind

MINIMAL = {"env": "mu1", "policy": "dp_imed", "T": 100000, "eps": [0.25]}
SMALL = {"env": "mu2", "policies": ["dp_imed", "dp_se"], "T": 3000, "eps": [0.25, 1.0], "n_seeds": 3}


class TestConfig:
    def test_minimal_defaults(self):
        c = parse_config(MINIMAL)
        assert c.means == (0.75, 0.7, 0.7, 0.7, 0.7)
        assert (c.n0, c.alpha, c.n_seeds, c.base_seed) == (1, 2.0, 20, 0)
        assert c.policies[0].kind is Kind.DP_IMED
        assert c.eps == (0.25,)

    def test_baseline_defaults_filled(self):
        raw = {k: v for k, v in MINIMAL.items() if k != "policy"}
        c = parse_config({**raw, "policies": ["dp_se", {"kind": "adap_klucb"}]})
        assert c.policies[0].params == {"beta": 1e-5}
        assert c.policies[1].params == {"alpha": 3.1}

    def test_param_override(self):
        c = parse_config({**MINIMAL, "policy": {"kind": "adap_klucb", "params": {"alpha": 2.0}}})
        assert c.policies[0].params["alpha"] == 2.0

    def test_explicit_means_scalar_eps(self):
        c = parse_config({"means": [0.8, 0.1], "policy": "klucb", "horizon": 50, "eps": 1})
        assert c.env is None and c.means == (0.8, 0.1) and c.eps == (1.0,)

    @pytest.mark.parametrize("patch,field", [
        ({"alpha": 1.0}, "alpha"),
        ({"alpha": 0.5}, "alpha"),
        ({"env": "mu7"}, "env"),
        ({"eps": [0.25, -1]}, "eps[1]"),
        ({"eps": []}, "eps"),
        ({"T": 4}, "T"),
        ({"T": 10, "n0": 3}, "T"),
        ({"n_seeds": 0}, "n_seeds"),
        ({"n0": 1.5}, "n0"),
        ({"colour": "red"}, "colour"),
        ({"policy": "ucb1"}, "policy[0].kind"),
        ({"policy": {"kind": "dp_se", "params": []}}, "policy[0].params"),
    ])
    def test_rejects_with_field(self, patch, field):
        with pytest.raises(ConfigError) as err:
            parse_config({**MINIMAL, **patch})
        assert err.value.field == field

    def test_unknown_preset_lists_names(self):
        with pytest.raises(ConfigError, match="mu1, mu2, mu3, mu4"):
            parse_config({**MINIMAL, "env": "mu0"})

    def test_policy_path(self):
        with pytest.raises(ConfigError) as err:
            parse_config({**SMALL, "policies": ["dp_imed", {"kind": "nope"}]})
        assert err.value.field == "policies[1].kind"

    def test_load_errors(self, tmp_path):
        with pytest.raises(ConfigError, match="no such config"):
            load_config(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{\n  \"env\": mu1\n}")
        with pytest.raises(ConfigError, match="line 2"):
            load_config(bad)

    def test_hash_tracks_every_field(self):
        base = parse_config(SMALL)
        assert content_hash(base) == content_hash(parse_config(dict(SMALL)))
        variants = [
            replace(base, horizon=3001), replace(base, eps=(0.25,)), replace(base, n_seeds=4),
            replace(base, base_seed=1), replace(base, n0=2), replace(base, alpha=1.5),
            replace(base, checkpoints=50), replace(base, out="x"), replace(base, means=(0.75, 0.625, 0.5, 0.375, 0.2)),
            replace(base, policies=base.policies[:1]),
        ]
        hashes = {content_hash(v) for v in variants}
        assert content_hash(base) not in hashes
        assert len(hashes) == len(variants)


class TestRun:
    def test_files_and_manifest(self, tmp_path):
        cfg = parse_config(SMALL)
        files = cmd_run(cfg, tmp_path)
        names = sorted(p.name for p in files)
        assert names == ["dp_imed_eps0.25.csv", "dp_imed_eps1.0.csv", "dp_se_eps0.25.csv",
                         "dp_se_eps1.0.csv", "manifest.json"]
        header, rows = read_csv(tmp_path / "dp_imed_eps0.25.csv")
        assert header == ["t", "mean_regret", "std_regret"]
        assert rows[-1][0] == 3000
        m = json.loads((tmp_path / "manifest.json").read_text())
        assert m["seeds"] == [0, 1, 2]
        assert m["hash"] == content_hash(cfg)
        assert len(m["hash"]) == 40
        assert m["config"]["policies"][1] == {"kind": "dp_se", "params": {"beta": 1 / 3000}}

    def test_single_seed_zero_std(self, tmp_path):
        cfg = parse_config({**SMALL, "n_seeds": 1, "policies": ["dp_klucb"], "eps": 0.5})
        cmd_run(cfg, tmp_path)
        _, rows = read_csv(tmp_path / "dp_klucb_eps0.5.csv")
        assert all(r[2] == 0.0 for r in rows)

    def test_rerun_byte_identical(self, tmp_path):
        cfg = parse_config(SMALL)
        a = cmd_run(cfg, tmp_path / "a")
        b = cmd_run(cfg, tmp_path / "b", workers=2)
        for pa, pb in zip(a, b):
            assert pa.read_bytes() == pb.read_bytes()

    def test_csv_floats_round_trip(self, tmp_path):
        from dpbandit.environment import monte_carlo
        cfg = parse_config({**SMALL, "policies": ["dp_imed"], "eps": [0.25]})
        cmd_run(cfg, tmp_path)
        res = monte_carlo(cfg.policies[0], cfg.instance, cfg.horizon, 0.25, cfg.n_seeds)
        _, rows = read_csv(tmp_path / "dp_imed_eps0.25.csv")
        assert [r[1] for r in rows] == list(res.mean)
        assert [r[2] for r in rows] == list(res.std)


class TestSweep:
    def test_columns_and_bound(self, tmp_path):
        cfg = parse_config({"means": [0.8, 0.1, 0.1, 0.1, 0.1], "policy": "dp_imed", "T": 2000,
                            "eps": [0.1, 0.5, 1.0], "n_seeds": 2, "alpha": 1.1})
        files = cmd_sweep(cfg, tmp_path)
        assert [p.name for p in files] == ["sweep_dp_imed.csv", "manifest.json"]
        header, rows = read_csv(files[0])
        assert header == ["eps", "final_mean_regret", "final_std_regret", "lower_bound"]
        for row, eps in zip(rows, cfg.eps):
            assert row[0] == eps
            assert row[3] == lower_bound_rate(cfg.means, eps).lower_rate * math.log(2000)
        # the bound itself falls as eps grows
        assert rows[0][3] > rows[1][3] > rows[2][3]

    def test_single_point(self, tmp_path):
        cfg = parse_config({**SMALL, "policies": ["imed"], "eps": [0.5]})
        _, rows = read_csv(cmd_sweep(cfg, tmp_path)[0])
        assert len(rows) == 1

    def test_bound_ratio(self):
        means = [0.8, 0.1, 0.1, 0.1, 0.1]
        lo = lower_bound_rate(means, 1.0).lower_rate
        hi = lower_bound_rate(means, 0.05).lower_rate
        # deep in the high-privacy regime d_eps ~ eps * gap, so the rate scales like 1/eps
        assert hi / lo > 10


class TestConcentration:
    def test_at_mean(self):
        r = run_concentration(ConcentrationConfig(200, 5, 0.5, 1.0, 0.5, trials=10**5, seed=1))
        assert r.empirical == pytest.approx(0.5, abs=0.01)
        assert r.vacuous and r.passed

    def test_no_noise_far_tail(self):
        r = run_concentration(ConcentrationConfig(1000, 0, 0.5, 1.0, 0.6, trials=10**5))
        # exp(-1000 kl(0.6, 0.5)) ~ e^-20 makes any hit at 1e5 trials astronomically unlikely
        assert r.count == 0
        assert r.chernoff == pytest.approx(math.exp(-20.135513), rel=1e-6)
        assert r.analytic >= r.empirical
        # with zero hits the exact upper limit is about 5.3 / trials, far above the
        # 3.5e-7 bound, so the domination flag cannot be PASS at this resolution
        assert r.ci_high == pytest.approx(1 - 0.005 ** (1 / 10**5), rel=1e-9)
        assert r.ci_high > r.analytic and not r.passed

    def test_noisy_tail(self):
        r = run_concentration(ConcentrationConfig(1000, 5, 0.5, 1.0, 0.6, trials=10**5))
        assert r.tail == "upper" and r.passed

    def test_lower_tail(self):
        r = run_concentration(ConcentrationConfig(200, 3, 0.5, 0.5, 0.45, trials=10**5))
        assert r.tail == "lower"
        assert r.ci_low <= r.empirical <= r.ci_high
        assert r.passed

    def test_reproducible(self):
        cfg = ConcentrationConfig(200, 1, 0.5, 0.25, 0.55, trials=2 * 10**4, seed=4)
        assert run_concentration(cfg).to_dict() == run_concentration(cfg).to_dict()

    @pytest.mark.parametrize("kw", [{"trials": 999}, {"mu": 1.0}, {"mu": 0.0}, {"x": 1.5}, {"m": -1}, {"eps": 0.0}])
    def test_config_validation(self, kw):
        base = dict(n=100, m=1, mu=0.5, eps=1.0, x=0.6)
        with pytest.raises(ValueError):
            ConcentrationConfig(**{**base, **kw})

    def test_panel_shape(self):
        panel = standard_panel()
        assert len(panel) == 64
        assert {c.m for c in panel if c.n == 1000} == {0, 1, 5, 10}
        assert {c.m for c in panel if c.n == 200} == {0, 1, 5, 8}
        assert {c.x for c in panel} == {0.4, 0.45, 0.55, 0.6}


class TestCli:
    def test_bounds_stdout(self, capsys):
        assert main(["bounds", "--means", "0.8,0.1,0.1,0.1,0.1", "--eps-grid", "0.25:1:4"]) == 0
        out = capsys.readouterr().out
        body, table = out.split("\n\n")
        reports = json.loads(body)
        assert len(reports) == 4
        assert reports[0]["lower_rate"] == pytest.approx(16.49487299029528586, rel=1e-13)
        assert table.splitlines()[0] == "eps,lower_rate,upper_rate"

    def test_bounds_csv_file(self, tmp_path, capsys):
        out = tmp_path / "b.csv"
        assert main(["bounds", "--means", "0.75,0.7", "--eps-grid", "0.1:2:5", "--alpha", "1.5", "--csv", str(out)]) == 0
        header, rows = read_csv(out)
        assert header == ["eps", "lower_rate", "upper_rate"]
        assert all(r[2] == pytest.approx(1.5 * r[1]) for r in rows)

    def test_bad_eps_grid(self, capsys):
        with pytest.raises(SystemExit):
            main(["bounds", "--means", "0.5,0.4", "--eps-grid", "1:2"])

    def test_run_and_config_error(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({**SMALL, "policies": ["dp_imed"], "eps": 0.5, "n_seeds": 2}))
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        assert (tmp_path / "o" / "dp_imed_eps0.5.csv").exists()
        cfg.write_text(json.dumps({**SMALL, "alpha": 1.0}))
        assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert "alpha" in capsys.readouterr().err

    def test_concentration_flag(self, capsys):
        rc = main(["concentration", "--n", "200", "--m", "1", "--eps", "1", "--mu", "0.5",
                   "--x", "0.5", "--trials", "20000"])
        report = json.loads(capsys.readouterr().out)
        assert rc == 0 and report["flag"] == "PASS"

    def test_module_entry_point(self):
        out = subprocess.run([sys.executable, "-m", "dpbandit", "--help"], capture_output=True, text=True)
        assert out.returncode == 0
        assert "concentration" in out.stdout
