import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from mpsim import kernels
from mpsim.environment import read_metrics_csv
from mpsim.harness import heavy
from mpsim.harness.cli import main
from mpsim.harness.config import ConfigError, config_from_dict, load_config, save_config
from mpsim.harness.experiments import benchmark, l1_distance, run_scenario, sensitivity_sweep, transfer_run

ROOT = Path(__file__).resolve().parents[1]
SMOKE = ROOT / "configs" / "smoke.yaml"


def _tiny(**changes):
    cfg = load_config(SMOKE)
    return cfg.replace(**changes) if changes else cfg


def test_shipped_configs_load():
    for p in sorted((ROOT / "configs").rglob("*.yaml")):
        load_config(p)


def test_config_round_trip(tmp_path):
    cfg = _tiny(checkpoint_episodes=[1], seeds=[0, 2])
    save_config(cfg, tmp_path / "c.yaml")
    assert load_config(tmp_path / "c.yaml") == cfg


@pytest.mark.parametrize("data,match", [
    ({"episodes": 1, "colour": "red"}, "unknown top-level"),
    ({"disease": {"beta": 1.0, "gamma": 2}}, "disease.*unknown"),
    ({"policy": {"lockdown": True}}, "policy.*unknown"),
    ({"policy": {"quarantine": "total"}}, "policy"),
    ({"population": {}}, "exactly one"),
    ({"fixed_policy": "cautious"}, "fixed_policy"),
    ({"version": 7}, "version"),
    ({"seeds": []}, "seed"),
])
def test_config_errors(data, match):
    with pytest.raises(ConfigError, match=match):
        config_from_dict(data)


def test_smoke_run_outputs(tmp_path):
    rep = run_scenario(_tiny(), out=tmp_path / "run")
    m = read_metrics_csv(tmp_path / "run" / "seed0" / "episode001.csv")
    assert len(m["day"]) == 80 and list(m["day"]) == list(range(80))
    assert (np.diff(m["cum_cases"]) >= 0).all()
    summ = json.loads((tmp_path / "run" / "summary.json").read_text())
    assert summ["mean_total_cases"] == rep.mean_total == m["cum_cases"][-1]
    assert (tmp_path / "run" / "seed0" / "checkpoint").is_dir()
    assert load_config(tmp_path / "run" / "config.yaml") == _tiny()


def _csvs(run):
    return {p.relative_to(run).as_posix(): p.read_bytes() for p in sorted(Path(run).rglob("*.csv"))}


def test_runs_byte_identical_across_runs_and_threads(tmp_path):
    cfg = _tiny(episodes=2, seeds=[0, 1], average_last=2)
    a = _csvs(run_scenario(cfg, out=tmp_path / "a").output)
    b = _csvs(run_scenario(cfg, out=tmp_path / "b").output)
    kernels.set_threads(4)
    try:
        c = _csvs(run_scenario(cfg, out=tmp_path / "c").output)
    finally:
        kernels.set_threads(1)
    assert a and a == b == c


def test_seeds_differ(tmp_path):
    rep = run_scenario(_tiny(episodes=1, seeds=[0, 1]), out=tmp_path)
    a = (tmp_path / "seed0" / "episode001.csv").read_bytes()
    b = (tmp_path / "seed1" / "episode001.csv").read_bytes()
    assert a != b and set(rep.totals) == {"0", "1"}


def test_single_value_sweep(tmp_path):
    verdict = sensitivity_sweep(_tiny(), "beta", [15.8], out=tmp_path)
    assert verdict["values"] == [15.8] and len(verdict["mean_total_cases"]) == 1
    assert verdict["monotone_increasing"]  # vacuous for a single point
    assert (tmp_path / "sweep.csv").read_text().startswith("day,beta=15.8")
    with pytest.raises(ConfigError):
        sensitivity_sweep(_tiny(), "gamma", [1.0], out=tmp_path)


def test_sweep_rejects_non_positive_beta(tmp_path):
    with pytest.raises(ConfigError, match="beta"):
        sensitivity_sweep(_tiny(), "beta", [0.0], out=tmp_path)


def test_transfer_zero_episodes_is_evaluation(tmp_path):
    run_scenario(_tiny(), out=tmp_path / "base")
    before = (tmp_path / "base" / "seed0" / "checkpoint").stat().st_mtime_ns
    res = transfer_run(tmp_path / "base", _tiny(), 0, out=tmp_path / "t")
    assert "scratch" not in res and res["finetune"]["episodes"] == 0
    assert (tmp_path / "t" / "finetune" / "seed0" / "episode001.csv").exists()
    assert (tmp_path / "base" / "seed0" / "checkpoint").stat().st_mtime_ns == before


def test_transfer_dimension_mismatch(tmp_path):
    run_scenario(_tiny(), out=tmp_path / "base")
    with_id = _tiny().with_section("policy", disclosure=True)
    with pytest.raises(ValueError, match="disclosure|features|dimension"):
        transfer_run(tmp_path / "base", with_id, 1, out=tmp_path / "t")


def test_transfer_missing_checkpoint(tmp_path):
    with pytest.raises(ConfigError, match="no checkpoint"):
        transfer_run(tmp_path / "nothing", _tiny(), 1, out=tmp_path / "t")


def test_continuation_equals_longer_run(tmp_path):
    """Two episodes then one fine-tune episode reproduce a three-episode run of the same config."""
    cfg = _tiny(episodes=3)
    full = run_scenario(cfg, out=tmp_path / "full")
    run_scenario(_tiny(episodes=2), out=tmp_path / "first")
    cont = run_scenario(_tiny(episodes=1), init_from=tmp_path / "first", out=tmp_path / "cont")
    assert cont.totals["0"][-1] == full.totals["0"][-1]


def test_l1_distance_window():
    a = np.zeros(80)
    b = np.zeros(80)
    b[:20] = 100.0
    b[20:80] = 1.0
    assert l1_distance(a, b) == 60.0


def test_benchmark_small():
    rows = benchmark([1000], days=2)
    assert rows[0]["agents"] == 1000 and rows[0]["mean_step_seconds"] < 1.0
    assert rows[0]["backend"] == kernels.get_backend().NAME


# -- command line -------------------------------------------------------------------------

def test_cli_synth_and_train(tmp_path, capsys):
    assert main(["synth-pop", "--agents", "150", "--seed", "4", "--out", str(tmp_path / "p.txt")]) == 0
    assert json.loads(capsys.readouterr().out)["agents"] == 150
    cfg = _tiny().replace(population={"file": str(tmp_path / "p.txt")})
    save_config(cfg, tmp_path / "c.yaml")
    assert main(["train", "--config", str(tmp_path / "c.yaml"), "--out", str(tmp_path / "run")]) == 0
    assert json.loads(capsys.readouterr().out)["output"] == str(tmp_path / "run")
    assert main(["eval", "--config", str(tmp_path / "c.yaml"), "--checkpoint", str(tmp_path / "run"),
                 "--out", str(tmp_path / "ev")]) == 0
    assert (tmp_path / "ev" / "seed0" / "episode001.csv").exists()
    assert main(["train", "--config", str(tmp_path / "c.yaml"), "--init-from", str(tmp_path / "run"),
                 "--baseline", "--out", str(tmp_path / "tr")]) == 0
    assert set(json.loads(capsys.readouterr().out.splitlines()[-1])) == {"finetune", "scratch"}


def test_cli_sweep_and_bench(tmp_path, capsys):
    assert main(["sweep", "--config", str(SMOKE), "--param", "r_mask", "--values", "-0.1", "-0.3",
                 "--out", str(tmp_path)]) == 0
    assert json.loads(capsys.readouterr().out)["param"] == "r_mask"
    assert main(["bench", "--agents", "300", "--days", "1", "--backend", "python"]) == 0
    assert json.loads(capsys.readouterr().out)[0]["backend"] == "python"


def test_cli_errors(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"episodes": 1, "colour": "red"}))
    assert main(["train", "--config", str(bad)]) == 2
    assert "unknown" in capsys.readouterr().err
    assert main(["train", "--config", str(tmp_path / "missing.yaml")]) == 2


# -- campaign driver ----------------------------------------------------------------------

def test_campaign_driver_tiny(tmp_path, monkeypatch):
    monkeypatch.setattr(heavy, "TRANSFER_FROM", 1)
    monkeypatch.setattr(heavy, "TRANSFER_EPISODES", 2)
    cdir = tmp_path / "configs"
    cdir.mkdir()
    base = _tiny(episodes=2, average_last=1)
    save_config(base.replace(checkpoint_episodes=[1], name="none"), cdir / "none.yaml")
    save_config(base.replace(name="strong"), cdir / "strong.yaml")
    save_config(base.replace(fixed_policy="risky", name="beta"), cdir / "beta_risky.yaml")
    res = tmp_path / "results"
    for job in ("beta", "none", "strong", "transfer"):
        heavy.run_job(job, res, config_dir=cdir, seeds=(0,))
    stamp = (res / "none" / "seed0" / "summary.json").stat().st_mtime_ns
    heavy.run_job("none", res, config_dir=cdir, seeds=(0,))  # resumable: finished seeds are skipped
    assert (res / "none" / "seed0" / "summary.json").stat().st_mtime_ns == stamp
    tot = heavy.job_totals(res, "beta", sub="x1.0", seeds=(0,))
    assert tot[0]["episodes"] == 2 and tot[0]["agents"] == 100
    dist = heavy.transfer_distances(res, seeds=(0,), window=1)
    assert dist[0]["reference_episodes"] == 2
    assert dist[0]["scratch20_l1"] == 0.0  # with a 2-episode reference the short run is the reference
    assert dist[0]["finetune_l1"] >= 0.0
    assert heavy.job_totals(res, "id_on", seeds=(0,)) == {}
