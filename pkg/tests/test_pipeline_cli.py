import json
from pathlib import Path

import numpy as np
import pytest

from rhem.cli import main
from rhem.events import load_events
from rhem.pipeline import ConfigError, RunConfig, read_config, run_pipeline, substream_seed

TOY_CSV = ("event_id,time,network,actors,citations\ne1,1,n,A;B,3\ne2,2,n,A;C,1\n"
            "e3,3,n,B;C,0\ne4,4,n,C;D;E;F;G,7\ne5,5,n,F;H;I,2\n")
CAT = "sub_rep:1-3, closure"


@pytest.fixture
def planted(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["synth", "--planted", "--events", "300", "-o", "planted.csv"]) == 0
    return tmp_path


def write_cfg(path, **kv):
    path.write_text("".join(f"{k} = {v}\n" for k, v in kv.items()))
    return path


def test_synth_planted_default(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["synth", "--planted", "-o", "p.csv"]) == 0
    store = load_events("p.csv")
    assert len(store) == 1000
    roster = (tmp_path / "p.roster.csv").read_text().strip().splitlines()
    assert len(roster) == 1 + 19


def test_synth_model(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["synth", "--model", "--theta", "0.5,1,-0.2", "--population", "8",
                 "--events", "40", "--pool-size", "15", "-o", "m.csv"]) == 0
    assert len(load_events("m.csv")) == 40


def test_staged_equals_one_shot(planted):
    write_cfg(planted / "run.cfg", events="planted.csv", roster="planted.roster.csv",
              catalog=CAT, output_dir="out")
    assert main(["run", "run.cfg"]) == 0
    assert main(["observe", "--events", "planted.csv", "--roster", "planted.roster.csv",
                 "--catalog", CAT, "-o", "obs.csv"]) == 0
    assert main(["fit-rhem", "obs.csv", "-o", "fit.json"]) == 0
    staged = json.loads((planted / "fit.json").read_text())
    oneshot = json.loads((planted / "out" / "rhem_planted.json").read_text())
    assert staged["coefficients"] == oneshot["coefficients"]
    assert staged["model"] == oneshot["model"]
    assert main(["gof", "obs.csv", "--fit", "fit.json", "-o", "pct.csv"]) == 0
    assert (planted / "pct.csv").read_bytes() == (planted / "out" / "percentiles.csv").read_bytes()


def test_rerun_is_byte_identical(planted):
    write_cfg(planted / "run.cfg", events="planted.csv", roster="planted.roster.csv",
              catalog=CAT, output_dir="out", samples="3")
    assert main(["run", "run.cfg"]) == 0
    first = {p.name: p.read_bytes() for p in (planted / "out").iterdir()}
    for p in (planted / "out").iterdir():
        p.unlink()
    assert main(["run", "run.cfg"]) == 0
    second = {p.name: p.read_bytes() for p in (planted / "out").iterdir()}
    assert first == second
    assert {"observations.csv", "manifest.json", "stability.tsv", "rhom_planted.json"} <= set(first)
    manifest = json.loads(first["manifest.json"])
    assert manifest["status"] == "complete" and manifest["exit_code"] == 0
    assert manifest["seeds"]["observe"] == substream_seed(0, "observe", 0)


def test_artifacts_reload(planted):
    from rhem.results import FitResult
    from rhem.sampling import ObservationMatrix
    write_cfg(planted / "run.cfg", events="planted.csv", roster="planted.roster.csv",
              catalog=CAT, output_dir="out")
    assert main(["run", "run.cfg"]) == 0
    obs = ObservationMatrix.read_csv(planted / "out" / "observations.csv")
    assert obs.names == ["sub_rep_1", "sub_rep_2", "sub_rep_3", "closure", "num_auth"]
    fit = FitResult.read_json(planted / "out" / "rhem_planted.json")
    assert fit.names == obs.names[:4]
    rhom = FitResult.read_json(planted / "out" / "rhom_planted.json")
    assert rhom.names[0] == "(intercept)" and "num_auth" in rhom.names


def test_samples_flag(planted):
    assert main(["fit-rhem", "--events", "planted.csv", "--roster", "planted.roster.csv",
                 "--catalog", CAT, "--samples", "4", "-o", "s.json"]) == 0
    assert len(list(planted.glob("s_sample*.json"))) == 4
    table = (planted / "s.stability.tsv").read_text().splitlines()
    assert len(table) == 1 + 4
    assert main(["fit-rhem", "--samples", "3"]) == 2


def test_fit_rhom_and_normalize_commands(planted):
    (planted / "c.csv").write_text(TOY_CSV)
    assert main(["normalize", "c.csv", "-o", "norm.csv", "--table", "t.csv"]) == 0
    assert [e.outcome for e in load_events("norm.csv")] == [0.0] * 5
    assert main(["ingest", "c.csv", "-o", "canon.csv"]) == 0
    assert main(["observe", "--events", "planted.csv", "--roster", "planted.roster.csv",
                 "--catalog", "sub_rep:1-2, closure, num_auth", "-o", "o.csv"]) == 0
    assert main(["fit-rhom", "o.csv", "-o", "r.json"]) == 0
    assert json.loads((planted / "r.json").read_text())["model"]["n_obs"] == 300


def test_config_order_zero_rejected(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    write_cfg(tmp_path / "bad.cfg", events="x.csv", catalog="sub_rep:0-2", output_dir="out")
    assert main(["run", "bad.cfg"]) == 2
    assert not (tmp_path / "out").exists()
    with pytest.raises(ConfigError):
        RunConfig(events="x.csv", half_life=-1)
    with pytest.raises(ConfigError, match="num_auth"):
        RunConfig(events="x.csv", catalog="closure, num_auth")


def test_config_unknown_key_and_paths(tmp_path):
    write_cfg(tmp_path / "c.cfg", events="x.csv", colour="red")
    with pytest.raises(ConfigError, match="unknown key"):
        read_config(tmp_path / "c.cfg")
    write_cfg(tmp_path / "d.cfg", events="x.csv", half_life="5", interactions="yes")
    cfg = read_config(tmp_path / "d.cfg", {"seed": 9})
    assert Path(cfg.events) == (tmp_path / "x.csv").resolve()
    assert cfg.half_life == 5 and cfg.interactions and cfg.seed == 9


def test_toy_reported_cleanly(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "toy.csv").write_text(TOY_CSV)
    write_cfg(tmp_path / "f.cfg", events="toy.csv", output_dir="out")
    code = main(["run", "f.cfg"])
    assert code == 4
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["status"] == "partial"
    assert any(k.startswith("fit-rhem") for k in manifest["failures"])
    for name in ("events.csv", "normalization.csv", "observations.csv"):
        assert (tmp_path / "out" / name).exists()


def test_missing_upstream_artifacts(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert main(["fit-rhem", "nothing.csv"]) == 3
    assert "nothing.csv" in capsys.readouterr().err
    assert main(["fit-rhom", "nothing.csv"]) == 3
    (tmp_path / "o.csv").write_text("stratum_id,hyperedge_actors,is_event,network,time,outcome\n")
    assert main(["gof", "o.csv", "--fit", "nofit.json", "-o", "p.csv"]) == 3
    assert main(["fit-rhem"]) == 3


def test_bad_event_data_exit_code(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "bad.csv").write_text("event_id,time,network,actors\ne1,x,n,A\n")
    assert main(["ingest", "bad.csv", "-o", "o.csv"]) == 3


def test_separated_data_numeric_exit(tmp_path, monkeypatch):
    # every event repeats the same pair among otherwise idle actors
    monkeypatch.chdir(tmp_path)
    rows = ["event_id,time,network,actors"] + [f"e{i},{i},n,A;B" for i in range(1, 40)]
    (tmp_path / "sep.csv").write_text("\n".join(rows) + "\n")
    (tmp_path / "r.csv").write_text("actor,network,entry_time\n" +
                                    "".join(f"{a},n,0\n" for a in "ABCDEFGH"))
    assert main(["observe", "--events", "sep.csv", "--roster", "r.csv", "--catalog",
                 "sub_rep:1-2", "-o", "o.csv"]) == 0
    assert main(["fit-rhem", "o.csv"]) == 4


def test_pipeline_api_returns_manifest(planted):
    cfg = RunConfig(events=str(planted / "planted.csv"), output_dir=str(planted / "api"),
                    catalog=CAT, roster=str(planted / "planted.roster.csv"))
    code, manifest = run_pipeline(cfg)
    assert code == 0
    assert np.isfinite(manifest["percentile_summary"]["median"])
