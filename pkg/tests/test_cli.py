import csv
import json

from click.testing import CliRunner

from artifact.cli import load_config, main, ConfigError

import pytest

SMALL = """[grid]
T = 1.0
N = 3
[experiment]
pairs = 10
n_max = 3
count = 5
levels = 2,3
"""


def run(args, tmp_path, cfg=SMALL):
    path = tmp_path / "c.ini"
    path.write_text(cfg)
    return CliRunner().invoke(main, list(args) + ["--config", str(path)])


def test_car_check_passes(tmp_path):
    out = tmp_path / "run"
    res = run(["car-check", "--out", str(out)], tmp_path)
    assert res.exit_code == 0, res.output
    man = json.loads((out / "manifest.json").read_text())
    assert man["subcommands"] == ["car-check"]
    lines = (out / "results.csv").read_text().splitlines()
    assert lines[0] == "# artifact-results v1"
    assert lines[1] == "name,n,N,seed,abs_error,rel_error,order,pass"


def test_bad_key_exits_2(tmp_path):
    res = run(["isometry"], tmp_path, "[grid]\nNN = 3\n")
    assert res.exit_code == 2
    assert "grid.NN" in res.output


def test_bad_value_and_preset(tmp_path):
    with pytest.raises(ConfigError) as info:
        load_config(text="[grid]\nN = three\n")
    assert info.value.key == "grid.N"
    with pytest.raises(ConfigError) as info:
        load_config(text="[data]\npreset = galaxy\n")
    assert info.value.key == "data.preset"
    with pytest.raises(ConfigError) as info:
        load_config(text="[grid]\nN = 3\nn_modes = 4\n")
    assert info.value.key == "grid.n_modes"
    cfg = load_config(text="[grid]\nN = 3\nn_modes = 4\ndecouple = true\n")
    assert cfg.warnings


def test_report_empty_and_missing_manifest(tmp_path):
    res = CliRunner().invoke(main, ["report", str(tmp_path)])
    assert res.exit_code == 0 and "no runs" in res.output
    d = tmp_path / "orphan"
    d.mkdir()
    (d / "results.csv").write_text("# artifact-results v1\nname,n,N,seed,abs_error,rel_error,order,pass\n")
    res = CliRunner().invoke(main, ["report", str(tmp_path)])
    assert res.exit_code == 2


def test_determinism_and_dedup(tmp_path):
    for name in ("a", "b"):
        assert run(["isometry", "--out", str(tmp_path / name), "--seed", "5"], tmp_path).exit_code == 0
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()
    res = CliRunner().invoke(main, ["report", str(tmp_path)])
    assert "duplicate rows dropped" in res.output and " 3 duplicate" in res.output


def test_galerkin_monotone_recomputed(tmp_path):
    out = tmp_path / "g"
    res = run(["galerkin-sweep", "--out", str(out)], tmp_path)
    assert res.exit_code == 0, res.output
    path = out / "results.csv"
    lines = path.read_text().splitlines()
    rows = list(csv.DictReader(lines[1:]))
    # break monotonicity in the stored errors: the report must notice
    first = next(r for r in rows if r["name"] == "galerkin_rank")
    first["abs_error"] = "0.0"
    with open(path, "w", newline="") as fh:
        fh.write(lines[0] + "\n")
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    res = CliRunner().invoke(main, ["report", str(out)])
    assert res.exit_code == 1
    assert "FAIL" in res.output and "galerkin_monotone" in res.output


def test_identity_failure_exit_code(tmp_path):
    cfg = "[grid]\nN = 3\n[experiment]\nlevels = 2,3\nprobes = 2\n"
    res = run(["relaxed-verify", "--out", str(tmp_path / "r")], tmp_path, cfg)
    assert res.exit_code == 1


def test_inline_comments_are_ignored():
    cfg = load_config(text="[grid]\nN = 3   ; steps\nn_modes = 3\n[data]\npreset = scalar # benchmark\n")
    assert cfg.N == 3 and cfg.preset == "scalar"
