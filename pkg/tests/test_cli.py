import csv
import json

import numpy as np
import pytest

from symflow import cli
from symflow.errors import ConfigError, IncompatibleData, MissingArtifacts

PERTURBED_F = "1+0.05*cos(pi*r)"


def config(**over):
    obj = {
        "space": "sphere(2)",
        "solver": {"N": 16, "T_end": 0.3, "snapshot_dt": 0.01},
        "init": {"h": "1", "f": ["1"]},
        "bc": "totally_geodesic",
    }
    obj.update(over)
    return obj


def write(path, obj):
    path.write_text(json.dumps(obj))
    return path


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


@pytest.fixture(scope="module")
def shrinker_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("shrinker")
    cfg = cli.parse_config(config(pipeline={"gauge": True, "perelman": True}))
    return out, cli.run(cfg, out)


# --- config -----------------------------------------------------------------

def test_minimal_config_is_valid(tmp_path):
    cfg = cli.load_config(write(tmp_path / "c.json", config()))
    assert cfg.space == "sphere(2)" and cfg.n == 1
    assert cfg.bc == "totally_geodesic"
    assert cfg.gauge and not cfg.perelman


@pytest.mark.parametrize("bc", [{"F": [["0"]]}, {"F": [["0", "0"], ["0", "0"]]}, {"F": "0"}])
def test_bc_arity_error_points_at_F(bc):
    with pytest.raises(ConfigError) as err:
        cli.parse_config(config(bc=bc))
    assert err.value.pointer == "/bc/F"


@pytest.mark.parametrize("obj, pointer", [
    (config(space=3), "/space"),
    (config(space="sphere(9)"), "/space"),
    (config(solver={"N": 4}), "/solver"),
    (config(solver={"dt": 0.1}), "/solver/dt"),
    (config(init={"h": "1", "f": ["1", "1"]}), "/init/f"),
    (config(init={"h": "1", "f": ["1+"]}), "/init/f/0"),
    (config(init={"h": "q", "f": ["1"]}), "/init/h"),
    (config(bc={"F": [["u1*"], ["0"]]}), "/bc/F/0/0"),
    (config(pipeline={"gauge": False, "perelman": True}), "/pipeline/perelman"),
    (config(output={"formats": ["csv", "xml"]}), "/output/formats/1"),
    (dict(config(), extra=1), "/extra"),
])
def test_config_error_pointers(obj, pointer):
    with pytest.raises(ConfigError) as err:
        cli.parse_config(obj)
    assert err.value.pointer == pointer


def test_incompatible_config_refused():
    with pytest.raises(IncompatibleData) as err:
        cli.parse_config(config(init={"h": "1", "f": ["1+r"]}))
    assert "1.000" in str(err.value)


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError):
        cli.load_config(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError):
        cli.load_config(tmp_path / "bad.json")


@pytest.mark.parametrize("obj", [
    config(),
    config(bc={"shen_lambda": "0.2+0.1*t"}, init={"h": "1", "f": ["exp(0.2*(r-0.5)^2)"]}),
    config(bc={"F": [["0"], ["0"]]}, pipeline={"gauge": True, "perelman": True},
           output={"directory": "x", "formats": ["json"]}),
])
def test_config_round_trip(tmp_path, obj):
    cfg = cli.parse_config(obj)
    again = cli.load_config(write(tmp_path / "c.json", cfg.to_json()))
    assert again == cfg


# --- run --------------------------------------------------------------------

def test_shrinker_run_matches_closed_form(shrinker_run):
    out, manifest = shrinker_run
    assert manifest.exit_code == 0 and manifest.status == "completed"
    data = read_csv(out / cli.TRAJECTORY_CSV)
    assert {"t", "r", "h", "f1", "phi", "psi", "ptilde", "p"} <= set(data)
    assert np.max(np.abs(data["f1"] ** 2 - (1 - 2 * data["t"]))) < 1e-4
    assert len(data["t"]) == 31 * 17


def test_manifest_inventory(shrinker_run):
    out, manifest = shrinker_run
    on_disk = json.loads((out / cli.MANIFEST_JSON).read_text())
    assert on_disk == json.loads(json.dumps(manifest.to_json()))
    for name, meta in on_disk["files"].items():
        assert (out / name).stat().st_size == meta["bytes"]
    assert on_disk["summary"]["monotone"] is True
    assert on_disk["grid"]["N"] == 16


def test_singular_run(tmp_path):
    cfg = cli.parse_config(config(solver={"N": 16, "T_end": 0.6}))
    manifest = cli.run(cfg, tmp_path)
    assert manifest.exit_code == 0
    assert manifest.status == "singular"
    assert abs(manifest.singular_time - 0.5) < 0.01
    assert (tmp_path / cli.TRAJECTORY_CSV).is_file()


def test_perelman_run_on_perturbed_data(tmp_path):
    cfg = cli.parse_config(config(
        solver={"N": 128, "T_end": 0.05, "snapshot_dt": 2e-3},
        init={"h": "1", "f": [PERTURBED_F]},
        pipeline={"gauge": True, "perelman": True}))
    manifest = cli.run(cfg, tmp_path)
    assert manifest.exit_code == 0
    mono = json.loads((tmp_path / cli.REPORT_JSON).read_text())["monotonicity"]
    F = np.array(mono["F_values"])
    assert np.all(np.diff(F) >= -np.array(mono["monotone_tol"]))
    # the 1e-6 bound is checked at N=256 in the acceptance suite
    assert np.max(np.abs(mono["frak_F"])) < 5e-6


def test_csv_deterministic(tmp_path):
    cfg = cli.parse_config(config(solver={"N": 16, "T_end": 0.1},
                                  init={"h": "1", "f": [PERTURBED_F]}))
    cli.run(cfg, tmp_path / "a")
    cli.run(cfg, tmp_path / "b")
    assert (tmp_path / "a" / cli.TRAJECTORY_CSV).read_bytes() == (tmp_path / "b" / cli.TRAJECTORY_CSV).read_bytes()


def test_csv_full_precision(shrinker_run):
    out, _ = shrinker_run
    lines = (out / cli.TRAJECTORY_CSV).read_text().splitlines()
    assert lines[0] == "t,r,h,f1,phi,psi,ptilde,p"
    row = [float(x) for x in lines[40].split(",")]
    assert float(f"{row[3]:.17g}") == row[3]


def test_numerical_failure_recorded(tmp_path):
    cfg = cli.parse_config(config(solver={"N": 16, "T_end": 0.1}, init={"h": "1", "f": ["1+0.9*cos(pi*r)"]}))
    manifest = cli.run(cfg, tmp_path)
    assert manifest.exit_code in (0, 4)
    if manifest.exit_code == 4:
        assert manifest.error


# --- export -----------------------------------------------------------------

def test_export_line_counts(shrinker_run):
    out, manifest = shrinker_run
    files = cli.export_plotdata(out)
    names = {p.name for p in files}
    assert names == {"min_f.dat", "residuals.dat", "F.dat", "dFdt.dat", "frak_F.dat"}
    K = manifest.grid["snapshots"]
    for p in files:
        assert len(np.loadtxt(p, ndmin=2)) == K


def test_export_F_sorted(shrinker_run):
    out, _ = shrinker_run
    cli.export_plotdata(out)
    F = np.loadtxt(out / cli.PLOT_DIR / "F.dat")[:, 1]
    assert np.all(np.diff(F) >= -1e-9)


def test_export_empty_dir(tmp_path):
    with pytest.raises(MissingArtifacts):
        cli.export_plotdata(tmp_path)


# --- entry point ------------------------------------------------------------

def test_main_exit_codes(tmp_path, capsys):
    good = write(tmp_path / "good.json", config(solver={"N": 16, "T_end": 0.05}))
    bad = write(tmp_path / "bad.json", config(bc={"F": [["0"]]}))
    incompatible = write(tmp_path / "inc.json", config(init={"h": "1", "f": ["1+r"]}))
    assert cli.main(["check", str(good)]) == cli.EXIT_OK
    assert cli.main(["check", str(bad)]) == cli.EXIT_CONFIG
    assert cli.main(["check", str(incompatible)]) == cli.EXIT_INCOMPATIBLE
    assert cli.main(["run", str(good), "--out", str(tmp_path / "run")]) == cli.EXIT_OK
    assert cli.main(["run", str(bad)]) == cli.EXIT_CONFIG
    assert cli.main(["export", str(tmp_path / "run")]) == cli.EXIT_OK
    assert cli.main(["export", str(tmp_path / "nothing")]) == cli.EXIT_CONFIG
    assert "/bc/F" in capsys.readouterr().err


def test_sweep(tmp_path, monkeypatch):
    monkeypatch.setenv("SYMFLOW_THREADS", "2")
    for k, T in enumerate((0.02, 0.04, 0.06)):
        write(tmp_path / f"cfg{k}.json", config(solver={"N": 16, "T_end": T}))
    code = cli.main(["run", "--sweep", str(tmp_path / "cfg*.json"), "--out", str(tmp_path / "out")])
    assert code == cli.EXIT_OK
    for k, T in enumerate((0.02, 0.04, 0.06)):
        m = json.loads((tmp_path / "out" / f"cfg{k}" / cli.MANIFEST_JSON).read_text())
        assert m["grid"]["T_end"] == T
