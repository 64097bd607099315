import json
import subprocess
import sys

import numpy as np
import pytest

from fbmsde import ConfigError
from fbmsde.cli import main
from fbmsde.configio import (
    experiment_config_from_mapping,
    limit_params_from_mapping,
    parse_config_text,
)

RATE_CFG = """\
# strong-error smoke configuration
drift = example2
x0 = 1.0 1.0
t_final = 1.0
hurst = 0.7
schemes = bem
meshes = 2^-4 2^-5
master_mesh = 2^-7
mc_paths = 4
seed = 5
"""

LIMIT_CFG = """\
drift = linear
linear_matrix = -1.0
x0 = 1.0
hurst = 0.7
t = 1.0
n_values = 8 16
mc_paths = 4
seed = 3
"""

STAB_CFG = """\
drift = example1
x0 = 5.0
t_final = 0.72
hurst = 0.6
schemes = em cn bem
meshes = 0.08
master_mesh = 0.0001
mc_paths = 1
seed = 0
"""


# --- config text parsing ------------------------------------------------------

def test_parse_config_text_strips_comments_and_blanks():
    mapping = parse_config_text("# header\n\na = 1\nb = two words  # trailing\n")
    assert mapping == {"a": "1", "b": "two words"}


def test_parse_config_text_rejects_malformed_lines():
    with pytest.raises(ConfigError) as err:
        parse_config_text("a = 1\nnot a pair\nanother stray\n")
    assert len(err.value.issues) == 2
    assert "line 2" in err.value.issues[0]


def test_experiment_mapping_parses_dyadic_and_defaults():
    cfg = experiment_config_from_mapping(parse_config_text(RATE_CFG))
    assert cfg.meshes == (2.0 ** -4, 2.0 ** -5)
    assert cfg.master_mesh == 2.0 ** -7
    assert cfg.schemes == ("bem",)
    assert cfg.sampler == "circulant"
    assert cfg.hurst_values == (0.7,)
    alt = experiment_config_from_mapping(
        parse_config_text(RATE_CFG.replace("2^-4", "2**-4")))
    assert alt.meshes == cfg.meshes


def test_experiment_mapping_parses_matrix_rows():
    text = RATE_CFG + "linear_matrix = 0.0 1.0; -1.0 0.0\n"
    cfg = experiment_config_from_mapping(parse_config_text(text))
    assert cfg.linear_matrix == ((0.0, 1.0), (-1.0, 0.0))


def test_experiment_mapping_collects_parse_issues():
    mapping = parse_config_text(
        "drift = example1\nx0 = what\nhurst = 0.7\nwrong_key = 1\n")
    with pytest.raises(ConfigError) as err:
        experiment_config_from_mapping(mapping)
    text = " | ".join(err.value.issues)
    assert "wrong_key" in text
    assert "x0" in text
    assert "t_final" in text        # missing required key
    assert len(err.value.issues) >= 3


def test_experiment_mapping_overrides_win():
    cfg = experiment_config_from_mapping(parse_config_text(RATE_CFG),
                                         overrides={"mc_paths": 99})
    assert cfg.mc_paths == 99


def test_limit_mapping_round_trip():
    params = limit_params_from_mapping(parse_config_text(LIMIT_CFG))
    assert params["n_values"] == (8, 16)
    assert params["t"] == 1.0
    assert params["linear_matrix"] == ((-1.0,),)
    with pytest.raises(ConfigError):
        limit_params_from_mapping(parse_config_text(LIMIT_CFG + "oops = 1\n"))


# --- fbm subcommand -------------------------------------------------------------

def test_fbm_writes_deterministic_csv(tmp_path, capsys):
    out1 = tmp_path / "a.csv"
    out2 = tmp_path / "b.csv"
    args = ["fbm", "--hurst", "0.7", "--steps", "16", "--t-final", "1.0",
            "--seed", "9"]
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    header = out1.read_text().splitlines()[0]
    assert header == "t,B1"
    meta = json.loads((tmp_path / "a.csv.meta.json").read_text())
    assert set(meta) == {"subcommand", "config", "seed", "version", "outputs"}
    assert meta["subcommand"] == "fbm"
    assert meta["seed"] == 9


def test_fbm_multi_coordinate_header(tmp_path):
    out = tmp_path / "c.csv"
    rc = main(["fbm", "--hurst", "0.6", "0.8", "--dim", "2", "--steps", "4",
               "--t-final", "1.0", "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "t,B1,B2"
    assert len(lines) == 6
    first = [float(tok) for tok in lines[1].split(",")]
    assert first == [0.0, 0.0, 0.0]


def test_fbm_rejects_bad_hurst(tmp_path, capsys):
    rc = main(["fbm", "--hurst", "1.2", "--steps", "4", "--t-final", "1.0",
               "--out", str(tmp_path / "x.csv")])
    assert rc == 2
    assert "error" in capsys.readouterr().err


def test_cli_without_subcommand_returns_usage_error(capsys):
    # argparse SystemExit is translated into a plain return code
    assert main([]) == 2
    assert "usage" in capsys.readouterr().err


# --- simulate subcommand ----------------------------------------------------------

def test_simulate_zero_noise_matches_flow(tmp_path):
    out = tmp_path / "ode.csv"
    rc = main(["simulate", "--drift", "example1", "--x0", "1.0",
               "--steps", "200", "--t-final", "0.5", "--hurst", "0.7",
               "--zero-noise", "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "t,Y1"
    final = float(lines[-1].split(",")[1])
    assert final == pytest.approx(1.0 / np.sqrt(2.0), abs=5e-3)


def test_simulate_explicit_scheme_records_divergence(tmp_path):
    out = tmp_path / "em.csv"
    rc = main(["simulate", "--drift", "example1", "--scheme", "em",
               "--x0", "5.0", "--steps", "9", "--t-final", "0.72",
               "--hurst", "0.6", "--seed", "0", "--out", str(out)])
    assert rc == 0
    text = out.read_text()
    assert "Inf" in text or "NaN" in text    # non-finite states land in the CSV


def test_simulate_implicit_scheme_stays_bounded(tmp_path):
    out = tmp_path / "bem.csv"
    rc = main(["simulate", "--drift", "example1", "--scheme", "bem",
               "--x0", "5.0", "--steps", "9", "--t-final", "0.72",
               "--hurst", "0.6", "--seed", "0", "--out", str(out)])
    assert rc == 0
    vals = [float(line.split(",")[1])
            for line in out.read_text().splitlines()[1:]]
    assert np.isfinite(vals).all()
    assert np.abs(vals).max() <= 10.0


def test_simulate_guard_failure_exits_one(tmp_path, capsys):
    rc = main(["simulate", "--drift", "doublewell1d", "--x0", "0.0",
               "--steps", "2", "--t-final", "2.0", "--hurst", "0.7",
               "--out", str(tmp_path / "g.csv")])
    assert rc == 1
    assert "solver failure" in capsys.readouterr().err


# --- rate subcommand ---------------------------------------------------------------

def test_rate_pipeline_writes_report_and_manifest(tmp_path, capsys):
    cfg = tmp_path / "rate.cfg"
    cfg.write_text(RATE_CFG)
    outdir = tmp_path / "out"
    rc = main(["rate", "--config", str(cfg), "--out", str(outdir)])
    assert rc == 0
    report = (outdir / "rate_report.csv").read_text()
    lines = report.splitlines()
    assert lines[0] == "mesh,error,stderr,pairwise_order"
    assert len(lines) == 3
    assert lines[1].endswith(",")            # first row has no pairwise order
    assert not lines[2].endswith(",")
    meta = json.loads((outdir / "meta.json").read_text())
    assert meta["subcommand"] == "rate"
    assert "rate_report.csv" in " ".join(meta["outputs"])
    assert "timestamp" not in json.dumps(meta)
    stdout = capsys.readouterr().out
    assert "H=0.7" in stdout and "slope=" in stdout


def test_rate_multi_hurst_names_reports_by_hurst(tmp_path):
    cfg = tmp_path / "rate.cfg"
    cfg.write_text(RATE_CFG.replace("hurst = 0.7", "hurst = 0.6 0.75"))
    outdir = tmp_path / "out"
    assert main(["rate", "--config", str(cfg), "--out", str(outdir),
                 "--mc-paths", "3"]) == 0
    assert (outdir / "rate_report_h0.6.csv").exists()
    assert (outdir / "rate_report_h0.75.csv").exists()
    assert not (outdir / "rate_report.csv").exists()


def test_rate_parse_stage_reports_each_issue(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("drift = example1\nhurst_values = 0.7\n")
    rc = main(["rate", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert rc == 2
    err_lines = [l for l in capsys.readouterr().err.splitlines()
                 if l.startswith("config error:")]
    assert len(err_lines) >= 2               # unknown key and missing keys


def test_rate_semantic_stage_reports_each_issue(tmp_path, capsys):
    cfg = tmp_path / "sem.cfg"
    cfg.write_text("drift = nodrift\nx0 = 1.0\nt_final = -1.0\nhurst = 0.4\n"
                   "meshes = 2^-4\nmaster_mesh = 2^-7\nmc_paths = 0\nseed = 1\n")
    rc = main(["rate", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert rc == 2
    err_lines = [l for l in capsys.readouterr().err.splitlines()
                 if l.startswith("config error:")]
    assert len(err_lines) >= 4
    joined = " ".join(err_lines)
    assert "nodrift" in joined
    assert "0.4" in joined


def test_rate_missing_config_file_exits_one(tmp_path, capsys):
    rc = main(["rate", "--config", str(tmp_path / "nope.cfg"),
               "--out", str(tmp_path / "o")])
    assert rc == 1
    assert capsys.readouterr().err


def test_rate_bias_check_line(tmp_path, capsys):
    cfg = tmp_path / "rate.cfg"
    cfg.write_text(RATE_CFG)
    rc = main(["rate", "--config", str(cfg), "--out", str(tmp_path / "o"),
               "--bias-check", "--mc-paths", "3"])
    assert rc == 0
    assert "reference bias" in capsys.readouterr().out


def test_rate_threads_env_and_flag(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "rate.cfg"
    cfg.write_text(RATE_CFG)
    out1 = tmp_path / "o1"
    out2 = tmp_path / "o2"
    assert main(["rate", "--config", str(cfg), "--out", str(out1)]) == 0
    monkeypatch.setenv("FBMSDE_THREADS", "2")
    assert main(["rate", "--config", str(cfg), "--out", str(out2)]) == 0
    assert (out1 / "rate_report.csv").read_bytes() == \
        (out2 / "rate_report.csv").read_bytes()
    monkeypatch.setenv("FBMSDE_THREADS", "abc")
    rc = main(["rate", "--config", str(cfg), "--out", str(tmp_path / "o3")])
    assert rc == 2
    assert "FBMSDE_THREADS" in capsys.readouterr().err


# --- limit subcommand ----------------------------------------------------------------

def test_limit_pipeline_reports_monotonicity(tmp_path, capsys):
    cfg = tmp_path / "limit.cfg"
    cfg.write_text(LIMIT_CFG)
    outdir = tmp_path / "out"
    rc = main(["limit", "--config", str(cfg), "--out", str(outdir)])
    assert rc == 0
    stdout = capsys.readouterr().out
    assert "lp distance monotone decreasing:" in stdout
    lines = (outdir / "limit_comparison.csv").read_text().splitlines()
    assert lines[0] == "n,lp_distance,stderr,mean_abs_nZ,mean_abs_U"
    assert len(lines) == 3
    n_col = [int(l.split(",")[0]) for l in lines[1:]]
    assert n_col == [8, 16]


def test_limit_rejects_p_out_of_range(tmp_path, capsys):
    cfg = tmp_path / "limit.cfg"
    cfg.write_text(LIMIT_CFG + "p = 2.5\n")
    rc = main(["limit", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "p" in capsys.readouterr().err


# --- stability subcommand ---------------------------------------------------------------

def test_stability_pipeline_writes_table(tmp_path):
    cfg = tmp_path / "stab.cfg"
    cfg.write_text(STAB_CFG)
    outdir = tmp_path / "out"
    rc = main(["stability", "--config", str(cfg), "--out", str(outdir)])
    assert rc == 0
    lines = (outdir / "stability.csv").read_text().splitlines()
    assert lines[0] == "scheme,T,value"
    schemes = {l.split(",")[0] for l in lines[1:]}
    assert schemes == {"em", "cn", "bem", "reference"}
    assert len(lines) == 1 + 4 * 9


def test_stability_rejects_multi_mesh_config(tmp_path, capsys):
    cfg = tmp_path / "stab.cfg"
    cfg.write_text(STAB_CFG.replace("meshes = 0.08", "meshes = 0.08 0.04"))
    rc = main(["stability", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "config error" in capsys.readouterr().err


# --- packaging glue ----------------------------------------------------------------------

def test_module_entry_point_reports_version():
    proc = subprocess.run([sys.executable, "-m", "fbmsde", "--version"],
                          capture_output=True, text=True, timeout=60)
    assert proc.returncode == 0
    assert "0.1.0" in proc.stdout
