import json
from pathlib import Path

import pytest

from pericont import cli
from pericont.config import load_config
from pericont.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, name, payload):
    p = tmp_path / name
    p.write_text(json.dumps(payload), encoding="utf-8")
    return p


MINIMAL_CYCLIC = {
    "problem": "cyclic",
    "n": 2,
    "m": 1,
    "T": 1.0,
    "g": ["x2"],
    "h": "x1 - 0.25",
    "window": {"rho": [1.0, 1.0], "omega1": [-1.0, 1.0]},
}


def test_load_minimal_config_records_defaults(tmp_path):
    cfg = load_config(write(tmp_path, "min.json", MINIMAL_CYCLIC))
    assert cfg.numeric["mesh"] == 128
    assert cfg.numeric["quad_panels"] == 256
    assert cfg.numeric["seed"] == 0
    assert cfg.numeric["lambda_step"] == 0.02


def test_negative_window_bound_names_key(tmp_path):
    bad = dict(MINIMAL_CYCLIC, window={"rho": [-1.0, 1.0], "omega1": [-1.0, 1.0]})
    with pytest.raises(ConfigError) as info:
        load_config(write(tmp_path, "bad.json", bad))
    assert "window.rho[0]" in str(info.value)


def test_unknown_phi_name_lists_valid(tmp_path):
    bad = {
        "problem": "second_order",
        "m": 1,
        "T": 1.0,
        "phi": {"name": "warp_drive"},
        "f": "-x",
        "window": {"rho": [1.0, 1.0]},
    }
    with pytest.raises(ConfigError) as info:
        load_config(write(tmp_path, "badphi.json", bad))
    msg = str(info.value)
    assert "warp_drive" in msg and "minkowski" in msg and "p_laplacian" in msg


def test_unknown_top_level_key_rejected(tmp_path):
    bad = dict(MINIMAL_CYCLIC, extra_knob=1)
    with pytest.raises(ConfigError) as info:
        load_config(write(tmp_path, "extra.json", bad))
    assert "extra_knob" in str(info.value)


def test_invalid_json_reports_location(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{ not json", encoding="utf-8")
    with pytest.raises(ConfigError) as info:
        load_config(p)
    assert "line 1" in str(info.value)


def test_run_intro_example1_exits_2_with_boundary_exit(tmp_path):
    out = tmp_path / "out"
    code = cli.main(["run", "--config", str(CONFIGS / "intro_example1.json"),
                     "--out", str(out), "--no-plot"])
    assert code == 2
    report = json.loads((out / "report.json").read_text())
    status = report["traces"][0]["status"]
    assert status["kind"] == "boundary_exit"
    assert abs(status["lambda_star"] - 0.5) <= 1e-6
    assert (out / "trace_0.csv").exists()


def test_run_intro_example2_reports_fold(tmp_path):
    out = tmp_path / "out"
    code = cli.main(["run", "--config", str(CONFIGS / "intro_example2.json"),
                     "--out", str(out), "--no-plot"])
    assert code == 2
    report = json.loads((out / "report.json").read_text())
    status = report["traces"][0]["status"]
    assert status["kind"] == "fold_detected"
    assert abs(status["lambda_star"] - 0.5) <= 1e-6


def test_product_check_exits_0_with_equal_integers(tmp_path):
    out = tmp_path / "out"
    code = cli.main(["product-check", "--config", str(CONFIGS / "cyclic_poly.json"),
                     "--out", str(out), "--no-plot"])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    pc = report["product_check"]
    assert pc["equal"]
    assert pc["direct"] == pc["negated_product"] == pc["plain_product"] == 1


def test_missing_config_is_operational_error(tmp_path):
    code = cli.main(["continue", "--config", str(tmp_path / "missing.json"),
                     "--out", str(tmp_path / "out")])
    assert code == 1


def test_run_full_second_order_pipeline_exits_0(tmp_path):
    out = tmp_path / "out"
    code = cli.main(["run", "--config", str(CONFIGS / "forced_oscillator.json"),
                     "--out", str(out), "--no-plot", "--mesh", "64"])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["hypotheses"]["verdict"] == "pass"
    assert report["solutions"][0]["lambda"] == 1.0
    assert report["config"]["numeric"]["mesh"] == 64  # override echoed


def test_reproducibility_byte_identical(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    for out in (out_a, out_b):
        code = cli.main(["run", "--config", str(CONFIGS / "intro_example1.json"),
                         "--out", str(out), "--no-plot"])
        assert code == 2
    assert (out_a / "report.json").read_bytes() == (out_b / "report.json").read_bytes()
    assert (out_a / "trace_0.csv").read_bytes() == (out_b / "trace_0.csv").read_bytes()


def test_figures_rendered_by_default(tmp_path):
    out = tmp_path / "out"
    code = cli.main(["run", "--config", str(CONFIGS / "intro_example1.json"),
                     "--out", str(out)])
    assert code == 2
    assert (out / "trace_0.png").exists()


def test_solution_figure_rendered_on_reached_target(tmp_path):
    out = tmp_path / "out"
    code = cli.main(["run", "--config", str(CONFIGS / "forced_oscillator.json"),
                     "--out", str(out), "--mesh", "32"])
    assert code == 0
    assert (out / "trace_0.png").exists()
    assert (out / "solution_0.png").exists()


def test_check_phi_subcommand(tmp_path):
    out = tmp_path / "out"
    code = cli.main(["check-phi", "--config", str(CONFIGS / "manufactured_minkowski.json"),
                     "--out", str(out), "--no-plot"])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["phi_checks"]["axioms"]["passed"]


def test_check_hypotheses_subcommand(tmp_path):
    out = tmp_path / "out"
    code = cli.main(["check-hypotheses", "--config", str(CONFIGS / "cyclic_poly.json"),
                     "--out", str(out), "--no-plot"])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["hypotheses"]["verdict"] == "pass"


def test_degree_subcommand(tmp_path):
    out = tmp_path / "out"
    code = cli.main(["degree", "--config", str(CONFIGS / "forced_oscillator.json"),
                     "--out", str(out), "--no-plot"])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["degree"]["value"] == -1
    assert report["degree"]["method"] == "sign_1d"


def test_degree_subcommand_algebraic(tmp_path):
    out = tmp_path / "out"
    code = cli.main(["degree", "--config", str(CONFIGS / "intro_example1.json"),
                     "--out", str(out), "--no-plot"])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["degree"]["value"] == 1  # f(x, 0) = x on ]-1, 1[


def test_average_subcommand_writes_csv(tmp_path):
    out = tmp_path / "out"
    code = cli.main(["average", "--config", str(CONFIGS / "cyclic_poly.json"),
                     "--out", str(out), "--no-plot"])
    assert code == 0
    lines = (out / "averaged.csv").read_text().splitlines()
    assert lines[0].startswith("field,w1,v1")
    assert any(line.startswith("h_avg,") for line in lines[1:])
    assert any(line.startswith("g1_avg,") for line in lines[1:])


def test_continue_subcommand_on_mesh_problem(tmp_path):
    out = tmp_path / "out"
    code = cli.main(["continue", "--config", str(CONFIGS / "forced_oscillator.json"),
                     "--out", str(out), "--no-plot", "--mesh", "32"])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["traces"][0]["status"]["kind"] == "reached_target"


def test_run_higher_order_chain(tmp_path):
    out = tmp_path / "out"
    code = cli.main(["run", "--config", str(CONFIGS / "third_order_chain.json"),
                     "--out", str(out), "--no-plot"])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["hypotheses"]["verdict"] == "pass"
    assert report["traces"][0]["status"]["kind"] == "reached_target"
    assert len(report["solutions"][0]["sup_norms"]) == 3


def test_every_numeric_default_echoed_in_report(tmp_path):
    out = tmp_path / "out"
    cli.main(["degree", "--config", str(CONFIGS / "cyclic_poly.json"),
              "--out", str(out), "--no-plot"])
    report = json.loads((out / "report.json").read_text())
    echoed = report["config"]["numeric"]
    for key in ("mesh", "quad_panels", "quad_kind", "seed", "newton_tol",
                "lambda_step", "lambda_step_min", "ds", "ds_min", "target",
                "max_steps", "mode"):
        assert key in echoed


def test_cyclic_config_with_domain_boxes(tmp_path):
    cfgp = write(tmp_path, "dom.json", dict(
        MINIMAL_CYCLIC,
        domain=[[[-3.0, 3.0]], [[-3.0, 3.0]]],
        numeric={"mesh": 16},
    ))
    out = tmp_path / "out"
    code = cli.main(["run", "--config", str(cfgp), "--out", str(out), "--no-plot"])
    assert code == 0
    # a block box excluding the origin is rejected up front
    bad = write(tmp_path, "bad_dom.json", dict(
        MINIMAL_CYCLIC, domain=[[[-3.0, 3.0]], [[1.0, 3.0]]]))
    assert cli.main(["run", "--config", str(bad), "--out", str(out)]) == 1


def test_second_order_deformation_config(tmp_path):
    cfgp = write(tmp_path, "deform.json", {
        "problem": "second_order",
        "m": 1,
        "T": 1.0,
        "phi": {"name": "identity"},
        "f": "-x + cos(2*pi*t)",
        "homotopy": {
            "kind": "deformation",
            "f_tilde": "-x + lambda*cos(2*pi*t)",
            "f0": "-x + 0*y",
        },
        "window": {"rho": [1.0, 10.0]},
        "numeric": {"mesh": 32},
    })
    out = tmp_path / "out"
    code = cli.main(["run", "--config", str(cfgp), "--out", str(out), "--no-plot"])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["traces"][0]["status"]["kind"] == "reached_target"


def test_timings_flag_controls_field(tmp_path):
    out = tmp_path / "out"
    cli.main(["degree", "--config", str(CONFIGS / "forced_oscillator.json"),
              "--out", str(out), "--no-plot"])
    report = json.loads((out / "report.json").read_text())
    assert report["timings"] is None
    cli.main(["degree", "--config", str(CONFIGS / "forced_oscillator.json"),
              "--out", str(out), "--no-plot", "--timings"])
    report = json.loads((out / "report.json").read_text())
    assert report["timings"]["wall_s"] > 0.0
