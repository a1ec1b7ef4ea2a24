"""Config validation, frozen report values, artifacts and exit codes."""
import argparse
import json

import numpy as np
import pytest

from conftest import BASE, marginal_beta1
from patchepi import cli, sim

FIXTURES = ("hiv_backward.json", "hiv_mixed.json", "hiv_above_one.json",
            "hiv_below_rc.json", "zero_transmission.json")


def fixture_dict(name):
    with open(cli.fixture_path(name), encoding="utf-8") as fh:
        return json.load(fh)


def mg_patch():
    return {"family": "multigroup",
            "params": {"beta": [[0.02]], "Lam": 1.0, "mu": 0.05,
                       "gamma": 0.05}}


def base_dict():
    return {"schema_version": 1,
            "patches": [mg_patch(), mg_patch()],
            "network": {"edges": [[1, 2]], "r": 2},
            "alpha_grid": [0.0, 1e-5],
            "initial_sets": [{"label": "a",
                              "regions": [[0.1, 20.0, 0.0],
                                          [0.0, 20.0, 0.0]]}],
            "patterns": [[0, 0]]}


# ====================================================================
# Formatting helpers
# ====================================================================

def test_report_float_formatting():
    assert cli.fmt_float(1 / 3) == 0.333333333333
    assert cli.fmt_float(np.pi) == 3.14159265359
    # numpy scalars and arrays are unwrapped, tuples become lists
    assert cli.round_floats({"a": np.float64(2 / 3),
                             "b": (np.int64(3), "s", None)}) \
        == {"a": 0.666666666667, "b": [3, "s", None]}
    assert cli.round_floats(np.arange(3.0)) == [0.0, 1.0, 2.0]
    assert cli.pattern_label((0, 1, 2)) == "0-1-2"


# ====================================================================
# Config parsing
# ====================================================================

# (mutation of a valid config, fragment the error message must contain)
REJECTIONS = [
    (lambda d: d.update(extra=1), "unknown config fields"),
    (lambda d: d.update(schema_version=2), "schema_version"),
    (lambda d: d.update(patches=[]), "patches"),
    (lambda d: d["patches"][0].update(family=7), "patches[0].family"),
    (lambda d: d["patches"][0].pop("params"), "patches[0].params"),
    (lambda d: d.update(network={"preset": "fig3b", "edges": []}),
     "exactly one"),
    (lambda d: d.update(network={}), "exactly one"),
    (lambda d: d.update(network={"preset": "fig9z"}), "unknown preset"),
    (lambda d: d.update(network={"edges": [[0, 1]], "r": 2}), "1-based"),
    (lambda d: d.update(network={"edges": [[1, 1]], "r": 2}), "self-loops"),
    (lambda d: d.update(network={"edges": [[1, 2]], "r": 2, "weight": 0}),
     "network.weight"),
    (lambda d: d.update(network={"edges": [[1, 2]], "r": 0}), "network.r"),
    (lambda d: d.update(alpha_grid=[-1e-6]), "alpha_grid"),
    (lambda d: d.update(t_end=0), "t_end"),
    (lambda d: d.update(rtol=-1e-8), "rtol"),
    (lambda d: d.update(atol="tight"), "atol"),
    (lambda d: d.update(initial_sets=[{"label": "a"}]), "'regions'"),
    (lambda d: d["initial_sets"][0].update(regions=[[0.1, 20.0, 0.0]]),
     "one state list per region"),
    (lambda d: d["initial_sets"][0]["regions"][0].append("x"),
     "list of numbers"),
    (lambda d: d.update(patterns=[[0]]), "patterns[0]"),
    (lambda d: d.update(patterns=[[0, -1]]), "patterns[0]"),
]


def test_config_rejections():
    cli.config_from_dict(base_dict())  # the unmutated base must be valid
    for mutate, fragment in REJECTIONS:
        data = base_dict()
        mutate(data)
        with pytest.raises(cli.ConfigError) as err:
            cli.config_from_dict(data)
        assert fragment in str(err.value), fragment
    with pytest.raises(cli.ConfigError, match="JSON object"):
        cli.config_from_dict(["not", "an", "object"])


def test_config_defaults():
    cfg = cli.config_from_dict({"schema_version": 1,
                                "patches": [mg_patch()],
                                "network": {"edges": [], "r": 1}})
    assert cfg.alpha_grid == (0.0,)
    assert cfg.t_end == sim.DEFAULT_T_END
    assert cfg.rtol == sim.DEFAULT_RTOL
    assert cfg.atol == sim.DEFAULT_ATOL
    assert cfg.initial_sets == ()
    assert cfg.patterns is None


def test_load_config_reports_position(tmp_path):
    with pytest.raises(cli.ConfigError, match="cannot read config"):
        cli.load_config(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{\n  not json\n}\n")
    with pytest.raises(cli.ConfigError) as err:
        cli.load_config(str(bad))
    assert "invalid JSON at line 2" in str(err.value)


def test_shipped_fixture_configs_load():
    for name in FIXTURES:
        cfg = cli.load_config(cli.fixture_path(name))
        assert len(cfg.patches) == 3, name
        models = cli.build_models(cfg)
        assert cli.build_network(cfg, models).r == 3, name
    backward = cli.load_config(cli.fixture_path("hiv_backward.json"))
    assert [label for label, _ in backward.initial_sets] \
        == ["blue", "red", "black", "green"]
    zt = cli.load_config(cli.fixture_path("zero_transmission.json"))
    assert zt.initial_sets == ()
    assert zt.t_end == sim.DEFAULT_T_END


def test_build_models_errors():
    data = base_dict()
    data["patches"][0]["family"] = "sir_classic"
    with pytest.raises(cli.ConfigError, match="unknown family"):
        cli.build_models(cli.config_from_dict(data))

    data = base_dict()
    del data["patches"][0]["params"]["mu"]
    with pytest.raises(cli.ConfigError) as err:
        cli.build_models(cli.config_from_dict(data))
    assert "patches[0].params" in str(err.value)

    # an HIV patch (4,2,1) cannot be coupled to a multigroup patch (1,1,1)
    data = base_dict()
    data["patches"][0] = {"family": "hiv_vaccination", "params": dict(BASE)}
    with pytest.raises(cli.ConfigError, match="block sizes"):
        cli.build_models(cli.config_from_dict(data))


def test_build_network_shape_checks():
    data = base_dict()
    data["network"] = {"edges": [[1, 2]], "r": 2, "weight": 2.5}
    cfg = cli.config_from_dict(data)
    net = cli.build_network(cfg, cli.build_models(cfg))
    assert net.adjacency()[0, 1]          # config edge [1, 2] is 1 -> 2
    assert net.cx[1, 0, 0] == 2.5

    data = base_dict()
    del data["initial_sets"], data["patterns"]
    data["patches"] = [mg_patch()]
    data["network"] = {"preset": "fig3b"}
    cfg = cli.config_from_dict(data)
    with pytest.raises(cli.ConfigError, match="3 regions"):
        cli.build_network(cfg, cli.build_models(cfg))

    data = base_dict()
    del data["initial_sets"], data["patterns"]
    data["patches"].append(mg_patch())
    cfg = cli.config_from_dict(data)  # network r=2, three patches
    with pytest.raises(cli.ConfigError, match="network.r = 2"):
        cli.build_network(cfg, cli.build_models(cfg))


def test_apply_overrides():
    cfg = cli.load_config(cli.fixture_path("hiv_mixed.json"))
    out = cli._apply_overrides(
        cfg, argparse.Namespace(preset="fig3c", alpha="0,1e-6,0.1"))
    assert out.network == {"preset": "fig3c"}
    assert out.alpha_grid == (0.0, 1e-6, 0.1)
    assert out.patches == cfg.patches and out.t_end == cfg.t_end
    same = cli._apply_overrides(cfg, argparse.Namespace(preset=None,
                                                        alpha=None))
    assert same == cfg
    for preset, alpha in (("nope", None), (None, "a,b"), (None, "-1")):
        with pytest.raises(cli.ConfigError):
            cli._apply_overrides(cfg, argparse.Namespace(preset=preset,
                                                         alpha=alpha))


# ====================================================================
# analyze / census
# ====================================================================

def test_analyze_backward_patch_report():
    rep = cli.cmd_analyze(cli.load_config(cli.fixture_path(
        "hiv_backward.json")))
    assert rep["command"] == "analyze" and rep["schema_version"] == 1
    assert rep["network"]["name"] == "fig3b"
    assert rep["network"]["edges"] == [[1, 2], [1, 3], [2, 1], [3, 2]]
    p = rep["patches"][0]
    assert p["region"] == 1 and p["family"] == "hiv_vaccination"
    assert p["R"] == pytest.approx(0.952361034882, abs=1e-9)
    assert p["regime"] == "backward_window"
    assert p["endemic_lambdas"] == pytest.approx(
        [0.019459097629, 0.149197030082], abs=1e-9)
    assert p["R_c_estimate"] == pytest.approx(0.919911141229, abs=1e-7)
    assert p["dfe"]["stability"] == "stable"
    assert p["dfe"]["state"]["x"] == [0.0] * 4
    assert p["dfe"]["state"]["y"] == pytest.approx([10.01, 9.99], abs=1e-9)
    assert [(e["choice"], e["stability"]) for e in p["endemic"]] \
        == [(1, "unstable"), (2, "stable")]
    assert all(e["jac_invertible"] for e in p["endemic"])
    # branches are indexed by increasing infection level
    assert p["endemic"][0]["state"]["x"][0] < p["endemic"][1]["state"]["x"][0]


def test_analyze_above_one_patch_report():
    rep = cli.cmd_analyze(cli.load_config(cli.fixture_path(
        "hiv_mixed.json")))
    p = rep["patches"][1]
    assert p["R"] == pytest.approx(1.12001058034, abs=1e-9)
    assert p["regime"] == "above_one"
    assert p["dfe"]["stability"] == "unstable"
    assert [(e["choice"], e["stability"]) for e in p["endemic"]] \
        == [(1, "stable")]


def test_census_counts_and_rows():
    rep = cli.cmd_census(cli.load_config(cli.fixture_path(
        "hiv_mixed.json")))
    assert rep["per_patch_endemic_counts"] == [2, 1, 1]
    assert len(rep["patterns"]) == 12
    assert rep["persisting_count"] == 5
    assert rep["R"] == pytest.approx(
        [0.952361034882, 1.12001058034, 1.12001058034], abs=1e-9)
    row = next(r for r in rep["patterns"] if r["choices"] == [0, 1, 0])
    assert row["verdict"] == "vanishes"
    assert row["rule"] == "corollary_general"
    assert row["witness"]["region"] == 3
    assert row["witness"]["path"] == [2, 1, 3]
    assert row["witness"]["local_R"] == pytest.approx(1.12001058034,
                                                      abs=1e-9)
    full = next(r for r in rep["patterns"] if r["choices"] == [2, 1, 1])
    assert full["verdict"] == "persists"
    assert full["rule"] == "positive_theorem_4_2"


def test_census_exhaustive_networks():
    rep = cli.cmd_census(cli.load_config(cli.fixture_path(
        "hiv_mixed.json")), exhaustive_networks=True)
    assert rep["attained_set"] == [4, 5, 6, 7, 8, 9, 12]
    scan = rep["exhaustive_networks"]
    assert len(scan) == 64
    by_edges = {tuple(map(tuple, row["edges"])): row["persisting_count"]
                for row in scan}
    assert by_edges[()] == 12                                  # no travel
    assert by_edges[((1, 2), (1, 3), (2, 1), (2, 3), (3, 1), (3, 2))] == 4
    # the four shipped fig4 presets sit inside the scan
    assert by_edges[((1, 2), (2, 3), (3, 2))] == 4
    assert by_edges[((1, 2), (1, 3), (2, 1))] == 5
    assert by_edges[((1, 2), (1, 3))] == 6
    assert by_edges[((1, 3), (2, 3))] == 7

    data = base_dict()
    data["network"] = {"edges": [[1, 2]], "r": 2}
    with pytest.raises(cli.ConfigError, match="exactly 3"):
        cli.cmd_census(cli.config_from_dict(data), exhaustive_networks=True)


# ====================================================================
# continue / simulate
# ====================================================================

def continue_config(patterns):
    data = fixture_dict("hiv_mixed.json")
    data["network"] = {"preset": "fig3b"}
    data["alpha_grid"] = [0.0, 1e-6]
    data["patterns"] = patterns
    data["initial_sets"] = []
    return cli.config_from_dict(data)


def test_continue_report_and_artifacts():
    rep, arts = cli.cmd_continue(continue_config([[0, 1, 0], [1, 1, 1]]))
    assert rep["mismatches"] == 0 and rep["failures"] == 0
    by = {tuple(b["choices"]): b for b in rep["branches"]}

    gone = by[(0, 1, 0)]
    assert gone["predicted"] == "vanishes" and gone["observed"] == "vanishes"
    assert gone["rule"] == "corollary_general"
    assert gone["agree"] is True and gone["failure"] is None
    assert gone["exit_alpha"] == pytest.approx(1e-6, rel=1e-9)
    assert gone["points"][-1]["min_component"] < -1e-9

    kept = by[(1, 1, 1)]
    assert kept["predicted"] == "persists" and kept["observed"] == "persists"
    assert kept["rule"] == "positive_theorem_4_2"
    assert kept["exit_alpha"] is None and kept["agree"] is True
    assert kept["points"][-1]["min_component"] > 0

    csv = arts["branch_0-1-0.csv"]
    assert [len(row) for row in csv] == [24, 24, 24]  # alpha + 21 + 2
    assert csv[0][:2] == ["alpha", "r1_x1"]
    assert csv[0][-2:] == ["min_component", "max_real_eig"]
    assert float(csv[1][0]) == 0.0 and float(csv[2][0]) == 1e-6
    assert float(csv[2][-2]) < -1e-9


def test_continue_rejects_out_of_range_pattern():
    with pytest.raises(cli.ConfigError, match="exceeds"):
        cli.cmd_continue(continue_config([[0, 2, 0]]))


def test_simulate_zero_transmission_reaches_dfe():
    data = fixture_dict("zero_transmission.json")
    data["initial_sets"] = [{"label": "seeded",
                             "regions": [[0.5, 10.0, 0.0],
                                         [0.0, 10.0, 0.0],
                                         [0.0, 30.0, 0.0]]}]
    data["t_end"] = 600.0
    rep, arts = cli.cmd_simulate(cli.config_from_dict(data))
    assert rep["failures"] == 0
    row = rep["trajectories"][0]
    assert row["label"] == "seeded" and row["alpha"] == 0.0
    assert row["terminal_classification"] == "pattern_0-0-0"
    assert row["csv"] == "traj_seeded_a0.csv"
    assert row["min_component_overall"] >= -1e-9
    csv = arts["traj_seeded_a0.csv"]
    assert csv[0] == ["time", "r1_x1", "r1_y1", "r1_z1",
                      "r2_x1", "r2_y1", "r2_z1", "r3_x1", "r3_y1", "r3_z1"]
    assert float(csv[-1][0]) == 600.0
    assert float(csv[-1][1]) < 1e-8                   # infections die out
    assert float(csv[-1][2]) == pytest.approx(20.0, abs=1e-3)  # S -> Lam/mu


def test_simulate_requires_initial_sets():
    cfg = cli.load_config(cli.fixture_path("zero_transmission.json"))
    with pytest.raises(cli.ConfigError, match="initial_sets"):
        cli.cmd_simulate(cfg)


# ====================================================================
# Entry point
# ====================================================================

def test_main_success_prints_report(capsys):
    code = cli.main(["analyze", "--config",
                     cli.fixture_path("hiv_backward.json")])
    assert code == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["command"] == "analyze" and len(rep["patches"]) == 3


def test_main_config_errors_exit_2(tmp_path, capsys):
    fixture = cli.fixture_path("hiv_backward.json")
    assert cli.main(["analyze", "--config",
                     str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{\n  not json\n}\n")
    assert cli.main(["analyze", "--config", str(bad)]) == 2
    schema = tmp_path / "schema.json"
    schema.write_text(json.dumps({"schema_version": 99}))
    assert cli.main(["analyze", "--config", str(schema)]) == 2
    assert cli.main(["analyze", "--config", fixture,
                     "--preset", "fig9z"]) == 2
    assert cli.main(["analyze", "--config", fixture, "--alpha", "0,x"]) == 2
    assert cli.main(["analyze", "--config", fixture, "--alpha", "-0.1"]) == 2
    assert "config error" in capsys.readouterr().err


def test_main_numerical_failure_exit_3(tmp_path, capsys):
    # a patch pinned to R = 1 makes the strict exhaustive count refuse
    data = fixture_dict("hiv_backward.json")
    data["patches"][0]["params"]["beta1"] = marginal_beta1()
    cfgp = tmp_path / "marginal.json"
    cfgp.write_text(json.dumps(data))

    out = tmp_path / "out"
    code = cli.main(["census", "--config", str(cfgp), "--out", str(out),
                     "--exhaustive-networks"])
    assert code == 3
    assert "numerical failure" in capsys.readouterr().err
    partial = json.loads((out / "census.json").read_text())
    assert partial["command"] == "census"
    assert "indeterminate" in partial["error"]

    # the plain census reports the same situation honestly at exit 0
    out0 = tmp_path / "out0"
    assert cli.main(["census", "--config", str(cfgp),
                     "--out", str(out0)]) == 0
    rep = json.loads((out0 / "census.json").read_text())
    assert rep["per_patch_endemic_counts"] == [1, 2, 2]
    verdicts = {row["verdict"] for row in rep["patterns"]}
    assert verdicts == {"persists", "indeterminate"}


def test_artifacts_byte_deterministic(tmp_path):
    data = fixture_dict("hiv_mixed.json")
    data["network"] = {"preset": "fig3b"}
    data["alpha_grid"] = [0.0, 1e-6]
    data["patterns"] = [[0, 1, 0]]
    data["initial_sets"] = []
    cfgp = tmp_path / "cfg.json"
    cfgp.write_text(json.dumps(data))
    for sub in ("a", "b"):
        assert cli.main(["continue", "--config", str(cfgp),
                         "--out", str(tmp_path / sub)]) == 0
    for name in ("continue.json", "branch_0-1-0.csv"):
        assert (tmp_path / "a" / name).read_bytes() \
            == (tmp_path / "b" / name).read_bytes(), name
