"""Experiment configs, preflight validation, artifact IO, full runs."""

import json
from dataclasses import replace

import numpy as np
import pytest

import binident as bi
from binident.runner import ExperimentConfig, preflight, read_trajectory_csv, write_trajectory_csv
from binident.topology import degree_weights, dump_schedule, from_undirected_pairs

STAR4 = (0.5, -0.4, 0.3, -0.35)


def small_config(**overrides) -> ExperimentConfig:
    """Fast, preflight-clean 8-agent configuration."""
    base = dict(
        n_agents=8,
        l=4,
        steps=300,
        seed=7,
        stride=50,
        theta_star=STAR4,
        topology_kind="partitioned-ring",
        period=4,
        noise_kind="gaussian",
        noise_params={"sigma2": 0.01},
    )
    base.update(overrides)
    return ExperimentConfig(**base)


# ---------------------------------------------------------------------------
# config: theta resolution and dict view

def test_resolved_theta_star_graded_preset():
    cfg = small_config(theta_star="graded")
    assert np.allclose(cfg.resolved_theta_star(), bi.graded_theta_star(4))


def test_resolved_theta_star_explicit_vector():
    assert np.array_equal(small_config().resolved_theta_star(), STAR4)


def test_resolved_theta_star_unknown_preset():
    with pytest.raises(ValueError, match="model.theta_star: unknown preset"):
        small_config(theta_star="linear").resolved_theta_star()


def test_resolved_theta_star_wrong_length():
    with pytest.raises(ValueError, match="expected 4 entries, got 3"):
        small_config(theta_star=(1.0, 2.0, 3.0)).resolved_theta_star()


def test_to_dict_groups_fields_by_section():
    d = small_config().to_dict()
    assert d["topology"]["kind"] == "partitioned-ring"
    assert d["noise"] == {"kind": "gaussian", "sigma2": 0.01}
    assert d["theta_star"] == [0.5, -0.4, 0.3, -0.35]


# ---------------------------------------------------------------------------
# config: INI round trip

def test_ini_round_trip_preserves_every_field(tmp_path):
    cfg = small_config(
        out="runs/x",
        window=4,
        weights="degree",
        regressor_kind="dense-uniform",
        regressor_bound=2.5,
        noise_kind="laplace",
        noise_params={"scale": 0.3},
        record_theta_bar=False,
        record_agent_errors=True,
    )
    path = tmp_path / "cfg.ini"
    cfg.to_ini(path)
    back = ExperimentConfig.from_ini(path)
    assert back.to_dict() == cfg.to_dict()
    assert back.out == cfg.out


def test_ini_round_trip_graded_default(tmp_path):
    cfg = small_config(theta_star="graded")
    cfg.to_ini(tmp_path / "g.ini")
    back = ExperimentConfig.from_ini(tmp_path / "g.ini")
    assert back.theta_star == "graded"


def test_from_ini_missing_file():
    with pytest.raises(ValueError, match="config file not found"):
        ExperimentConfig.from_ini("/no/such/file.ini")


def test_from_ini_missing_required_key(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[model]\nn_agents = 8\nl = 4\n[run]\nsteps = 10\n")
    with pytest.raises(ValueError, match=r"run\.seed: required key is missing"):
        ExperimentConfig.from_ini(path)


def test_from_ini_unparseable_value_names_the_field(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[model]\nn_agents = 8\nl = four\n[run]\nsteps = 10\nseed = 0\n")
    with pytest.raises(ValueError, match=r"model\.l: cannot parse 'four'"):
        ExperimentConfig.from_ini(path)


def test_from_ini_bad_theta_star(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text(
        "[model]\nn_agents = 8\nl = 4\ntheta_star = 0.5, oops\n[run]\nsteps = 10\nseed = 0\n"
    )
    with pytest.raises(ValueError, match="model.theta_star: cannot parse"):
        ExperimentConfig.from_ini(path)


def test_from_ini_theta_star_mixed_separators(tmp_path):
    path = tmp_path / "cfg.ini"
    path.write_text(
        "[model]\nn_agents = 8\nl = 4\ntheta_star = 0.5, -0.4 0.3,-0.35\n"
        "[run]\nsteps = 10\nseed = 0\n"
    )
    assert ExperimentConfig.from_ini(path).theta_star == STAR4


def test_from_ini_defaults(tmp_path):
    path = tmp_path / "min.ini"
    path.write_text("[model]\nn_agents = 100\nl = 8\n[run]\nsteps = 10\nseed = 0\n")
    cfg = ExperimentConfig.from_ini(path)
    assert cfg.theta_star == "graded"
    assert cfg.topology_kind == "poisson" and cfg.p == 0.06
    assert cfg.weights == "metropolis"
    assert cfg.noise_params == {"sigma2": 0.09}
    assert cfg.stride == 100 and cfg.out is None
    assert cfg.record_theta_bar and not cfg.record_agent_errors


def test_from_ini_boolean_spellings(tmp_path):
    path = tmp_path / "b.ini"
    path.write_text(
        "[model]\nn_agents = 8\nl = 4\n[run]\nsteps = 10\nseed = 0\n"
        "[record]\ntheta_bar = off\nagent_errors = YES\n"
    )
    cfg = ExperimentConfig.from_ini(path)
    assert cfg.record_theta_bar is False
    assert cfg.record_agent_errors is True


def test_from_ini_rejects_bad_boolean(tmp_path):
    path = tmp_path / "b.ini"
    path.write_text(
        "[model]\nn_agents = 8\nl = 4\n[run]\nsteps = 10\nseed = 0\n"
        "[record]\ntheta_bar = maybe\n"
    )
    with pytest.raises(ValueError, match=r"record\.theta_bar: cannot parse 'maybe'"):
        ExperimentConfig.from_ini(path)


# ---------------------------------------------------------------------------
# building the model and the schedule

def test_build_model_sparse_default():
    model = bi.build_model(small_config())
    assert isinstance(model.regressor_for(1), bi.SparseUniformRegressors)
    assert model.noise_for(1).params() == {"sigma2": 0.01}


def test_build_model_dense_bound():
    cfg = small_config(regressor_kind="dense-uniform", regressor_bound=2.0)
    gen = bi.build_model(cfg).regressor_for(3)
    assert isinstance(gen, bi.DenseUniformRegressors)
    assert gen.bound == 2.0


def test_build_model_unknown_regressor_kind():
    with pytest.raises(ValueError, match="regressor.kind: unknown kind 'fourier'"):
        bi.build_model(small_config(regressor_kind="fourier"))


def test_build_model_noise_errors_are_prefixed():
    cfg = small_config(noise_params={"sigma2": -1.0})
    with pytest.raises(ValueError, match="noise: sigma2 must be positive"):
        bi.build_model(cfg)


def test_build_schedule_static_kinds():
    ss = np.random.SeedSequence(0)
    ring = bi.build_schedule(small_config(topology_kind="ring", period=None), ss)
    assert ring.B == 1 and ring.n_agents == 8
    _, w = ring[1]
    assert bi.is_doubly_stochastic(w.w)
    comp = bi.build_schedule(small_config(topology_kind="complete", period=None), ss)
    assert np.allclose(comp[5][1].w, 1.0 / 8)


def test_build_schedule_poisson_uses_topology_seed():
    cfg = small_config(topology_kind="poisson", p=0.5, period=None)
    a = bi.build_schedule(cfg, np.random.SeedSequence(1))
    b = bi.build_schedule(cfg, np.random.SeedSequence(1))
    c = bi.build_schedule(cfg, np.random.SeedSequence(2))
    assert np.array_equal(a[1][1].w, b[1][1].w)
    assert not np.array_equal(a[1][1].w, c[1][1].w)


def test_build_schedule_partitioned_ring_needs_period():
    with pytest.raises(ValueError, match="topology.period: required"):
        bi.build_schedule(small_config(period=None), np.random.SeedSequence(0))


def test_build_schedule_window_override():
    cfg = small_config(window=8)
    sched = bi.build_schedule(cfg, np.random.SeedSequence(0))
    assert sched.B == 8


def test_build_schedule_from_file(tmp_path, datadir):
    cfg = small_config(
        n_agents=4,
        topology_kind="file",
        period=None,
        schedule_file=str(datadir / "ring4_period2.schedule"),
    )
    sched = bi.build_schedule(cfg, np.random.SeedSequence(0))
    assert sched.n_agents == 4 and sched.B == 2


def test_build_schedule_file_agent_mismatch(datadir):
    cfg = small_config(
        topology_kind="file",
        period=None,
        schedule_file=str(datadir / "ring4_period2.schedule"),
    )
    with pytest.raises(ValueError, match="schedule has 4 agents, config says 8"):
        bi.build_schedule(cfg, np.random.SeedSequence(0))


def test_build_schedule_unknown_kind_and_weights():
    with pytest.raises(ValueError, match="topology.kind: unknown kind"):
        bi.build_schedule(small_config(topology_kind="torus"), np.random.SeedSequence(0))
    with pytest.raises(ValueError, match="topology.weights: unknown scheme"):
        bi.build_schedule(small_config(weights="uniform"), np.random.SeedSequence(0))


# ---------------------------------------------------------------------------
# preflight

def test_preflight_clean_config():
    rep = preflight(small_config())
    assert rep.ok and rep.errors == [] and rep.warnings == []
    assert rep.network is not None and rep.network.connectivity_ok
    assert rep.lines()[0] == "preflight: ok"


def test_preflight_negative_steps_and_bad_stride():
    rep = preflight(small_config(steps=-1, stride=0))
    assert "run.steps: must be >= 0" in rep.errors
    assert "run.stride: must be >= 1" in rep.errors


def test_preflight_sparse_coverage_gap():
    # two agents only ever excite coordinates 1 and 2 of a 4-vector
    rep = preflight(small_config(n_agents=2, topology_kind="complete", period=None))
    assert rep.errors == [
        "model.n_agents: sparse regressors leave coordinates [3, 4] unexcited"
    ]


def test_preflight_disconnected_topology():
    rep = preflight(small_config(topology_kind="poisson", p=0.0, period=None))
    assert any(
        e.startswith("topology: union over windows of B=1 steps is not strongly")
        for e in rep.errors
    )


def test_preflight_bad_model_reported_without_crash():
    rep = preflight(small_config(regressor_kind="fourier"))
    assert not rep.ok
    assert rep.network is None
    assert "regressor.kind" in rep.errors[0]


def _star_schedule_file(tmp_path):
    g = from_undirected_pairs(3, [(1, 2), (1, 3)])
    w, ds = degree_weights(g)
    assert not ds
    sched = bi.TopologySchedule.static(g, w).materialize(3)
    path = tmp_path / "star.schedule"
    dump_schedule(sched, path)
    return path


def test_preflight_degree_weights_downgrade_to_warning(tmp_path):
    """Row-stochastic-only mixing is a warning when chosen on purpose."""
    path = _star_schedule_file(tmp_path)
    cfg = small_config(
        n_agents=3,
        l=2,
        theta_star=(0.5, -0.4),
        topology_kind="file",
        period=None,
        schedule_file=str(path),
        weights="degree",
    )
    rep = preflight(cfg)
    assert rep.ok
    assert len(rep.warnings) == 1
    assert "not doubly stochastic" in rep.warnings[0]
    assert "averaging guarantees do not apply" in rep.warnings[0]


def test_preflight_nonstochastic_weights_fail_otherwise(tmp_path):
    path = _star_schedule_file(tmp_path)
    cfg = small_config(
        n_agents=3,
        l=2,
        theta_star=(0.5, -0.4),
        topology_kind="file",
        period=None,
        schedule_file=str(path),
        weights="metropolis",
    )
    rep = preflight(cfg)
    assert not rep.ok
    assert rep.errors == ["topology.weights: steps [1, 2, 3] are not doubly stochastic"]


class _ShiftedNoise(bi.NoiseModel):
    kind = "shifted"

    def cdf(self, x):
        return np.clip(np.asarray(x, dtype=float) + 0.7, 0.0, 1.0)

    def pdf(self, x):
        return np.ones_like(np.asarray(x, dtype=float))

    def params(self):
        return {}


def test_preflight_rejects_biased_noise():
    cfg = small_config()
    model = bi.SystemModel(
        np.array(STAR4), bi.SparseUniformRegressors(4), _ShiftedNoise(), 8
    )
    rep = preflight(cfg, model=model)
    assert "noise: agent 1 noise median is not zero" in rep.errors


# ---------------------------------------------------------------------------
# trajectory CSV

def _run_metrics(record_agent_errors=True, record_theta_bar=True, steps=120):
    cfg = small_config(
        steps=steps,
        stride=25,
        record_agent_errors=record_agent_errors,
        record_theta_bar=record_theta_bar,
    )
    return bi.run_experiment(cfg).metrics


def test_trajectory_csv_round_trip_exact(tmp_path):
    metrics = _run_metrics()
    path = tmp_path / "t.csv"
    write_trajectory_csv(metrics, path)
    assert read_trajectory_csv(path).equals(metrics)


def test_trajectory_csv_round_trip_without_optional_columns(tmp_path):
    metrics = _run_metrics(record_agent_errors=False, record_theta_bar=False)
    assert metrics.agent_errors is None and metrics.theta_bar is None
    path = tmp_path / "t.csv"
    write_trajectory_csv(metrics, path)
    back = read_trajectory_csv(path)
    assert back.equals(metrics)
    assert back.agent_errors is None and back.theta_bar is None


def test_trajectory_csv_header_names_columns(tmp_path):
    metrics = _run_metrics()
    path = tmp_path / "t.csv"
    write_trajectory_csv(metrics, path)
    header = path.read_text().splitlines()[0]
    assert header.startswith("k,sigma_max,consensus_gap,mean_error,err_1")
    assert header.endswith("theta_bar_4")


def test_read_trajectory_rejects_foreign_header(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("time,value\n1,2\n")
    with pytest.raises(ValueError, match="unexpected trajectory header"):
        read_trajectory_csv(path)


def test_read_trajectory_rejects_ragged_rows(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("k,sigma_max,consensus_gap,mean_error\n1,0,0.0\n")
    with pytest.raises(ValueError, match="ragged"):
        read_trajectory_csv(path)


# ---------------------------------------------------------------------------
# run_experiment

def test_run_experiment_writes_artifacts(tmp_path):
    cfg = small_config(out=str(tmp_path / "run"))
    res = bi.run_experiment(cfg)
    assert res.trajectory_path.exists() and res.summary_path.exists()
    on_disk = json.loads(res.summary_path.read_text())
    assert on_disk["schema"] == "binident-summary-1"
    assert on_disk["final"] == pytest.approx(res.summary["final"])
    assert res.summary["invariants"]["ok"]
    assert res.summary["preflight"]["ok"]


def test_run_experiment_summary_final_fields():
    res = bi.run_experiment(small_config())
    fin = res.summary["final"]
    star = np.array(STAR4)
    assert fin["k"] == 301
    assert fin["relative_mean_error"] == pytest.approx(
        fin["mean_error"] / np.linalg.norm(star)
    )
    assert fin["max_agent_error"] >= fin["mean_error"]
    assert fin["peak_consensus_gap"] >= fin["consensus_gap"]
    assert len(fin["theta_bar"]) == 4 and len(fin["sigma"]) == 8
    assert fin["sigma_max"] == max(fin["sigma"])


def test_run_experiment_no_out_keeps_everything_in_memory():
    res = bi.run_experiment(small_config())
    assert res.trajectory_path is None and res.summary_path is None
    assert res.metrics.n_rows > 0


def test_run_experiment_byte_identical_rerun(tmp_path):
    cfg_a = small_config(out=str(tmp_path / "a"))
    cfg_b = small_config(out=str(tmp_path / "b"))
    bi.run_experiment(cfg_a)
    bi.run_experiment(cfg_b)
    assert (tmp_path / "a/trajectory.csv").read_bytes() == (
        tmp_path / "b/trajectory.csv"
    ).read_bytes()
    sa = json.loads((tmp_path / "a/summary.json").read_text())
    sb = json.loads((tmp_path / "b/summary.json").read_text())
    for s in (sa, sb):
        s.pop("wall_time_s")      # timing is the one nondeterministic field
    assert sa == sb


def test_run_experiment_seed_changes_trajectory(tmp_path):
    bi.run_experiment(small_config(out=str(tmp_path / "a")))
    bi.run_experiment(small_config(seed=8, out=str(tmp_path / "b")))
    assert (tmp_path / "a/trajectory.csv").read_bytes() != (
        tmp_path / "b/trajectory.csv"
    ).read_bytes()


def test_run_experiment_zero_steps(tmp_path):
    cfg = small_config(steps=0, out=str(tmp_path / "z"))
    res = bi.run_experiment(cfg)
    assert res.metrics.n_rows == 0
    # nothing was recorded, so the optional columns are absent entirely
    assert (tmp_path / "z/trajectory.csv").read_text() == (
        "k,sigma_max,consensus_gap,mean_error\n"
    )
    fin = res.summary["final"]
    assert fin["mean_error"] == pytest.approx(np.linalg.norm(STAR4))
    assert fin["consensus_gap"] == 0.0 and fin["peak_consensus_gap"] == 0.0


def test_run_experiment_rejects_invalid_config():
    cfg = small_config(n_agents=2, topology_kind="complete", period=None)
    with pytest.raises(ValueError, match="invalid config:"):
        bi.run_experiment(cfg)


def test_run_experiment_converges_on_small_network():
    cfg = small_config(steps=30_000, stride=1000)
    res = bi.run_experiment(cfg)
    assert res.summary["final"]["mean_error"] < 0.05
    assert res.summary["final"]["sigma_settled_second_half"]


# ---------------------------------------------------------------------------
# benchmark preset

def test_preset_v_shape():
    cfg = bi.preset_v(seed=42)
    assert cfg.n_agents == 100 and cfg.l == 8
    assert cfg.steps == 1_000_000 and cfg.seed == 42
    assert cfg.topology_kind == "poisson" and cfg.p == 0.06
    assert cfg.weights == "metropolis"
    assert cfg.regressor_kind == "sparse-uniform"
    assert cfg.noise_kind == "gaussian" and cfg.noise_params == {"sigma2": 0.09}
    star = cfg.resolved_theta_star()
    assert star[0] == pytest.approx(1.1)
    assert star[3] == pytest.approx(2.8)


def test_preset_v_paper_weights_switch():
    assert bi.preset_v(seed=0, paper_weights=True).weights == "degree"


def test_preset_v_passthroughs(tmp_path):
    cfg = bi.preset_v(seed=5, steps=1000, out=str(tmp_path), stride=10)
    assert cfg.steps == 1000 and cfg.stride == 10 and cfg.out == str(tmp_path)


def test_preset_v_short_run_is_preflight_clean():
    res = bi.run_experiment(bi.preset_v(seed=3, steps=200, stride=100))
    assert res.summary["preflight"]["ok"]
    assert res.summary["final"]["k"] == 201
    assert res.summary["invariants"]["ok"]


def test_preset_v_trajectory_columns_and_drift(tmp_path):
    cfg = bi.preset_v(seed=3, steps=2000, out=str(tmp_path), stride=200)
    res = bi.run_experiment(cfg)
    header = res.trajectory_path.read_text().splitlines()[0]
    assert header == "k,sigma_max,consensus_gap,mean_error," + ",".join(
        f"theta_bar_{j}" for j in range(1, 9)
    )
    # the average estimate heads toward the (all-positive) graded target
    m = res.metrics
    assert np.all(m.theta_bar[-1] > 0)
    assert m.mean_error[-1] < m.mean_error[0]
