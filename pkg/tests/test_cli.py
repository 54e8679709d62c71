import json
import os

import numpy as np
import pytest

from fronttrack.cli import (load_config, run, main, ConfigError, emit_events,
                            emit_profile, read_profile)
from fronttrack.fluxes import make_builtin_flux
from fronttrack.tracker import Event, EventLog, initial_fronts

GOOD_CONFIG = """
[flux]
family = modulated_burgers
base = 1.0
amp = 0.5

[initial]
profile = bump
amp = 0.6
width = 1.0

[run]
delta = 0.05
window = -3, 3
cells = 120
t_end = 0.4
output_times = 0.2, 0.4
seed = 777
resolution = 200

[checks]
names = tvd, entropy

[tolerances]
entropy_pairs = 6
entropy_quad = 128
"""


def write_config(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def test_load_config_roundtrip(tmp_path):
    cfg = load_config(write_config(tmp_path, GOOD_CONFIG))
    assert cfg.flux_family == "modulated_burgers"
    assert cfg.flux_params == {"base": 1.0, "amp": 0.5}
    assert cfg.u0_name == "bump"
    assert cfg.delta == 0.05
    assert cfg.window == (-3.0, 3.0)
    assert cfg.output_times == [0.2, 0.4]
    assert cfg.checks == ["tvd", "entropy"]
    assert cfg.tolerances["entropy_pairs"] == 6


def test_load_config_missing_field_names_section(tmp_path):
    broken = GOOD_CONFIG.replace("delta = 0.05", "")
    with pytest.raises(ConfigError) as info:
        load_config(write_config(tmp_path, broken))
    assert info.value.section == "run"
    assert info.value.option == "delta"


def test_load_config_bad_value(tmp_path):
    broken = GOOD_CONFIG.replace("t_end = 0.4", "t_end = soon")
    with pytest.raises(ConfigError) as info:
        load_config(write_config(tmp_path, broken))
    assert info.value.option == "t_end"


def test_load_config_rejects_unknown_check(tmp_path):
    broken = GOOD_CONFIG.replace("names = tvd, entropy", "names = tvd, vibes")
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, broken))


def test_load_config_rejects_unsorted_output_times(tmp_path):
    broken = GOOD_CONFIG.replace("output_times = 0.2, 0.4", "output_times = 0.4, 0.2")
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, broken))


def test_load_config_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/path.ini")


# ---------------------------------------------------------------------------
# artifact writers
# ---------------------------------------------------------------------------

def test_emit_events_header_only(tmp_path):
    path = str(tmp_path / "events.csv")
    emit_events(EventLog(), path)
    assert open(path).read() == "t,x,consumed_ids,produced_id,tv_before,tv_after\n"


def test_emit_events_rows(tmp_path):
    log = EventLog()
    log.append(Event(time=1.0, position=0.5, consumed=(0, 1), produced=2,
                     tv_before=2.0, tv_after=2.0))
    log.append(Event(time=1.5, position=0.75, consumed=(2, 3), produced=None,
                     tv_before=2.0, tv_after=0.0))
    path = str(tmp_path / "events.csv")
    emit_events(log, path)
    lines = open(path).read().splitlines()
    assert lines[1] == "1.0,0.5,0;1,2,2.0,2.0"
    assert lines[2] == "1.5,0.75,2;3,,2.0,0.0"  # annihilation: empty produced_id


def test_emit_profile_round_trip_bit_exact(tmp_path):
    flux = make_builtin_flux("homogeneous_burgers")
    field = initial_fronts([-0.7, 0.3], [0, 3, 0], 0.1)
    path = str(tmp_path / "profile.csv")
    emit_profile(flux, field, (-2, 2), 64, path)
    xs, us, gs = read_profile(path)
    from fronttrack.tracker import sample_u, sample_g
    want_x = np.linspace(-2, 2, 64)
    assert np.array_equal(xs, want_x)
    assert np.array_equal(us, sample_u(flux, field, want_x))
    assert np.array_equal(gs, sample_g(field, want_x))
    # two-level field: one interior up-and-down structure in the g column
    assert gs.min() == 0.0 and gs.max() == pytest.approx(0.3)


def test_emit_profile_empty_field_all_zero(tmp_path):
    flux = make_builtin_flux("homogeneous_burgers")
    from fronttrack.tracker import empty_field
    path = str(tmp_path / "profile.csv")
    emit_profile(flux, empty_field(0.1), (-1, 1), 16, path)
    _, us, gs = read_profile(path)
    assert np.all(us == 0.0) and np.all(gs == 0.0)


# ---------------------------------------------------------------------------
# runs
# ---------------------------------------------------------------------------

def test_run_end_to_end(tmp_path):
    cfg = load_config(write_config(tmp_path, GOOD_CONFIG))
    out = str(tmp_path / "out")
    manifest, status = run(cfg, out)
    assert status == 0
    assert manifest["checks"]["passed"]
    assert manifest["audit"]["passed"]
    assert manifest["event_count"] >= 0
    for name in ("manifest.json", "events.csv", "profile_000.csv", "profile_001.csv"):
        assert os.path.exists(os.path.join(out, name))
    reloaded = json.load(open(os.path.join(out, "manifest.json")))
    assert reloaded["config"]["seed"] == 777
    assert reloaded["audit"]["fuu_max"] > 0
    # tv_after column is non-increasing down the event log
    rows = open(os.path.join(out, "events.csv")).read().splitlines()[1:]
    tv_after = [float(r.split(",")[5]) for r in rows]
    assert all(b <= a + 1e-15 for a, b in zip(tv_after, tv_after[1:]))


def test_run_deterministic_artifacts(tmp_path):
    cfg = load_config(write_config(tmp_path, GOOD_CONFIG))
    out_a = str(tmp_path / "a")
    out_b = str(tmp_path / "b")
    run(cfg, out_a)
    run(cfg, out_b)
    for name in ("events.csv", "profile_000.csv", "profile_001.csv"):
        a = open(os.path.join(out_a, name), "rb").read()
        b = open(os.path.join(out_b, name), "rb").read()
        assert a == b, name
    ma = json.load(open(os.path.join(out_a, "manifest.json")))
    mb = json.load(open(os.path.join(out_b, "manifest.json")))
    ma.pop("wall_time_s")
    mb.pop("wall_time_s")
    assert ma == mb


def test_run_aborts_on_audit_failure(tmp_path):
    bad = GOOD_CONFIG.replace(
        "family = modulated_burgers\nbase = 1.0\namp = 0.5",
        "family = custom_expr\nexpr = u^3")
    cfg = load_config(write_config(tmp_path, bad))
    manifest, status = run(cfg, str(tmp_path / "out"))
    assert status == 2
    assert not manifest["audit"]["passed"]
    assert "error" in manifest
    assert not os.path.exists(str(tmp_path / "out" / "events.csv"))


def test_main_exit_codes(tmp_path, capsys):
    good = write_config(tmp_path, GOOD_CONFIG)
    assert main(["--out", str(tmp_path / "o1"), "run", good]) == 0
    broken = write_config(tmp_path, GOOD_CONFIG.replace("delta = 0.05", ""), "bad.ini")
    assert main(["--out", str(tmp_path / "o2"), "run", broken]) == 2
    assert main(["--out", str(tmp_path / "o3"), "sweep",
                 str(tmp_path / "nothing-*.ini")]) == 2


def test_main_sweep(tmp_path):
    write_config(tmp_path, GOOD_CONFIG, "s1.ini")
    write_config(tmp_path, GOOD_CONFIG.replace("seed = 777", "seed = 778"), "s2.ini")
    out = str(tmp_path / "sw")
    assert main(["--out", out, "sweep", str(tmp_path / "s*.ini")]) == 0
    assert os.path.exists(os.path.join(out, "s1", "manifest.json"))
    assert os.path.exists(os.path.join(out, "s2", "manifest.json"))


def test_env_var_output_dir(tmp_path, monkeypatch):
    good = write_config(tmp_path, GOOD_CONFIG)
    target = str(tmp_path / "envout")
    monkeypatch.setenv("FRONTTRACK_OUT", target)
    assert main(["run", good]) == 0
    assert os.path.exists(os.path.join(target, "manifest.json"))


def test_run_burgers_step_shock_lands_at_one(tmp_path):
    # compactly supported step: the tracked shock sits at x = 1.0 at t = 2
    cfg_text = """
[flux]
family = homogeneous_burgers

[initial]
profile = piecewise
values = 0, 1, 0
breaks = -1.5, 0

[run]
delta = 0.1
window = -2.5, 3.5
cells = 600
t_end = 2.0
seed = 1

[checks]
names = tvd
"""
    cfg = load_config(write_config(tmp_path, cfg_text))
    out = str(tmp_path / "out")
    manifest, status = run(cfg, out)
    assert status == 0
    assert manifest["event_count"] == 0
    xs, us, gs = read_profile(os.path.join(out, "profile_000.csv"))
    drop = xs[np.flatnonzero(np.diff(gs) < -0.25)[0] + 1]
    assert drop == pytest.approx(1.0, abs=(xs[1] - xs[0]) + 1e-9)


def test_run_dsl_flux_and_dsl_initial_data(tmp_path):
    # custom_expr flux gets its convexity constant from the audit; the
    # tracker then runs entirely through the expression trees
    cfg_text = """
[flux]
family = custom_expr
expr = (1 + 0.3*cos(x))*u^2/2 + 0.05*u^4

[initial]
profile = expr
expr = 0.4*sin(2*x)*exp(-x^2)

[run]
delta = 0.02
window = -3, 3
cells = 200
t_end = 0.5
seed = 9

[checks]
names = tvd, lipschitz_l1
"""
    cfg = load_config(write_config(tmp_path, cfg_text))
    manifest, status = run(cfg, str(tmp_path / "out"))
    assert status == 0
    assert manifest["audit"]["passed"]
    assert 0.6 < manifest["audit"]["alpha"] <= 0.7 * 1.01  # sampled min * 0.99
    assert manifest["checks"]["passed"]


def test_run_zero_data_trivially_passes(tmp_path):
    cfg_text = GOOD_CONFIG.replace(
        "profile = bump\namp = 0.6\nwidth = 1.0", "profile = zero")
    cfg = load_config(write_config(tmp_path, cfg_text))
    manifest, status = run(cfg, str(tmp_path / "out"))
    assert status == 0
    assert manifest["initial_front_count"] == 0
    assert manifest["event_count"] == 0
