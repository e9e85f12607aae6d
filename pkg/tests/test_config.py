"""Configuration loading: defaults, unit conversion, strictness, hashing."""

import math

import pytest
import yaml

from vrusim.config import ConfigError, load_config
from vrusim.scenario import ScenarioKind
from vrusim.sensing import DetectionModel, default_layout, format_layout, px_to_rad


def write_cfg(tmp_path, data):
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return str(path)


def test_default_config_shape():
    cfg = load_config()
    assert [k.display_name for k in cfg.scenarios] == ["CPNC-50", "CBNA", "CBLA"]
    assert cfg.speeds_by_kind[ScenarioKind.CPNC50] == tuple(range(20, 61, 5))
    assert cfg.speeds_by_kind[ScenarioKind.CBNA] == tuple(range(20, 61, 5))
    assert cfg.speeds_by_kind[ScenarioKind.CBLA] == tuple(range(25, 61, 5))
    names = [s.name for s in cfg.subsets]
    assert names == ["vut"] + [f"rsu{i}" for i in range(12)] + ["any"]
    assert cfg.subsets[-1].sensor_ids == tuple(["vut"] + [f"rsu{i}" for i in range(12)])
    assert len(cfg.all_units()) == 13
    assert cfg.all_units()[0].sensor_id == "vut"
    assert cfg.seed == 0
    assert cfg.dt == 0.005
    assert cfg.scene_yaws_deg == (0.0,)
    assert cfg.out_dir == "out"
    assert cfg.write_traces is False


def test_default_gates_match_model_defaults():
    # the YAML defaults and the DetectionModel constructor defaults are the
    # same numbers expressed in different units
    cfg = load_config()
    ref = DetectionModel()
    assert cfg.model.min_apparent_width == pytest.approx(ref.min_apparent_width, rel=1e-12)
    assert cfg.model.min_apparent_height == pytest.approx(ref.min_apparent_height, rel=1e-12)
    assert cfg.model.min_visible_fraction == ref.min_visible_fraction
    assert cfg.model.miss_probability == 0.0


def test_hash_is_stable_and_sensitive(tmp_path):
    base = load_config()
    again = load_config(write_cfg(tmp_path, {}))
    assert base.canonical_text() == again.canonical_text()
    assert base.config_hash() == again.config_hash()

    seeded = load_config(seed=7)
    assert seeded.config_hash() != base.config_hash()
    assert seeded.model.seed == 7
    assert seeded.seed == 7

    wide = load_config(write_cfg(tmp_path, {"camera": {"hfov_deg": 110}}))
    assert wide.config_hash() != base.config_hash()


def test_unknown_keys_rejected_with_path(tmp_path):
    with pytest.raises(ConfigError, match="top level: speling"):
        load_config(write_cfg(tmp_path, {"speling": 1}))
    with pytest.raises(ConfigError, match="camera: zoom"):
        load_config(write_cfg(tmp_path, {"camera": {"zoom": 2}}))
    with pytest.raises(ConfigError, match="policy: jerk"):
        load_config(write_cfg(tmp_path, {"policy": {"jerk": 1}}))
    with pytest.raises(ConfigError, match="speed_range: stride"):
        load_config(write_cfg(tmp_path, {"speed_range": {"stride": 5}}))


def test_scenario_list_validation(tmp_path):
    with pytest.raises(ConfigError, match="unknown scenario"):
        load_config(write_cfg(tmp_path, {"scenarios": ["CPNC-99"]}))
    with pytest.raises(ConfigError, match="duplicate"):
        load_config(write_cfg(tmp_path, {"scenarios": ["CBNA", "CBNA"]}))
    only = load_config(write_cfg(tmp_path, {"scenarios": ["CBLA"]}))
    assert only.scenarios == (ScenarioKind.CBLA,)


def test_explicit_speeds(tmp_path):
    cfg = load_config(write_cfg(tmp_path, {"scenarios": ["CBNA"], "speeds_kmh": [40, 20]}))
    assert cfg.speeds_by_kind[ScenarioKind.CBNA] == (20.0, 40.0)
    # 20 km/h exists for the crossing scenarios but not the longitudinal one
    with pytest.raises(ConfigError, match=r"not a CBLA sweep speed.*25\.\.60"):
        load_config(write_cfg(tmp_path, {"scenarios": ["CBLA"], "speeds_kmh": [20]}))
    with pytest.raises(ConfigError, match="not a CBNA sweep speed"):
        load_config(write_cfg(tmp_path, {"scenarios": ["CBNA"], "speeds_kmh": [22]}))


def test_speed_range_clips_per_scenario(tmp_path):
    cfg = load_config(write_cfg(tmp_path, {"speed_range": {"min_kmh": 20, "max_kmh": 60}}))
    assert cfg.speeds_by_kind[ScenarioKind.CPNC50][0] == 20.0
    assert cfg.speeds_by_kind[ScenarioKind.CBLA][0] == 25.0
    assert len(cfg.speeds_by_kind[ScenarioKind.CBLA]) == 8

    narrow = load_config(write_cfg(tmp_path, {"speed_range": {"min_kmh": 30, "max_kmh": 40}}))
    assert narrow.speeds_by_kind[ScenarioKind.CBNA] == (30.0, 35.0, 40.0)

    with pytest.raises(ConfigError, match="selects no"):
        load_config(write_cfg(tmp_path, {"speed_range": {"min_kmh": 61, "max_kmh": 64}}))
    with pytest.raises(ConfigError, match="step_kmh must be positive"):
        load_config(write_cfg(tmp_path, {"speed_range": {"step_kmh": 0}}))
    with pytest.raises(ConfigError, match="at least min_kmh"):
        load_config(write_cfg(tmp_path, {"speed_range": {"min_kmh": 50, "max_kmh": 40}}))


def test_speeds_and_range_are_exclusive(tmp_path):
    with pytest.raises(ConfigError, match="not both"):
        load_config(write_cfg(tmp_path, {"speeds_kmh": [40], "speed_range": {}}))


def test_camera_drives_fov_and_pixel_gates(tmp_path):
    cfg = load_config(write_cfg(tmp_path, {"camera": {"hfov_deg": 110}}))
    hfov = math.radians(110.0)
    vfov = 2.0 * math.atan(math.tan(hfov / 2.0) * 1080.0 / 1920.0)
    for unit in cfg.all_units():
        assert unit.hfov == pytest.approx(hfov, rel=1e-12)
        assert unit.vfov == pytest.approx(vfov, rel=1e-12)
    assert cfg.model.min_apparent_width == pytest.approx(
        px_to_rad(15.0, hfov=hfov, image_width_px=1920.0), rel=1e-12
    )
    assert cfg.model.min_apparent_height == pytest.approx(
        px_to_rad(110.0, hfov=hfov, image_width_px=1920.0), rel=1e-12
    )


def test_camera_validation(tmp_path):
    for bad in ({"hfov_deg": 0}, {"hfov_deg": 400}, {"image_width_px": -5}):
        with pytest.raises(ConfigError, match="camera"):
            load_config(write_cfg(tmp_path, {"camera": bad}))


def test_policy_section(tmp_path):
    cfg = load_config(
        write_cfg(
            tmp_path,
            {"policy": {"deceleration_mps2": 6.0, "latency_s": 0.05, "confirm_frames": 2}},
        )
    )
    assert cfg.policy.deceleration == 6.0
    assert cfg.policy.latency == 0.05
    assert cfg.policy.confirm_frames == 2
    with pytest.raises(ConfigError, match="deceleration_mps2 must be positive"):
        load_config(write_cfg(tmp_path, {"policy": {"deceleration_mps2": 0}}))
    with pytest.raises(ConfigError, match="policy"):
        load_config(write_cfg(tmp_path, {"policy": {"confirm_frames": 0}}))
    with pytest.raises(ConfigError, match="policy"):
        load_config(write_cfg(tmp_path, {"policy": {"latency_s": -0.1}}))


def test_detection_validation(tmp_path):
    with pytest.raises(ConfigError, match="detection"):
        load_config(write_cfg(tmp_path, {"detection": {"miss_probability": 1.5}}))
    relaxed = load_config(write_cfg(tmp_path, {"detection": {"min_width_px": 0}}))
    assert relaxed.model.min_apparent_width == 0.0


def test_scenario_overrides(tmp_path):
    cfg = load_config(write_cfg(tmp_path, {"scenario_overrides": {"pedestrian_speed_kmh": 10}}))
    assert cfg.overrides.pedestrian_speed_kmh == 10.0
    with pytest.raises(ConfigError, match="unknown field.*known:"):
        load_config(write_cfg(tmp_path, {"scenario_overrides": {"ped_speed": 10}}))


def test_frame_rate_consistency(tmp_path):
    with pytest.raises(ConfigError, match="rate_hz must match"):
        load_config(write_cfg(tmp_path, {"scenario_overrides": {"frame_rate": 20}}))
    cfg = load_config(
        write_cfg(
            tmp_path,
            {"scenario_overrides": {"frame_rate": 20}, "sensors": {"rate_hz": 20}},
        )
    )
    assert cfg.overrides.frame_rate == 20.0
    assert all(u.frame_rate == 20.0 for u in cfg.all_units())


def test_dt_must_divide_frame_period(tmp_path):
    with pytest.raises(ConfigError, match="divide"):
        load_config(write_cfg(tmp_path, {"dt_s": 0.03}))
    with pytest.raises(ConfigError, match="positive"):
        load_config(write_cfg(tmp_path, {"dt_s": -0.01}))
    cfg = load_config(write_cfg(tmp_path, {"dt_s": 0.01}))
    assert cfg.dt == 0.01


def test_layout_file_replaces_default_units(tmp_path):
    units = [u for u in default_layout() if u.sensor_id in ("rsu1", "rsu8")]
    layout = tmp_path / "layout.txt"
    layout.write_text(format_layout(units), encoding="utf-8")
    cfg = load_config(write_cfg(tmp_path, {"sensors": {"layout_file": str(layout)}}))
    assert [u.sensor_id for u in cfg.rsu_units] == ["rsu1", "rsu8"]
    assert [s.name for s in cfg.subsets] == ["vut", "rsu1", "rsu8", "any"]

    clash = [u for u in default_layout() if u.sensor_id == "rsu1"]
    clash.append(clash[0])  # duplicate id
    layout.write_text(format_layout(clash), encoding="utf-8")
    with pytest.raises(ConfigError, match="unique"):
        load_config(write_cfg(tmp_path, {"sensors": {"layout_file": str(layout)}}))


def test_layout_file_rate_must_match_scenario(tmp_path):
    slow = [u for u in default_layout(frame_rate=5.0) if u.sensor_id == "rsu0"]
    layout = tmp_path / "layout.txt"
    layout.write_text(format_layout(slow), encoding="utf-8")
    with pytest.raises(ConfigError, match="5 Hz.*10 Hz"):
        load_config(write_cfg(tmp_path, {"sensors": {"layout_file": str(layout)}}))


def test_subset_resolution(tmp_path):
    cfg = load_config(write_cfg(tmp_path, {"subsets": ["any", "rsu1", ["vut", "rsu1"]]}))
    assert [s.name for s in cfg.subsets] == ["any", "rsu1", "vut+rsu1"]
    assert cfg.subsets[2].sensor_ids == ("vut", "rsu1")
    assert len(cfg.subsets[0].sensor_ids) == 13

    with pytest.raises(ConfigError, match="unknown sensor"):
        load_config(write_cfg(tmp_path, {"subsets": ["nope"]}))
    with pytest.raises(ConfigError, match="duplicate sensor"):
        load_config(write_cfg(tmp_path, {"subsets": [["rsu1", "rsu1"]]}))
    with pytest.raises(ConfigError, match="duplicate subset"):
        load_config(write_cfg(tmp_path, {"subsets": ["rsu1", "rsu1"]}))
    with pytest.raises(ConfigError, match="non-empty list"):
        load_config(write_cfg(tmp_path, {"subsets": []}))


def test_subset_filter_keeps_request_order():
    cfg = load_config(subset_filter=("any", "vut"))
    assert [s.name for s in cfg.subsets] == ["any", "vut"]
    with pytest.raises(ConfigError, match="not configured.*available"):
        load_config(subset_filter=("mystery",))


def test_speed_filter_drops_empty_scenarios():
    cfg = load_config(speed_filter=(40.0,))
    assert all(v == (40.0,) for v in cfg.speeds_by_kind.values())
    # 20 km/h only exists for the crossing scenarios
    cfg20 = load_config(speed_filter=(20.0,))
    assert ScenarioKind.CBLA not in cfg20.scenarios
    assert ScenarioKind.CBNA in cfg20.scenarios
    with pytest.raises(ConfigError, match="removes every"):
        load_config(speed_filter=(13.0,))


def test_cli_style_overrides(tmp_path):
    cfg = load_config(
        write_cfg(tmp_path, {"out_dir": "elsewhere"}),
        out_dir="cli-dir",
        write_traces=True,
    )
    assert cfg.out_dir == "cli-dir"
    assert cfg.write_traces is True


def test_yaw_list(tmp_path):
    cfg = load_config(write_cfg(tmp_path, {"scene_yaw_deg": [0, 90, 180, 270]}))
    assert cfg.scene_yaws_deg == (0.0, 90.0, 180.0, 270.0)
    with pytest.raises(ConfigError, match="scene_yaw_deg"):
        load_config(write_cfg(tmp_path, {"scene_yaw_deg": []}))


def test_top_level_must_be_mapping(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="expected a mapping"):
        load_config(str(path))


def test_missing_file_raises_oserror():
    with pytest.raises(OSError):
        load_config("/nonexistent/config.yaml")
