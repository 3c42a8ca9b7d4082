import json

import pytest

from mmrabi import ConfigError
from mmrabi.cli import main
from mmrabi.config import SCENARIOS, parse_config
from mmrabi.manifest import RunManifest
from mmrabi.scenarios import parallel_map, run


def test_overlap_defaults():
    spec = parse_config("overlap")
    assert spec.model.mode_count == 100
    assert spec.options["g_grid"] == pytest.approx(tuple(0.1 * k for k in range(1, 11)))
    sources = {o["key"]: o["source"] for o in spec.overrides()}
    assert sources["mode_count"] == "reference" and sources["g_grid"] == "reference"


def test_desk_defaults_are_flagged():
    sources = {o["key"]: o["source"] for o in parse_config("dynamics").overrides()}
    assert sources["mode_count"] == "desk"
    assert sources["g"] == "reference"


def test_flag_overrides_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"model": {"g": 0.3}, "mode_count": 7}))
    spec = parse_config("phase-space", ["--g=0.6", f"--config={cfg}"])
    assert spec.model.g == 0.6
    assert spec.model.mode_count == 7
    spec = parse_config("phase-space", [f"--config={cfg}"])
    assert spec.model.g == 0.3


@pytest.mark.parametrize("flags, path", [
    (["--mode-count=0"], "--mode-count"),
    (["--g=abc"], "--g"),
    (["--bogus=1"], "--bogus"),
    (["--engine=gpu"], "--engine"),
    (["--g-grid=0.1,x"], "--g-grid"),
    (["positional"], None),
])
def test_rejected_flags(flags, path):
    with pytest.raises(ConfigError) as info:
        parse_config("dynamics", flags)
    if path:
        assert info.value.key_path == path


def test_file_errors_carry_key_paths(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"model": {"mode_count": "ten"}}')
    with pytest.raises(ConfigError) as info:
        parse_config("overlap", config_path=bad)
    assert info.value.key_path == "model.mode_count"
    bad.write_text('{"evolution": {"g": 0.1}}')
    with pytest.raises(ConfigError) as info:
        parse_config("overlap", config_path=bad)
    assert info.value.key_path == "evolution.g"
    bad.write_text('{"model": ')
    with pytest.raises(ConfigError):
        parse_config("overlap", config_path=bad)
    with pytest.raises(ConfigError):
        parse_config("nonsense")


def test_list_syntax():
    spec = parse_config("overlap", ["--g-grid=0.2:0.4:3"])
    assert spec.options["g_grid"] == (0.2, 0.3, 0.4)
    spec = parse_config("causality", ["--mode-counts=5,7"])
    assert spec.options["mode_counts"] == (5, 7)


def test_run_writes_manifest_with_digests(tmp_path):
    spec = parse_config("critical-coupling", ["--mode-counts=10,20", f"--out={tmp_path}"])
    manifest = run(spec)
    assert set(manifest.outputs) == {"critical_coupling.csv", "critical_coupling.svg"}
    loaded = RunManifest.read(tmp_path)
    assert loaded == RunManifest.from_json(manifest.to_json())
    assert loaded.verify(tmp_path) == []
    listed = set(loaded.outputs) | {"manifest.json"}
    assert {p.name for p in tmp_path.iterdir()} == listed


def test_csv_outputs_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        run(parse_config("phase-space", ["--mode-count=5", "--n-max=5", "--samples=16", f"--out={d}"]))
    assert (a / "phase_space.csv").read_bytes() == (b / "phase_space.csv").read_bytes()
    assert b"\r" not in (a / "phase_space.csv").read_bytes()


def test_failed_run_still_writes_manifest(tmp_path):
    spec = parse_config("dynamics", ["--engine=exact", "--mode-count=12", "--fock-cutoff=6",
                                     "--auto-cutoff=false", "--g-grid=0.1", f"--out={tmp_path}"])
    with pytest.raises(Exception) as info:
        run(spec)
    assert info.value.exit_code == 3
    manifest = RunManifest.read(tmp_path)
    assert manifest.status == "failed" and "ResourceError" in manifest.error


def test_exit_codes(tmp_path, capsys):
    assert main(["overlap", "--mode-count=0"]) == 2
    assert main(["unknown"]) == 2
    assert main(["chain-check", "--mode-count=10", f"--out={tmp_path}"]) == 0
    assert main([]) == 0
    assert "scenarios:" in capsys.readouterr().out


def test_every_scenario_has_defaults():
    for name in SCENARIOS:
        parse_config(name)


def test_small_exact_dynamics_and_field_map(tmp_path):
    flags = ["--engine=exact", "--mode-count=2", "--fock-cutoff=5", "--t-final=1", "--stride=200"]
    m = run(parse_config("dynamics", flags + ["--g-grid=0,0.3", f"--out={tmp_path / 'd'}", "--svg=false"]))
    assert m.convergence["points"][0]["norm_drift"] < 1e-10
    m = run(parse_config("field-map", flags + [f"--out={tmp_path / 'f'}", "--x-points=21"]))
    assert "field_map.svg" in m.outputs
    # exact dynamics at tiny M is not the coherent solution, but both start from the vacuum field
    assert m.convergence["relative_l2_at_quarter_roundtrip"] >= 0


def test_worker_pool(monkeypatch):
    monkeypatch.setenv("MMRABI_WORKERS", "2")
    assert parallel_map(abs, [-1, -2, 3]) == [1, 2, 3]
    monkeypatch.setenv("MMRABI_WORKERS", "zero")
    with pytest.raises(ConfigError):
        parallel_map(abs, [1])
