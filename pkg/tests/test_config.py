import json

import pytest

from glossforge.config import PipelineConfig, SimulationParams, StitchSection, load_config, save_config
from glossforge.errors import ConfigError


def test_round_trip(tmp_path):
    cfg = PipelineConfig(simulation=SimulationParams(width=64, height=32), stitch=StitchSection(jitter=2), seed=9)
    save_config(cfg, tmp_path / "c.json")
    back = load_config(tmp_path / "c.json")
    assert back == cfg
    assert back.hash() == cfg.hash()


def test_hash_changes_with_content():
    assert PipelineConfig().hash() != PipelineConfig(seed=1).hash()
    assert PipelineConfig().with_seed(None) == PipelineConfig()
    assert PipelineConfig().with_seed(4).seed == 4


@pytest.mark.parametrize("data", [
    {"colour": {}},
    {"mask": {"radius": 3}},
    {"seed": "1"},
    {"seed": True},
    {"stitch": []},
    {"scanner": {"theta_mount": -1}},
])
def test_strict_validation(data):
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict(data)


def test_bad_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)


def test_partial_sections_fill_defaults():
    cfg = PipelineConfig.from_dict({"mask": {"infill_radius": 12}})
    assert cfg.mask.infill_radius == 12
    assert cfg.mask.normal_deg == 10
    assert json.loads(cfg.canonical_json())["mask"]["infill_radius"] == 12
