# tests/test_config.py

from pathlib import Path

import pytest
from pydantic import ValidationError

from src.encoding.features import EncoderConfig
from src.engine.field import FieldConfig
from src.engine.rendering import RenderConfig
from src.engine.training import TrainConfig
from src.extraction.skeleton_extractor import SkeletonConfig
from src.utils.config import build_config, check_keys, dump_flat_config, known_keys, load_flat_config
from src.utils.errors import ConfigError

MODELS = (FieldConfig, TrainConfig, RenderConfig, SkeletonConfig, EncoderConfig)
DESK = Path(__file__).resolve().parents[1] / "data" / "desk.env"


def test_flat_files_ignore_comments(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("# data=/somewhere\n\ntrunk_width=32\nlr=0.001\n", encoding="utf-8")
    assert load_flat_config(path) == {"trunk_width": "32", "lr": "0.001"}
    assert load_flat_config(None) == {}
    with pytest.raises(FileNotFoundError):
        load_flat_config(tmp_path / "missing.env")


def test_later_layers_win_and_strings_are_coerced():
    cfg = build_config(TrainConfig, {"lr": "0.001", "iters": "10"}, {"iters": 20, "unrelated": 1})
    assert cfg.lr == 0.001 and cfg.iters == 20
    assert build_config(TrainConfig, {"iters": None}).iters == 2000


def test_unknown_keys_are_rejected():
    allowed = known_keys(*MODELS)
    assert allowed["lambda_h"] is TrainConfig and allowed["tau"] is SkeletonConfig
    check_keys({"K": "16", "workers": "2"}, allowed, "ok.env")
    with pytest.raises(ConfigError, match="lamda_h"):
        check_keys({"lamda_h": "0.5"}, allowed, "typo.env")


def test_invalid_values_fail_validation():
    with pytest.raises(ValidationError):
        build_config(FieldConfig, {"trunk_depth": "3", "skip_at": "3"})
    with pytest.raises(ValidationError):
        build_config(EncoderConfig, {"encoder": "clip"})


def test_dump_round_trips_through_a_file(tmp_path):
    models = [m() for m in MODELS]
    text = dump_flat_config(*models)
    lines = text.splitlines()
    assert lines == sorted(lines)
    path = tmp_path / "resolved.env"
    path.write_text(text, encoding="utf-8")
    values = load_flat_config(path)
    for model in models:
        assert build_config(type(model), values) == model


def test_desk_config_is_complete():
    values = load_flat_config(DESK)
    check_keys(values, known_keys(*MODELS), str(DESK))
    field_cfg = build_config(FieldConfig, values)
    assert (field_cfg.trunk_width, field_cfg.head_width, field_cfg.K, field_cfg.F_dim) == (64, 64, 16, 9)
    assert build_config(TrainConfig, values).iters == 2000
    assert build_config(SkeletonConfig, values).tau == 0.15
