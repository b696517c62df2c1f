import logging

import pytest

from multicue.config import ConfigError, KEYS, describe_keys, load_config, parse_config
from multicue.factors import FactorKind, WeightParams
from multicue.pipeline import PipelineConfig
from multicue.sim import FieldConfig, NoiseConfig, SteeringMode


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("")
    pipe, field_cfg, noise = load_config(p)
    assert pipe == PipelineConfig() and field_cfg == FieldConfig() and noise == NoiseConfig()
    assert pipe.step_wo == 0.3


def test_values_are_routed():
    pipe, field_cfg, noise = parse_config(
        "# comment\nlambda_mrf = 2.0\ncues = GPS+WO   # trailing\nseed = 4\nrow_spacing = 2.0\n"
        "mode = same_heading\noutages = 10,20,PPP; 30,40,RTK\nmax_iterations = 7\n")
    assert pipe.weights.lambda_mrf == 2.0
    assert pipe.cues == {FactorKind.GPS, FactorKind.WO}
    assert field_cfg.seed == noise.seed == 4
    assert field_cfg.row_spacing == pipe.row_spacing == 2.0
    assert field_cfg.mode == SteeringMode.SAME_HEADING
    assert noise.outages == ((10.0, 20.0, "PPP"), (30.0, 40.0, "RTK"))
    assert pipe.solver.max_iterations == 7
    assert pipe.weights == WeightParams(lambda_mrf=2.0)


def test_invalid_value_is_an_error():
    with pytest.raises(ConfigError, match="step_wo"):
        parse_config("step_wo = -1\n")


@pytest.mark.parametrize("text, where", [
    ("seed = 1\nthis line is wrong\n", ":2:"),
    ("\n\nlambda_mrf = abc\n", ":3:"),
])
def test_malformed_line_reports_line_number(text, where):
    with pytest.raises(ConfigError, match=where):
        parse_config(text)


def test_unknown_key_warns(caplog):
    with caplog.at_level(logging.WARNING):
        pipe, _, _ = parse_config("colour = blue\n")
    assert "colour" in caplog.text and pipe == PipelineConfig()


def test_every_key_is_documented():
    text = describe_keys()
    for key in KEYS:
        assert f"  {key} = " in text
