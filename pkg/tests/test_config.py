import pytest

from exactsos.config import load_config
from exactsos.pipeline import PipelineConfig


def test_defaults_without_file():
    cfg = load_config()
    assert cfg == PipelineConfig()
    assert cfg.budget_k == 32 and cfg.timeout_s == 3600
    assert cfg.refine.tol_tau == 1e-15 and cfg.reward.alpha == 0.5 and cfg.reward.c_hard == 0.5


def test_sections_and_types(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text(
        "[pipeline]\nbudget_k = 8\ntimeout_s = 12.5\nemit_lean = no\nsource = replay\nreplay_path = a.sos\n"
        "[refine]\nprecision_bits = 512\ntol_tau = 1e-20\n"
        "[recover]\ndenom_bound = 1e9\nlll_delta = 99/100\n"
        "[lean]\nvariable_names = a b c\nlean_check_command = lake env lean\n"
        "[http]\nurl = http://localhost:9/x\n"
    )
    cfg = load_config(path)
    assert cfg.budget_k == 8 and cfg.timeout_s == 12.5 and cfg.emit_lean is False
    assert cfg.source == "replay" and cfg.replay_path == "a.sos"
    assert cfg.refine.precision_bits == 512 and cfg.refine.tol_tau == 1e-20
    assert cfg.recover.denom_bound == 10**9 and cfg.recover.lll_delta.denominator == 100
    assert cfg.lean.variable_names == ["a", "b", "c"]
    assert cfg.lean.lean_check_command == ["lake", "env", "lean"]
    assert cfg.http.url == "http://localhost:9/x"


@pytest.mark.parametrize(
    "text",
    ["[pipeline]\nbogus = 1\n", "[nope]\na = 1\n", "[pipeline]\nemit_lean = maybe\n", "[pipeline]\nbudget_k = 0\n"],
)
def test_errors(tmp_path, text):
    path = tmp_path / "c.ini"
    path.write_text(text)
    with pytest.raises(ValueError):
        load_config(path)


def test_bundled_example_config_loads():
    from pathlib import Path

    path = Path(__file__).resolve().parent.parent / "exactsos.example.ini"
    cfg = load_config(path)
    assert cfg == PipelineConfig()
