import numpy as np
import pytest

from tether_guide.config import (
    ParseError,
    Scenario,
    SweepSpec,
    dump_config,
    load_config,
    load_preset,
    parse_text,
    preset_names,
    preset_text,
    write_config,
)
from tether_guide.control import Law
from tether_guide.model import ValidationError

MINIMAL = """
name = "mini"
[guidance]
target = [3.0, 4.0, 1.0]
"""


def test_bundled_presets_present():
    names = preset_names()
    for v in ("v0075", "v010", "v02"):
        for law in ("gamma", "gammaH"):
            assert f"table1_{v}_{law}" in names
    assert "speed_sweep" in names


@pytest.mark.parametrize("name", preset_names())
def test_preset_round_trip(name, tmp_path):
    cfg = load_preset(name)
    path = tmp_path / f"{name}.toml"
    write_config(cfg, path)
    assert load_config(path) == cfg
    assert parse_text(dump_config(cfg)) == cfg


def test_medium_pace_preset_parameters():
    sc = load_config("table1_v010_gammaH")
    assert isinstance(sc, Scenario)
    np.testing.assert_array_equal(sc.params.human.damping, 30 * np.eye(3))
    np.testing.assert_array_equal(sc.params.admittance.damping, 100 * np.eye(3))
    assert sc.law is Law.GAMMA_H


def test_defaults_fill_missing_keys():
    sc = parse_text(MINIMAL)
    assert sc.sim.dt == 1e-3 and sc.sim.duration == 60.0
    assert sc.params.cable.rest_length == 1.5
    np.testing.assert_allclose(sc.gamma_xy, [1.8, 2.4, 0])


def test_negative_admittance_damping_rejected():
    with pytest.raises(ValidationError, match="admittance damping must be positive definite"):
        parse_text(MINIMAL + "[admittance]\ndamping = -5\n")


def test_empty_file_is_parse_error(tmp_path):
    p = tmp_path / "empty.toml"
    p.write_text("\n  \n")
    with pytest.raises(ParseError):
        load_config(p)


def test_syntax_error_reports_position():
    with pytest.raises(ParseError) as info:
        parse_text('name = "x"\n[guidance]\ntarget = [1, 2,\n k_p = \n')
    assert info.value.line is not None and info.value.column is not None


@pytest.mark.parametrize("extra", ["[human]\nheight = 2\n", "colour = 1\n", "[plot]\nx = 1\n"])
def test_unknown_keys_rejected(extra):
    text = extra + MINIMAL if not extra.startswith("[") else MINIMAL + extra
    with pytest.raises(ValidationError, match="unknown"):
        parse_text(text)


def test_target_required():
    with pytest.raises(ValidationError, match="target"):
        parse_text('name = "x"\n')


def test_matrix_damping_accepted():
    sc = parse_text(MINIMAL + "[human]\ndamping = [[30, 0, 0], [0, 20, 0], [0, 0, 30]]\n")
    assert sc.params.human.damping[1, 1] == 20


def test_explicit_initial_state_needs_all_vectors():
    with pytest.raises(ValidationError, match="explicit"):
        parse_text(MINIMAL + '[initial]\nmode = "explicit"\np_H = [0, 0, 1]\n')


def test_walking_start_is_on_steady_trajectory():
    sc = parse_text(MINIMAL + '[initial]\nmode = "walking"\n')
    x = sc.sim.x0
    np.testing.assert_allclose(x.v_H, sc.gamma_xy / 30.0)
    np.testing.assert_array_equal(x.v_H, x.v_R)
    assert np.linalg.norm(x.p_R - x.p_H) > 1.5


def test_speed_sweep_grid():
    spec = load_config("speed_sweep")
    assert isinstance(spec, SweepSpec)
    grid = spec.grid()
    assert len(grid) == 6
    d_A = {(law, v): s.params.admittance.damping[0, 0] for _, law, v, s in grid}
    assert d_A[(Law.GAMMA, 15.0)] == 13
    assert [d_A[(Law.GAMMA_H, v)] for v in (40.0, 30.0, 15.0)] == [180, 100, 60]
    assert len({s.name for *_, s in grid}) == 6


def test_sweep_validation():
    base = MINIMAL + "[sweep]\naxis = \"human.damping\"\n"
    with pytest.raises(ValidationError):
        parse_text(base + "values = []\n")
    with pytest.raises(ValidationError, match="parameter path"):
        parse_text(MINIMAL + '[sweep]\naxis = "human.shoe_size"\nvalues = [1.0]\n')
    with pytest.raises(ValidationError, match="one entry per sweep value"):
        parse_text(base + 'values = [30.0, 15.0]\n[sweep.overrides.GammaH]\n"admittance.damping" = [1.0]\n')
    with pytest.raises(ValidationError):
        parse_text(base + "values = [-1.0]\n")


def test_preset_text_first_line_is_description():
    for name in preset_names():
        assert preset_text(name).startswith("# ")
    with pytest.raises(KeyError):
        preset_text("nope")
