import pytest
from hypothesis import given, strategies as st

from cvqkd.config import SessionConfig, dump_config, load_config, parse_config


def test_defaults_match_reference_point():
    c = SessionConfig()
    assert (c.va, c.eta, c.v_el, c.frame_len, c.test_pulses, c.block_len) == (40, 0.6, 0.01, 100, 20, 50000)
    assert c.modulator_variance == pytest.approx(0.04)
    assert c.phase_noise_variance == pytest.approx(0.01)
    assert c.data_per_frame == 80 and c.frames_per_block == 500


def test_noise_budget_scales_with_va():
    c = SessionConfig(va=20)
    assert c.modulator_variance == pytest.approx(0.02)
    assert c.phase_noise_variance == pytest.approx(0.005)


def test_parse_comments_and_blank_lines():
    c = parse_config("# reference\nva = 30\n\n  eta=0.5   # detector\ndistance = 25\n")
    assert c.va == 30 and c.eta == 0.5 and c.distance == 25
    assert c.channel_gain == pytest.approx(10 ** -0.5)


def test_unknown_key_rejected():
    with pytest.raises(ValueError, match="unknown key"):
        parse_config("vb = 3")


def test_missing_equals_rejected():
    with pytest.raises(ValueError):
        parse_config("va 3")


def test_bool_parsing():
    assert parse_config("attack_data_only = yes").attack_data_only is True
    with pytest.raises(ValueError):
        parse_config("attack_data_only = maybe")


@pytest.mark.parametrize("bad", ["blocks = 0", "block_len = 50050", "test_pulses = 100", "attack = laser",
                                 "mode = optimistic", "beta = 0", "link_delay = 100"])
def test_validation(bad):
    with pytest.raises(ValueError):
        parse_config(bad)


@given(
    va=st.floats(1, 100), eta=st.floats(0.1, 1), seed=st.integers(0, 2**31),
    distance=st.one_of(st.none(), st.floats(0, 200)), blocks=st.integers(1, 5),
)
def test_round_trip(va, eta, seed, distance, blocks):
    c = SessionConfig(va=va, eta=eta, seed=seed, distance=distance, blocks=blocks)
    assert parse_config(dump_config(c)) == c


def test_load(tmp_path):
    p = tmp_path / "session.conf"
    p.write_text("va = 12\n")
    assert load_config(p).va == 12
