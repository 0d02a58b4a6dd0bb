import pytest
from hypothesis import given
from hypothesis import strategies as st

from dgff.config import ConfigError, parse_config, parse_config_text, serialize_config

MINIMAL = """
[run]
manifold = torus1
grid = lattice
n_list = 16, 32, 64

[functions]
cos1 = 2:1.0
"""

IID = """
[run]
manifold = sphere2
grid = iid
n_list = 32, 64
seed = 99

[bandwidth]
policy = fixed
t = 0.2

[functions]
a = 2:1.0, 5:-0.5
zero = 0
"""


def test_minimal_defaults():
    cfg = parse_config_text(MINIMAL)
    assert cfg.n_list == (16, 32, 64) and cfg.seed == 0 and cfg.draws == 2000
    assert cfg.times == (0.25, 0.5, 1.0)
    assert cfg.test_functions()["cos1"].coeffs == {2: 1.0}


@pytest.mark.parametrize("text", [MINIMAL, IID])
def test_roundtrip(text):
    cfg = parse_config_text(text)
    again = parse_config_text(serialize_config(cfg))
    assert again == cfg
    assert serialize_config(again) == serialize_config(cfg)


@given(st.lists(st.integers(2, 5000), min_size=1, max_size=6, unique=True).map(sorted),
       st.integers(0, 2**64 - 1), st.integers(0, 10**6), st.floats(0.51, 5))
def test_roundtrip_property(ns, seed, draws, s):
    text = f"""
[run]
manifold = torus2
grid = iid
n_list = {", ".join(map(str, ns))}
seed = {seed}
draws = {draws}
[bandwidth]
policy = schedule
ladder = 4, 8
[functions]
f = 3:{s!r}
[sobolev]
s = {s!r}
"""
    cfg = parse_config_text(text)
    assert parse_config_text(serialize_config(cfg)) == cfg


def test_file_parse(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text(MINIMAL)
    assert parse_config(path).manifold == "torus1"
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "missing.ini")


@pytest.mark.parametrize("patch,where", [
    (("n_list = 16, 32, 64", "n_list = 32, 16, 64"), "run.n_list"),
    (("n_list = 16, 32, 64", "n_list = 16, 16"), "run.n_list"),
    (("n_list = 16, 32, 64", "n_list = 2, 16"), "run.n_list"),
    (("cos1 = 2:1.0", "cos1 = 1:1.0"), "functions.cos1"),
    (("cos1 = 2:1.0", "cos1 = banana"), "functions.cos1"),
    (("grid = lattice", "grid = lattice\ncolour = red"), "run.colour"),
    (("grid = lattice", "grid = hexagonal"), "run.grid"),
    (("manifold = torus1", "manifold = klein"), "run.manifold"),
    (("[functions]", "[sobolev]\nJ = 3\n[functions]"), "sobolev.J"),
    (("[functions]", "[thresholds]\nsemigroup_abs = lots\n[functions]"), "thresholds.semigroup_abs"),
    (("grid = lattice", "grid = lattice\nseed = -1"), "run.seed"),
])
def test_errors_name_the_field(patch, where):
    with pytest.raises(ConfigError, match=where.replace(".", r"\.")):
        parse_config_text(MINIMAL.replace(*patch))


def test_unknown_section():
    with pytest.raises(ConfigError, match="extras"):
        parse_config_text(MINIMAL + "\n[extras]\nx = 1\n")


def test_lattice_only_on_tori():
    with pytest.raises(ConfigError, match="run.grid"):
        parse_config_text(MINIMAL.replace("torus1", "sphere2"))


def test_bandwidth_policy_rules():
    with pytest.raises(ConfigError, match="bandwidth.t"):
        parse_config_text(IID.replace("t = 0.2\n", ""))
    with pytest.raises(ConfigError, match="bandwidth.t"):
        parse_config_text(IID.replace("policy = fixed", "policy = wasserstein"))
    with pytest.raises(ConfigError, match="bandwidth.policy"):
        parse_config_text(IID.replace("policy = fixed", "policy = guess"))
    with pytest.raises(ConfigError, match="bandwidth.safety"):
        parse_config_text(IID.replace("t = 0.2", "t = 0.2\nsafety = 1.5"))
    with pytest.raises(ConfigError, match="malformed"):
        parse_config_text(IID + "\n[bandwidth]\n")
    # lattice grids ignore bandwidth settings entirely
    cfg = parse_config_text(MINIMAL + "\n[bandwidth]\npolicy = fixed\nt = 0.3\n")
    assert cfg.bandwidth.t is None


def test_zero_function_allowed():
    cfg = parse_config_text(IID)
    assert cfg.test_functions()["zero"].coeffs == {}
    assert cfg.functions["zero"] == "0"


def test_with_seed():
    cfg = parse_config_text(MINIMAL).with_seed(2**64 - 1)
    assert cfg.seed == 2**64 - 1
    with pytest.raises(ConfigError):
        cfg.with_seed(2**64)
