import pytest
from hypothesis import given, settings, strategies as st

from cqms.config import ConfigError, JobConfig, parse_config, serialize_config

BUILTIN = """
[job]
kind = validate

[sequence]
builtin = interval_example
depth = 4
points_per_stage = 9
"""

INLINE_M2 = """
[job]
kind = metric
seed = 5
truncation = 2

[solver]
method = supergradient
tol = 1e-8

[sequence]
builtin = custom

[stage.1]
blocks = 2
seminorm = commutator
dirac = 1,0 0,1 ; 0,-1 -1,0
copies = 1

[stage.2]
blocks = 2
seminorm = commutator
dirac = 0,0 1,0 ; 1,0 0,0
copies = 1

[hom.1]
multiplicities = 1

[states]
state.1 = maximally_mixed
state.2 = pure 0 1,0 0,1
"""


def test_builtin_interval_config():
    cfg = parse_config(BUILTIN)
    assert cfg.kind == "validate"
    assert cfg.sequence.builtin == "interval_example"
    assert cfg.sequence.depth == 4 and cfg.sequence.points_per_stage == 9


def test_asymmetric_metric_names_pair():
    text = """
[job]
kind = validate
[sequence]
builtin = custom
[stage.1]
blocks = 1 1 1
seminorm = metric
metric = 0 1 2 ; 1 0 1 ; 3 1 0
"""
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    msg = "\n".join(err.value.problems)
    assert "asymmetric pair (0,2)" in msg
    assert "line 9" in msg


def test_non_square_metric_rejected():
    text = """
[job]
kind = validate
[sequence]
builtin = custom
[stage.1]
blocks = 1 1
seminorm = metric
metric = 0 1 ; 1 0 ; 2 2
"""
    with pytest.raises(ConfigError):
        parse_config(text)


def test_triangle_violation_located():
    text = """
[job]
kind = validate
[sequence]
builtin = custom
[stage.1]
blocks = 1 1 1
seminorm = metric
metric = 0 1 5 ; 1 0 1 ; 5 1 0
"""
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert any("triangle" in p and "line 9" in p for p in err.value.problems)


def test_unknown_key_and_section_rejected_with_lines():
    with pytest.raises(ConfigError) as err:
        parse_config("[job]\nkind = validate\ncolour = blue\n[extras]\nx = 1\n")
    problems = "\n".join(err.value.problems)
    assert "colour" in problems and "line 3" in problems
    assert "extras" in problems and "line 4" in problems


def test_missing_kind_rejected():
    with pytest.raises(ConfigError):
        parse_config("[sequence]\nbuiltin = interval_example\n")


def test_nonpositive_values_rejected():
    with pytest.raises(ConfigError):
        parse_config("[job]\nkind = metric\ntruncation = 0\n")
    with pytest.raises(ConfigError):
        parse_config("[job]\nkind = metric\n[solver]\ntol = -1\n")


def test_non_hermitian_dirac_rejected():
    text = INLINE_M2.replace("dirac = 0,0 1,0 ; 1,0 0,0\n", "dirac = 0,0 1,0 ; 2,0 0,0\n")
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert any("hermitian" in p for p in err.value.problems)


def test_inline_dirac_round_trip():
    cfg = parse_config(INLINE_M2)
    assert cfg.sequence.stages[0].seminorm == "commutator"
    assert cfg.sequence.stages[0].dirac[0][1] == complex(0, 1)
    again = parse_config(serialize_config(cfg))
    assert again == cfg
    assert serialize_config(again) == serialize_config(cfg)


@pytest.mark.parametrize("name", ["validate_interval", "prop36_interval", "section4_scaled",
                                  "section4_dilated", "metric_two_point", "distance_matrix_m2",
                                  "probe_m2", "limit_seminorm_uhf"])
def test_shipped_configs_round_trip(name, configs_dir):
    cfg = parse_config((configs_dir / f"{name}.ini").read_text())
    assert parse_config(serialize_config(cfg)) == cfg


@settings(max_examples=40, deadline=None)
@given(kind=st.sampled_from(["validate", "limit_seminorm", "verify_prop36",
                             "probe_total_boundedness", "distance_matrix"]),
       seed=st.integers(0, 2**31), pairs=st.integers(1, 500),
       tol=st.floats(1e-12, 1e-2), depth=st.integers(2, 8),
       eps=st.lists(st.floats(1e-3, 2.0), min_size=1, max_size=4))
def test_round_trip_property(kind, seed, pairs, tol, depth, eps):
    text = f"""
[job]
kind = {kind}
seed = {seed}
pairs = {pairs}
epsilon = {' '.join(repr(e) for e in eps)}
[solver]
tol = {tol!r}
[sequence]
builtin = interval_example
depth = {depth}
"""
    cfg = parse_config(text)
    assert isinstance(cfg, JobConfig)
    assert parse_config(serialize_config(cfg)) == cfg
