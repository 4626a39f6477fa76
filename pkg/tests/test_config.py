import pytest
from hypothesis import given
from hypothesis import strategies as st

from subdiff.config import RunSpec, parse_config, serialize, with_overrides
from subdiff.errors import ConfigError
from subdiff.temporal import SuperconvPolicy

BASE = """\
# temporal study
case = ex1
delta = 0.6
r = 2
M = 128
N = 16, 32, 64
policy = offset 0.6
"""


def test_parse_example():
    spec = parse_config(BASE)
    assert spec.case == "ex1" and spec.problem == "subdiffusion"
    assert spec.N == (16, 32, 64) and spec.M == (128,)
    assert spec.r == 2.0 and spec.policy == SuperconvPolicy.offset(0.6)
    assert spec.source == "analytic" and spec.out is None


def test_ex3_defaults_to_mobile_immobile():
    spec = parse_config("case = ex3\nN = 8 16\nM = 256\n")
    assert spec.problem == "mobile_immobile"


def test_r_below_one_names_line_and_constraint():
    text = BASE.replace("r = 2", "r = 0.5")
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    msg = str(info.value)
    assert info.value.line == 4 and msg.startswith("line 4:")
    assert "r" in msg and "r >= 1" in msg


@pytest.mark.parametrize("text,line,fragment", [
    (BASE + "gamma = 3\n", 8, "unknown key"),
    (BASE + "delta = 0.4\n", 8, "duplicate"),
    (BASE + "p = two\n", 8, "malformed"),
    (BASE + "just words\n", 8, "key = value"),
    (BASE + "policy2 = x\n", 8, "unknown key"),
    (BASE.replace("policy = offset 0.6", "policy = sideways"), 7, "malformed"),
    (BASE.replace("N = 16, 32, 64", "N = 32, 16"), 6, "strictly increasing"),
    (BASE.replace("delta = 0.6", "delta = 0.95"), 3, "delta"),
    ("case = ex3\nr = 2\nN = 8\nM = 4\n", 2, "uniform"),
    ("case = ex2\nproblem = mobile_immobile\nN = 8\nM = 4\n", 2, "subdiffusion"),
    (BASE + "source = exact\n", 8, "source"),
    (BASE + "quad_degree = 4\n", 8, "quad_degree"),
])
def test_errors_name_line(text, line, fragment):
    with pytest.raises(ConfigError, match=fragment) as info:
        parse_config(text)
    assert info.value.line == line


@pytest.mark.parametrize("drop", ["case", "N", "M"])
def test_missing_required_key(drop):
    text = "\n".join(l for l in BASE.splitlines() if not l.startswith(drop + " "))
    with pytest.raises(ConfigError, match=f"missing required key '{drop}'") as info:
        parse_config(text)
    assert info.value.line == 0


def test_comments_and_blank_lines_ignored():
    text = "\n\n  # nothing\ncase = ex2   # trailing\nN = 4\n\nM = 2\n"
    assert parse_config(text).case == "ex2"


policies = st.one_of(
    st.just(SuperconvPolicy.interval_min()),
    st.floats(0.05, 0.95).map(SuperconvPolicy.offset),
    st.floats(0.05, 0.95).map(SuperconvPolicy.offset_frac),
    st.just(SuperconvPolicy.newton()),
    st.just(SuperconvPolicy.at_left()),
    st.just(SuperconvPolicy.at_right()),
)
increasing = st.lists(st.integers(1, 512), min_size=1, max_size=5, unique=True).map(lambda v: tuple(sorted(v)))


@st.composite
def specs(draw):
    case = draw(st.sampled_from(["ex1", "ex2", "ex3"]))
    return RunSpec(
        case=case,
        N=draw(increasing),
        M=draw(increasing),
        delta=draw(st.floats(0.01, 0.89)),
        alpha0=draw(st.floats(0.0, 0.99)),
        alphaT=draw(st.floats(0.0, 0.99)),
        r=1.0 if case == "ex3" else draw(st.floats(1.0, 5.0)),
        p=draw(st.sampled_from([1, 2])),
        policy=draw(policies),
        cg_tol=draw(st.floats(1e-14, 1e-6)),
        quad_degree=draw(st.sampled_from([6, 8, 10])),
        source=draw(st.sampled_from(["analytic", "discrete"])),
        out=draw(st.one_of(st.none(), st.sampled_from(["out.csv", "results/t1.csv"]))),
    )


@given(specs())
def test_round_trip(spec):
    assert parse_config(serialize(spec)) == spec


def test_overrides_skip_none():
    spec = parse_config(BASE)
    assert with_overrides(spec, out=None) == spec
    assert with_overrides(spec, out="x.csv").out == "x.csv"
