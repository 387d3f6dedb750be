import json

import numpy as np
import pytest

from qblend.operators import SIGMA_X, SIGMA_Y, embed_product
from qblend.scenario import ScenarioError, load_scenario, parse_operator, scenario_from_dict


def test_parse_operator_terms():
    op = parse_operator("2*sx(1) - sqrt(4)*sz(2)*sz(3)", 3)
    want = 2 * embed_product({1: SIGMA_X}, 3) - 2 * embed_product({2: np.diag([1, -1]), 3: np.diag([1, -1])}, 3)
    assert np.allclose(op, want)


def test_pair_order():
    lt = parse_operator("pairs(sx, sy)", 3)
    gt = parse_operator("pairs(sx, sy)", 3, pair_order="gt")
    assert np.allclose(lt, sum(embed_product({j: SIGMA_X, k: SIGMA_Y}, 3) for j, k in ((1, 2), (1, 3), (2, 3))))
    assert np.allclose(gt, sum(embed_product({k: SIGMA_X, j: SIGMA_Y}, 3) for j, k in ((1, 2), (1, 3), (2, 3))))
    assert not np.allclose(lt, gt)


@pytest.mark.parametrize(
    "text",
    ["sx(4)", "foo(1)", "2", "sx(1)*sx(1)", "sum(sx)*sz(1)", "sx(1) +", "sx(1) / 2"],
)
def test_parse_errors(text):
    with pytest.raises(ScenarioError):
        parse_operator(text, 3)


def test_builtins_load(example1, example2, example3):
    assert example1.spec.n == 3 and example1.kcs == [70.0]
    assert np.trace(example3.spec.initial_state) == pytest.approx(1)
    assert example3.spec.initial_state[1, 1] == pytest.approx(1 / 6)
    assert example2.outputs == ["errors", "bloch"]


BASE = {"qubits": 2, "hamiltonian": "sz(1)", "initial_state": {"product": ["0", "1"]}}


@pytest.mark.parametrize(
    "patch, field",
    [
        ({"colour": 1}, "scenario"),
        ({"qubits": 9}, "qubits"),
        ({"graph": [[1, 1]]}, "graph"),
        ({"initial_state": {"product": ["0", "up"]}}, "initial_state.product"),
        ({"initial_state": {"basis_mixture": {"0": 1}}}, "initial_state.basis_mixture"),
        ({"lindblad": [{"rate": -1, "op": "sm(1)"}]}, "lindblad[0].rate"),
        ({"hamiltonian": "sp(1)"}, "hamiltonian"),
        ({"outputs": ["plots"]}, "outputs"),
        ({"initial_state": {"matrix": [[2, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, -1]]}}, "scenario"),
    ],
)
def test_errors_name_the_field(patch, field):
    with pytest.raises(ScenarioError) as info:
        scenario_from_dict({**BASE, **patch})
    assert info.value.field == field


def test_weighted_edges_and_gain_list():
    sc = scenario_from_dict({**BASE, "graph": [[1, 2, 0.5]], "kc": [1, 2]})
    assert sc.spec.graph.edges == ((1, 2, 0.5),)
    assert sc.kcs == [1.0, 2.0]


def test_json_file_and_yaml_error(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps(BASE))
    assert load_scenario(p).spec.n == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("qubits: 2\nhamiltonian: [unclosed\n")
    with pytest.raises(ScenarioError, match="line"):
        load_scenario(bad)
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "missing.yaml")
