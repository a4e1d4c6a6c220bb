"""Domain-type invariants and scenario file round trips."""

import math

import numpy as np
import pytest

from righttrain.io import (load_scenario, save_scenario, scenario_from_dict,
                           scenario_to_dict)
from righttrain.model import (Allocation, Deployment, InstanceTree, ParseError,
                              ValidationError)

from conftest import chain_tree, make_scenario


def simple_scenario(**kwargs):
    return make_scenario(
        layer_specs=[(10.0, 0.5), (20.0, 2.0)],
        node_specs=[{"id": "n0", "compute": 100.0},
                    {"id": "n1", "compute": 100.0}],
        link_matrix=[[0, 50], [50, 0]],
        source_specs=[("d1", 10.0, "n0")],
        **kwargs)


def test_scenario_accessors():
    s = simple_scenario()
    assert s.n_layers == 2
    assert s.layer(2).compute_req == 20.0
    assert s.link("n0", "n1") == 50.0
    assert math.isinf(s.link("n0", "n0"))
    assert s.total_volume() == 10.0


def test_asymmetric_links_rejected():
    s = simple_scenario()
    s.links[0, 1] = 60.0
    with pytest.raises(ValidationError, match="symmetric"):
        s.validate()


def test_empty_sources_rejected():
    s = simple_scenario()
    s.sources = []
    with pytest.raises(ValidationError, match="data source"):
        s.validate()


def test_unknown_source_host_rejected():
    with pytest.raises(ValidationError, match="host"):
        make_scenario(layer_specs=[(1.0, 1.0)],
                      node_specs=[{"id": "n0", "compute": 1.0}],
                      link_matrix=[[0]],
                      source_specs=[("d1", 5.0, "ghost")])


def test_layer_invariants():
    with pytest.raises(ValidationError, match="data_ratio"):
        make_scenario(layer_specs=[(1.0, 0.0)],
                      node_specs=[{"id": "n0", "compute": 1.0}],
                      link_matrix=[[0]],
                      source_specs=[("d1", 5.0, "n0")])


def test_tree_validation_catches_gaps():
    s = simple_scenario()
    tree = chain_tree(2, ["d1"])
    tree.validate(s)

    missing_layer = InstanceTree(instances=[(1, 1)], edges=[("d1", (1, 1))],
                                 used_sources=["d1"])
    with pytest.raises(ValidationError, match="layer 2"):
        missing_layer.validate(s)

    skip = InstanceTree(instances=[(1, 1), (2, 1)],
                        edges=[("d1", (1, 1)), ((1, 1), (2, 1)), ("d1", (2, 1))],
                        used_sources=["d1"])
    with pytest.raises(ValidationError, match="outgoing"):
        skip.validate(s)

    starving = InstanceTree(instances=[(1, 1), (1, 2), (2, 1)],
                            edges=[("d1", (1, 1)), ((1, 1), (2, 1)),
                                   ((1, 2), (2, 1))],
                            used_sources=["d1"])
    with pytest.raises(ValidationError, match="incoming"):
        starving.validate(s)


def test_deployment_validation():
    s = simple_scenario()
    tree = chain_tree(2, ["d1"])
    Deployment({(1, 1): "n0", (2, 1): "n1"}).validate(tree, s)
    with pytest.raises(ValidationError, match="not deployed"):
        Deployment({(1, 1): "n0"}).validate(tree, s)
    s2 = make_scenario(layer_specs=[(10.0, 0.5), (20.0, 2.0)],
                       node_specs=[{"id": "n0", "compute": 100.0},
                                   {"id": "n1", "compute": 100.0,
                                    "mu": [1, 0]}],
                       link_matrix=[[0, 50], [50, 0]],
                       source_specs=[("d1", 10.0, "n0")])
    with pytest.raises(ValidationError, match="memory"):
        Deployment({(1, 1): "n0", (2, 1): "n1"}).validate(tree, s2)


def test_allocation_validation():
    s = simple_scenario()
    tree = chain_tree(2, ["d1"])
    Allocation(rho={(1, 1): 5.0, (2, 1): 5.0}, x={"d1": 10.0}).validate(tree, s)
    with pytest.raises(ValidationError, match="positive compute"):
        Allocation(rho={(1, 1): 0.0, (2, 1): 5.0}, x={"d1": 1.0}).validate(tree, s)
    with pytest.raises(ValidationError, match="more data"):
        Allocation(rho={(1, 1): 1.0, (2, 1): 1.0}, x={"d1": 11.0}).validate(tree, s)


def test_scenario_json_round_trip(tmp_path, small_preset):
    path = tmp_path / "scenario.json"
    save_scenario(small_preset, path)
    loaded = load_scenario(path)
    assert [n.id for n in loaded.nodes] == [n.id for n in small_preset.nodes]
    np.testing.assert_allclose(loaded.links, small_preset.links)
    for a, b in zip(loaded.layers, small_preset.layers):
        assert a.name == b.name
        assert a.compute_req == pytest.approx(b.compute_req)
    assert loaded.k_model == small_preset.k_model


def test_load_scenario_parse_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(ParseError):
        load_scenario(bad)
    with pytest.raises(ParseError):
        load_scenario(tmp_path / "missing.json")


def test_scenario_dict_validation_error(small_preset):
    raw = scenario_to_dict(small_preset)
    raw["links"]["matrix"][0][1] = 999.0  # break symmetry
    with pytest.raises(ValidationError, match="symmetric"):
        scenario_from_dict(raw)
