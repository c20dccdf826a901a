import pytest

from wavc.case import (Branch, Bus, Generator, GridCase, LoadParams, SvcParams, case_from_dict,
                       case_to_dict, load_case, save_case)
from wavc.errors import CaseError


def test_shipped_cases_load(case39):
    assert len(case39.load_ids) == 19
    assert len(load_case("case68").buses) >= 60
    assert load_case("case3").svc_ids == [3]


def test_json_roundtrip(case39, tmp_path):
    save_case(case39, tmp_path / "c.json")
    back = load_case(tmp_path / "c.json")
    assert case_to_dict(back) == case_to_dict(case39)
    assert case_to_dict(case_from_dict(case_to_dict(case39))) == case_to_dict(case39)


def _gen():
    return [Generator(1, 1.0, reference=True)]


@pytest.mark.parametrize("build", [
    lambda: GridCase([Bus(1, "generator"), Bus(1, "static")], [], generators=_gen()),
    lambda: GridCase([Bus(1, "generator"), Bus(2, "weird")], [], generators=_gen()),
    lambda: GridCase([Bus(1, "generator"), Bus(2, "dynamic_load")], [], generators=_gen()),
    lambda: GridCase([Bus(1, "generator"), Bus(2, "dynamic_load", load=LoadParams(0, 1, 0, 0))], [],
                     generators=_gen()),
    lambda: GridCase([Bus(1, "generator")], [Branch(1, 5, 0, 0.1)], generators=_gen()),
    lambda: GridCase([Bus(1, "generator")], [], generators=[Generator(1, 1.0)]),
    lambda: GridCase([Bus(1, "generator"), Bus(2, "static")], [], generators=_gen(), svcs=[SvcParams(2)]),
    lambda: GridCase([Bus(1, "generator"), Bus(2, "dynamic_load", load=LoadParams(1, 1, 0, 0))], [],
                     generators=_gen(), svcs=[SvcParams(2, alpha_min=3.0, alpha_max=2.0)]),
])
def test_validation(build):
    with pytest.raises(CaseError):
        build()


def test_derived_cases_do_not_alias(case39):
    tripped = case39.with_branch_status(26, 27, False)
    assert case39.branches[case39.find_branch(26, 27)].in_service
    assert not tripped.branches[tripped.find_branch(27, 26)].in_service
    scaled = case39.with_scaled_loads([4], 0.25, 0.0)
    assert scaled.bus(4).load.p == pytest.approx(1.25 * case39.bus(4).load.p)
    assert scaled.bus(4).load.q == case39.bus(4).load.q


def test_with_svcs_at(case39):
    sub = case39.with_svcs_at([3, 20])
    assert sub.svc_ids == [3, 20] and len(case39.svc_ids) > 2
    with pytest.raises(CaseError):
        case39.with_svcs_at([4])
