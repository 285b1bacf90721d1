import json

import pytest

from sspwct.model import (
    ParseError,
    parse_instance,
    serialize_instance,
    validate_instance,
)
from sspwct.generator import GeneratorConfig, generate_instance

from conftest import branch, make_instance


def test_location_lower_bound_violation():
    inst = make_instance([], {}, [branch(n=1, location=(0,))])
    report = validate_instance(inst)
    assert any("location lower bound k <= l_k" in v for v in report.violations)


def test_location_vector_1_3_3_is_valid():
    inst = make_instance([], {}, [branch(n=3, location=(1, 3, 3))])
    assert not [v for v in validate_instance(inst).violations if "location" in v]


def test_duplicate_contract_in_slot_ranking():
    inst = make_instance(
        [("x", "a", "b")],
        {"a": ("x",)},
        [branch(n=1, original=[("x", "x")])],
    )
    report = validate_instance(inst)
    assert any("strict order violated" in v for v in report.violations)


def test_duplicate_in_preference_and_foreign_contract_listed():
    inst = make_instance(
        [("x", "a", "b"), ("y", "a2", "b2")],
        {"a": ("x", "x"), "a2": ("y",)},
        [branch("b", n=1, original=[("y",)]), branch("b2", n=1)],
    )
    violations = validate_instance(inst).violations
    assert any("preference a: strict order violated" in v for v in violations)
    assert any("belongs to branch b2" in v for v in violations)


def test_missing_preference_record_and_unknown_branch():
    inst = make_instance([("x", "a", "nowhere")], {}, [branch()])
    violations = validate_instance(inst).violations
    assert any("no preference record" in v for v in violations)
    assert any("unknown branch" in v for v in violations)


def test_transfer_bits_and_monotonicity():
    inst = make_instance([], {}, [branch(n=2, location=(2, 1), transfer=(2, 0))])
    violations = validate_instance(inst).violations
    assert any("must be 0 or 1" in v for v in violations)
    assert any("not nondecreasing" in v for v in violations)
    assert any("lower bound" in v for v in violations)  # l_2 = 1 < 2


def test_roundtrip_structural_equality():
    inst = make_instance(
        [("x", "a", "b"), ("y", "a2", "b")],
        {"a": ("x",), "a2": ("y",)},
        [branch(n=1, transfer=(1,), original=[("x",)], shadow=[("y", "x")])],
    )
    again = parse_instance(serialize_instance(inst))
    assert again == inst


def test_roundtrip_is_byte_identical():
    inst = generate_instance(GeneratorConfig(seed=5))
    text = serialize_instance(inst)
    assert serialize_instance(parse_instance(text)) == text


def test_parse_missing_transfer_names_the_field():
    inst = make_instance([], {}, [branch(n=1)])
    doc = json.loads(serialize_instance(inst))
    del doc["branches"][0]["transfer"]
    with pytest.raises(ParseError, match="transfer"):
        parse_instance(json.dumps(doc))


def test_parse_rejects_non_object_and_bad_types():
    with pytest.raises(ParseError):
        parse_instance("[1, 2]")
    with pytest.raises(ParseError, match="location"):
        parse_instance(
            json.dumps(
                {
                    "contracts": [],
                    "preferences": {},
                    "branches": [
                        {
                            "id": "b",
                            "n": 1,
                            "location": ["x"],
                            "transfer": [0],
                            "original_priorities": [[]],
                            "shadow_priorities": [[]],
                        }
                    ],
                }
            )
        )


def test_n2_config_with_four_slot_priorities_roundtrips_field_by_field():
    cfg = branch(
        n=2,
        location=(1, 2),
        transfer=(1, 0),
        original=[("x",), ("y",)],
        shadow=[("y", "x"), ()],
    )
    inst = make_instance(
        [("x", "a", "b"), ("y", "a2", "b")], {"a": ("x",), "a2": ("y",)}, [cfg]
    )
    again = parse_instance(serialize_instance(inst)).branches["b"]
    assert again.id == cfg.id
    assert again.n == cfg.n
    assert again.location == cfg.location
    assert again.transfer == cfg.transfer
    assert again.original_priorities == cfg.original_priorities
    assert again.shadow_priorities == cfg.shadow_priorities


def test_generator_output_always_validates():
    for seed in range(25):
        inst = generate_instance(GeneratorConfig(seed=seed))
        assert validate_instance(inst).ok
