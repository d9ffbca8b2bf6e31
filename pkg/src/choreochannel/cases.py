"""Shipped evaluation cases and the end-to-end compile pipeline."""

from __future__ import annotations

import json
from importlib import resources

from .bpmn import ChoreographyModel, parse_choreography, validate_model
from .machine import ProcessStateMachine, TaskRequest, compile_state_machine
from .petri import InteractionNet, SafeOk, check_safeness, reduce_net, to_interaction_net

CASES = ("supply_chain", "incident_management")


def normalize_case(name: str) -> str:
    key = name.replace("-", "_")
    if key not in CASES:
        raise ValueError(f"unknown case {name!r}; expected one of {', '.join(CASES)}")
    return key


def fixture_bytes(case: str) -> bytes:
    case = normalize_case(case)
    return resources.files("choreochannel.fixtures").joinpath(f"{case}.bpmn").read_bytes()


def load_model(case: str) -> ChoreographyModel:
    return parse_choreography(fixture_bytes(case))


def load_variants(case: str) -> list[list[TaskRequest]]:
    """Conforming variant traces shipped with the case."""
    case = normalize_case(case)
    raw = resources.files("choreochannel.fixtures").joinpath(f"{case}.variants.json").read_text()
    data = json.loads(raw)
    return [
        [TaskRequest(e["task_id"], e["initiator"], bytes.fromhex(e.get("choice", "")))
         for e in variant]
        for variant in data["variants"]
    ]


def compile_model(model: ChoreographyModel, state_bound: int = 20000) -> ProcessStateMachine:
    """parse -> net -> safeness -> reduce -> machine, refusing unsafe models."""
    diags = validate_model(model)
    if diags:
        raise ValueError(f"invalid model: {diags[0].rule} at {diags[0].node_id}")
    net = to_interaction_net(model)
    verdict = check_safeness(net, state_bound)
    if not isinstance(verdict, SafeOk):
        raise ValueError(f"model is not compilable: {verdict}")
    reduced = reduce_net(net)
    return compile_state_machine(reduced)


def build_nets(case: str) -> tuple[InteractionNet, InteractionNet]:
    """(original, reduced) nets of a shipped case; used by oracle tests."""
    net = to_interaction_net(load_model(case))
    return net, reduce_net(net)


def build_machine(case: str) -> ProcessStateMachine:
    return compile_model(load_model(case))
