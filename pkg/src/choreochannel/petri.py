"""Interaction Petri nets: construction from choreographies, reduction, analysis.

The net is the middle layer between the parsed choreography and the compiled
state machine. Labelled transitions carry initiator/respondent roles; silent
transitions come from gateways and empty exclusive branches. Reduction removes
silent transitions only where the observable trace language provably stays
the same; `traces_equivalent` is the oracle that backs every rule.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from collections import deque
from dataclasses import dataclass

from .bpmn import ChoreographyModel, GatewayKind, validate_model


@dataclass(frozen=True)
class TaskLabel:
    task_id: str
    initiator: str
    respondent: str


@dataclass(frozen=True)
class NetTransition:
    id: str
    inputs: frozenset[str]
    outputs: frozenset[str]
    label: TaskLabel | None

    @property
    def silent(self) -> bool:
        return self.label is None


@dataclass(frozen=True)
class InteractionNet:
    """1-safe labelled net; place and transition order is document order."""

    places: tuple[str, ...]
    transitions: tuple[NetTransition, ...]
    initial_place: str
    final_places: frozenset[str]

    def silent_count(self) -> int:
        return sum(1 for t in self.transitions if t.silent)

    def labelled(self) -> tuple[NetTransition, ...]:
        return tuple(t for t in self.transitions if not t.silent)


class StateSpaceError(RuntimeError):
    """Exploration exceeded the configured node budget."""


@dataclass(frozen=True)
class SafeOk:
    explored: int


@dataclass(frozen=True)
class UnsafeWitness:
    firing_sequence: tuple[str, ...]
    place: str


@dataclass(frozen=True)
class BoundExceeded:
    explored: int


SafenessResult = SafeOk | UnsafeWitness | BoundExceeded


def to_interaction_net(model: ChoreographyModel) -> InteractionNet:
    """Map a validated choreography onto an interaction Petri net.

    Tasks become labelled transitions, parallel gateways silent transitions,
    exclusive gateways and events places. A flow between two place-like nodes
    merges them when one side has no alternative flows; otherwise a silent
    transition keeps the exclusive choice intact.
    """
    diags = validate_model(model)
    if diags:
        raise ValueError(f"model is invalid: {diags[0].rule} at {diags[0].node_id}")

    is_place_node: dict[str, bool] = {model.start_event: True}
    for eid in model.end_events:
        is_place_node[eid] = True
    for gw in model.gateways:
        is_place_node[gw.id] = gw.kind is GatewayKind.EXCLUSIVE
    for task in model.tasks:
        is_place_node[task.id] = False

    # Union-find over place-mapped nodes, with live degree bookkeeping so each
    # merge decision sees the degrees of the *current* net, not the original.
    parent: dict[str, str] = {}
    order: dict[str, int] = {}
    in_deg: dict[str, int] = {}
    out_deg: dict[str, int] = {}

    def add_place(pid: str) -> None:
        parent[pid] = pid
        order[pid] = len(order)
        in_deg[pid] = sum(1 for _, tgt in model.flows if tgt == pid)
        out_deg[pid] = sum(1 for src, _ in model.flows if src == pid)

    for nid, placey in is_place_node.items():
        if placey:
            add_place(nid)

    def find(pid: str) -> str:
        while parent[pid] != pid:
            parent[pid] = parent[parent[pid]]
            pid = parent[pid]
        return pid

    def union(a: str, b: str) -> None:
        ra, rb = find(a), find(b)
        keep, gone = (ra, rb) if order[ra] <= order[rb] else (rb, ra)
        parent[gone] = keep
        in_deg[keep] = in_deg[ra] + in_deg[rb] - 1
        out_deg[keep] = out_deg[ra] + out_deg[rb] - 1

    silent_flow_taus: list[tuple[str, str, str]] = []
    for src, tgt in model.flows:
        if is_place_node.get(src) and is_place_node.get(tgt):
            rs, rt = find(src), find(tgt)
            if rs == rt:
                # Parallel or looped silent edge onto one place: a no-op.
                in_deg[rs] -= 1
                out_deg[rs] -= 1
                continue
            # Merging is sound when the token must flow on (src has no other
            # exit) or when every token in tgt originates from src; the start
            # place carries the initial token, an extra source no flow shows.
            if out_deg[rs] == 1 or (in_deg[rt] == 1 and rt != find(model.start_event)):
                union(rs, rt)
            else:
                silent_flow_taus.append((f"tau_{src}__{tgt}", src, tgt))

    # Transitions in document order: tasks, parallel gateways, then the silent
    # transitions inserted for unmergeable place-to-place flows.
    trans_inputs: dict[str, set[str]] = {}
    trans_outputs: dict[str, set[str]] = {}
    trans_order: list[str] = []
    labels: dict[str, TaskLabel | None] = {}

    for task in model.tasks:
        trans_order.append(task.id)
        trans_inputs[task.id] = set()
        trans_outputs[task.id] = set()
        labels[task.id] = TaskLabel(task.id, task.initiator, task.respondent)
    for gw in model.gateways:
        if gw.kind is GatewayKind.PARALLEL:
            trans_order.append(gw.id)
            trans_inputs[gw.id] = set()
            trans_outputs[gw.id] = set()
            labels[gw.id] = None
    for tau_id, src, tgt in silent_flow_taus:
        trans_order.append(tau_id)
        trans_inputs[tau_id] = {find(src)}
        trans_outputs[tau_id] = {find(tgt)}
        labels[tau_id] = None

    extra_places: list[str] = []
    for src, tgt in model.flows:
        src_place = is_place_node.get(src, False)
        tgt_place = is_place_node.get(tgt, False)
        if src_place and tgt_place:
            continue
        if src_place:
            trans_inputs[tgt].add(find(src))
        elif tgt_place:
            trans_outputs[src].add(find(tgt))
        else:
            mid = f"p_{src}__{tgt}"
            extra_places.append(mid)
            trans_outputs[src].add(mid)
            trans_inputs[tgt].add(mid)

    merged_places = [pid for pid in sorted(order, key=order.get) if find(pid) == pid]
    places = tuple(merged_places + extra_places)
    transitions = tuple(
        NetTransition(
            id=tid,
            inputs=frozenset(trans_inputs[tid]),
            outputs=frozenset(trans_outputs[tid]),
            label=labels[tid],
        )
        for tid in trans_order
    )
    return InteractionNet(
        places=places,
        transitions=transitions,
        initial_place=find(model.start_event),
        final_places=frozenset(find(e) for e in model.end_events),
    )


def reduce_net(net: InteractionNet) -> InteractionNet:
    """Remove silent transitions while preserving the observable trace language.

    Applied rules (each skipped whenever a guard cannot be discharged):
      * drop no-op silents whose pre- and post-set coincide;
      * fuse a silent into the producers of its sole, conflict-free pre-place;
      * fuse a silent into the consumers of its sole, privately-fed post-place;
      * bypass a remaining place-to-place silent by duplicating the labelled
        consumers of its post-place onto its pre-place.
    Guards keep initial/final places intact and never touch a rule application
    that would need arc weights or would drop completion information, so some
    silent transitions can legitimately survive.
    """
    places = list(net.places)
    trans: list[dict] = [
        {"id": t.id, "inputs": set(t.inputs), "outputs": set(t.outputs), "label": t.label}
        for t in net.transitions
    ]
    initial = net.initial_place
    finals = set(net.final_places)

    def producers(p: str) -> list[dict]:
        return [t for t in trans if p in t["outputs"]]

    def consumers(p: str) -> list[dict]:
        return [t for t in trans if p in t["inputs"]]

    changed = True
    while changed:
        changed = False
        for t in list(trans):
            if t["label"] is not None:
                continue
            if _rule_noop(t, trans):
                changed = True
                break
            if _rule_fuse_pre(t, trans, places, producers, initial, finals):
                changed = True
                break
            if _rule_fuse_post(t, trans, places, consumers, initial, finals):
                changed = True
                break
            if _rule_bypass(t, trans, consumers, finals):
                changed = True
                break

    return InteractionNet(
        places=tuple(places),
        transitions=tuple(
            NetTransition(t["id"], frozenset(t["inputs"]), frozenset(t["outputs"]), t["label"])
            for t in trans
        ),
        initial_place=initial,
        final_places=frozenset(finals),
    )


def _rule_noop(t: dict, trans: list[dict]) -> bool:
    if t["inputs"] != t["outputs"]:
        return False
    trans.remove(t)
    return True


def _rule_fuse_pre(t, trans, places, producers, initial, finals) -> bool:
    if len(t["inputs"]) != 1:
        return False
    (p,) = t["inputs"]
    if p == initial or p in finals or p in t["outputs"]:
        return False
    consumers_of_p = [x for x in trans if p in x["inputs"]]
    if consumers_of_p != [t]:
        return False
    prods = producers(p)
    if any((u["outputs"] - {p}) & t["outputs"] for u in prods):
        return False
    for u in prods:
        u["outputs"].discard(p)
        u["outputs"].update(t["outputs"])
    places.remove(p)
    trans.remove(t)
    return True


def _rule_fuse_post(t, trans, places, consumers, initial, finals) -> bool:
    if len(t["outputs"]) != 1:
        return False
    (q,) = t["outputs"]
    if q == initial or q in finals or q in t["inputs"]:
        return False
    producers_of_q = [x for x in trans if q in x["outputs"]]
    if producers_of_q != [t]:
        return False
    cons = consumers(q)
    if not cons:
        return False
    if any((v["inputs"] - {q}) & t["inputs"] for v in cons):
        return False
    for v in cons:
        v["inputs"].discard(q)
        v["inputs"].update(t["inputs"])
    places.remove(q)
    trans.remove(t)
    return True


def _rule_bypass(t, trans, consumers, finals) -> bool:
    if len(t["inputs"]) != 1 or len(t["outputs"]) != 1:
        return False
    (p,) = t["inputs"]
    (q,) = t["outputs"]
    if p == q or q in finals:
        return False
    cons = consumers(q)
    if not cons or any(c["label"] is None for c in cons):
        return False
    if any(p in c["inputs"] for c in cons):
        return False
    for c in cons:
        dup_inputs = (c["inputs"] - {q}) | {p}
        exists = any(
            x["inputs"] == dup_inputs and x["outputs"] == c["outputs"] and x["label"] == c["label"]
            for x in trans
        )
        if not exists:
            trans.append(
                {
                    "id": f"{c['id']}__via_{p}",
                    "inputs": set(dup_inputs),
                    "outputs": set(c["outputs"]),
                    "label": c["label"],
                }
            )
    trans.remove(t)
    return True


def check_safeness(net: InteractionNet, state_bound: int = 20000) -> SafenessResult:
    """Exhaustively explore reachable markings, counting tokens per place.

    Returns a witness firing sequence as soon as any place would hold two
    tokens; returns BoundExceeded when more than `state_bound` markings exist.
    """
    initial = frozenset({(net.initial_place, 1)})
    seen: set[frozenset] = {initial}
    queue: deque[frozenset] = deque([initial])
    parents: dict[frozenset, tuple[frozenset, str] | None] = {initial: None}

    def path_to(marking: frozenset, last: str) -> tuple[str, ...]:
        seq = [last]
        cur = marking
        while parents[cur] is not None:
            prev, tid = parents[cur]
            seq.append(tid)
            cur = prev
        return tuple(reversed(seq))

    while queue:
        marking = queue.popleft()
        counts = dict(marking)
        for t in net.transitions:
            if any(counts.get(p, 0) < 1 for p in t.inputs):
                continue
            nxt = dict(counts)
            for p in t.inputs:
                nxt[p] -= 1
            for p in t.outputs:
                nxt[p] = nxt.get(p, 0) + 1
            for p, n in nxt.items():
                if n > 1:
                    return UnsafeWitness(firing_sequence=path_to(marking, t.id), place=p)
            key = frozenset((p, n) for p, n in nxt.items() if n)
            if key in seen:
                continue
            if len(seen) >= state_bound:
                return BoundExceeded(explored=len(seen))
            seen.add(key)
            parents[key] = (marking, t.id)
            queue.append(key)
    return SafeOk(explored=len(seen))


def _is_final_marking(net: InteractionNet, marking: frozenset[str]) -> bool:
    return bool(marking & net.final_places) and marking <= net.final_places


def trace_language(
    net: InteractionNet, max_len: int, node_budget: int = 200_000
) -> tuple[frozenset[tuple[str, ...]], frozenset[tuple[str, ...]]]:
    """Observable language up to `max_len` by exhaustive reachability.

    Returns (traces, completed): all label sequences with silent transitions
    erased, and the subset after which a final marking is reached. Finer
    equivalences (refusals, bisimulation) are deliberately out of scope.
    """
    start = frozenset({net.initial_place})
    seen: set[tuple[frozenset[str], tuple[str, ...]]] = {(start, ())}
    queue: deque[tuple[frozenset[str], tuple[str, ...]]] = deque([(start, ())])
    traces: set[tuple[str, ...]] = set()
    completed: set[tuple[str, ...]] = set()

    while queue:
        marking, trace = queue.popleft()
        traces.add(trace)
        if _is_final_marking(net, marking):
            completed.add(trace)
        for t in net.transitions:
            if not t.inputs <= marking:
                continue
            if t.silent:
                nxt = ((marking - t.inputs) | t.outputs, trace)
            elif len(trace) < max_len:
                nxt = ((marking - t.inputs) | t.outputs, trace + (t.label.task_id,))
            else:
                continue
            if nxt not in seen:
                if len(seen) >= node_budget:
                    raise StateSpaceError(
                        f"trace exploration exceeded {node_budget} nodes; lower max_len"
                    )
                seen.add(nxt)
                queue.append(nxt)
    return frozenset(traces), frozenset(completed)


def _silent_closure(net: InteractionNet, markings) -> frozenset[frozenset[str]]:
    seen = set(markings)
    stack = list(markings)
    while stack:
        m = stack.pop()
        for t in net.transitions:
            if t.silent and t.inputs <= m:
                nxt = (m - t.inputs) | t.outputs
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
    return frozenset(seen)


def _det_initial(net: InteractionNet) -> frozenset[frozenset[str]]:
    return _silent_closure(net, [frozenset({net.initial_place})])


def _det_labels(net: InteractionNet, det: frozenset[frozenset[str]]) -> set[str]:
    return {
        t.label.task_id
        for t in net.transitions
        if not t.silent
        for m in det
        if t.inputs <= m
    }


def _det_fire(net: InteractionNet, det, task_id: str) -> frozenset[frozenset[str]]:
    moved = [
        (m - t.inputs) | t.outputs
        for t in net.transitions
        if not t.silent and t.label.task_id == task_id
        for m in det
        if t.inputs <= m
    ]
    return _silent_closure(net, moved)


def _det_completed(net: InteractionNet, det) -> bool:
    return any(_is_final_marking(net, m) for m in det)


def traces_equivalent(
    a: InteractionNet, b: InteractionNet, max_len: int, node_budget: int = 200_000
) -> bool:
    """Oracle for reduction correctness: equal observable trace sets and equal
    completed-trace sets up to max_len.

    Walks the determinized reachability of both nets in lockstep (markings
    grouped by observable prefix, silent moves closed away), so the comparison
    is exact for the bounded language without materializing it.
    """
    start = (_det_initial(a), _det_initial(b))
    seen = {start}
    queue: deque = deque([(*start, 0)])
    while queue:
        da, db, depth = queue.popleft()
        if _det_completed(a, da) != _det_completed(b, db):
            return False
        if depth >= max_len:
            continue
        labels_a = _det_labels(a, da)
        if labels_a != _det_labels(b, db):
            return False
        for task_id in sorted(labels_a):
            pair = (_det_fire(a, da, task_id), _det_fire(b, db, task_id))
            if pair not in seen:
                if len(seen) >= node_budget:
                    raise StateSpaceError(
                        f"equivalence exploration exceeded {node_budget} nodes; lower max_len"
                    )
                seen.add(pair)
                queue.append((*pair, depth + 1))
    return True


def to_pnml(net: InteractionNet) -> bytes:
    """Dump the net in PNML for inspection with standard Petri-net tooling."""
    pnml = ET.Element("pnml")
    page = ET.SubElement(
        ET.SubElement(pnml, "net", {"id": "net0", "type": "http://www.pnml.org/version-2009/grammar/ptnet"}),
        "page",
        {"id": "page0"},
    )
    for pid in net.places:
        place = ET.SubElement(page, "place", {"id": pid})
        if pid == net.initial_place:
            ET.SubElement(ET.SubElement(place, "initialMarking"), "text").text = "1"
    for t in net.transitions:
        trans = ET.SubElement(page, "transition", {"id": t.id})
        if t.label is not None:
            ET.SubElement(ET.SubElement(trans, "name"), "text").text = t.label.task_id
    arc_n = 0
    for t in net.transitions:
        for p in sorted(t.inputs):
            ET.SubElement(page, "arc", {"id": f"a{arc_n}", "source": p, "target": t.id})
            arc_n += 1
        for p in sorted(t.outputs):
            ET.SubElement(page, "arc", {"id": f"a{arc_n}", "source": t.id, "target": p})
            arc_n += 1
    return ET.tostring(pnml, encoding="utf-8", xml_declaration=True)
