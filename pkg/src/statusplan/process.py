"""Transform plan trees into BPMN-like process graphs.

Pipeline: drop FAIL leaves (flagging the actions that lost outcomes), turn
multi-child actions into a task followed by an XOR split with outcome
labels, re-unite identical sub-structures under XOR joins, attach start and
end events, and finally wrap provably independent task runs into parallel
blocks.  Independence is judged syntactically: a task may commute past
another only when neither writes a variable the other reads or writes.

The merge stage first unifies all STOP leaves under one XOR join (the join
ending up just before the end event), then merges maximal groups of
identical task subtrees, each under a fresh XOR join; merging top-down by
depth keeps the result free of cascaded single-entry joins.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from xml.etree import ElementTree

from statusplan.model import (
    ACTION,
    ActionTree,
    FAIL,
    PlanningTask,
    STOP,
    formula_atoms,
)

NODE_KINDS = ("start", "end", "task", "xor_split", "xor_join", "and_split", "and_join")


class ProcessError(ValueError):
    pass


@dataclass
class ProcessNode:
    id: str
    kind: str
    name: str | None = None
    may_fail: bool = False


@dataclass
class Edge:
    src: str
    dst: str
    label: str | None = None


@dataclass
class ProcessGraph:
    nodes: dict = field(default_factory=dict)  # id -> ProcessNode, insertion order
    edges: list = field(default_factory=list)
    entry: str | None = None
    _counter: int = 0

    def add_node(self, kind: str, name: str | None = None, may_fail: bool = False) -> str:
        nid = f"n{self._counter}"
        self._counter += 1
        self.nodes[nid] = ProcessNode(nid, kind, name, may_fail)
        return nid

    def add_edge(self, src: str, dst: str, label: str | None = None) -> Edge:
        edge = Edge(src, dst, label)
        self.edges.append(edge)
        return edge

    def out_edges(self, nid: str) -> list:
        return [e for e in self.edges if e.src == nid]

    def in_edges(self, nid: str) -> list:
        return [e for e in self.edges if e.dst == nid]

    def successors(self, nid: str) -> list:
        return [e.dst for e in self.out_edges(nid)]

    def node_kind_counts(self) -> dict:
        counts: dict = {}
        for n in self.nodes.values():
            counts[n.kind] = counts.get(n.kind, 0) + 1
        return counts

    def garbage_collect(self) -> None:
        """Drop nodes unreachable from the entry, and their edges."""
        reachable = set()
        stack = [self.entry] if self.entry else []
        while stack:
            nid = stack.pop()
            if nid in reachable:
                continue
            reachable.add(nid)
            stack.extend(self.successors(nid))
        self.nodes = {k: v for k, v in self.nodes.items() if k in reachable}
        self.edges = [
            e for e in self.edges if e.src in reachable and e.dst in reachable
        ]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProcessGraph):
            return NotImplemented
        return (
            list(self.nodes.values()) == list(other.nodes.values())
            and self.edges == other.edges
            and self.entry == other.entry
        )


# --------------------------------------------------------------------------
# step 1: drop FAIL leaves


@dataclass
class StepNode:
    """A plan node after failure stripping: a named step (or a STOP leaf when
    ``name`` is None) with labeled surviving children."""

    name: str | None
    may_fail: bool = False
    children: list = field(default_factory=list)  # (label or None, StepNode)

    @property
    def is_stop(self) -> bool:
        return self.name is None


def strip_failed(task: PlanningTask, tree: ActionTree) -> StepNode:
    """Remove FAIL leaves and their edges; actions that lost an outcome are
    flagged.  Surviving branches of still-branching actions keep their
    outcome assignments as labels."""
    if tree.kind == STOP:
        return StepNode(None)
    if tree.kind == FAIL:
        raise ProcessError("cannot strip a plan that is a bare FAIL")
    action = task.actions[tree.action]
    survivors = [
        (i, child) for i, child in enumerate(tree.children) if child.kind != FAIL
    ]
    if not survivors:
        raise ProcessError(f"action {action.name!r} has no surviving outcome")
    may_fail = len(survivors) < len(tree.children)
    labeled = []
    for i, child in survivors:
        label = (
            task.format_outcome(action.outcomes[i]) if len(survivors) > 1 else None
        )
        labeled.append((label, strip_failed(task, child)))
    return StepNode(action.name, may_fail, labeled)


# --------------------------------------------------------------------------
# step 2: tasks and XOR splits


def split_checks(step: StepNode) -> ProcessGraph:
    """Build the tree-shaped graph fragment: one task node per step, a
    labeled XOR split after every step that still branches, and one interim
    stop node per STOP leaf (replaced by the end event later)."""
    graph = ProcessGraph()

    def build(node: StepNode) -> str:
        if node.is_stop:
            return graph.add_node("stop")
        tid = graph.add_node("task", node.name, node.may_fail)
        if len(node.children) == 1:
            _, child = node.children[0]
            graph.add_edge(tid, build(child))
        elif len(node.children) > 1:
            split = graph.add_node("xor_split", node.name)
            graph.add_edge(tid, split)
            for label, child in node.children:
                graph.add_edge(split, build(child), label)
        return tid

    graph.entry = build(step)
    return graph


# --------------------------------------------------------------------------
# step 3: XOR joins over identical sub-structures


def _subtree_keys(graph: ProcessGraph) -> dict:
    memo: dict = {}

    def key(nid: str):
        if nid in memo:
            return memo[nid]
        node = graph.nodes[nid]
        children = tuple(
            sorted(
                ((e.label or "", key(e.dst)) for e in graph.out_edges(nid)),
                key=lambda pair: (pair[0], repr(pair[1])),
            )
        )
        memo[nid] = (node.kind, node.name, node.may_fail, children)
        return memo[nid]

    for nid in graph.nodes:
        key(nid)
    return memo


def _depths(graph: ProcessGraph) -> dict:
    depth = {graph.entry: 0}
    frontier = [graph.entry]
    while frontier:
        nxt = []
        for nid in frontier:
            for succ in graph.successors(nid):
                if succ not in depth or depth[nid] + 1 < depth[succ]:
                    depth[succ] = depth[nid] + 1
                    nxt.append(succ)
        frontier = nxt
    return depth


def merge_identical_subtrees(graph: ProcessGraph) -> ProcessGraph:
    """Unite identical sub-structures under fresh XOR joins.

    All STOP leaves merge first (their join becomes the final join before
    the end event); then maximal groups of task nodes rooting identical
    subtrees merge top-down, redirecting every group member's incoming edges
    into one join above a single kept copy.
    """
    stops = [n.id for n in graph.nodes.values() if n.kind == "stop"]
    if len(stops) > 1:
        join = graph.add_node("xor_join")
        kept = stops[0]
        for sid in stops:
            for e in graph.in_edges(sid):
                e.dst = join
            if sid != kept:
                del graph.nodes[sid]
        graph.add_edge(join, kept)

    keys = _subtree_keys(graph)
    depth = _depths(graph)
    order = sorted(
        (n for n in graph.nodes if graph.nodes[n].kind == "task"),
        key=lambda n: depth.get(n, 0),
    )
    for nid in order:
        if nid not in graph.nodes:
            continue  # collected as part of an earlier merge
        group = [
            other
            for other in graph.nodes
            if graph.nodes[other].kind == "task" and keys[other] == keys[nid]
        ]
        if len(group) < 2:
            continue
        group.sort(key=lambda n: depth.get(n, 0))
        keep = group[0]
        join = graph.add_node("xor_join")
        for member in group:
            for e in graph.in_edges(member):
                e.dst = join
        graph.add_edge(join, keep)
        graph.garbage_collect()
    return graph


# --------------------------------------------------------------------------
# step 4: start and end events


def close_graph(graph: ProcessGraph) -> ProcessGraph:
    """Prepend the start event, join remaining STOP leaves by one XOR join
    (omitted when a single leaf remains), and attach the end event."""
    stops = [n.id for n in graph.nodes.values() if n.kind == "stop"]
    if not stops:
        raise ProcessError("no STOP leaf to attach the end event to")
    if len(stops) > 1:
        join = graph.add_node("xor_join")
        kept = stops[0]
        for sid in stops:
            for e in graph.in_edges(sid):
                e.dst = join
            if sid != kept:
                del graph.nodes[sid]
        graph.add_edge(join, kept)
        stops = [kept]
    end = stops[0]
    graph.nodes[end] = ProcessNode(end, "end")
    start = graph.add_node("start")
    graph.add_edge(start, graph.entry)
    graph.entry = start
    return graph


# --------------------------------------------------------------------------
# step 5: parallel blocks


def action_footprints(task: PlanningTask) -> dict:
    """Per action name: (read variable set, written variable set)."""
    out = {}
    for a in task.actions:
        reads = {f.var for f in formula_atoms(a.precondition)}
        writes = {f.var for eff in a.outcomes for f in eff}
        out[a.name] = (reads, writes)
    return out


def tasks_interact(footprints: dict, name_a: str, name_b: str) -> bool:
    """Two tasks interact when either writes a variable the other reads or
    writes; only non-interacting tasks may run in parallel."""
    reads_a, writes_a = footprints[name_a]
    reads_b, writes_b = footprints[name_b]
    return bool(writes_a & (reads_b | writes_b)) or bool(writes_b & (reads_a | writes_a))


def _chains(graph: ProcessGraph) -> list:
    """Maximal runs of 1-in/1-out task nodes connected by unlabeled edges.
    Tasks directly followed by their XOR split stay out so that every split
    keeps its owning task adjacent."""

    def chainable(nid: str) -> bool:
        node = graph.nodes[nid]
        if node.kind != "task":
            return False
        ins = graph.in_edges(nid)
        outs = graph.out_edges(nid)
        if len(ins) != 1 or len(outs) != 1:
            return False
        return graph.nodes[outs[0].dst].kind != "xor_split"

    chains = []
    seen = set()
    for nid in graph.nodes:
        if nid in seen or not chainable(nid):
            continue
        # walk to the head of this run
        head = nid
        while True:
            pred = graph.in_edges(head)[0].src
            if chainable(pred):
                head = pred
            else:
                break
        chain = [head]
        seen.add(head)
        while True:
            succ = graph.out_edges(chain[-1])[0].dst
            if chainable(succ) and succ not in seen:
                chain.append(succ)
                seen.add(succ)
            else:
                break
        if len(chain) > 1:
            chains.append(chain)
    return chains


def parallelize(graph: ProcessGraph, task: PlanningTask) -> ProcessGraph:
    """Wrap consecutive non-interacting stretches of task chains in parallel
    split/join pairs.  Greedy and heuristic: a task joins the one block it
    interacts with, opens a new block when it interacts with none, and
    closes the run when it interacts with several.  Order within a block is
    the original order."""
    footprints = action_footprints(task)

    def flush(run_blocks):
        if len(run_blocks) < 2:
            return
        entry_edge = graph.in_edges(run_blocks[0][0])[0]
        # the edge leaving the run: out-edge of the last task in chain order
        tail = max(
            (t for b in run_blocks for t in b),
            key=lambda t: chain_order[t],
        )
        exit_edge = graph.out_edges(tail)[0]
        split = graph.add_node("and_split")
        join = graph.add_node("and_join")
        entry_edge.dst = split
        exit_target = exit_edge.dst
        graph.edges.remove(exit_edge)
        # rewire block-internal sequence: drop chain edges between different blocks
        for b in run_blocks:
            graph.add_edge(split, b[0])
            for a, c in zip(b, b[1:]):
                if not any(e.src == a and e.dst == c for e in graph.edges):
                    graph.add_edge(a, c)
            graph.add_edge(b[-1], join)
        # remove original chain edges that cross blocks
        member_block = {t: i for i, b in enumerate(run_blocks) for t in b}
        for e in list(graph.edges):
            if (
                e.src in member_block
                and e.dst in member_block
                and member_block[e.src] != member_block[e.dst]
            ):
                graph.edges.remove(e)
        graph.add_edge(join, exit_target)

    for chain in _chains(graph):
        chain_order = {t: i for i, t in enumerate(chain)}
        blocks = [[chain[0]]]
        for t in chain[1:]:
            name = graph.nodes[t].name
            interacting = [
                b
                for b in blocks
                if any(tasks_interact(footprints, graph.nodes[x].name, name) for x in b)
            ]
            if len(interacting) == 0:
                blocks.append([t])
            elif len(interacting) == 1:
                interacting[0].append(t)
            else:
                flush(blocks)
                blocks = [[t]]
        flush(blocks)
    return graph


# --------------------------------------------------------------------------
# the whole pipeline


def compile_process(task: PlanningTask, tree: ActionTree) -> ProcessGraph:
    step = strip_failed(task, tree)
    graph = split_checks(step)
    graph = merge_identical_subtrees(graph)
    graph = close_graph(graph)
    graph = parallelize(graph, task)
    return graph


# --------------------------------------------------------------------------
# output formats


def emit(graph: ProcessGraph, fmt: str) -> str:
    if fmt == "json":
        return _emit_json(graph)
    if fmt == "dot":
        return _emit_dot(graph)
    if fmt == "bpmn_xml":
        return _emit_bpmn(graph)
    raise ProcessError(f"unknown format {fmt!r}")


def graph_to_dict(graph: ProcessGraph) -> dict:
    nodes = []
    for n in graph.nodes.values():
        item: dict = {"id": n.id, "kind": n.kind}
        if n.name is not None:
            item["name"] = n.name
        if n.may_fail:
            item["may_fail"] = True
        nodes.append(item)
    edges = []
    for e in graph.edges:
        item = {"src": e.src, "dst": e.dst}
        if e.label is not None:
            item["label"] = e.label
        edges.append(item)
    return {"nodes": nodes, "edges": edges, "entry": graph.entry}


def _emit_json(graph: ProcessGraph) -> str:
    return json.dumps(graph_to_dict(graph), indent=2)


def parse_process_json(text: str) -> ProcessGraph:
    data = json.loads(text)
    graph = ProcessGraph()
    for n in data["nodes"]:
        if n["kind"] not in NODE_KINDS:
            raise ProcessError(f"unknown node kind {n['kind']!r}")
        graph.nodes[n["id"]] = ProcessNode(
            n["id"], n["kind"], n.get("name"), n.get("may_fail", False)
        )
    for e in data["edges"]:
        graph.edges.append(Edge(e["src"], e["dst"], e.get("label")))
    graph.entry = data.get("entry")
    numbered = [
        int(nid[1:]) for nid in graph.nodes if nid.startswith("n") and nid[1:].isdigit()
    ]
    graph._counter = max(numbered, default=-1) + 1
    return graph


_DOT_SHAPES = {
    "start": 'shape=circle, label="", width=0.3',
    "end": 'shape=doublecircle, label="", width=0.25',
    "xor_split": 'shape=diamond, label="×"',
    "xor_join": 'shape=diamond, label="×"',
    "and_split": 'shape=diamond, label="+"',
    "and_join": 'shape=diamond, label="+"',
}


def _emit_dot(graph: ProcessGraph) -> str:
    lines = ["digraph process {", "  rankdir=LR;"]
    for n in graph.nodes.values():
        if n.kind == "task":
            attrs = f'shape=box, style=rounded, label="{n.name}"'
            if n.may_fail:
                attrs = (
                    f'shape=box, style="rounded,filled", fillcolor="#f4cccc", '
                    f'color=red, label="{n.name}"'
                )
        else:
            attrs = _DOT_SHAPES[n.kind]
        lines.append(f'  "{n.id}" [{attrs}];')
    for e in graph.edges:
        label = f' [label="{e.label}"]' if e.label else ""
        lines.append(f'  "{e.src}" -> "{e.dst}"{label};')
    lines.append("}")
    return "\n".join(lines) + "\n"


_BPMN_TAGS = {
    "task": "task",
    "xor_split": "exclusiveGateway",
    "xor_join": "exclusiveGateway",
    "and_split": "parallelGateway",
    "and_join": "parallelGateway",
    "start": "startEvent",
    "end": "endEvent",
}

_BPMN_NS = "http://www.omg.org/spec/BPMN/20100524/MODEL"


def _emit_bpmn(graph: ProcessGraph) -> str:
    ElementTree.register_namespace("", _BPMN_NS)
    definitions = ElementTree.Element(
        f"{{{_BPMN_NS}}}definitions", {"targetNamespace": "urn:statusplan"}
    )
    process = ElementTree.SubElement(
        definitions, f"{{{_BPMN_NS}}}process", {"id": "process_1", "isExecutable": "false"}
    )
    for n in graph.nodes.values():
        attrs = {"id": n.id}
        if n.name:
            attrs["name"] = n.name
        el = ElementTree.SubElement(process, f"{{{_BPMN_NS}}}{_BPMN_TAGS[n.kind]}", attrs)
        if n.may_fail:
            doc = ElementTree.SubElement(el, f"{{{_BPMN_NS}}}documentation")
            doc.text = "may fail: some outcomes of this step end the process"
    for i, e in enumerate(graph.edges):
        attrs = {"id": f"flow_{i}", "sourceRef": e.src, "targetRef": e.dst}
        if e.label:
            attrs["name"] = e.label
        ElementTree.SubElement(process, f"{{{_BPMN_NS}}}sequenceFlow", attrs)
    return ElementTree.tostring(definitions, encoding="unicode", xml_declaration=True)


# --------------------------------------------------------------------------
# structural checks and execution languages


def check_process_graph(graph: ProcessGraph) -> None:
    """Structural invariants: one start, one end, everything reachable from
    the start, the end reachable from everything, and splits/joins reducible
    to a single edge by series-parallel contraction."""
    kinds = graph.node_kind_counts()
    if kinds.get("start", 0) != 1 or kinds.get("end", 0) != 1:
        raise ProcessError("expected exactly one start and one end node")
    start = next(n.id for n in graph.nodes.values() if n.kind == "start")
    end = next(n.id for n in graph.nodes.values() if n.kind == "end")

    reachable = set()
    stack = [start]
    while stack:
        nid = stack.pop()
        if nid in reachable:
            continue
        reachable.add(nid)
        stack.extend(graph.successors(nid))
    if reachable != set(graph.nodes):
        raise ProcessError("nodes unreachable from start")

    co_reachable = set()
    stack = [end]
    preds = {nid: [] for nid in graph.nodes}
    for e in graph.edges:
        preds[e.dst].append(e.src)
    while stack:
        nid = stack.pop()
        if nid in co_reachable:
            continue
        co_reachable.add(nid)
        stack.extend(preds[nid])
    if co_reachable != set(graph.nodes):
        raise ProcessError("end not reachable from all nodes")

    # series-parallel reduction
    edges = {(e.src, e.dst) for e in graph.edges}
    alive = set(graph.nodes)
    changed = True
    while changed:
        changed = False
        # collapse parallel duplicate edges (sets already do)
        for nid in list(alive):
            if nid in (start, end):
                continue
            ins = [e for e in edges if e[1] == nid]
            outs = [e for e in edges if e[0] == nid]
            if len(ins) == 1 and len(outs) == 1:
                (src, _), (_, dst) = ins[0], outs[0]
                edges.discard(ins[0])
                edges.discard(outs[0])
                if src != dst:
                    edges.add((src, dst))
                alive.discard(nid)
                changed = True
    if edges != {(start, end)} or alive != {start, end}:
        raise ProcessError("graph does not reduce to start->end (unbracketed)")


def tree_paths(task: PlanningTask, tree: ActionTree) -> set:
    """Root-to-STOP paths of the plan with failed branches removed, as
    tuples of (step name, outcome label or None)."""
    step = strip_failed(task, tree)

    def walk(node: StepNode):
        if node.is_stop:
            yield ()
            return
        for label, child in node.children:
            for rest in walk(child):
                yield ((node.name, label),) + rest

    return set(walk(step))


def graph_paths(graph: ProcessGraph) -> set:
    """Start-to-end executions as tuples of (step name, branch label or
    None); parallel blocks are traversed in declared block order."""

    def from_node(nid: str):
        node = graph.nodes[nid]
        if node.kind == "end":
            yield ()
            return
        if node.kind == "task":
            outs = graph.out_edges(nid)
            if len(outs) != 1:
                raise ProcessError(f"task {node.name!r} must have one outgoing edge")
            succ = graph.nodes[outs[0].dst]
            if succ.kind == "xor_split":
                for branch in graph.out_edges(succ.id):
                    for rest in from_node(branch.dst):
                        yield ((node.name, branch.label),) + rest
            else:
                for rest in from_node(outs[0].dst):
                    yield ((node.name, None),) + rest
            return
        if node.kind in ("start", "xor_join"):
            (out,) = graph.out_edges(nid)
            yield from from_node(out.dst)
            return
        if node.kind == "xor_split":
            for branch in graph.out_edges(nid):
                yield from from_node(branch.dst)
            return
        if node.kind == "and_split":
            branches = graph.out_edges(nid)
            segments = []
            join = None
            for b in branches:
                seg, join = _run_to_join(graph, b.dst)
                segments.append(seg)
            prefix = tuple(el for seg in segments for el in seg)
            (out,) = graph.out_edges(join)
            for rest in from_node(out.dst):
                yield prefix + rest
            return
        raise ProcessError(f"unexpected node kind {node.kind!r}")

    return set(from_node(graph.entry))


def _run_to_join(graph: ProcessGraph, nid: str):
    """Collect the linear task segment from a parallel branch until its
    join; branches are plain task sequences by construction."""
    seg = []
    while graph.nodes[nid].kind == "task":
        seg.append((graph.nodes[nid].name, None))
        (out,) = graph.out_edges(nid)
        nid = out.dst
    if graph.nodes[nid].kind != "and_join":
        raise ProcessError("parallel branch does not end at a join")
    return tuple(seg), nid


def canonical_order(task: PlanningTask, path: tuple) -> tuple:
    """Normal form of an execution under commutation of adjacent
    non-interacting steps: repeatedly emit the lexicographically smallest
    step that interacts with nothing still ahead of it."""
    footprints = action_footprints(task)
    remaining = list(path)
    out = []
    while remaining:
        candidates = []
        for i, el in enumerate(remaining):
            if all(
                not tasks_interact(footprints, earlier[0], el[0])
                for earlier in remaining[:i]
            ):
                candidates.append((el, i))
        el, i = min(candidates, key=lambda pair: (pair[0][0], pair[0][1] or ""))
        out.append(el)
        del remaining[i]
    return tuple(out)
