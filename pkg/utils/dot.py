"""Graphviz DOT rendering of automata."""

from graphviz import Digraph

from services.efsm import Automaton, Efsm
from services.sat import Solver
from utils.formatters import display_formula


def render_dot(model: Automaton) -> str:
    """
    DOT source for a model; node names are state ids so output is stable.

    EFSM states are labelled with their simplified formula and edges with
    the event and its guard. The initial state is double-circled.
    """
    graph = Digraph(name="efsm" if isinstance(model, Efsm) else "fsm")
    graph.attr(rankdir="LR")

    if isinstance(model, Efsm):
        solver = Solver(model.schema.domains())
        initial = model.initial.id
        for sid in sorted(model.states):
            text = display_formula(model.states[sid].formula, solver)
            graph.node(str(sid), label=f"q{sid}\n{text}", shape="doublecircle" if sid == initial else "ellipse")
        for t in model.sorted_transitions():
            guard = display_formula(t.guard, solver)
            graph.edge(str(t.src), str(t.dst), label=f"{t.event} [{guard}]")
        return graph.source

    for sid in model.states:
        label = model.labels.get(sid, f"s{sid}")
        graph.node(str(sid), label=label, shape="doublecircle" if sid == model.initial else "ellipse")
    for src, event, dst in model.edges:
        graph.edge(str(src), str(dst), label=event)
    return graph.source
