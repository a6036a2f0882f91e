"""
Set and configuration literals used on the command line and in valuation
files.

    all | empty | eps | dead            whole families of simple sets
    {p.X, q.Y, p.eps}                   explicit head list (pBPA: {Z, eps})
    @name  or  name                     a named Δ-automaton
    A + B                               union

Configurations are written `p: X Y Z`, `X Y Z` or, when every symbol is a
single character, `XYZ`; `eps` is the empty stack.
"""

from collections.abc import Mapping
from typing import List, Optional, Tuple, Union

from .errors import ModelError, ParseError
from .model import PPDA, Configuration, Head, State, Symbol, show
from .regsets import EPS, DeltaAutomaton, SimpleSet, bool_ops, simple_to_automaton
from .syntax import TokenStream

ConfigSet = Union[SimpleSet, DeltaAutomaton]


def as_automaton(s: ConfigSet, ppda: PPDA) -> DeltaAutomaton:
    return simple_to_automaton(s, ppda) if isinstance(s, SimpleSet) else s


def union(a: ConfigSet, b: ConfigSet, ppda: PPDA) -> ConfigSet:
    if isinstance(a, SimpleSet) and isinstance(b, SimpleSet):
        return a | b
    return bool_ops(as_automaton(a, ppda), as_automaton(b, ppda), "union")


def parse_set(
    text: Union[str, TokenStream],
    ppda: PPDA,
    automata: Optional[Mapping[str, DeltaAutomaton]] = None,
    terminator: Optional[str] = None,
) -> ConfigSet:
    """
    Parses a set literal. Given a TokenStream, reads up to (not including)
    `terminator`; given a string, the whole string must be one literal.
    """
    ts = text if isinstance(text, TokenStream) else TokenStream(text)
    automata = automata or {}
    result = _term(ts, ppda, automata)
    while ts.accept("+"):
        result = union(result, _term(ts, ppda, automata), ppda)
    if terminator is None and not ts.at_end():
        ts.error(f"unexpected {ts.peek().text!r} after set literal")
    if terminator is not None and not ts.at(terminator):
        ts.error(f"expected {terminator!r} after set literal")
    return result


def _term(ts: TokenStream, ppda: PPDA, automata: Mapping[str, DeltaAutomaton]) -> ConfigSet:
    if ts.accept("all"):
        return SimpleSet.everything(ppda)
    if ts.accept("empty"):
        return SimpleSet()
    if ts.accept("eps"):
        return SimpleSet.empty_stack(ppda)
    if ts.accept("dead"):
        return SimpleSet.dead(ppda)
    if ts.accept("{"):
        pairs: List[Tuple[State, Optional[Symbol]]] = []
        while not ts.accept("}"):
            pairs.extend(_item(ts, ppda))
            if not ts.at("}"):
                ts.expect(",")
        return SimpleSet.of(pairs)
    if ts.accept("@"):
        tok = ts.ident("automaton name")
    else:
        tok = ts.ident("set literal")
    if tok.text not in automata:
        ts.error(f"unknown automaton {tok.text!r}", tok)
    return automata[tok.text]


def _names(items) -> dict:
    return {show(x): x for x in items}


def _item(ts: TokenStream, ppda: PPDA) -> List[Tuple[State, Optional[Symbol]]]:
    states, symbols = _names(ppda.states), _names(ppda.alphabet)
    first = ts.ident("head")
    if ts.accept("."):
        if first.text not in states:
            ts.error(f"unknown control state {first.text!r}", first)
        target = [states[first.text]]
        second = ts.ident("stack symbol or 'eps'")
    else:
        # bare symbol: that symbol under every control state
        target = list(ppda.states)
        second = first
    if second.text == "eps" and "eps" not in symbols:
        return [(p, EPS) for p in target]
    if second.text not in symbols:
        ts.error(f"unknown stack symbol {second.text!r}", second)
    return [(p, symbols[second.text]) for p in target]


def _only_state(ppda: PPDA, what: str) -> State:
    if len(ppda.states) != 1:
        raise ModelError(f"{what} must name a control state ('p: ...')")
    return ppda.states[0]


def parse_configuration(text: str, ppda: PPDA) -> Configuration:
    states, symbols = _names(ppda.states), _names(ppda.alphabet)
    state_text, sep, word = text.strip().rpartition(":")
    if sep:
        state_text = state_text.strip()
        if state_text not in states:
            raise ParseError(f"unknown control state {state_text!r} in configuration {text!r}")
        state = states[state_text]
    else:
        state = _only_state(ppda, f"configuration {text!r}")
    parts = word.split()
    if parts in ([], ["eps"]) and "eps" not in symbols:
        return Configuration(state, ())
    if len(parts) == 1 and parts[0] not in symbols and all(ch in symbols for ch in parts[0]):
        parts = list(parts[0])
    for x in parts:
        if x not in symbols:
            raise ParseError(f"unknown stack symbol {x!r} in configuration {text!r}")
    return Configuration(state, tuple(symbols[x] for x in parts))


def parse_head(text: str, ppda: PPDA) -> Head:
    states, symbols = _names(ppda.states), _names(ppda.alphabet)
    state_text, sep, symbol = text.strip().rpartition(".")
    if sep:
        if state_text not in states:
            raise ParseError(f"unknown control state {state_text!r} in head {text!r}")
        state = states[state_text]
    else:
        state = _only_state(ppda, f"head {text!r}")
    if symbol not in symbols:
        raise ParseError(f"unknown stack symbol {symbol!r} in head {text!r}")
    return Head(state, symbols[symbol])
