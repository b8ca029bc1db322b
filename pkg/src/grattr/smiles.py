"""Parser for a restricted SMILES subset producing heavy-atom graphs.

Accepted grammar: organic-subset element tokens B, C, N, O, P, S, F, Cl,
Br, I; aromatic tokens c, n, o, s; bond symbols - = #; parenthesized
branches; ring-closure digits 1-9. Bracket atoms, charges, stereo markers,
%nn closures and '.' disconnections are rejected with the byte offset of
the offending token. Hydrogens are implicit and never materialized.
"""

from __future__ import annotations

from .graphs import Graph

# Aromatic atoms get their own label ids so featurization stays a plain
# one-hot over a single alphabet.
ALIPHATIC_TOKENS = ("B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I")
AROMATIC_TOKENS = ("c", "n", "o", "s")
ATOM_ALPHABET = ALIPHATIC_TOKENS + AROMATIC_TOKENS
ALPHABET_SIZE = len(ATOM_ALPHABET)

_LABEL_BY_TOKEN = {token: idx for idx, token in enumerate(ATOM_ALPHABET)}
_BOND_BY_SYMBOL = {"-": "single", "=": "double", "#": "triple"}


class SmilesParseError(ValueError):
    """Unsupported token or malformed structure, with its byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


def parse_smiles(text: str) -> Graph:
    """Parse a restricted-subset SMILES string into a heavy-atom Graph.

    Unspecified bonds default to single, or aromatic when both endpoints are
    aromatic atoms. Each ring-closure digit pairs exactly one open with one
    close and contributes exactly one edge.
    """
    if not text:
        raise SmilesParseError("empty SMILES string", 0)

    labels: list[int] = []
    aromatic: list[bool] = []
    edges: dict[tuple[int, int], str] = {}

    prev_atom: int | None = None
    pending_bond: str | None = None
    pending_bond_offset = 0
    branch_stack: list[int] = []
    # digit -> (atom index, explicit bond or None, offset where opened)
    open_rings: dict[str, tuple[int, str | None, int]] = {}

    def add_edge(a: int, b: int, order: str | None, offset: int) -> None:
        if a == b:
            raise SmilesParseError("ring closure would create a self-loop", offset)
        key = (min(a, b), max(a, b))
        if key in edges:
            raise SmilesParseError("duplicate bond between atoms", offset)
        if order is None:
            order = "aromatic" if aromatic[a] and aromatic[b] else "single"
        edges[key] = order

    pos = 0
    length = len(text)
    while pos < length:
        ch = text[pos]

        if ch in _BOND_BY_SYMBOL:
            if pending_bond is not None:
                raise SmilesParseError("two consecutive bond symbols", pos)
            if prev_atom is None:
                raise SmilesParseError("bond symbol with no preceding atom", pos)
            pending_bond = _BOND_BY_SYMBOL[ch]
            pending_bond_offset = pos
            pos += 1
            continue

        if ch == "(":
            if prev_atom is None:
                raise SmilesParseError("branch opened before any atom", pos)
            if pending_bond is not None:
                raise SmilesParseError("branch opened after dangling bond", pos)
            branch_stack.append(prev_atom)
            pos += 1
            continue

        if ch == ")":
            if not branch_stack:
                raise SmilesParseError("unmatched closing parenthesis", pos)
            if pending_bond is not None:
                raise SmilesParseError("branch closed after dangling bond", pos)
            prev_atom = branch_stack.pop()
            pos += 1
            continue

        if ch.isdigit():
            if ch == "0":
                raise SmilesParseError("ring-closure digit 0 is not supported", pos)
            if prev_atom is None:
                raise SmilesParseError("ring-closure digit with no preceding atom", pos)
            if ch in open_rings:
                other, open_bond, _ = open_rings.pop(ch)
                if pending_bond is not None and open_bond is not None and pending_bond != open_bond:
                    raise SmilesParseError("conflicting bond orders on ring closure", pos)
                add_edge(other, prev_atom, pending_bond or open_bond, pos)
            else:
                open_rings[ch] = (prev_atom, pending_bond, pos)
            pending_bond = None
            pos += 1
            continue

        # Atom token: try two-character symbols first (Cl, Br).
        token = None
        if text[pos:pos + 2] in ("Cl", "Br"):
            token = text[pos:pos + 2]
        elif ch in _LABEL_BY_TOKEN:
            token = ch
        if token is None:
            raise SmilesParseError(f"unsupported token {ch!r}", pos)

        atom = len(labels)
        labels.append(_LABEL_BY_TOKEN[token])
        aromatic.append(token in AROMATIC_TOKENS)
        if prev_atom is not None:
            add_edge(prev_atom, atom, pending_bond, pos)
        pending_bond = None
        prev_atom = atom
        pos += len(token)

    if pending_bond is not None:
        raise SmilesParseError("dangling bond at end of string", pending_bond_offset)
    if branch_stack:
        raise SmilesParseError("unclosed parenthesis", length)
    if open_rings:
        digit, (_, _, offset) = min(open_rings.items(), key=lambda kv: kv[1][2])
        raise SmilesParseError(f"unmatched ring-closure digit {digit}", offset)

    return Graph(
        node_labels=tuple(labels),
        edges=tuple((i, j, order) for (i, j), order in sorted(edges.items())),
        smiles=text,
    )
