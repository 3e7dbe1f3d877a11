"""Propositional formulas over named concepts.

Formulas are immutable values in canonical form: literals inside a term are
sorted by concept index, terms are deduplicated and sorted lexicographically
by their sign vectors (per concept index, negative before positive). Two
formulas compare equal iff they have the same vocabulary and the same
canonical term list; support counts are carried along but ignored by
equality.

Text grammar (ASCII)::

    expr    := and ('|' and)*
    and     := unary ('&' unary)*
    unary   := '~' unary | '(' expr ')' | 'true' | 'false' | identifier
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import FormulaError, FormulaSizeError, ParseError

DEFAULT_CNF_MAX_VARS = 16
DEFAULT_SIMPLIFY_MAX_VARS = 12
DEFAULT_MAX_CLAUSES = 200_000

STYLES = ("dnf_text", "fol_iff", "fol_if", "fol_onlyif", "fol_cluster")


@dataclass(frozen=True)
class Literal:
    index: int
    name: str
    negated: bool = False

    def __post_init__(self):
        if not self.name:
            raise FormulaError("literal name must be non-empty")
        if self.index < 0:
            raise FormulaError(f"negative concept index {self.index}")

    @property
    def key(self) -> tuple[int, bool]:
        return (self.index, self.negated)

    @property
    def order(self) -> tuple[int, int]:
        # sign vector entry: negative literal sorts before positive
        return (self.index, int(not self.negated))

    def __invert__(self) -> Literal:
        return Literal(self.index, self.name, not self.negated)

    def satisfied_by(self, bit) -> bool:
        return bool(bit) != self.negated


@dataclass(frozen=True)
class _Term:
    literals: tuple[Literal, ...] = ()

    def __post_init__(self):
        lits = tuple(sorted(self.literals, key=lambda l: l.key))
        seen = set()
        for lit in lits:
            if lit.index in seen:
                raise FormulaError(
                    f"concept index {lit.index} ({lit.name}) appears twice in one term"
                )
            seen.add(lit.index)
        object.__setattr__(self, "literals", lits)

    @property
    def key(self) -> tuple[tuple[int, bool], ...]:
        return tuple(l.key for l in self.literals)

    @property
    def order(self) -> tuple[tuple[int, int], ...]:
        return tuple(l.order for l in self.literals)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(l.index for l in self.literals)

    def __len__(self):
        return len(self.literals)

    def __iter__(self):
        return iter(self.literals)


class Minterm(_Term):
    """Conjunction of literals (the empty conjunction is true)."""


class Clause(_Term):
    """Disjunction of literals (the empty disjunction is false)."""


def _check_assignment(indices: Iterable[int], a) -> None:
    n = len(a)
    for i in indices:
        if i >= n:
            raise FormulaError(f"concept index {i} out of range for assignment of length {n}")


def eval_minterm(m: Minterm, a: Sequence) -> bool:
    _check_assignment(m.indices, a)
    return all(lit.satisfied_by(a[lit.index]) for lit in m.literals)


def eval_clause(c: Clause, a: Sequence) -> bool:
    _check_assignment(c.indices, a)
    return any(lit.satisfied_by(a[lit.index]) for lit in c.literals)


def _validate_vocabulary(vocabulary: Sequence[str], terms: Iterable[_Term]) -> None:
    for t in terms:
        for lit in t.literals:
            if lit.index >= len(vocabulary):
                raise FormulaError(
                    f"concept index {lit.index} outside vocabulary of size {len(vocabulary)}"
                )
            if vocabulary[lit.index] != lit.name:
                raise FormulaError(
                    f"literal name {lit.name!r} does not match vocabulary entry "
                    f"{vocabulary[lit.index]!r} at index {lit.index}"
                )


@dataclass(frozen=True)
class DnfFormula:
    """Disjunction of minterms; no minterms means constant false.

    ``support`` holds one non-negative count per minterm (how many samples the
    minterm explains). ``minimized`` is set by :func:`simplify`.
    """

    vocabulary: tuple[str, ...]
    minterms: tuple[Minterm, ...] = ()
    support: tuple[int, ...] = field(default=(), compare=False)
    minimized: bool = field(default=False, compare=False)

    def __post_init__(self):
        vocab = tuple(self.vocabulary)
        terms = tuple(self.minterms)
        support = tuple(self.support) if self.support else (0,) * len(terms)
        if len(support) != len(terms):
            raise FormulaError("support must have one count per minterm")
        if any(s < 0 for s in support):
            raise FormulaError("support counts must be non-negative")
        _validate_vocabulary(vocab, terms)
        merged: dict = {}
        for t, s in zip(terms, support):
            t = t if isinstance(t, Minterm) else Minterm(tuple(t))
            if t.key in merged:
                merged[t.key] = (t, merged[t.key][1] + int(s))
            else:
                merged[t.key] = (t, int(s))
        ordered = sorted(merged.values(), key=lambda ts: ts[0].order)
        if () in merged:
            # the empty minterm is constant true and absorbs every other term
            ordered = [(merged[()][0], sum(s for _, s in ordered))]
        object.__setattr__(self, "vocabulary", vocab)
        object.__setattr__(self, "minterms", tuple(t for t, _ in ordered))
        object.__setattr__(self, "support", tuple(s for _, s in ordered))

    @classmethod
    def false(cls, vocabulary: Sequence[str]) -> DnfFormula:
        return cls(tuple(vocabulary))

    @classmethod
    def true(cls, vocabulary: Sequence[str]) -> DnfFormula:
        return cls(tuple(vocabulary), (Minterm(),), (0,))

    @property
    def is_false(self) -> bool:
        return not self.minterms

    @property
    def is_true(self) -> bool:
        return any(len(m) == 0 for m in self.minterms)

    @property
    def literal_count(self) -> int:
        return sum(len(m) for m in self.minterms)

    @property
    def concepts(self) -> frozenset[int]:
        return frozenset(i for m in self.minterms for i in m.indices)

    @property
    def concept_names(self) -> frozenset[str]:
        return frozenset(self.vocabulary[i] for i in self.concepts)

    def __str__(self):
        return format_formula(self)


@dataclass(frozen=True)
class CnfFormula:
    """Conjunction of clauses; no clauses means constant true."""

    vocabulary: tuple[str, ...]
    clauses: tuple[Clause, ...] = ()

    def __post_init__(self):
        vocab = tuple(self.vocabulary)
        terms = [c if isinstance(c, Clause) else Clause(tuple(c)) for c in self.clauses]
        _validate_vocabulary(vocab, terms)
        unique = {c.key: c for c in terms}
        if () in unique:
            # the empty clause is constant false and absorbs every other clause
            unique = {(): unique[()]}
        ordered = sorted(unique.values(), key=lambda c: c.order)
        object.__setattr__(self, "vocabulary", vocab)
        object.__setattr__(self, "clauses", tuple(ordered))

    @property
    def is_true(self) -> bool:
        return not self.clauses

    @property
    def is_false(self) -> bool:
        return any(len(c) == 0 for c in self.clauses)

    @property
    def literal_count(self) -> int:
        return sum(len(c) for c in self.clauses)

    @property
    def concepts(self) -> frozenset[int]:
        return frozenset(i for c in self.clauses for i in c.indices)

    def __str__(self):
        return format_formula(self)


def eval_dnf(phi: DnfFormula, a: Sequence) -> bool:
    if len(a) != len(phi.vocabulary):
        raise FormulaError(
            f"assignment length {len(a)} != vocabulary size {len(phi.vocabulary)}"
        )
    return any(eval_minterm(m, a) for m in phi.minterms)


def eval_cnf(phi: CnfFormula, a: Sequence) -> bool:
    if len(a) != len(phi.vocabulary):
        raise FormulaError(
            f"assignment length {len(a)} != vocabulary size {len(phi.vocabulary)}"
        )
    return all(eval_clause(c, a) for c in phi.clauses)


def evaluate(phi: DnfFormula | CnfFormula, bits) -> np.ndarray:
    """Vectorized evaluation over the rows of a Boolean matrix."""
    B = np.asarray(bits, dtype=bool)
    if B.ndim == 1:
        B = B[None, :]
    if B.shape[1] != len(phi.vocabulary):
        raise FormulaError(
            f"data has {B.shape[1]} columns, vocabulary has {len(phi.vocabulary)}"
        )
    n = B.shape[0]
    if isinstance(phi, DnfFormula):
        out = np.zeros(n, dtype=bool)
        for m in phi.minterms:
            hit = np.ones(n, dtype=bool)
            for lit in m.literals:
                hit &= B[:, lit.index] != lit.negated
            out |= hit
        return out
    out = np.ones(n, dtype=bool)
    for c in phi.clauses:
        hit = np.zeros(n, dtype=bool)
        for lit in c.literals:
            hit |= B[:, lit.index] != lit.negated
        out &= hit
    return out


def truth_table(phi: DnfFormula | CnfFormula, variables: Sequence[int] | None = None) -> np.ndarray:
    """Evaluate ``phi`` on every assignment of ``variables`` (others held false).

    Row ``x`` of the result corresponds to bit ``j`` of ``x`` assigning
    ``variables[j]``.
    """
    k = len(phi.vocabulary)
    if variables is None:
        variables = range(k)
    variables = list(variables)
    n = len(variables)
    xs = np.arange(2**n, dtype=np.int64)
    B = np.zeros((2**n, k), dtype=bool)
    for j, v in enumerate(variables):
        B[:, v] = (xs >> j) & 1
    return evaluate(phi, B)


def equivalent(a, b, variables: Sequence[int] | None = None) -> bool:
    """Exhaustive equivalence check (over the union of occurring variables by default)."""
    if tuple(a.vocabulary) != tuple(b.vocabulary):
        raise FormulaError("cannot compare formulas over different vocabularies")
    if variables is None:
        variables = sorted(a.concepts | b.concepts)
    return bool(np.array_equal(truth_table(a, variables), truth_table(b, variables)))


# ---------------------------------------------------------------------------
# set-based internal algebra: a term is a frozenset of (index, negated) pairs


def _terms_of(phi) -> set[frozenset]:
    terms = phi.minterms if isinstance(phi, DnfFormula) else phi.clauses
    return {frozenset(l.key for l in t.literals) for t in terms}


def _contradictory(term: frozenset) -> bool:
    idx = [i for i, _ in term]
    return len(idx) != len(set(idx))


def _absorb(terms: set[frozenset]) -> set[frozenset]:
    """Drop every term that is a strict superset of another term."""
    ordered = sorted(terms, key=len)
    kept: list[frozenset] = []
    for t in ordered:
        if not any(k <= t for k in kept):
            kept.append(t)
    return set(kept)


def _distribute(terms: set[frozenset], max_terms: int) -> set[frozenset]:
    """Dualize a set-of-terms normal form by distribution.

    DNF minterms in, CNF clauses out (and vice versa). Contradictory results
    (tautological clauses / unsatisfiable minterms) are dropped and subsumed
    results absorbed after every step.
    """
    if not terms:
        return {frozenset()}
    result: set[frozenset] = {frozenset()}
    for t in sorted(terms, key=lambda s: (len(s), sorted(s))):
        if not t:
            return set()
        nxt = set()
        for r in result:
            for lit in t:
                merged = r | {lit}
                if not _contradictory(merged):
                    nxt.add(merged)
        result = _absorb(nxt)
        if len(result) > max_terms:
            raise FormulaSizeError(
                f"normal-form conversion exceeded {max_terms} terms"
            )
        if not result:
            return set()
    return result


def _build_terms(vocabulary, terms: Iterable[frozenset], cls):
    return [
        cls(tuple(Literal(i, vocabulary[i], neg) for i, neg in sorted(t)))
        for t in terms
    ]


def _check_cap(phi, max_vars: int) -> None:
    n = len(phi.concepts)
    if n > max_vars:
        raise FormulaSizeError(
            f"formula has {n} variables, normal-form conversion is capped at {max_vars}"
        )


def dnf_to_cnf(
    phi: DnfFormula,
    max_vars: int = DEFAULT_CNF_MAX_VARS,
    max_clauses: int = DEFAULT_MAX_CLAUSES,
) -> CnfFormula:
    _check_cap(phi, max_vars)
    terms = {t for t in _terms_of(phi) if not _contradictory(t)}
    clauses = _distribute(_absorb(terms), max_clauses)
    return CnfFormula(phi.vocabulary, tuple(_build_terms(phi.vocabulary, clauses, Clause)))


def cnf_to_dnf(
    phi: CnfFormula,
    max_vars: int = DEFAULT_CNF_MAX_VARS,
    max_terms: int = DEFAULT_MAX_CLAUSES,
) -> DnfFormula:
    _check_cap(phi, max_vars)
    clauses = {t for t in _terms_of(phi) if not _contradictory(t)}
    terms = _distribute(_absorb(clauses), max_terms)
    return DnfFormula(phi.vocabulary, tuple(_build_terms(phi.vocabulary, terms, Minterm)))


def dnf_not(phi: DnfFormula, max_vars: int = DEFAULT_CNF_MAX_VARS) -> DnfFormula:
    """Negation via De Morgan on the CNF of ``phi``."""
    cnf = dnf_to_cnf(phi, max_vars=max_vars)
    terms = {frozenset((i, not neg) for i, neg in c) for c in _terms_of(cnf)}
    return DnfFormula(phi.vocabulary, tuple(_build_terms(phi.vocabulary, terms, Minterm)))


def dnf_and(a: DnfFormula, b: DnfFormula) -> DnfFormula:
    if a.vocabulary != b.vocabulary:
        raise FormulaError("vocabulary mismatch in conjunction")
    terms = set()
    for x in _terms_of(a):
        for y in _terms_of(b):
            t = x | y
            if not _contradictory(t):
                terms.add(t)
    return DnfFormula(a.vocabulary, tuple(_build_terms(a.vocabulary, terms, Minterm)))


def dnf_or(*formulas: DnfFormula) -> DnfFormula:
    vocab = formulas[0].vocabulary
    terms, support = [], []
    for f in formulas:
        if f.vocabulary != vocab:
            raise FormulaError("vocabulary mismatch in disjunction")
        terms.extend(f.minterms)
        support.extend(f.support)
    return DnfFormula(vocab, tuple(terms), tuple(support))


def canonical(phi):
    """Rebuild ``phi`` through its constructor (sorting and deduplication)."""
    if isinstance(phi, DnfFormula):
        return DnfFormula(phi.vocabulary, phi.minterms, phi.support, phi.minimized)
    return CnfFormula(phi.vocabulary, phi.clauses)


def restrict_vocabulary(phi: DnfFormula, vocabulary: Sequence[str]) -> DnfFormula:
    """Re-index ``phi`` onto another vocabulary containing all its concept names."""
    pos = {name: i for i, name in enumerate(vocabulary)}
    terms = []
    for m in phi.minterms:
        lits = []
        for lit in m.literals:
            if lit.name not in pos:
                raise FormulaError(f"concept {lit.name!r} missing from target vocabulary")
            lits.append(Literal(pos[lit.name], lit.name, lit.negated))
        terms.append(Minterm(tuple(lits)))
    return DnfFormula(tuple(vocabulary), tuple(terms), phi.support)


# ---------------------------------------------------------------------------
# Quine-McCluskey


def _prime_implicants(on_set: np.ndarray, n: int) -> list[tuple[int, int]]:
    """Prime implicants as ``(value, care)`` pairs (bits outside ``care`` are free)."""
    full = (1 << n) - 1
    current = {(int(v), full) for v in on_set}
    primes: set[tuple[int, int]] = set()
    while current:
        merged_from: set[tuple[int, int]] = set()
        nxt: set[tuple[int, int]] = set()
        for v, care in current:
            bits = care
            while bits:
                b = bits & -bits
                bits ^= b
                if not v & b and (v | b, care) in current:
                    nxt.add((v, care & ~b))
                    merged_from.add((v, care))
                    merged_from.add((v | b, care))
        primes |= current - merged_from
        current = nxt
    return sorted(primes, key=lambda p: (-bin(p[1]).count("1"), p[1], p[0]))


def _min_cover(
    on_set: np.ndarray, primes: list[tuple[int, int]], node_budget: int = 200_000
) -> list[int]:
    """Minimum cover by (term count, literal count, lexicographic key).

    Essential implicants first, then branch and bound on the cyclic core.
    """
    m = len(on_set)
    cover_sets = []
    for v, care in primes:
        hits = np.nonzero((on_set & care) == v)[0]
        bits = 0
        for h in hits:
            bits |= 1 << int(h)
        cover_sets.append(bits)
    cost = [bin(care).count("1") for _, care in primes]
    everything = (1 << m) - 1
    owners_of = [[] for _ in range(m)]
    for p, s in enumerate(cover_sets):
        rest = s
        while rest:
            b = rest & -rest
            rest ^= b
            owners_of[b.bit_length() - 1].append(p)

    chosen: list[int] = []
    covered = 0
    for e in range(m):
        owners = owners_of[e]
        if len(owners) == 1 and owners[0] not in chosen:
            chosen.append(owners[0])
            covered |= cover_sets[owners[0]]

    def key(sel):
        return (len(sel), sum(cost[p] for p in sel), sorted(primes[p] for p in sel))

    # greedy incumbent
    greedy = list(chosen)
    g_cov = covered
    while g_cov != everything:
        best = max(
            range(len(primes)),
            key=lambda p: (bin(cover_sets[p] & ~g_cov).count("1"), -cost[p], -p),
        )
        greedy.append(best)
        g_cov |= cover_sets[best]
    best_sel = greedy
    best_key = key(best_sel)
    budget = [node_budget]

    def search(sel: list[int], cov: int):
        nonlocal best_sel, best_key
        if budget[0] <= 0:
            return
        budget[0] -= 1
        if cov == everything:
            k = key(sel)
            if k < best_key:
                best_sel, best_key = list(sel), k
            return
        if len(sel) + 1 > best_key[0]:
            return
        uncovered = everything & ~cov
        # element with the fewest candidate implicants
        best_e, best_owners = None, None
        rest = uncovered
        while rest:
            b = rest & -rest
            rest ^= b
            e = b.bit_length() - 1
            owners = owners_of[e]
            if best_owners is None or len(owners) < len(best_owners):
                best_e, best_owners = e, owners
                if len(owners) <= 1:
                    break
        for p in sorted(best_owners, key=lambda p: (cost[p], primes[p])):
            sel.append(p)
            search(sel, cov | cover_sets[p])
            sel.pop()

    if covered != everything:
        search(list(chosen), covered)
    return best_sel


def simplify(phi: DnfFormula, max_vars: int = DEFAULT_SIMPLIFY_MAX_VARS) -> DnfFormula:
    """Quine-McCluskey minimization of ``phi``.

    Above ``max_vars`` occurring variables the input is returned unchanged with
    ``minimized=False``. Support counts of merged minterms are summed onto the
    first selected implicant that covers them.
    """
    variables = sorted(phi.concepts)
    n = len(variables)
    if n > max_vars:
        return DnfFormula(phi.vocabulary, phi.minterms, phi.support, minimized=False)
    vocab = phi.vocabulary
    total = sum(phi.support)
    if phi.is_false:
        return DnfFormula(vocab, minimized=True)
    tt = truth_table(phi, variables)
    on_set = np.nonzero(tt)[0].astype(np.int64)
    if len(on_set) == 0:
        return DnfFormula(vocab, minimized=True)
    if len(on_set) == 2**n:
        return DnfFormula(vocab, (Minterm(),), (total,), minimized=True)

    primes = _prime_implicants(on_set, n)
    selected = [primes[p] for p in _min_cover(on_set, primes)]
    terms = []
    for v, care in selected:
        lits = tuple(
            Literal(variables[j], vocab[variables[j]], not (v >> j) & 1)
            for j in range(n)
            if care >> j & 1
        )
        terms.append(Minterm(lits))
    result_support = _carry_support(phi, terms)
    result = DnfFormula(vocab, tuple(terms), tuple(result_support), minimized=True)
    if result.literal_count > phi.literal_count:
        return DnfFormula(vocab, phi.minterms, phi.support, minimized=True)
    return result


def _carry_support(phi: DnfFormula, terms: list[Minterm]) -> list[int]:
    out = [0] * len(terms)
    if not terms:
        return out
    keyed = [frozenset(t.key) for t in terms]
    for m, s in zip(phi.minterms, phi.support):
        mk = frozenset(m.key)
        target = next((i for i, t in enumerate(keyed) if t <= mk), None)
        if target is None:
            target = next(
                (
                    i
                    for i, t in enumerate(keyed)
                    if not _contradictory(t | mk)
                ),
                0,
            )
        out[target] += s
    return out


# ---------------------------------------------------------------------------
# text format

_TOKEN = re.compile(r"\s*(?:(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[~&|()]))")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ParseError(f"unexpected character {text[bad]!r}", bad)
        kind = "ident" if m.group("ident") else "op"
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str, vocabulary: Sequence[str]):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.end = len(text)
        self.names = {n: i for i, n in enumerate(vocabulary)}

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, value=None):
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of input", self.end)
        if value is not None and tok[1] != value:
            raise ParseError(f"expected {value!r}, found {tok[1]!r}", tok[2])
        self.pos += 1
        return tok

    def parse(self):
        if not self.tokens:
            raise ParseError("empty formula", 0)
        node = self.expr()
        tok = self.peek()
        if tok is not None:
            raise ParseError(f"unexpected token {tok[1]!r}", tok[2])
        return node

    def expr(self):
        items = [self.conj()]
        while (tok := self.peek()) is not None and tok[1] == "|":
            self.take()
            items.append(self.conj())
        return items[0] if len(items) == 1 else ("or", items)

    def conj(self):
        items = [self.unary()]
        while (tok := self.peek()) is not None and tok[1] == "&":
            self.take()
            items.append(self.unary())
        return items[0] if len(items) == 1 else ("and", items)

    def unary(self):
        tok = self.take()
        kind, value, pos = tok
        if value == "~":
            return ("not", self.unary())
        if value == "(":
            node = self.expr()
            self.take(")")
            return node
        if kind == "ident":
            if value == "true":
                return ("const", True)
            if value == "false":
                return ("const", False)
            if value not in self.names:
                raise ParseError(f"unknown concept {value!r}", pos)
            return ("var", self.names[value])
        raise ParseError(f"unexpected token {value!r}", pos)


def _literal_node(node):
    if node[0] == "var":
        return (node[1], False)
    if node[0] == "not" and node[1][0] == "var":
        return (node[1][1], True)
    return None


def _flat(node, op):
    return node[1] if node[0] == op else [node]


def _shape_terms(node, outer, inner):
    """Terms of ``node`` if it is literally an ``outer`` of ``inner``s of literals."""
    terms = []
    for part in _flat(node, outer):
        lits = []
        for leaf in _flat(part, inner):
            lit = _literal_node(leaf)
            if lit is None:
                return None
            lits.append(lit)
        terms.append(frozenset(lits))
    return terms


def _to_dnf_terms(node, negate=False) -> set[frozenset]:
    kind = node[0]
    if kind == "const":
        return {frozenset()} if node[1] != negate else set()
    if kind == "var":
        return {frozenset({(node[1], negate)})}
    if kind == "not":
        return _to_dnf_terms(node[1], not negate)
    is_or = (kind == "or") != negate
    parts = [_to_dnf_terms(child, negate) for child in node[1]]
    if is_or:
        return _absorb(set().union(*parts))
    result = {frozenset()}
    for part in parts:
        result = _absorb(
            {x | y for x in result for y in part if not _contradictory(x | y)}
        )
        if len(result) > DEFAULT_MAX_CLAUSES:
            raise FormulaSizeError("formula expansion exceeded size limit")
    return result


def _dedupe_term(term: frozenset) -> frozenset | None:
    return None if _contradictory(term) else term


def parse_formula(
    text: str, vocabulary: Sequence[str], kind: str | None = None
) -> DnfFormula | CnfFormula:
    """Parse formula text over ``vocabulary``.

    With ``kind=None`` an OR-of-ANDs (including single conjunctions and the
    constants) yields a :class:`DnfFormula`, an AND-of-ORs a
    :class:`CnfFormula`, and anything else is expanded to DNF. ``kind`` may
    force ``"dnf"`` or ``"cnf"``.
    """
    vocabulary = tuple(vocabulary)
    node = _Parser(text, vocabulary).parse()
    if kind not in (None, "dnf", "cnf"):
        raise FormulaError(f"unknown formula kind {kind!r}")

    if kind in (None, "dnf"):
        if node[0] == "const":
            return DnfFormula.true(vocabulary) if node[1] else DnfFormula.false(vocabulary)
        terms = _shape_terms(node, "or", "and")
        if terms is not None:
            kept = {t for t in terms if _dedupe_term(t) is not None}
            return DnfFormula(vocabulary, tuple(_build_terms(vocabulary, kept, Minterm)))
        if kind is None:
            clauses = _shape_terms(node, "and", "or")
            if clauses is not None:
                kept = {c for c in clauses if not _contradictory(c)}
                return CnfFormula(vocabulary, tuple(_build_terms(vocabulary, kept, Clause)))
        terms = _to_dnf_terms(node)
        return DnfFormula(vocabulary, tuple(_build_terms(vocabulary, terms, Minterm)))

    if node[0] == "const":
        return CnfFormula(vocabulary, () if node[1] else (Clause(),))
    clauses = _shape_terms(node, "and", "or")
    if clauses is None:
        # CNF of f is the De Morgan dual of the DNF of ~f
        neg_terms = _to_dnf_terms(node, negate=True)
        clauses = [frozenset((i, not n) for i, n in t) for t in neg_terms]
    kept = {c for c in clauses if not _contradictory(c)}
    return CnfFormula(vocabulary, tuple(_build_terms(vocabulary, kept, Clause)))


def _term_text(term: _Term, joiner: str, wrap: bool) -> str:
    parts = [("~" if l.negated else "") + l.name for l in term.literals]
    body = joiner.join(parts)
    return f"({body})" if wrap and len(parts) > 1 else body


def _body_text(phi) -> str:
    if isinstance(phi, DnfFormula):
        if phi.is_false:
            return "false"
        if phi.is_true:
            return "true"
        wrap = len(phi.minterms) > 1
        return " | ".join(_term_text(m, " & ", wrap) for m in phi.minterms)
    if phi.is_true:
        return "true"
    if phi.is_false:
        return "false"
    wrap = len(phi.clauses) > 1
    return " & ".join(_term_text(c, " | ", wrap) for c in phi.clauses)


def format_formula(
    phi: DnfFormula | CnfFormula,
    style: str = "dnf_text",
    class_name: str | None = None,
) -> str:
    """Render ``phi`` in the text grammar, optionally wrapped as a FOL rule.

    For ``fol_cluster`` the ``class_name`` labels the cluster support set
    (``"1"`` gives ``forall c in O_1: ...``).
    """
    if style not in STYLES:
        raise FormulaError(f"unknown style {style!r}; expected one of {', '.join(STYLES)}")
    body = _body_text(phi)
    if style == "dnf_text":
        return body
    if class_name is None:
        raise FormulaError(f"style {style} requires a class name")
    if style == "fol_cluster":
        return f"forall c in O_{class_name}: {body}"
    pred = f"{class_name}(c)"
    if style == "fol_iff":
        return f"forall c in C: {pred} <-> {body}"
    if style == "fol_if":
        return f"forall c in C: {pred} -> {body}"
    return f"forall c in C: {body} -> {pred}"


def substitute(
    phi: DnfFormula,
    definitions: Mapping[str, DnfFormula],
    vocabulary: Sequence[str],
    max_vars: int = DEFAULT_CNF_MAX_VARS,
) -> DnfFormula:
    """Replace every concept of ``phi`` by its defining DNF over ``vocabulary``."""
    vocabulary = tuple(vocabulary)
    negations: dict[str, DnfFormula] = {}
    result = DnfFormula.false(vocabulary)
    for m, s in zip(phi.minterms, phi.support):
        term = DnfFormula.true(vocabulary)
        for lit in m.literals:
            if lit.name not in definitions:
                raise FormulaError(f"no definition for intermediate concept {lit.name!r}")
            d = definitions[lit.name]
            if d.vocabulary != vocabulary:
                raise FormulaError(
                    f"definition of {lit.name!r} is not over the target vocabulary"
                )
            if lit.negated:
                if lit.name not in negations:
                    negations[lit.name] = dnf_not(d, max_vars=max_vars)
                d = negations[lit.name]
            term = dnf_and(term, d)
        if term.minterms:
            term = DnfFormula(vocabulary, term.minterms, (s,) + (0,) * (len(term.minterms) - 1))
        result = dnf_or(result, term)
    return result
