"""Inference over a relational sum-product network.

All queries reduce to one bottom-up pass computing

    E[ prod_b g(X_b) * prod_f X_f^(-p) * 1_{predicate} ]

where ``b`` ranges over base columns of the target (``g`` optionally
clamps at 1 and raises to the power), ``f`` over inverse tuple factors,
and the predicate is a conjunction routed to the leaves. Probabilities
are the special case with an empty target. Product nodes multiply child
results (their scopes partition the columns), sum nodes average them by
cluster weight. NULL never satisfies any comparison, including ``!=``,
and contributes zero to every target moment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import EmptyConditionError, ModelInvariantError
from .nodes import Leaf, ProductNode, Rspn, SumNode

VALID_OPS = ("<", ">", "<=", ">=", "=", "!=", "in", "notnull")


@dataclass(frozen=True)
class Conjunct:
    column: str
    op: str
    value: object = None

    def __post_init__(self):
        if self.op not in VALID_OPS:
            raise ValueError(f"unsupported operator {self.op!r}")
        if self.op == "in" and not isinstance(self.value, tuple):
            object.__setattr__(self, "value", tuple(self.value))


@dataclass(frozen=True)
class Predicate:
    conjuncts: tuple[Conjunct, ...] = ()

    @staticmethod
    def of(*specs) -> "Predicate":
        return Predicate(tuple(Conjunct(*s) if not isinstance(s, Conjunct) else s
                               for s in specs))

    def and_also(self, *conjuncts: Conjunct) -> "Predicate":
        return Predicate(self.conjuncts + tuple(conjuncts))

    def by_column(self) -> dict[str, list[Conjunct]]:
        grouped: dict[str, list[Conjunct]] = {}
        for c in self.conjuncts:
            grouped.setdefault(c.column, []).append(c)
        return grouped

    @property
    def columns(self) -> set[str]:
        return {c.column for c in self.conjuncts}


@dataclass(frozen=True)
class TargetExpr:
    """Product of base columns divided by tuple-factor columns, to a power.

    ``base_columns`` empty means the constant 1. ``clamp_min_one`` lists
    base columns evaluated as max(value, 1) for outer-join semantics.
    Inverse factors are join-side tuple factors and therefore >= 1.
    """

    base_columns: tuple[str, ...] = ()
    inverse_factors: tuple[str, ...] = ()
    power: int = 1
    clamp_min_one: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.power not in (1, 2):
            raise ValueError("power must be 1 or 2")
        if set(self.base_columns) & set(self.inverse_factors):
            raise ValueError("a column cannot be both base and inverse factor")

    @property
    def columns(self) -> set[str]:
        return set(self.base_columns) | set(self.inverse_factors)

    @property
    def trivial(self) -> bool:
        return not self.base_columns and not self.inverse_factors

    def squared(self) -> "TargetExpr":
        return TargetExpr(self.base_columns, self.inverse_factors, 2,
                          self.clamp_min_one)


COUNT_TARGET = TargetExpr()


def _roles(target: TargetExpr) -> dict[str, tuple[bool, bool]]:
    roles = {}
    for c in target.base_columns:
        roles[c] = (False, c in target.clamp_min_one)
    for c in target.inverse_factors:
        roles[c] = (True, False)
    return roles


def _evaluate(node, conj_by_col, roles, power: int, active: frozenset) -> float:
    if not node.scope & active:
        return 1.0
    if isinstance(node, Leaf):
        ops = conj_by_col.get(node.column, ())
        role = roles.get(node.column)
        if role is None:
            return node.mass(ops)
        invert, clamp = role
        return node.moment(ops, power=power, invert=invert, clamp_one=clamp)
    if isinstance(node, ProductNode):
        out = 1.0
        for child in node.children:
            out *= _evaluate(child, conj_by_col, roles, power, active)
            if out == 0.0:
                return 0.0
        return out
    if isinstance(node, SumNode):
        w = node.weights
        return float(sum(wi * _evaluate(child, conj_by_col, roles, power, active)
                         for wi, child in zip(w, node.children)))
    raise ModelInvariantError(f"unknown node type {type(node)!r}")


def _run(rspn: Rspn, pred: Predicate, target: TargetExpr) -> float:
    conj_by_col = pred.by_column()
    roles = _roles(target)
    missing = (set(conj_by_col) | set(roles)) - rspn.scope
    if missing:
        raise ModelInvariantError(
            f"columns {sorted(missing)} not in model scope over "
            f"{sorted(rspn.table_set)}")
    # columns that force a node visit; untouched subtrees contribute 1
    active = frozenset(conj_by_col) | frozenset(roles)
    return _evaluate(rspn.root, conj_by_col, roles, target.power, active)


def translate_fd_predicate(rspn: Rspn, pred: Predicate) -> Predicate:
    """Rewrite conjuncts on FD-dependent columns to IN-conjuncts on the
    determinant, using the stored value dictionary.

    An unseen dependent value yields an empty IN list (probability 0).
    """
    if not rspn.fd_dictionaries:
        return pred
    by_dep = {fd.dependent: fd for fd in rspn.fd_dictionaries}
    out = []
    for conj in pred.conjuncts:
        fd = by_dep.get(conj.column)
        if fd is None or conj.column in rspn.scope:
            out.append(conj)
            continue
        allowed = tuple(sorted(
            (a for a, b in fd.dictionary.items()
             if b is not None and _satisfies(b, conj)),
            key=lambda v: (str(type(v)), str(v))))
        out.append(Conjunct(fd.determinant, "in", allowed))
    return Predicate(tuple(out))


def _satisfies(value, conj: Conjunct) -> bool:
    op, c = conj.op, conj.value
    try:
        if op == "=":
            return value == c
        if op == "!=":
            return value != c
        if op == "in":
            return value in c
        if op == "<":
            return value < c
        if op == "<=":
            return value <= c
        if op == ">":
            return value > c
        if op == ">=":
            return value >= c
        if op == "notnull":
            return value is not None
    except TypeError:
        return False
    raise ModelInvariantError(f"unknown operator {op!r}")


def probability(rspn: Rspn, pred: Predicate) -> float:
    """Probability mass of a conjunctive predicate under the model."""
    pred = translate_fd_predicate(rspn, pred)
    p = _run(rspn, pred, COUNT_TARGET)
    return min(max(p, 0.0), 1.0)


def expectation(rspn: Rspn, target: TargetExpr, pred: Predicate) -> float:
    """Unnormalized E[target * 1_pred]."""
    pred = translate_fd_predicate(rspn, pred)
    return _run(rspn, pred, target)


def second_moment(rspn: Rspn, target: TargetExpr, pred: Predicate) -> float:
    """Unnormalized E[target^2 * 1_pred]; squares push down to the leaves."""
    return expectation(rspn, target.squared(), pred)


def _support_pred(pred: Predicate, target: TargetExpr) -> Predicate:
    extra = tuple(Conjunct(c, "notnull") for c in target.base_columns)
    return pred.and_also(*extra)


def conditional_expectation(rspn: Rspn, target: TargetExpr,
                            pred: Predicate) -> float:
    """E[target | pred] normalized by the same inverse-factor weighting.

    NULL base values contribute zero above and are excluded from the
    normalizer below.
    """
    num = expectation(rspn, target, pred)
    denom_target = TargetExpr((), target.inverse_factors, target.power)
    den = expectation(rspn, denom_target, _support_pred(pred, target))
    if den <= 0.0:
        raise EmptyConditionError(
            f"condition {pred} has zero probability under the model")
    return num / den


def conditional_variance(rspn: Rspn, target: TargetExpr,
                         pred: Predicate) -> float:
    """V[target | pred] = E[target^2|pred] - E[target|pred]^2, floored at 0."""
    mean = conditional_expectation(rspn, target, pred)
    sq = conditional_expectation(rspn, target.squared(), pred)
    return max(sq - mean * mean, 0.0)


def mpe(rspn: Rspn, evidence: Predicate, target: str):
    """Most probable explanation: value of ``target`` in the max-product
    completion of the evidence.

    Sum nodes pick the child maximizing weight times child score (ties ->
    lowest child index); leaves return their most frequent value
    consistent with the evidence (ties -> smallest value).
    """
    evidence = translate_fd_predicate(rspn, evidence)
    if target not in rspn.scope:
        raise ModelInvariantError(f"target column {target!r} not in model scope")
    if probability(rspn, evidence) <= 0.0:
        raise EmptyConditionError("evidence has zero probability under the model")
    conj_by_col = evidence.by_column()

    def visit(node):
        if isinstance(node, Leaf):
            f, v = node.argmax(conj_by_col.get(node.column, ()))
            return f, {node.column: v}
        if isinstance(node, ProductNode):
            score, assign = 1.0, {}
            for child in node.children:
                s, a = visit(child)
                score *= s
                assign.update(a)
            return score, assign
        best_score, best_assign = -1.0, {}
        for wi, child in zip(node.weights, node.children):
            s, a = visit(child)
            if wi * s > best_score:
                best_score, best_assign = wi * s, a
        return best_score, best_assign

    _, assignment = visit(rspn.root)
    return assignment.get(target)
