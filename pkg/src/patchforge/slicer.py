"""Def-use context chains around changed statements.

A chain collects, in order: every class-level variable declaration, the
enclosing method's signature, each in-method definition statement that
reaches a name used by the focal statement, and finally the focal
statement itself.  Statements after the focal statement never appear.

Reaching semantics (documented; the tests hold an independent naive
oracle against it):

  * a definition is a declaration, a simple-name assignment (including
    compound assignment and ++/--), a parameter, a for-init, a foreach
    variable, or a catch parameter;
  * a later definition kills an earlier one only when it is
    unconditional relative to the focal statement, i.e. its chain of
    branch/loop/try contexts is a prefix of the focal statement's;
    definitions inside branches the focal statement is not part of are
    kept (conservative over-approximation);
  * definitions of names used inside included definitions are included
    transitively (toggleable).
"""

from dataclasses import dataclass, field

from .ast_core import STATEMENT_LABELS, iter_nodes, node_text
from .errors import SpanNotStatement
from .lexer import EMPTY_MARKER

_LEAF_STMTS = frozenset({
    "decl_stmt", "expr_stmt", "return_stmt", "throw_stmt",
    "break_stmt", "continue_stmt", "empty_stmt",
})


@dataclass
class DefUseChain:
    """Definition statements (source order) plus the focal statement."""

    defs: list = field(default_factory=list)
    stmt: str = ""

    def text(self):
        return " ".join([*self.defs, self.stmt])


@dataclass
class ChangePair:
    """Source and destination chains plus provenance metadata."""

    src_chain: DefUseChain
    dst_chain: DefUseChain
    meta: dict = field(default_factory=dict)


def _child_labels(node):
    return [c.label for c in node.children]


def _names_used(node, skip_ids=frozenset()):
    """Variable-name leaves used as values inside ``node``, in order.

    Type names, called method names, member names after ``.``, declared
    names and annotation names are not uses.
    """
    out = []

    def walk(n):
        if id(n) in skip_ids:
            return
        if n.is_leaf():
            if n.label == "NAME":
                out.append(n.value)
            return
        if n.label in ("type", "annotation"):
            return
        if n.label == "call":
            kids = n.children
            if len(kids) >= 3 and kids[1].label == "OP" and kids[1].value == ".":
                walk(kids[0])
                rest = kids[3:]
            else:
                if not kids[0].is_leaf():
                    walk(kids[0])
                rest = kids[1:]
            for k in rest:
                walk(k)
            return
        if n.label == "member":
            walk(n.children[0])
            return
        if n.label in ("decl_stmt", "field_decl"):
            saw_name = False
            for k in n.children:
                if not saw_name and k.label == "NAME":
                    saw_name = True  # the declared name
                    continue
                walk(k)
            return
        if n.label == "assign":
            lhs, op = n.children[0], n.children[1]
            if lhs.label == "NAME":
                if op.value != "=":
                    out.append(lhs.value)  # compound assignment reads too
            else:
                walk(lhs)
            for k in n.children[2:]:
                walk(k)
            return
        if n.label == "param":
            return
        if n.label == "catch_clause":
            for k in n.children:
                if k.label not in ("type", "NAME"):
                    walk(k)
            return
        if n.label == "foreach_stmt":
            saw_name = False
            for k in n.children:
                if k.label == "type":
                    continue
                if not saw_name and k.label == "NAME":
                    saw_name = True
                    continue
                walk(k)
            return
        for k in n.children:
            walk(k)

    walk(node)
    return out


def _names_defined(node):
    """Names this node defines directly (not descending into nested blocks)."""
    out = []
    label = node.label
    if label in ("decl_stmt", "field_decl"):
        for k in node.children:
            if k.label == "NAME":
                out.append(k.value)
                break
    elif label == "expr_stmt":
        out.extend(_expr_defs(node.children[0]))
    elif label == "method_header":
        for k in node.children:
            if k.label == "param":
                for kk in k.children:
                    if kk.label == "NAME":
                        out.append(kk.value)
    elif label == "foreach_stmt":
        for k in node.children:
            if k.label == "NAME":
                out.append(k.value)
                break
    elif label == "catch_clause":
        for k in node.children:
            if k.label == "NAME":
                out.append(k.value)
                break
    return out


def _expr_defs(expr):
    out = []
    if expr.label == "assign":
        lhs = expr.children[0]
        if lhs.label == "NAME":
            out.append(lhs.value)
        rhs = expr.children[2]
        out.extend(_expr_defs(rhs))
    elif expr.label == "unop":
        kids = expr.children
        for i, k in enumerate(kids):
            if k.label == "OP" and k.value in ("++", "--"):
                other = kids[1 - i] if len(kids) == 2 else None
                if other is not None and other.label == "NAME":
                    out.append(other.value)
    return out


def _header_text(node, body):
    """Leaf text of ``node`` excluding the ``body`` subtree."""
    skip = {id(n) for n in iter_nodes(body)} if body is not None else set()
    return " ".join(n.value for n in iter_nodes(node)
                    if n.is_leaf() and id(n) not in skip)


@dataclass
class _Item:
    node: object
    pos: int
    guard: tuple
    defs: list
    uses: list
    text: str
    is_header: bool = False


def _method_items(method_node):
    """Flat statement items of a method in source order, with guard paths."""
    items = []
    header = None
    body = None
    for child in method_node.children:
        if child.label == "method_header":
            header = child
        elif child.label == "block":
            body = child
    if header is not None:
        items.append(_Item(header, header.span[0], (), _names_defined(header),
                           [], node_text(header), is_header=True))

    def visit_stmt(node, guard):
        label = node.label
        if label in _LEAF_STMTS:
            items.append(_Item(node, node.span[0], guard, _names_defined(node),
                               _names_used(node), node_text(node)))
        elif label == "block":
            for c in node.children:
                if not c.is_leaf():
                    visit_stmt(c, guard)
        elif label == "if_stmt":
            cond = node.children[2]
            items.append(_Item(node, node.span[0], guard, [],
                               _names_used(cond), ""))
            branches = [c for c in node.children if not c.is_leaf()
                        and c is not cond and c.label != "type"]
            roles = ["then", "else"]
            for role, branch in zip(roles, branches):
                visit_stmt(branch, guard + ((node.id, role),))
        elif label == "while_stmt":
            cond, bodystmt = node.children[2], node.children[4]
            items.append(_Item(node, node.span[0], guard, [],
                               _names_used(cond), ""))
            visit_stmt(bodystmt, guard + ((node.id, "body"),))
        elif label == "do_stmt":
            bodystmt, cond = node.children[1], node.children[4]
            items.append(_Item(node, node.span[0], guard, [],
                               _names_used(cond), ""))
            visit_stmt(bodystmt, guard + ((node.id, "body"),))
        elif label == "for_stmt":
            bodystmt = node.children[-1]
            head_uses, head_defs = [], []
            for c in node.children[:-1]:
                if c.is_leaf():
                    continue
                head_uses.extend(_names_used(c))
                if c.label in _LEAF_STMTS:
                    head_defs.extend(_names_defined(c))
                else:
                    head_defs.extend(_expr_defs(c))
            items.append(_Item(node, node.span[0], guard, head_defs, head_uses,
                               _header_text(node, bodystmt)))
            visit_stmt(bodystmt, guard + ((node.id, "body"),))
        elif label == "foreach_stmt":
            bodystmt = node.children[-1]
            seq = node.children[5]
            items.append(_Item(node, node.span[0], guard,
                               _names_defined(node), _names_used(seq),
                               _header_text(node, bodystmt)))
            visit_stmt(bodystmt, guard + ((node.id, "body"),))
        elif label == "try_stmt":
            for c in node.children:
                if c.label == "block":
                    visit_stmt(c, guard + ((node.id, "try"),))
                elif c.label == "catch_clause":
                    blk = c.children[-1]
                    items.append(_Item(c, c.span[0], guard + ((node.id, "catch"),),
                                       _names_defined(c), [],
                                       _header_text(c, blk)))
                    visit_stmt(blk, guard + ((node.id, "catch"),))
                elif c.label == "finally_clause":
                    visit_stmt(c.children[-1], guard + ((node.id, "finally"),))

    if body is not None:
        visit_stmt(body, ())
    items.sort(key=lambda it: it.pos)
    return items


def _is_prefix(short, long):
    return short == long[:len(short)]


def _reaching(items, name, pos, guard):
    """Items defining ``name`` that reach position ``pos`` under ``guard``."""
    cands = [it for it in items if it.pos < pos and name in it.defs]
    out = []
    for it in cands:
        killed = any(other.pos > it.pos and _is_prefix(other.guard, guard)
                     for other in cands)
        if not killed:
            out.append(it)
    return out


def _find_statement(unit, span):
    span = tuple(span)
    for node in iter_nodes(unit.ast):
        if node.label in STATEMENT_LABELS and node.span == span:
            return node
    raise SpanNotStatement(f"span {span} is not a statement")


def _enclosers(unit, node):
    """(class_decl, method_decl) ancestors of ``node``, either may be None."""
    parents = {}
    for n in iter_nodes(unit.ast):
        for c in n.children:
            parents[c.id] = n
    cls = mth = None
    cur = node
    while cur is not None:
        if cur.label == "method_decl" and mth is None:
            mth = cur
        if cur.label == "class_decl" and cls is None:
            cls = cur
        cur = parents.get(cur.id)
    return cls, mth


def _class_fields(cls, exclude=None):
    if cls is None:
        return []
    out = []
    for node in iter_nodes(cls):
        if node.label == "field_decl" and node is not exclude:
            out.append(node_text(node))
    return out


def build_defuse_chain(unit, stmt_span, transitive=True):
    """Def-use chain for the statement at ``stmt_span`` in ``unit``.

    Raises SpanNotStatement when the span does not match a statement
    node exactly.
    """
    focal = _find_statement(unit, stmt_span)
    cls, mth = _enclosers(unit, focal)
    defs = _class_fields(cls, exclude=focal)

    if mth is not None:
        items = _method_items(mth)
        header_item = next((it for it in items if it.is_header), None)
        if header_item is not None and focal is not header_item.node:
            defs.append(header_item.text)
        if focal is not (header_item.node if header_item else None):
            focal_item = next((it for it in items if it.node is focal), None)
            uses = (focal_item.uses if focal_item is not None
                    else _names_used(focal))
            guard = focal_item.guard if focal_item is not None else ()
            pos = focal.span[0]
            picked = {}
            work = [(name, pos, guard) for name in uses]
            seen = set()
            while work:
                name, at, g = work.pop(0)
                for it in _reaching(items, name, at, g):
                    key = id(it)
                    if key in seen:
                        continue
                    seen.add(key)
                    if not it.is_header:
                        picked[key] = it
                    if transitive:
                        work.extend((u, it.pos, it.guard) for u in it.uses)
            for it in sorted(picked.values(), key=lambda x: x.pos):
                defs.append(it.text)

    return DefUseChain(defs=defs, stmt=node_text(focal))


def context_chain(unit, method_span):
    """Chain for a missing side: class fields, method signature, marker."""
    defs = []
    if method_span is not None:
        method = None
        for node in iter_nodes(unit.ast):
            if node.label == "method_decl" and node.span == tuple(method_span):
                method = node
                break
        if method is not None:
            cls, _ = _enclosers(unit, method)
            defs.extend(_class_fields(cls))
            for child in method.children:
                if child.label == "method_header":
                    defs.append(node_text(child))
                    break
    return DefUseChain(defs=defs, stmt=EMPTY_MARKER)


def assemble_change_pair(src_unit, dst_unit, diff, meta, transitive=True):
    """Contextualized chains for one statement diff.

    Pure insertions/deletions get a context-only chain (fields, method
    signature, empty-statement marker) on the missing side.
    """
    if diff.st_src is not None:
        src_chain = build_defuse_chain(src_unit, diff.src_span, transitive)
    else:
        src_chain = context_chain(src_unit, getattr(diff, "src_method_span", None))
    if diff.st_dst is not None:
        dst_chain = build_defuse_chain(dst_unit, diff.dst_span, transitive)
    else:
        dst_chain = context_chain(dst_unit, getattr(diff, "dst_method_span", None))
    return ChangePair(src_chain=src_chain, dst_chain=dst_chain, meta=dict(meta))
