"""Two-phase tree matching, edit scripts, and statement-level diffs.

Matching follows the classic two-phase scheme:

  phase 1 (anchors)    greedy top-down search for maximal isomorphic
                       subtree pairs of height >= ``min_height``, visited
                       in decreasing height order; ambiguous candidates
                       are resolved by parent similarity, then leftmost
                       position.
  phase 2 (containers) bottom-up pass mapping an unmapped ancestor to the
                       equal-label node whose descendants share the most
                       mappings (dice ratio >= ``sim_threshold``); equal-
                       label roots always map.  After each container
                       match, recovery adds a maximum-cardinality
                       label-respecting matching among the still-unmapped
                       descendants, pairing nodes in preorder.

Edit scripts use the insert/delete/update/move vocabulary with
Chawathe-style child alignment; ``apply_edit_script`` realizes the
documented apply semantics and is the oracle used by the tests.
"""

from dataclasses import dataclass, field

from .ast_core import (
    STATEMENT_LABELS, AstNode, iter_nodes, iter_postorder, node_text,
    renumber,
)
from .errors import InconsistentMapping


@dataclass
class MappingSet:
    """Injective, label-respecting node correspondence between two trees."""

    pairs: set = field(default_factory=set)
    src_to_dst: dict = field(default_factory=dict)
    dst_to_src: dict = field(default_factory=dict)

    def add(self, src_node, dst_node):
        if src_node.label != dst_node.label:
            raise ValueError(
                f"label mismatch: {src_node.label} vs {dst_node.label}")
        if src_node.id in self.src_to_dst or dst_node.id in self.dst_to_src:
            return False
        self.pairs.add((src_node.id, dst_node.id))
        self.src_to_dst[src_node.id] = dst_node.id
        self.dst_to_src[dst_node.id] = src_node.id
        return True

    def has_src(self, node_id):
        return node_id in self.src_to_dst

    def has_dst(self, node_id):
        return node_id in self.dst_to_src

    def __len__(self):
        return len(self.pairs)


class _TreeIndex:
    """Preorder list, parents, descendants, and isomorphism fingerprints.

    Fingerprint ids are only comparable between indexes built over the
    same (shared) interning table.
    """

    def __init__(self, root, fingerprint_table=None):
        self.root = root
        self.order = list(iter_nodes(root))
        self.index = {n.id: i for i, n in enumerate(self.order)}
        self.by_id = {n.id: n for n in self.order}
        self.parent = {}
        for node in self.order:
            for child in node.children:
                self.parent[child.id] = node
        self.fingerprint = {}
        self._fingerprint_table = ({} if fingerprint_table is None
                                   else fingerprint_table)
        self._compute_fingerprints(root)

    def _compute_fingerprints(self, root):
        table = self._fingerprint_table
        for node in iter_postorder(root):
            key = (node.label, node.value,
                   tuple(self.fingerprint[c.id] for c in node.children))
            if key not in table:
                table[key] = len(table)
            self.fingerprint[node.id] = table[key]

    def descendants(self, node):
        out = []
        stack = list(node.children)
        while stack:
            n = stack.pop()
            out.append(n)
            stack.extend(n.children)
        return out

    def ancestors(self, node):
        out = []
        cur = self.parent.get(node.id)
        while cur is not None:
            out.append(cur)
            cur = self.parent.get(cur.id)
        return out


def _iso_pairs(a, b):
    """Lockstep node pairs of two isomorphic subtrees."""
    yield a, b
    for ca, cb in zip(a.children, b.children):
        yield from _iso_pairs(ca, cb)


def _dice(src_idx, dst_idx, a, b, mapping):
    """Ratio of descendants of ``a`` mapped into descendants of ``b``."""
    if a is None or b is None:
        return 0.0
    desc_a = src_idx.descendants(a)
    desc_b = dst_idx.descendants(b)
    if not desc_a and not desc_b:
        return 0.0
    b_ids = {n.id for n in desc_b}
    common = sum(1 for n in desc_a
                 if mapping.src_to_dst.get(n.id) in b_ids)
    return 2.0 * common / (len(desc_a) + len(desc_b))


def match_trees(src, dst, min_height=2, sim_threshold=0.5):
    """Compute anchor, container, and recovery mappings between two trees."""
    if min_height < 1:
        raise ValueError("min_height must be >= 1")
    if not 0 < sim_threshold <= 1:
        raise ValueError("sim_threshold must be in (0, 1]")
    shared = {}
    src_idx = _TreeIndex(src, shared)
    dst_idx = _TreeIndex(dst, shared)
    mapping = MappingSet()
    _top_down(src_idx, dst_idx, mapping, min_height)
    _bottom_up(src_idx, dst_idx, mapping, sim_threshold)
    return mapping


def _top_down(src_idx, dst_idx, mapping, min_height):
    # Height-indexed worklists; entries sorted by (height desc, preorder).
    lists = {}

    def push(side, node):
        lists.setdefault(side, []).append(node)

    def peek_max(side):
        nodes = lists.get(side) or []
        return max((n.height for n in nodes), default=0)

    def pop_max(side, idx):
        nodes = lists.get(side) or []
        h = max(n.height for n in nodes)
        top = [n for n in nodes if n.height == h]
        lists[side] = [n for n in nodes if n.height != h]
        return sorted(top, key=lambda n: idx.index[n.id])

    push("src", src_idx.root)
    push("dst", dst_idx.root)
    candidates = []

    while min(peek_max("src"), peek_max("dst")) >= min_height:
        if peek_max("src") != peek_max("dst"):
            side, idx = (("src", src_idx) if peek_max("src") > peek_max("dst")
                         else ("dst", dst_idx))
            for node in pop_max(side, idx):
                for child in node.children:
                    push(side, child)
            continue
        h_src = pop_max("src", src_idx)
        h_dst = pop_max("dst", dst_idx)
        matched_src, matched_dst = set(), set()
        for a in h_src:
            fa = src_idx.fingerprint[a.id]
            partners = [b for b in h_dst if dst_idx.fingerprint[b.id] == fa]
            if not partners:
                continue
            rivals = [a2 for a2 in h_src if src_idx.fingerprint[a2.id] == fa]
            if len(partners) == 1 and len(rivals) == 1:
                b = partners[0]
                for na, nb in _iso_pairs(a, b):
                    mapping.add(na, nb)
                matched_src.add(a.id)
                matched_dst.add(b.id)
            else:
                for b in partners:
                    candidates.append((a, b))
                matched_src.add(a.id)
                matched_dst.update(b.id for b in partners)
        for node in h_src:
            if node.id not in matched_src:
                for child in node.children:
                    push("src", child)
        for node in h_dst:
            if node.id not in matched_dst:
                for child in node.children:
                    push("dst", child)

    # Ambiguous anchors: best parent-dice first, then leftmost in source.
    def rank(pair):
        a, b = pair
        d = _dice(src_idx, dst_idx,
                  src_idx.parent.get(a.id), dst_idx.parent.get(b.id), mapping)
        return (-d, src_idx.index[a.id], dst_idx.index[b.id])

    used_src, used_dst = set(), set()
    for a, b in sorted(candidates, key=rank):
        if a.id in used_src or b.id in used_dst:
            continue
        if mapping.has_src(a.id) or mapping.has_dst(b.id):
            continue
        used_src.add(a.id)
        used_dst.add(b.id)
        for na, nb in _iso_pairs(a, b):
            mapping.add(na, nb)


def _bottom_up(src_idx, dst_idx, mapping, sim_threshold):
    for t1 in iter_postorder(src_idx.root):
        if t1 is src_idx.root:
            if (not mapping.has_src(t1.id)
                    and not mapping.has_dst(dst_idx.root.id)
                    and t1.label == dst_idx.root.label):
                mapping.add(t1, dst_idx.root)
                _recover(src_idx, dst_idx, t1, dst_idx.root, mapping)
            continue
        if mapping.has_src(t1.id) or t1.is_leaf():
            continue
        if not any(mapping.has_src(c.id) for c in t1.children):
            continue
        best, best_dice = None, 0.0
        for t2 in dst_idx.order:
            if t2.label != t1.label or mapping.has_dst(t2.id):
                continue
            d = _dice(src_idx, dst_idx, t1, t2, mapping)
            if d > best_dice:
                best, best_dice = t2, d
        if best is not None and best_dice >= sim_threshold:
            mapping.add(t1, best)
            _recover(src_idx, dst_idx, t1, best, mapping)


def _match_label(node):
    # Fixed tokens (keywords, operators, punctuation) only pair with the
    # same lexeme; identifier and literal leaves may pair across values,
    # which is what makes renames and literal changes show up as updates.
    if node.label in ("KW", "OP") and node.is_leaf():
        return (node.label, node.value)
    return node.label


def _recover(src_idx, dst_idx, t1, t2, mapping):
    """Pair still-unmapped equal-label descendants of a matched container."""
    free_src = {}
    for node in iter_nodes(t1):
        if node is not t1 and not mapping.has_src(node.id):
            free_src.setdefault(_match_label(node), []).append(node)
    free_dst = {}
    for node in iter_nodes(t2):
        if node is not t2 and not mapping.has_dst(node.id):
            free_dst.setdefault(_match_label(node), []).append(node)
    for label, src_nodes in free_src.items():
        for a, b in zip(src_nodes, free_dst.get(label, [])):
            mapping.add(a, b)


# --- edit scripts ----------------------------------------------------------


@dataclass
class EditAction:
    """One step of an edit script.

    node references: ``src`` ids name nodes of the source tree, ``dst``
    ids name nodes of the destination tree.  ``parent`` is a key in the
    apply-time registry: ``("s", id)`` source node, ``("d", id)`` node
    created by an earlier insert, ``("v", 0)`` the virtual super-root.
    """

    kind: str
    src: int = None
    dst: int = None
    payload: object = None
    parent: tuple = None
    pos: int = None

    def node_key(self):
        return ("s", self.src) if self.src is not None else ("d", self.dst)


class _WorkNode:
    __slots__ = ("key", "label", "value", "children", "parent", "span")

    def __init__(self, key, label, value, span=(0, 0)):
        self.key = key
        self.label = label
        self.value = value
        self.children = []
        self.parent = None
        self.span = span

    def attach(self, child, pos):
        pos = max(0, min(pos, len(self.children)))
        self.children.insert(pos, child)
        child.parent = self

    def detach(self):
        if self.parent is not None:
            self.parent.children.remove(self)
            self.parent = None


def _work_copy(root):
    registry = {}
    virtual = _WorkNode(("v", 0), "<virtual>", "")
    registry[virtual.key] = virtual

    def build(node):
        w = _WorkNode(("s", node.id), node.label, node.value, node.span)
        registry[w.key] = w
        for child in node.children:
            w.attach(build(child), len(w.children))
        return w

    virtual.attach(build(root), 0)
    return virtual, registry


def _lcs(s1, s2, equal):
    n, m = len(s1), len(s2)
    table = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        for j in range(m - 1, -1, -1):
            if equal(s1[i], s2[j]):
                table[i][j] = table[i + 1][j + 1] + 1
            else:
                table[i][j] = max(table[i + 1][j], table[i][j + 1])
    out = []
    i = j = 0
    while i < n and j < m:
        if equal(s1[i], s2[j]):
            out.append((s1[i], s2[j]))
            i += 1
            j += 1
        elif table[i + 1][j] >= table[i][j + 1]:
            i += 1
        else:
            j += 1
    return out


def edit_script(src, dst, mapping):
    """Actions turning ``src`` into ``dst`` under the documented semantics."""
    src_ids = {n.id for n in iter_nodes(src)}
    dst_ids = {n.id for n in iter_nodes(dst)}
    for s, d in mapping.pairs:
        if s not in src_ids or d not in dst_ids:
            raise InconsistentMapping(f"mapping ({s}, {d}) references unknown ids")

    dst_parent = {}
    for node in iter_nodes(dst):
        for child in node.children:
            dst_parent[child.id] = node

    virtual, registry = _work_copy(src)
    dst_to_work = {}
    for s, d in mapping.pairs:
        dst_to_work[d] = registry[("s", s)]
    work_to_dst = {w.key: d for d, w in dst_to_work.items()}

    src_in_order = set()   # work-node keys
    dst_in_order = set()   # dst node ids
    actions = []

    def find_pos(x):
        y = dst_parent.get(x.id)
        siblings = y.children if y is not None else [x]
        in_order = [c for c in siblings if c.id in dst_in_order]
        if in_order and in_order[0] is x:
            return 0
        prev = None
        for c in siblings:
            if c is x:
                break
            if c.id in dst_in_order:
                prev = c
        if prev is None:
            return 0
        u = dst_to_work[prev.id]
        return u.parent.children.index(u) + 1

    def work_parent_key(x):
        y = dst_parent.get(x.id)
        if y is None:
            return ("v", 0)
        return dst_to_work[y.id].key

    def align_children(w, x):
        for c in w.children:
            src_in_order.discard(c.key)
        for c in x.children:
            dst_in_order.discard(c.id)
        s1 = [a for a in w.children
              if a.key in work_to_dst
              and dst_parent.get(work_to_dst[a.key]) is x]
        s2 = [b for b in x.children
              if b.id in dst_to_work and dst_to_work[b.id].parent is w]
        matched = _lcs(s1, s2, lambda a, b: work_to_dst.get(a.key) == b.id)
        for a, b in matched:
            src_in_order.add(a.key)
            dst_in_order.add(b.id)
        matched_set = {(a.key, b.id) for a, b in matched}
        for b in s2:
            a = dst_to_work[b.id]
            if (a.key, b.id) in matched_set:
                continue
            k = find_pos(b)
            a.detach()
            w.attach(a, k)
            actions.append(EditAction(
                "move",
                src=a.key[1] if a.key[0] == "s" else None,
                dst=b.id, parent=w.key, pos=k))
            src_in_order.add(a.key)
            dst_in_order.add(b.id)

    queue = [dst]
    while queue:
        x = queue.pop(0)
        queue.extend(x.children)
        if x.id not in dst_to_work:
            k = find_pos(x)
            parent_key = work_parent_key(x)
            z = registry[parent_key]
            w = _WorkNode(("d", x.id), x.label, x.value, x.span)
            registry[w.key] = w
            z.attach(w, k)
            dst_to_work[x.id] = w
            work_to_dst[w.key] = x.id
            actions.append(EditAction("insert", dst=x.id,
                                      payload=(x.label, x.value),
                                      parent=parent_key, pos=k))
            src_in_order.add(w.key)
            dst_in_order.add(x.id)
        else:
            w = dst_to_work[x.id]
            if w.value != x.value:
                actions.append(EditAction(
                    "update",
                    src=w.key[1] if w.key[0] == "s" else None,
                    dst=x.id, payload=x.value))
                w.value = x.value
            parent_key = work_parent_key(x)
            if w.parent is None or w.parent.key != parent_key:
                k = find_pos(x)
                z = registry[parent_key]
                w.detach()
                z.attach(w, k)
                actions.append(EditAction(
                    "move",
                    src=w.key[1] if w.key[0] == "s" else None,
                    dst=x.id, parent=parent_key, pos=k))
                src_in_order.add(w.key)
                dst_in_order.add(x.id)
        align_children(dst_to_work[x.id], x)

    for node in iter_postorder(src):
        if not mapping.has_src(node.id):
            w = registry[("s", node.id)]
            w.detach()
            actions.append(EditAction("delete", src=node.id))

    return actions


def apply_edit_script(src, actions):
    """Replay an edit script on a fresh copy of ``src``."""
    virtual, registry = _work_copy(src)
    for action in actions:
        if action.kind == "insert":
            label, value = action.payload
            w = _WorkNode(("d", action.dst), label, value)
            registry[w.key] = w
            registry[action.parent].attach(w, action.pos)
        elif action.kind == "update":
            registry[action.node_key()].value = action.payload
        elif action.kind == "move":
            w = registry[action.node_key()]
            w.detach()
            registry[action.parent].attach(w, action.pos)
        elif action.kind == "delete":
            registry[("s", action.src)].detach()
        else:
            raise ValueError(f"unknown action kind {action.kind!r}")
    if len(virtual.children) != 1:
        raise ValueError("script did not leave a single root")

    def rebuild(w):
        node = AstNode(0, w.label, w.value, span=w.span)
        node.children = [rebuild(c) for c in w.children]
        node.height = 1 + max((c.height for c in node.children), default=0)
        return node

    return renumber(rebuild(virtual.children[0]))


# --- statement-level change pairs ------------------------------------------


@dataclass
class StatementDiff:
    """A changed statement: source side, destination side, or both.

    The method spans locate the enclosing method declaration on each
    side (mapped across trees for pure insertions/deletions) so that
    context chains can be built for a missing side.
    """

    st_src: str = None
    st_dst: str = None
    src_span: tuple = None
    dst_span: tuple = None
    src_method_span: tuple = None
    dst_method_span: tuple = None


def _enclosing_statement(idx, node):
    cur = node
    while cur is not None:
        if cur.label in STATEMENT_LABELS:
            return cur
        cur = idx.parent.get(cur.id)
    return None


def _outermost_unmapped_statement(idx, stmt, has_mapping):
    """Lift statements nested in an inserted/deleted statement to the top.

    A guard inserted around existing code is one statement diff, not one
    per nested statement.
    """
    top = stmt
    cur = idx.parent.get(stmt.id)
    while cur is not None:
        if cur.label in STATEMENT_LABELS and not has_mapping(cur.id):
            top = cur
        cur = idx.parent.get(cur.id)
    return top


def _inside_unmapped_container(idx, node, has_mapping):
    for anc in [node] + idx.ancestors(node):
        if anc.label in ("method_decl", "class_decl") and not has_mapping(anc.id):
            return True
    return False


def extract_change_pairs(src_unit, dst_unit, min_height=2, sim_threshold=0.5):
    """Statement-level diffs between two parsed units, in source order.

    Changes confined to whitespace or comments yield no diffs (the token
    streams are identical).  Additions or deletions of whole methods or
    classes are dropped.
    """
    src_idx = _TreeIndex(src_unit.ast)
    dst_idx = _TreeIndex(dst_unit.ast)
    mapping = match_trees(src_unit.ast, dst_unit.ast, min_height, sim_threshold)
    actions = edit_script(src_unit.ast, dst_unit.ast, mapping)

    affected_src, affected_dst = [], []
    seen_src, seen_dst = set(), set()

    def touch_src(node_id):
        node = src_idx.by_id.get(node_id)
        stmt = _enclosing_statement(src_idx, node) if node is not None else None
        if stmt is not None and not mapping.has_src(stmt.id):
            stmt = _outermost_unmapped_statement(src_idx, stmt, mapping.has_src)
        if stmt is not None and stmt.id not in seen_src:
            seen_src.add(stmt.id)
            affected_src.append(stmt)

    def touch_dst(node_id):
        node = dst_idx.by_id.get(node_id)
        stmt = _enclosing_statement(dst_idx, node) if node is not None else None
        if stmt is not None and not mapping.has_dst(stmt.id):
            stmt = _outermost_unmapped_statement(dst_idx, stmt, mapping.has_dst)
        if stmt is not None and stmt.id not in seen_dst:
            seen_dst.add(stmt.id)
            affected_dst.append(stmt)

    for action in actions:
        if action.kind == "insert":
            touch_dst(action.dst)
        elif action.kind == "delete":
            touch_src(action.src)
        elif action.kind == "update":
            touch_src(action.src)
            touch_dst(action.dst)
        elif action.kind == "move":
            if action.src is not None:
                touch_src(action.src)
            touch_dst(action.dst)

    diffs = {}
    for stmt in affected_src:
        partner_id = mapping.src_to_dst.get(stmt.id)
        partner = dst_idx.by_id.get(partner_id) if partner_id is not None else None
        if partner is not None and partner.label not in STATEMENT_LABELS:
            partner = None
        if partner is None and _inside_unmapped_container(
                src_idx, stmt, mapping.has_src):
            continue
        key = (stmt.id, partner.id if partner is not None else None)
        diffs[key] = (stmt, partner)
    for stmt in affected_dst:
        partner_id = mapping.dst_to_src.get(stmt.id)
        partner = src_idx.by_id.get(partner_id) if partner_id is not None else None
        if partner is not None and partner.label not in STATEMENT_LABELS:
            partner = None
        if partner is None and _inside_unmapped_container(
                dst_idx, stmt, mapping.has_dst):
            continue
        key = (partner.id if partner is not None else None, stmt.id)
        diffs[key] = (partner, stmt)

    def insertion_anchor(dst_stmt):
        # Position inserted statements after the source partner of their
        # closest mapped preceding sibling; fall back to the mapped parent.
        parent = dst_idx.parent.get(dst_stmt.id)
        if parent is not None:
            prev_partner = None
            for child in parent.children:
                if child is dst_stmt:
                    break
                pid = mapping.dst_to_src.get(child.id)
                if pid is not None:
                    prev_partner = src_idx.by_id[pid]
            if prev_partner is not None:
                return (prev_partner.span[1], 1)
        for anc in dst_idx.ancestors(dst_stmt):
            pid = mapping.dst_to_src.get(anc.id)
            if pid is not None:
                return (src_idx.by_id[pid].span[0], 1)
        return (0, 1)

    def sort_key(item):
        src_stmt, dst_stmt = item
        if src_stmt is not None:
            return (src_stmt.span[0], 0,
                    dst_stmt.span[0] if dst_stmt is not None else -1)
        anchor, bias = insertion_anchor(dst_stmt)
        return (anchor, bias, dst_stmt.span[0])

    def enclosing_method(idx, node):
        for anc in [node] + idx.ancestors(node):
            if anc.label == "method_decl":
                return anc
        return None

    out = []
    for src_stmt, dst_stmt in sorted(diffs.values(), key=sort_key):
        src_method = (enclosing_method(src_idx, src_stmt)
                      if src_stmt is not None else None)
        dst_method = (enclosing_method(dst_idx, dst_stmt)
                      if dst_stmt is not None else None)
        if src_method is None and dst_method is not None:
            pid = mapping.dst_to_src.get(dst_method.id)
            src_method = src_idx.by_id.get(pid) if pid is not None else None
        if dst_method is None and src_method is not None:
            pid = mapping.src_to_dst.get(src_method.id)
            dst_method = dst_idx.by_id.get(pid) if pid is not None else None
        out.append(StatementDiff(
            st_src=node_text(src_stmt) if src_stmt is not None else None,
            st_dst=node_text(dst_stmt) if dst_stmt is not None else None,
            src_span=src_stmt.span if src_stmt is not None else None,
            dst_span=dst_stmt.span if dst_stmt is not None else None,
            src_method_span=src_method.span if src_method is not None else None,
            dst_method_span=dst_method.span if dst_method is not None else None,
        ))
    return out
