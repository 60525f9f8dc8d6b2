"""Labeled ordered syntax trees for the Java-like subset language.

The parser builds a concrete tree: every token of the (comment-stripped)
input becomes a leaf, in source order, so concatenating leaf values
reproduces the token stream exactly.  Interior nodes carry syntactic
category labels; leaves carry the lexer token kind as label and the
lexeme as value.

Grammar summary (documented subset, not full Java):
  compilation unit:  package/import statements, class declarations and
                     top-level statements
  class body:        field declarations, method declarations (incl.
                     constructors), annotations and modifiers
  statements:        blocks, local declarations, expression statements,
                     if/while/do/for/foreach, return, throw, try-catch-
                     finally, break, continue, empty statement
  expressions:       assignment (incl. compound), ternary, binary and
                     unary operators, calls, field access, indexing,
                     ``new``, literals, parenthesized expressions
  types:             primitives, (qualified) names, one level of generic
                     arguments, array suffixes

Deliberate omissions: casts, lambdas, switch, nested classes, char
literals, annotations on local variables, nested generics relying on
``>>`` splitting.
"""

from dataclasses import dataclass, field

from .errors import EmptyInput, FormatError, ParseError
from .lexer import lex

# Node labels that count as statements for diff grouping and slicing.
# Method and class declarations contribute their header (signature) node,
# so a change to a signature or annotation is a statement-level change
# while body changes resolve to the inner statement.
STATEMENT_LABELS = frozenset({
    "decl_stmt", "expr_stmt", "if_stmt", "while_stmt", "do_stmt",
    "for_stmt", "foreach_stmt", "return_stmt", "throw_stmt", "try_stmt",
    "break_stmt", "continue_stmt", "empty_stmt", "field_decl",
    "method_header", "class_header", "package_decl", "import_decl",
})

_PRIMITIVES = frozenset({"int", "long", "float", "double", "boolean",
                         "char", "byte", "short"})
_MODIFIERS = frozenset({"public", "private", "protected", "static", "final",
                        "abstract", "synchronized", "volatile", "transient",
                        "native"})


@dataclass
class AstNode:
    """One node of a labeled ordered tree.

    ``value`` is the lexeme for leaves and ``""`` for interior nodes.
    ``span`` is a half-open byte range into the original text; trees
    built by :func:`decode` or edit-script application may carry
    ``(0, 0)`` spans.  ``height`` is 1 for leaves.
    """

    id: int
    label: str
    value: str = ""
    children: list = field(default_factory=list)
    span: tuple = (0, 0)
    height: int = 1

    def is_leaf(self):
        return not self.children

    def pretty(self, indent=0):
        pad = "  " * indent
        head = f"{pad}{self.label}"
        if self.is_leaf():
            head += f" {self.value!r}"
        lines = [head]
        for c in self.children:
            lines.append(c.pretty(indent + 1))
        return "\n".join(lines)


@dataclass
class SourceUnit:
    """A parsed source file: original text, AST and stripped comments."""

    path: str
    text: str
    ast: AstNode
    comments: list


def iter_nodes(root):
    """All nodes of the tree in preorder."""
    stack = [root]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children))


def iter_postorder(root):
    for child in root.children:
        yield from iter_postorder(child)
    yield root


def leaves(root):
    return [n for n in iter_nodes(root) if n.is_leaf()]


def leaf_texts(root):
    return [n.value for n in leaves(root)]


def node_text(root):
    """Whitespace-normalized source of a subtree (leaf values joined)."""
    return " ".join(leaf_texts(root))


def nodes_by_id(root):
    return {n.id: n for n in iter_nodes(root)}


def structurally_equal(a, b):
    """Equality on labels, values, and child order; ids and spans ignored."""
    if a.label != b.label or a.value != b.value:
        return False
    if len(a.children) != len(b.children):
        return False
    return all(structurally_equal(x, y) for x, y in zip(a.children, b.children))


def renumber(root):
    """Assign fresh preorder ids starting at 0; returns the same tree."""
    for i, node in enumerate(iter_nodes(root)):
        node.id = i
    return root


class _Builder:
    """Id assignment plus height/span derivation for new interior nodes."""

    def __init__(self):
        self.next_id = 0

    def take_id(self):
        i = self.next_id
        self.next_id += 1
        return i

    def leaf(self, token):
        return AstNode(self.take_id(), token.kind, token.text,
                       span=(token.start, token.end))

    def node(self, label, children):
        span = (children[0].span[0], children[-1].span[1]) if children else (0, 0)
        height = 1 + max((c.height for c in children), default=0)
        return AstNode(self.take_id(), label, "", list(children), span, height)


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens, self.comments = lex(text)
        self.pos = 0
        self.b = _Builder()

    # --- token plumbing -------------------------------------------------

    def peek(self, ahead=0):
        i = self.pos + ahead
        return self.tokens[i] if i < len(self.tokens) else None

    def at(self, text, ahead=0):
        t = self.peek(ahead)
        return t is not None and t.text == text

    def at_kind(self, kind, ahead=0):
        t = self.peek(ahead)
        return t is not None and t.kind == kind

    def advance(self):
        t = self.tokens[self.pos]
        self.pos += 1
        return self.b.leaf(t)

    def expect(self, text):
        if not self.at(text):
            self.fail(f"expected {text!r}")
        return self.advance()

    def fail(self, message):
        if self.pos < len(self.tokens):
            offset = self.tokens[self.pos].start
        else:
            offset = len(self.text)
        line = self.text.count("\n", 0, offset) + 1
        col = offset - (self.text.rfind("\n", 0, offset) + 1) + 1
        raise ParseError(message, line, col)

    # --- entry ----------------------------------------------------------

    def parse_unit(self):
        items = []
        while self.peek() is not None:
            items.append(self.parse_top_level())
        root = self.b.node("cu", items)
        if not items:
            root.span = (0, len(self.text))
        return renumber(root)

    def parse_top_level(self):
        if self.at("package"):
            return self.parse_dotted_directive("package_decl")
        if self.at("import"):
            return self.parse_dotted_directive("import_decl")
        if self.looks_like_class():
            return self.parse_class()
        return self.parse_statement()

    def parse_dotted_directive(self, label):
        parts = [self.advance()]
        parts.append(self.expect_name())
        while self.at("."):
            parts.append(self.advance())
            if self.at("*"):
                parts.append(self.advance())
                break
            parts.append(self.expect_name())
        parts.append(self.expect(";"))
        return self.b.node(label, parts)

    def expect_name(self):
        if not self.at_kind("NAME"):
            self.fail("expected identifier")
        return self.advance()

    def looks_like_class(self):
        i = 0
        while True:
            t = self.peek(i)
            if t is None:
                return False
            if t.text == "@":
                i += 2  # '@' and the annotation name
                if self.at("(", i):
                    depth = 0
                    while True:
                        u = self.peek(i)
                        if u is None:
                            return False
                        if u.text == "(":
                            depth += 1
                        elif u.text == ")":
                            depth -= 1
                            if depth == 0:
                                i += 1
                                break
                        i += 1
                continue
            if t.text in _MODIFIERS:
                i += 1
                continue
            return t.text == "class"

    # --- classes and members ---------------------------------------------

    def parse_annotations_and_modifiers(self):
        out = []
        while True:
            if self.at("@"):
                out.append(self.parse_annotation())
            elif self.peek() is not None and self.peek().text in _MODIFIERS:
                out.append(self.advance())
            else:
                return out

    def parse_annotation(self):
        parts = [self.expect("@"), self.expect_name()]
        if self.at("("):
            parts.append(self.advance())
            depth = 1
            while depth > 0:
                if self.peek() is None:
                    self.fail("unterminated annotation arguments")
                if self.at("("):
                    depth += 1
                elif self.at(")"):
                    depth -= 1
                parts.append(self.advance())
        return self.b.node("annotation", parts)

    def parse_class(self):
        head = self.parse_annotations_and_modifiers()
        head.append(self.expect("class"))
        head.append(self.expect_name())
        if self.at("extends"):
            head.append(self.advance())
            head.append(self.parse_type())
        if self.at("implements"):
            head.append(self.advance())
            head.append(self.parse_type())
            while self.at(","):
                head.append(self.advance())
                head.append(self.parse_type())
        header = self.b.node("class_header", head)
        body = [self.expect("{")]
        while not self.at("}"):
            if self.peek() is None:
                self.fail("unterminated class body")
            body.append(self.parse_member())
        body.append(self.expect("}"))
        return self.b.node("class_decl", [header, self.b.node("class_body", body)])

    def parse_member(self):
        prefix = self.parse_annotations_and_modifiers()
        if self.at("class"):
            self.fail("nested classes are not supported")
        # constructor: Name ( ... )
        if self.at_kind("NAME") and self.at("(", 1):
            name = self.advance()
            return self.parse_method_rest(prefix, None, name)
        rettype = self.advance() if self.at("void") else self.parse_type()
        name = self.expect_name()
        if self.at("("):
            return self.parse_method_rest(prefix, rettype, name)
        return self.parse_field_rest(prefix, rettype, name)

    def parse_method_rest(self, prefix, rettype, name):
        head = list(prefix)
        if rettype is not None:
            head.append(rettype)
        head.append(name)
        head.append(self.expect("("))
        first = True
        while not self.at(")"):
            if not first:
                head.append(self.expect(","))
            first = False
            head.append(self.parse_param())
        head.append(self.expect(")"))
        if self.at("throws"):
            head.append(self.advance())
            head.append(self.parse_type())
            while self.at(","):
                head.append(self.advance())
                head.append(self.parse_type())
        header = self.b.node("method_header", head)
        if self.at(";"):  # abstract/native method
            return self.b.node("method_decl", [header, self.advance()])
        body = self.parse_block()
        return self.b.node("method_decl", [header, body])

    def parse_param(self):
        parts = []
        if self.at("final"):
            parts.append(self.advance())
        parts.append(self.parse_type())
        parts.append(self.expect_name())
        return self.b.node("param", parts)

    def parse_field_rest(self, prefix, ftype, name):
        parts = list(prefix) + [ftype, name]
        if self.at("="):
            parts.append(self.advance())
            parts.append(self.parse_expr())
        parts.append(self.expect(";"))
        return self.b.node("field_decl", parts)

    # --- types ------------------------------------------------------------

    def parse_type(self):
        parts = []
        if self.peek() is not None and self.peek().text in _PRIMITIVES:
            parts.append(self.advance())
        elif self.at_kind("NAME"):
            parts.append(self.advance())
            while self.at(".") and self.at_kind("NAME", 1):
                parts.append(self.advance())
                parts.append(self.advance())
            if self.at("<"):
                parts.append(self.advance())
                parts.append(self.parse_type())
                while self.at(","):
                    parts.append(self.advance())
                    parts.append(self.parse_type())
                parts.append(self.expect(">"))
        else:
            self.fail("expected type")
        while self.at("[") and self.at("]", 1):
            parts.append(self.advance())
            parts.append(self.advance())
        return self.b.node("type", parts)

    # --- statements ---------------------------------------------------------

    def parse_block(self):
        parts = [self.expect("{")]
        while not self.at("}"):
            if self.peek() is None:
                self.fail("unterminated block")
            parts.append(self.parse_statement())
        parts.append(self.expect("}"))
        return self.b.node("block", parts)

    def parse_statement(self):
        t = self.peek()
        if t is None:
            self.fail("expected statement")
        if t.text == "{":
            return self.parse_block()
        if t.text == ";":
            return self.b.node("empty_stmt", [self.advance()])
        if t.text == "if":
            return self.parse_if()
        if t.text == "while":
            parts = [self.advance(), self.expect("("), self.parse_expr(),
                     self.expect(")"), self.parse_statement()]
            return self.b.node("while_stmt", parts)
        if t.text == "do":
            parts = [self.advance(), self.parse_statement(), self.expect("while"),
                     self.expect("("), self.parse_expr(), self.expect(")"),
                     self.expect(";")]
            return self.b.node("do_stmt", parts)
        if t.text == "for":
            return self.parse_for()
        if t.text == "return":
            parts = [self.advance()]
            if not self.at(";"):
                parts.append(self.parse_expr())
            parts.append(self.expect(";"))
            return self.b.node("return_stmt", parts)
        if t.text == "throw":
            parts = [self.advance(), self.parse_expr(), self.expect(";")]
            return self.b.node("throw_stmt", parts)
        if t.text == "try":
            return self.parse_try()
        if t.text in ("break", "continue"):
            label = "break_stmt" if t.text == "break" else "continue_stmt"
            parts = [self.advance()]
            if self.at_kind("NAME"):
                parts.append(self.advance())
            parts.append(self.expect(";"))
            return self.b.node(label, parts)
        decl = self.try_parse_declaration()
        if decl is not None:
            return decl
        expr = self.parse_expr()
        return self.b.node("expr_stmt", [expr, self.expect(";")])

    def parse_if(self):
        parts = [self.expect("if"), self.expect("("), self.parse_expr(),
                 self.expect(")"), self.parse_statement()]
        if self.at("else"):
            parts.append(self.advance())
            parts.append(self.parse_statement())
        return self.b.node("if_stmt", parts)

    def parse_for(self):
        kw = self.expect("for")
        lparen = self.expect("(")
        # enhanced for: type name : expr
        saved = self.pos, self.b.next_id
        try:
            ftype = self.parse_type()
            name = self.expect_name()
            if self.at(":"):
                colon = self.advance()
                seq = self.parse_expr()
                rparen = self.expect(")")
                body = self.parse_statement()
                return self.b.node(
                    "foreach_stmt",
                    [kw, lparen, ftype, name, colon, seq, rparen, body])
            raise ParseError("not a foreach", 0, 0)
        except ParseError:
            self.pos, self.b.next_id = saved
        if self.at(";"):
            init = self.b.node("empty_stmt", [self.advance()])
        else:
            init = self.try_parse_declaration()
            if init is None:
                init = self.b.node("expr_stmt",
                                   [self.parse_expr(), self.expect(";")])
        cond = [] if self.at(";") else [self.parse_expr()]
        semi = self.expect(";")
        update = []
        if not self.at(")"):
            update.append(self.parse_expr())
            while self.at(","):
                update.append(self.advance())
                update.append(self.parse_expr())
        rparen = self.expect(")")
        body = self.parse_statement()
        return self.b.node("for_stmt",
                           [kw, lparen, init, *cond, semi, *update, rparen, body])

    def parse_try(self):
        parts = [self.expect("try"), self.parse_block()]
        saw_handler = False
        while self.at("catch"):
            saw_handler = True
            cparts = [self.advance(), self.expect("("), self.parse_type(),
                      self.expect_name(), self.expect(")"), self.parse_block()]
            parts.append(self.b.node("catch_clause", cparts))
        if self.at("finally"):
            saw_handler = True
            parts.append(self.b.node("finally_clause",
                                     [self.advance(), self.parse_block()]))
        if not saw_handler:
            self.fail("try requires catch or finally")
        return self.b.node("try_stmt", parts)

    def try_parse_declaration(self):
        """Parse ``[final] type name [= expr] ;`` or backtrack to None."""
        saved = self.pos, self.b.next_id
        parts = []
        try:
            if self.at("final"):
                parts.append(self.advance())
            t = self.peek()
            if t is None or (t.kind != "NAME" and t.text not in _PRIMITIVES):
                raise ParseError("not a declaration", 0, 0)
            parts.append(self.parse_type())
            parts.append(self.expect_name())
            if self.at("="):
                parts.append(self.advance())
                parts.append(self.parse_expr())
            parts.append(self.expect(";"))
            return self.b.node("decl_stmt", parts)
        except ParseError:
            self.pos, self.b.next_id = saved
            return None

    # --- expressions ----------------------------------------------------

    def parse_expr(self):
        return self.parse_assignment()

    _ASSIGN_OPS = frozenset({"=", "+=", "-=", "*=", "/=", "%=", "&=", "|=",
                             "^=", "<<=", ">>=", ">>>="})

    def parse_assignment(self):
        left = self.parse_ternary()
        t = self.peek()
        if t is not None and t.text in self._ASSIGN_OPS:
            op = self.advance()
            right = self.parse_assignment()
            return self.b.node("assign", [left, op, right])
        return left

    def parse_ternary(self):
        cond = self.parse_binary(0)
        if self.at("?"):
            q = self.advance()
            then = self.parse_expr()
            colon = self.expect(":")
            other = self.parse_ternary()
            return self.b.node("ternary", [cond, q, then, colon, other])
        return cond

    _BIN_LEVELS = (
        ("||",), ("&&",), ("|",), ("^",), ("&",), ("==", "!="),
        ("<", ">", "<=", ">=", "instanceof"),
        ("<<", ">>", ">>>"), ("+", "-"), ("*", "/", "%"),
    )

    def parse_binary(self, level):
        if level >= len(self._BIN_LEVELS):
            return self.parse_unary()
        ops = self._BIN_LEVELS[level]
        left = self.parse_binary(level + 1)
        while True:
            t = self.peek()
            if t is None or t.text not in ops:
                return left
            op = self.advance()
            if t.text == "instanceof":
                right = self.parse_type()
            else:
                right = self.parse_binary(level + 1)
            left = self.b.node("binop", [left, op, right])

    def parse_unary(self):
        t = self.peek()
        if t is not None and t.text in ("!", "-", "+", "~", "++", "--"):
            op = self.advance()
            operand = self.parse_unary()
            return self.b.node("unop", [op, operand])
        return self.parse_postfix()

    def parse_postfix(self):
        node = self.parse_primary()
        while True:
            if self.at("."):
                dot = self.advance()
                name = self.expect_name()
                if self.at("("):
                    args = self.parse_args()
                    node = self.b.node("call", [node, dot, name, *args])
                else:
                    node = self.b.node("member", [node, dot, name])
            elif self.at("("):
                args = self.parse_args()
                node = self.b.node("call", [node, *args])
            elif self.at("["):
                lb = self.advance()
                idx = self.parse_expr()
                rb = self.expect("]")
                node = self.b.node("index", [node, lb, idx, rb])
            elif self.at("++") or self.at("--"):
                node = self.b.node("unop", [node, self.advance()])
            else:
                return node

    def parse_args(self):
        parts = [self.expect("(")]
        first = True
        while not self.at(")"):
            if not first:
                parts.append(self.expect(","))
            first = False
            parts.append(self.parse_expr())
        parts.append(self.expect(")"))
        return parts

    def parse_primary(self):
        t = self.peek()
        if t is None:
            self.fail("expected expression")
        if t.kind in ("NUM", "STR"):
            return self.advance()
        if t.text in ("true", "false", "null", "this", "super"):
            return self.advance()
        if t.kind == "NAME":
            return self.advance()
        if t.text == "(":
            lp = self.advance()
            inner = self.parse_expr()
            rp = self.expect(")")
            return self.b.node("paren", [lp, inner, rp])
        if t.text == "new":
            kw = self.advance()
            ntype = self.parse_type()
            if self.at("["):
                parts = [kw, ntype]
                while self.at("["):
                    parts.append(self.advance())
                    if not self.at("]"):
                        parts.append(self.parse_expr())
                    parts.append(self.expect("]"))
                return self.b.node("new_array", parts)
            args = self.parse_args()
            return self.b.node("new_expr", [kw, ntype, *args])
        self.fail(f"unexpected token {t.text!r}")


def parse_source(text, path="<source>"):
    """Parse subset-language source into a :class:`SourceUnit`.

    Raises EmptyInput for empty/whitespace-only text and ParseError (with
    line/column) on the first syntax violation.
    """
    if not text.strip():
        raise EmptyInput("source text is empty")
    parser = _Parser(text)
    ast = parser.parse_unit()
    return SourceUnit(path, text, ast, parser.comments)


# --- parenthesized interchange format -----------------------------------
#
#   tree  := '(' LABEL value? INT INT tree* ')'
#   value := "'" escaped "'"        (present iff the node is a leaf)
#
# Single quotes and backslashes inside values are escaped as \' and \\.
# The two integers are the node's span.  Ids are not serialized; decode
# assigns fresh preorder ids.


def _escape(value):
    return value.replace("\\", "\\\\").replace("'", "\\'")


def encode_tree(node):
    """Serialize a tree to the parenthesized text format."""
    parts = [f"({node.label}"]
    if node.is_leaf():
        parts.append(f" '{_escape(node.value)}'")
    parts.append(f" {node.span[0]} {node.span[1]}")
    for child in node.children:
        parts.append(" " + encode_tree(child))
    parts.append(")")
    return "".join(parts)


class _TreeReader:
    def __init__(self, text):
        self.text = text
        self.pos = 0

    def error(self, message):
        raise FormatError(message, self.pos)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t\r\n":
            self.pos += 1

    def read_node(self):
        self.skip_ws()
        if self.pos >= len(self.text) or self.text[self.pos] != "(":
            self.error("expected '('")
        self.pos += 1
        label = self.read_atom()
        if not label:
            self.error("missing label")
        self.skip_ws()
        value = ""
        has_value = self.pos < len(self.text) and self.text[self.pos] == "'"
        if has_value:
            value = self.read_quoted()
        start = self.read_int()
        end = self.read_int()
        children = []
        while True:
            self.skip_ws()
            if self.pos >= len(self.text):
                self.error("unbalanced input")
            if self.text[self.pos] == ")":
                self.pos += 1
                break
            children.append(self.read_node())
        if children and has_value:
            self.error("interior node carries a value")
        height = 1 + max((c.height for c in children), default=0)
        return AstNode(0, label, value, children, (start, end), height)

    def read_atom(self):
        self.skip_ws()
        start = self.pos
        while (self.pos < len(self.text)
               and self.text[self.pos] not in " \t\r\n()'"):
            self.pos += 1
        return self.text[start:self.pos]

    def read_quoted(self):
        self.pos += 1  # opening quote
        out = []
        while self.pos < len(self.text):
            c = self.text[self.pos]
            if c == "\\":
                if self.pos + 1 >= len(self.text):
                    self.error("dangling escape")
                out.append(self.text[self.pos + 1])
                self.pos += 2
                continue
            if c == "'":
                self.pos += 1
                return "".join(out)
            out.append(c)
            self.pos += 1
        self.error("unterminated value")

    def read_int(self):
        atom = self.read_atom()
        try:
            return int(atom)
        except ValueError:
            self.error(f"expected integer, got {atom!r}")


def decode_tree(text):
    """Parse the parenthesized format back into an AstNode tree."""
    reader = _TreeReader(text)
    node = reader.read_node()
    reader.skip_ws()
    if reader.pos != len(text):
        reader.error("trailing data after tree")
    return renumber(node)


def ast_io(data, direction):
    """Encode an AstNode to text or decode text to an AstNode."""
    if direction == "encode":
        return encode_tree(data)
    if direction == "decode":
        return decode_tree(data)
    raise ValueError(f"unknown direction {direction!r}")
