"""Parse two versions of a file, match their trees, and list the changes.

Run:  python3 demos/01_parse_and_diff.py
"""

from patchforge import (
    ast_io, edit_script, extract_change_pairs, match_trees, parse_source,
)

BEFORE = """
class SessionStore {
    int limit = 100 ;
    void accept ( String token , int count ) {
        // validate later
        int total = count + 1 ;
        store ( token , total ) ;
        log ( total ) ;
    }
}
"""

AFTER = """
class SessionStore {
    int limit = 100 ;
    void accept ( String token , int count ) {
        if ( token == null ) { return ; }
        int total = count + 1 ;
        store ( escape ( token ) , total ) ;
        log ( total ) ;
    }
}
"""


def main():
    before = parse_source(BEFORE, path="SessionStore.java")
    after = parse_source(AFTER, path="SessionStore.java")
    print(f"parsed {sum(1 for _ in iter_all(before.ast))} source nodes, "
          f"{len(before.comments)} comment span(s) stripped")

    mapping = match_trees(before.ast, after.ast)
    print(f"two-phase matching mapped {len(mapping)} node pairs")

    actions = edit_script(before.ast, after.ast, mapping)
    kinds = {}
    for action in actions:
        kinds[action.kind] = kinds.get(action.kind, 0) + 1
    print(f"edit script: {kinds}")

    print("\nstatement-level diffs:")
    for diff in extract_change_pairs(before, after):
        print(f"  - {diff.st_src!r}  ->  {diff.st_dst!r}")

    print("\nserialized subtree (parenthesized interchange format):")
    decl = before.ast.children[0].children[1].children[1]
    text = ast_io(decl, "encode")
    print(" ", text[:76] + ("..." if len(text) > 76 else ""))
    clone = ast_io(text, "decode")
    print("  round-trips structurally:", structurally(decl, clone))


def iter_all(node):
    yield node
    for child in node.children:
        yield from iter_all(child)


def structurally(a, b):
    from patchforge import structurally_equal
    return structurally_equal(a, b)


if __name__ == "__main__":
    main()
