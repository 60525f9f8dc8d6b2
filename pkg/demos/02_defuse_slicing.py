"""Slice the def-use context around a focal statement.

Run:  python3 demos/02_defuse_slicing.py
"""

from patchforge import build_defuse_chain, parse_source
from patchforge.ast_core import STATEMENT_LABELS, iter_nodes, node_text

SOURCE = """
class Billing {
    int retries = 3 ;
    String endpoint = "https://api" ;
    void submit ( String payload , boolean audit ) {
        int attempt = 0 ;
        String body = payload ;
        if ( audit ) { body = wrap ( body ) ; }
        else { body = trim ( body ) ; }
        attempt = attempt + retries ;
        post ( endpoint , body , attempt ) ;
        log ( attempt ) ;
    }
}
"""


def main():
    unit = parse_source(SOURCE, path="Billing.java")
    focal = next(n for n in iter_nodes(unit.ast)
                 if n.label in STATEMENT_LABELS
                 and node_text(n).startswith("post ("))

    chain = build_defuse_chain(unit, focal.span)
    print("focal statement:")
    print(f"  {chain.stmt}")
    print("context chain (class fields, signature, reaching definitions):")
    for text in chain.defs:
        print(f"  {text}")
    print("\nnote: both branch assignments to `body` are kept, and the")
    print("trailing `log ( attempt ) ;` after the focal statement is not.")

    direct = build_defuse_chain(unit, focal.span, transitive=False)
    dropped = [d for d in chain.defs if d not in direct.defs]
    if dropped:
        print("\ndefinitions only present through transitive closure:")
        for text in dropped:
            print(f"  {text}")


if __name__ == "__main__":
    main()
