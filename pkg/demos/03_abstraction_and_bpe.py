"""Normalize a change pair, inspect the dictionary, refill it back,
and train a tiny byte-pair-encoding table.

Run:  python3 demos/03_abstraction_and_bpe.py
"""

from patchforge import (
    abstract_pair, bpe_segment, bpe_train, build_vocab, refill, tokenize,
)
from patchforge.abstraction import TokenSeq
from patchforge.slicer import ChangePair, DefUseChain


def main():
    pair = ChangePair(
        src_chain=DefUseChain(
            defs=["int limit = 100 ;", "void accept ( String token )",
                  'String body = "payload" ;'],
            stmt="store ( token , body , limit ) ;"),
        dst_chain=DefUseChain(
            defs=["int limit = 100 ;", "void accept ( String token )",
                  'String body = "payload" ;'],
            stmt="store ( escape ( token ) , body , limit ) ;"),
        meta={"vuln_id": "DEMO-1"})

    abstract_src, abstract_dst, dictionary = abstract_pair(pair)
    print("abstract source:")
    print(" ", abstract_src)
    print("abstract destination:")
    print(" ", abstract_dst)
    print("dictionary:")
    for placeholder, lexeme in dictionary.entries.items():
        print(f"  {placeholder:8s} -> {lexeme}")

    assert refill(abstract_src, dictionary) == pair.src_chain.text()
    assert refill(abstract_dst, dictionary) == pair.dst_chain.text()
    print("refill reproduces both chains exactly.")

    print("\nbyte-pair encoding over the corpus tokens:")
    corpus = [tokenize(abstract_src), tokenize(abstract_dst)]
    table = bpe_train(corpus, merge_count=40)
    print(f"  learned {len(table.merges)} merges; first five: "
          f"{table.merges[:5]}")
    segmented = bpe_segment(TokenSeq(["escape", "store", "varX"]), table,
                            "apply")
    print(f"  'escape store varX' segments to {segmented.tokens}")
    back = bpe_segment(segmented, table, "decode")
    print(f"  and decodes back to {back.tokens}")

    vocab = build_vocab(corpus, cap=8000)
    print(f"\nvocabulary: {len(vocab)} symbols "
          f"(4 reserved + {len(vocab) - 4} corpus tokens)")


if __name__ == "__main__":
    main()
