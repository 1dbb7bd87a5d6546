"""Regenerate the benign corpus, the abusive fixtures and the validated signature file shipped in the package."""

import os
import sys

from dsentinel.corpus import PageCorpus, write_abuse, write_benign
from dsentinel.errors import SignatureRejected
from dsentinel.signatures import dump_signatures, parse_signatures, validate_signature

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.join(HERE, os.pardir, "src", "dsentinel", "data")


def main() -> int:
    corpus_dir = os.path.join(DATA, "benign_corpus")
    write_benign(corpus_dir)
    write_abuse(os.path.join(DATA, "abuse_fixtures"))
    corpus = list(PageCorpus(corpus_dir))
    with open(os.path.join(HERE, "signature_drafts.jsonl"), encoding="utf-8") as fh:
        drafts = parse_signatures(fh.read(), "signature_drafts.jsonl")
    accepted = []
    for sig in drafts:
        try:
            accepted.append(validate_signature(sig, corpus))
        except SignatureRejected as exc:
            print(f"discarded {sig.id}: {len(exc.offending_ids)} benign matches", file=sys.stderr)
    with open(os.path.join(DATA, "signatures.jsonl"), "w", encoding="utf-8") as fh:
        fh.write(dump_signatures(accepted))
    print(f"{len(corpus)} benign pages, {len(accepted)}/{len(drafts)} signatures validated")
    return 0


if __name__ == "__main__":
    sys.exit(main())
