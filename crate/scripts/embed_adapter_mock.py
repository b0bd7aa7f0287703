#!/usr/bin/env python3
"""Echo-style mock embedding adapter speaking the subprocess line protocol.

Reads {"id": ..., "text": ...} JSON objects line by line on stdin and
answers each with {"id": ..., "vec": [...]} on stdout. Vectors are a
deterministic hash of the text, so repeated runs produce identical
embeddings. The embedding dimension comes from argv[1] (default 16).

Usage: embed_adapter_mock.py [DIM]
"""

import hashlib
import json
import sys


def vec_for(text: str, dim: int):
    out = []
    counter = 0
    while len(out) < dim:
        digest = hashlib.sha256(f"{counter}:{text}".encode()).digest()
        for i in range(0, len(digest) - 3, 4):
            if len(out) >= dim:
                break
            word = int.from_bytes(digest[i : i + 4], "little")
            out.append(word / 2**32 * 2.0 - 1.0)
        counter += 1
    return out


def main():
    dim = int(sys.argv[1]) if len(sys.argv) > 1 else 16
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        request = json.loads(line)
        response = {"id": request["id"], "vec": vec_for(request["text"], dim)}
        sys.stdout.write(json.dumps(response) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
