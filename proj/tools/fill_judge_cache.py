#!/usr/bin/env python3
"""Embed the texts listed in a judge cache's misses.jsonl and append them to
embeddings.jsonl, then clear the misses file.

usage: fill_judge_cache.py <cache_dir> <judge_model_id>
"""
import hashlib
import json
import sys
from pathlib import Path

from sentence_transformers import SentenceTransformer


def main() -> int:
    if len(sys.argv) != 3:
        print(__doc__.strip(), file=sys.stderr)
        return 2
    model_id = sys.argv[2]
    root = Path(sys.argv[1]) / model_id
    misses = root / "misses.jsonl"
    if not misses.exists():
        print("no misses")
        return 0

    known = set()
    cache = root / "embeddings.jsonl"
    if cache.exists():
        with cache.open() as f:
            known = {json.loads(line)["sha256"] for line in f if line.strip()}

    texts = {}
    with misses.open() as f:
        for line in f:
            if line.strip():
                rec = json.loads(line)
                if rec["sha256"] not in known:
                    texts[rec["sha256"]] = rec["text"]

    for key, text in texts.items():
        if hashlib.sha256(text.encode("utf-8")).hexdigest() != key:
            print(f"hash mismatch for {key}", file=sys.stderr)
            return 1

    model = SentenceTransformer(model_id)
    keys = list(texts)
    vectors = model.encode([texts[k] for k in keys], batch_size=64, show_progress_bar=False)
    with cache.open("a") as f:
        for key, v in zip(keys, vectors):
            f.write(json.dumps({"sha256": key, "vector": [float(x) for x in v]}) + "\n")
    misses.unlink()
    print(f"added {len(keys)} embeddings")
    return 0


if __name__ == "__main__":
    sys.exit(main())
