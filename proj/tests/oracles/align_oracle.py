"""Reference values for the lexical scorers and calibration.

Jaccard is recomputed with plain Python sets over 200 random phrase pairs. The
stopword list is read out of the C++ source (it is data, not logic). The
calibration CI reuses the independent resampler from stats_oracle.py.
Writes tests/fixtures/align/expected.json.
"""
import json
import random
import re
import sys
import unicodedata
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))
import stats_oracle  # noqa: E402

ROOT = Path(__file__).resolve().parents[2]
OUT = Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "tests" / "fixtures" / "align"

src = (ROOT / "src" / "align" / "align.cpp").read_text()
body = src[src.index("static const std::set<std::string> words{"):]
body = body[:body.index("};")]
STOP = set(re.findall(r'"([^"]*)"', body))


def tokens(s):
    s = unicodedata.normalize("NFC", s).casefold()
    return re.findall(r"[^\W_]+", s)


def jaccard(a, b):
    ta, tb = set(tokens(a)), set(tokens(b))
    ca, cb = ta - STOP, tb - STOP
    if not ca and not cb:
        ca, cb = ta, tb
    if not ca and not cb:
        return 0.0
    return len(ca & cb) / len(ca | cb)


VOCAB = ["dataset", "size", "Size", "model", "the", "of", "a", "Task", "task", "number", "training", "examples",
         "accuracy", "F1", "BLEU", "no", "not", "yes", "language", "English", "multilingual", "graph", "node",
         "QA", "question", "answering", "video", "in", "and", "with", "params", "1.5B", "110M", "café", "naïve",
         "Übersicht", "is", "are", "for", "métrique"]
SEPS = [" ", ", ", "; ", " - ", "/", " (", ") "]


def phrase(rng):
    n = rng.randint(0, 6)
    out = ""
    for i in range(n):
        out += rng.choice(VOCAB) + (rng.choice(SEPS) if i + 1 < n else "")
    return out


def main():
    rng = random.Random(20240607)
    pairs = []
    while len(pairs) < 200:
        a = phrase(rng)
        if rng.random() < 0.6:
            # a reshuffled, partly overlapping variant of a
            words = tokens(a)
            rng.shuffle(words)
            words = words[:rng.randint(0, len(words))] + [rng.choice(VOCAB) for _ in range(rng.randint(0, 2))]
            b = rng.choice(SEPS).join(w.upper() if rng.random() < 0.2 else w for w in words)
        else:
            b = phrase(rng)
        if not a.strip() or not b.strip():
            continue
        pairs.append({"a": a, "b": b, "jaccard": jaccard(a, b)})
    recalls = [1.0, 0.5, 2.0 / 3.0, 0.0]
    lo, hi = stats_oracle.bootstrap(recalls, 0, 1000, lambda v: sum(v) / len(v))
    out = {"stopword_count": len(STOP), "jaccard_pairs": pairs,
           "calibration_4_pairs": {"recalls": recalls, "mean": sum(recalls) / 4, "ci": [lo, hi],
                                   "seed": 0, "iterations": 1000}}
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "expected.json").write_text(json.dumps(out, indent=2, ensure_ascii=False) + "\n")


if __name__ == "__main__":
    main()
