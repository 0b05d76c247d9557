"""Writes the 25-table mini corpus and its expected statistics.

The expected values are computed here from the generated rows, independently of
the C++ code. Column types are fixed by construction (each column is drawn from a
pool of one type), so the type counts double as hand labels for the classifier.
"""
import json
import random
import statistics
import sys
from pathlib import Path

OUT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "fixtures" / "corpus_mini"

ENTITY = ["SQuAD", "CoQA", "HotpotQA", "Natural Questions", "TriviaQA", "NarrativeQA", "MS MARCO",
          "CNN/Daily Mail", "XSum", "Reddit TIFU", "WikiHow", "BigPatent", "arXiv", "PubMed",
          "MultiNews", "SAMSum", "QMSum", "GovReport", "BookSum", "WikiSum"]
CATEGORY = [["News", "Dialogue", "Science"], ["Extractive", "Abstractive"], ["English", "Chinese", "German"],
            ["Supervised", "Unsupervised", "Weakly supervised"]]
TEXT = ["builds a graph over sentences and ranks them with a random walk",
        "fine tunes a pretrained encoder decoder on the target summaries",
        "uses reinforcement learning with a rouge based reward signal",
        "collects human written answers from crowd workers for each question",
        "combines retrieval of passages with a generative reader model",
        "annotates every document with three reference summaries by experts",
        "filters noisy pairs using a learned quality classifier first",
        "evaluates factual consistency with an entailment based metric",
        "trains a pointer generator network with a coverage penalty term",
        "segments long inputs into chunks and summarizes them hierarchically"]
BOOLEAN = [["✓", "✗"], ["Yes", "No"]]
ASPECT_NAMES = {"Entity": ["Dataset", "Base model", "Corpus"], "Category": ["Domain", "Type", "Language", "Setting"],
                "Text": ["Approach", "Annotation", "Notes"], "Boolean": ["Open source", "Human eval", "Multilingual"],
                "Numeric": ["Size", "Year", "Params", "Accuracy"]}
TYPES = ["Category", "Entity", "Numeric", "Text", "Boolean"]


def numeric(rng):
    kind = rng.randrange(4)
    if kind == 0:
        return f"{rng.randrange(1, 999)},{rng.randrange(0, 1000):03d}"
    if kind == 1:
        return f"{rng.randrange(1, 90)}.{rng.randrange(10)}%"
    if kind == 2:
        return f"{rng.randrange(1, 500)}K"
    return str(rng.randrange(2000, 2024))


def column(rng, kind, m):
    if kind == "Entity":
        return rng.sample(ENTITY, m)
    if kind == "Text":
        return rng.sample(TEXT, m)
    if kind == "Numeric":
        return [numeric(rng) for _ in range(m)]
    if kind == "Boolean":
        pool = rng.choice(BOOLEAN)
        vals = [rng.choice(pool) for _ in range(m)]
        vals[0] = pool[0]
        return vals
    pool = rng.choice(CATEGORY)
    vals = [rng.choice(pool) for _ in range(m)]
    vals[-1] = vals[0]  # at least one repeat
    return vals


def main():
    rng = random.Random(20240611)
    shared = [f"shared{i}" for i in range(6)]  # external ids that appear in several tables
    tables, rows, aspects, type_counts, papers = [], [], [], {t: 0 for t in TYPES}, set()
    for ti in range(25):
        m = rng.randrange(2, 9)
        n = rng.randrange(2, 6)
        kinds = [rng.choice(TYPES) for _ in range(n)]
        used, names = set(), []
        for k in kinds:
            name = rng.choice(ASPECT_NAMES[k])
            base, i = name, 2
            while name in used:
                name = f"{base} ({i})"
                i += 1
            used.add(name)
            names.append(name)
        keys = [f"t{ti:02d}p{r}" for r in range(m)]
        table = {"References": ["{{cite:" + k + "}}" for k in keys]}
        for name, k in zip(names, kinds):
            table[name] = column(rng, k, m)
            type_counts[k] += 1
        info = []
        for k in keys:
            rec = {"cite_id": k, "title": f"Paper {k}", "abstract": f"Abstract of {k}.", "full_text": None}
            if rng.random() < 0.25:
                rec["external_id"] = rng.choice(shared)
            else:
                rec["external_id"] = f"ext-{k}"
            papers.add(rec["external_id"])
            info.append({"cite_id": rec["cite_id"], "external_id": rec["external_id"], "title": rec["title"],
                         "abstract": rec["abstract"], "full_text": None})
        tables.append({"table_id": f"mini_table_{ti:02d}", "paper_id": f"mini{ti:02d}",
                       "caption": f"Comparison table {ti}", "in_text_references": [],
                       "table": table, "citation_info": info})
        rows.append(m)
        aspects.append(n)

    def summary(xs):
        return {"min": min(xs), "max": max(xs), "median": float(statistics.median(xs)),
                "mean": sum(xs) / len(xs), "total": sum(xs)}

    total_cols = sum(type_counts.values())
    expected = {"n_tables": len(tables), "n_unique_papers": len(papers), "rows": summary(rows),
                "aspects": summary(aspects), "aspect_type_counts": type_counts,
                "aspect_type_distribution": {t: type_counts[t] / total_cols for t in TYPES}}
    OUT.mkdir(parents=True, exist_ok=True)
    with open(OUT / "corpus.jsonl", "w", encoding="utf-8") as f:
        for t in tables:
            f.write(json.dumps(t, ensure_ascii=False) + "\n")
    with open(OUT / "expected_stats.json", "w", encoding="utf-8") as f:
        json.dump(expected, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
