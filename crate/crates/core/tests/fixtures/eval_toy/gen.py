"""Writes the 20-query evaluation fixture and its expected report, computed
with exact fractions. Run from this directory; outputs are committed."""

import json
import random
from fractions import Fraction

rng = random.Random(2024)
LABELS = ["relevant and best", "relevant but not best", "irrelevant"]
CATS = ["Sports"] * 11 + ["Home"] * 6 + ["Toys"] * 3

queries, judgments, run = [], [], []
for i, cat in enumerate(CATS):
    qid = f"t{i:02d}"
    queries.append({"id": qid, "text": f"best item {i}", "parent_category": cat, "sub_category": f"sub{i % 4}"})
    n_judged = rng.randint(6, 14)
    docs = [f"d{i:02d}_{j:02d}" for j in range(n_judged)]
    if qid == "t12":
        labels = [rng.choice(LABELS[1:]) for _ in docs]  # no positives: skipped
    else:
        labels = [rng.choices(LABELS, weights=[3, 3, 4])[0] for _ in docs]
        if LABELS[0] not in labels:
            labels[rng.randrange(len(labels))] = LABELS[0]
    for d, l in zip(docs, labels):
        judgments.append({"query_id": qid, "product_id": d, "label": l, "confidence": rng.randint(60, 99)})
    # rankings mix judged docs with unjudged ones
    pool = docs + [f"u{i:02d}_{j:02d}" for j in range(rng.randint(0, 8))]
    rng.shuffle(pool)
    if qid == "t05":
        # a positive beyond the default depth of 50 must not count
        fill = [f"x05_{j:02d}" for j in range(60)]
        pos = [d for d, l in zip(docs, labels) if l == LABELS[0]]
        rest = [d for d in pool if d not in pos]
        pool = rest + fill[: 55 - len(rest)] + pos[:1]
    run.append({"query_id": qid, "doc_ids": pool, "scores": [float(len(pool) - r) for r in range(len(pool))]})


def metrics(ranking, positives):
    ranking = ranking[:50]
    p = {k: Fraction(sum(d in positives for d in ranking[:k]), k) for k in (1, 3, 5, 10)}
    hits, ap = 0, Fraction(0)
    for r, d in enumerate(ranking, 1):
        if d in positives:
            hits += 1
            ap += Fraction(hits, r)
    ap /= len(positives)
    rr = next((Fraction(1, r) for r, d in enumerate(ranking, 1) if d in positives), Fraction(0))
    return p, ap, rr


def aggregate(rows):
    n = len(rows)
    return {
        "p": {k: sum(r[0][k] for r in rows) / n for k in (1, 3, 5, 10)},
        "map": sum(r[1] for r in rows) / n,
        "mrr": sum(r[2] for r in rows) / n,
        "n": n,
    }


def pct(x):
    v = x * 100
    # the float rounding in the Rust side must not matter
    frac = (v * 100) - int(v * 100)
    assert abs(frac - Fraction(1, 2)) > Fraction(1, 10**6), v
    return f"{float(v):.2f}"


def render(header, rows):
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(header)]
    out = []
    for cells in [header] + rows:
        line = ""
        for i, (c, w) in enumerate(zip(cells, widths)):
            line += c.ljust(w) if i == 0 else "  " + c.rjust(w)
        out.append(line + "\n")
    return "".join(out)


def cells(a):
    return [pct(a["p"][k]) for k in (1, 3, 5, 10)] + [pct(a["map"]), pct(a["mrr"])]


pos = {}
pairs = {}
for j in judgments:
    pairs[j["query_id"]] = pairs.get(j["query_id"], 0) + 1
    if j["label"] == LABELS[0]:
        pos.setdefault(j["query_id"], set()).add(j["product_id"])

per_query = {}
for r in run:
    if r["query_id"] in pos:
        per_query[r["query_id"]] = metrics(r["doc_ids"], pos[r["query_id"]])

overall = aggregate(list(per_query.values()))
table = render(["system", "queries", "P@1", "P@3", "P@5", "P@10", "MAP", "MRR"], [["toy", str(overall["n"])] + cells(overall)])

groups = {}
for q in queries:
    groups.setdefault(q["parent_category"], []).append(q["id"])
rows = []
for g in sorted(groups):
    scored = [per_query[i] for i in groups[g] if i in per_query]
    a = aggregate(scored)
    name = g + ("*" if a["n"] < 10 else "")
    rows.append([name, str(a["n"]), str(sum(pairs[i] for i in groups[g]))] + cells(a))
breakdown = render(["group", "queries", "pairs", "P@1", "P@3", "P@5", "P@10", "MAP", "MRR"], rows)

for name, recs in (("queries.jsonl", queries), ("judgments.jsonl", judgments), ("run.jsonl", run)):
    with open(name, "w") as f:
        for rec in recs:
            f.write(json.dumps(rec) + "\n")
with open("expected_report.txt", "w") as f:
    f.write(table + "\n" + breakdown)
print(table + "\n" + breakdown)

with open("per_query.tsv", "w") as f:
    f.write("query\tpositives\tfirst_positive_rank\tAP\tRR\n")
    for r in run:
        qid = r["query_id"]
        if qid not in per_query:
            f.write(f"{qid}\t0\t-\tskipped\tskipped\n")
            continue
        ranks = [i for i, d in enumerate(r["doc_ids"][:50], 1) if d in pos[qid]]
        _, ap, rr = per_query[qid]
        f.write(f"{qid}\t{len(pos[qid])}\t{ranks[0] if ranks else '-'}\t{ap}\t{rr}\n")
