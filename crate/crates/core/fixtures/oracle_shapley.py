"""Independent Shapley oracle for the credit-risk fixture.

Enumerates every coalition of the 11 features directly from the Shapley
formula (no memoization), using the model weights file and an explicit list
of background ids.

    python3 oracle_shapley.py MODEL.tsv BG_IDS.txt SUBJECT_ID...
"""
import csv
import itertools
import math
import sys

rows = list(csv.DictReader(open("credit_risk.csv")))
features = [c for c in rows[0].keys() if c not in ("id", "label")]
table = {r["id"]: [float(r[f]) for f in features] for r in rows}
lo = [min(v[i] for v in table.values()) for i in range(len(features))]
hi = [max(v[i] for v in table.values()) for i in range(len(features))]

weights = {}
for line in open(sys.argv[1]):
    name, w = line.rstrip("\n").split("\t")
    weights[name] = float(w)
bias = weights.pop("__bias__")
w = [weights[f] for f in features]
background = [table[i] for i in open(sys.argv[2]).read().split()]


def score(x):
    z = bias + sum(w[i] * (x[i] - lo[i]) / (hi[i] - lo[i]) for i in range(len(x)))
    return 1.0 / (1.0 + math.exp(-z))


def value(x, coalition):
    total = math.fsum(
        score([x[j] if j in coalition else b[j] for j in range(len(x))]) for b in background
    )
    return total / len(background)


m = len(features)
for sid in sys.argv[3:]:
    x = table[sid]
    phis = []
    for i in range(m):
        rest = [j for j in range(m) if j != i]
        acc = []
        for k in range(m):
            wk = math.factorial(k) * math.factorial(m - k - 1) / math.factorial(m)
            for s in itertools.combinations(rest, k):
                s = set(s)
                acc.append(wk * (value(x, s | {i}) - value(x, s)))
        phis.append(math.fsum(acc))
    print(sid, "base", repr(value(x, set())), "score", repr(score(x)))
    for f, p in zip(features, phis):
        print(f"  {f} {p!r}")
