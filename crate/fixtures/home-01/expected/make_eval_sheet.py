#!/usr/bin/env python3
"""Hand-check sheet for the home-01 expected responses.

Reads expected/<variant>/<query>.json, truth.json and transcript.json and
writes eval_sheet.csv with exact fractions. Run from this directory.

Per-query rows: variant, query, category, truth, predicted, recall,
precision. Aggregate rows use query "*" with the category's mean recall and
precision over queries where each is defined.
"""
import csv
import json
import re
from fractions import Fraction
from pathlib import Path

HERE = Path(__file__).resolve().parent
SESSION = HERE.parent
VARIANTS = ["VOILA-G", "VOILA-S", "VOILA-T", "VOILA", "VOILA-center", "VOILA-ext"]


def tokens(text):
    return [t.lower() for t in re.split(r"[^0-9A-Za-z]+", text) if t]


def mentions(toks, phrase):
    p = tokens(phrase)
    return any(toks[i:i + len(p)] == p for i in range(len(toks) - len(p) + 1))


truth_doc = json.loads((SESSION / "truth.json").read_text())
groups = [sorted(g) for g in truth_doc.pop("synonyms", [])]
truth = {q: set(v) for q, v in truth_doc.items()}
truth_names = set().union(*truth.values())


def canonical(name):
    # a truth name stands for its synonym group, else the smallest member
    for g in groups:
        if name in g:
            named = [n for n in g if n in truth_names]
            return (named or g)[0]
    return name


def forms(name):
    for g in groups:
        if name in g:
            return set(g)
    return {name}


vocab = set().union(*truth.values(), *map(set, groups))
words = json.loads((SESSION / "transcript.json").read_text())
query_text = {q: " ".join(w["text"] for w in ws) for q, ws in words.items()}


def fmt(x):
    return "" if x is None else f"{x.numerator}/{x.denominator}"


rows = []
for v in VARIANTS:
    per_cat = {"All": [], "Explicit": [], "Ambiguous": []}
    for q in sorted(truth):
        resp = json.loads((HERE / v / f"{q}.json").read_text())
        # answer and query fields, never joined across the boundary
        toks = tokens(resp["answer"]) + [""] + tokens(resp["query"]) + [""]
        predicted = {canonical(n) for n in vocab if mentions(toks, n)}
        t = {canonical(n) for n in truth[q]}
        if not t:
            cat, rec, prec = "Unrelated", None, None
        else:
            qt = tokens(query_text[q])
            named = all(any(mentions(qt, f) for f in forms(o)) for o in t)
            cat = "Explicit" if named else "Ambiguous"
            hit = len(t & predicted)
            rec = Fraction(hit, len(t))
            prec = Fraction(hit, len(predicted)) if predicted else None
            per_cat["All"].append((rec, prec))
            per_cat[cat].append((rec, prec))
        rows.append([v, q, cat, ";".join(sorted(t)), ";".join(sorted(predicted)), fmt(rec), fmt(prec)])
    for cat, vals in per_cat.items():
        recs = [r for r, _ in vals]
        precs = [p for _, p in vals if p is not None]
        mr = sum(recs, Fraction(0)) / len(recs) if recs else None
        mp = sum(precs, Fraction(0)) / len(precs) if precs else None
        rows.append([v, "*", cat, "", "", fmt(mr), fmt(mp)])

with open(HERE / "eval_sheet.csv", "w", newline="") as fh:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["variant", "query", "category", "truth", "predicted", "recall", "precision"])
    w.writerows(rows)
