#!/usr/bin/env python3
"""Convert a WALS CLDF dataset directory into the flat snapshot CSV.

Usage: wals_cldf_to_snapshot.py CLDF_DIR OUT_CSV [--features 37A,38A,...] [--languages rus,ukr,...]

Only features in the Nominal Categories, Verbal Categories, Word Order and
Simple Clauses areas are kept. Languages are keyed by ISO 639-3 code; WALS
doculects without one are skipped, and when several doculects share a code the
first one in file order wins.
"""

import argparse
import csv
import sys
from pathlib import Path

AREAS = {
    "Nominal Categories": "Nom",
    "Verbal Categories": "Verb",
    "Word Order": "WO",
    "Simple Clauses": "SC",
}


def rows(path):
    with open(path, newline="", encoding="utf-8") as f:
        yield from csv.DictReader(f)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("cldf_dir", type=Path)
    ap.add_argument("out_csv", type=Path)
    ap.add_argument("--features", help="comma-separated feature ids to keep")
    ap.add_argument("--languages", help="comma-separated ISO 639-3 codes to keep")
    args = ap.parse_args()
    d = args.cldf_dir

    keep_features = set(args.features.split(",")) if args.features else None
    keep_langs = set(args.languages.split(",")) if args.languages else None

    areas = {r["ID"]: AREAS.get(r["Name"]) for r in rows(d / "areas.csv")}
    chapter_area = {r["ID"]: areas.get(r["Area_ID"]) for r in rows(d / "chapters.csv")}
    params = {}
    for r in rows(d / "parameters.csv"):
        category = chapter_area.get(r["Chapter_ID"])
        if category and (keep_features is None or r["ID"] in keep_features):
            params[r["ID"]] = (r["Name"], category)
    codes = {r["ID"]: r["Name"] for r in rows(d / "codes.csv")}
    iso = {r["ID"]: r["ISO639P3code"] for r in rows(d / "languages.csv") if r.get("ISO639P3code")}

    seen = set()
    out = []
    for r in rows(d / "values.csv"):
        pid = r["Parameter_ID"]
        lang = iso.get(r["Language_ID"])
        if pid not in params or not lang:
            continue
        if keep_langs is not None and lang not in keep_langs:
            continue
        if (pid, lang) in seen:
            continue
        seen.add((pid, lang))
        name, category = params[pid]
        out.append((pid, name, category, lang, codes.get(r["Code_ID"], r["Value"])))

    with open(args.out_csv, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["feature_id", "feature_name", "category", "language_code", "value_label"])
        w.writerows(out)
    print(f"wrote {len(out)} rows for {len({p for p, *_ in out})} features", file=sys.stderr)


if __name__ == "__main__":
    main()
