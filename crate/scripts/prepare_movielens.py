#!/usr/bin/env python3
"""Convert MovieLens-100K into the dexfm data and schema files.

Accepts either the GroupLens ``ml-100k`` directory (u.data, u.user, u.item)
or a RecBole wheel, which bundles the same data as atomic ``.inter``,
``.user`` and ``.item`` files.

Output, in ``--out`` (default ``data/ml-100k``):

* ``data.tsv``: the raw 1..5 rating, then user_id, item_id, age, gender,
  occupation and pipe-joined genres. Train with ``--labels rating`` so that
  rating 3 is dropped and the rest binarized.
* ``schema.tsv``.
"""

import argparse
import io
import os
import sys
import zipfile

FIELDS = [
    ("user_id", "cat"),
    ("item_id", "cat"),
    ("age", "int"),
    ("gender", "cat"),
    ("occupation", "cat"),
    ("genres", "multi"),
]

GENRES = [
    "unknown", "Action", "Adventure", "Animation", "Children's", "Comedy", "Crime",
    "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror", "Musical", "Mystery",
    "Romance", "Sci-Fi", "Thriller", "War", "Western",
]


def from_grouplens(root):
    def lines(name, sep):
        with open(os.path.join(root, name), encoding="latin-1") as fh:
            return [l.rstrip("\n").split(sep) for l in fh if l.strip()]

    users = {u[0]: (u[1], u[2], u[3]) for u in lines("u.user", "|")}
    items = {}
    for it in lines("u.item", "|"):
        flags = it[5:5 + len(GENRES)]
        items[it[0]] = [g for g, f in zip(GENRES, flags) if f == "1"]
    ratings = [(r[0], r[1], r[2]) for r in lines("u.data", "\t")]
    return users, items, ratings


def from_recbole(wheel):
    prefix = "recbole/dataset_example/ml-100k/ml-100k."
    with zipfile.ZipFile(wheel) as z:
        def rows(ext):
            text = io.TextIOWrapper(z.open(prefix + ext), encoding="latin-1").read()
            out = [l.split("\t") for l in text.splitlines() if l.strip()]
            header = [h.split(":")[0] for h in out[0]]
            return [dict(zip(header, r)) for r in out[1:]]

        users = {u["user_id"]: (u["age"], u["gender"], u["occupation"]) for u in rows("user")}
        items = {i["item_id"]: i.get("class", "").split() for i in rows("item")}
        ratings = [(r["user_id"], r["item_id"], r["rating"]) for r in rows("inter")]
    return users, items, ratings


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("source", help="ml-100k directory or recbole wheel")
    ap.add_argument("--out", default="data/ml-100k")
    args = ap.parse_args()

    if os.path.isdir(args.source):
        users, items, ratings = from_grouplens(args.source)
    else:
        users, items, ratings = from_recbole(args.source)

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "schema.tsv"), "w") as fh:
        for name, kind in FIELDS:
            fh.write(f"{name}\t{kind}\n")
    kept = 0
    with open(os.path.join(args.out, "data.tsv"), "w", encoding="utf-8") as fh:
        for user, item, rating in ratings:
            age, gender, occupation = users[user]
            genres = "|".join(items.get(item, []))
            rating = str(int(float(rating)))
            fh.write("\t".join([rating, user, item, age, gender, occupation, genres]) + "\n")
            kept += 1
    print(f"wrote {kept} ratings to {args.out}", file=sys.stderr)


if __name__ == "__main__":
    main()
