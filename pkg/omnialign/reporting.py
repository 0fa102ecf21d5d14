# Copyright (c) 2015-2019 The Switch Authors. All rights reserved.
# Licensed under the Apache License, Version 2.0, which can be found at http://www.apache.org/licenses/LICENSE-2.0.

# Modifications copyright (c) 2025 The OmniAlign Authors. All rights reserved.

"""
Functions to help export results: JSON report documents, aligned plain
text tables and CSV tables.
"""
from __future__ import print_function

import csv
import json

import numpy as np
import pandas as pd

csv.register_dialect(
    "omnialign-csv",
    delimiter=",",
    lineterminator="\n",
    doublequote=False,
    escapechar="\\",
    quotechar='"',
    quoting=csv.QUOTE_MINIMAL,
    skipinitialspace=False,
)


def format_row(row, digits=6):
    sig_digits = "{0:." + str(digits) + "g}"
    row = list(row)
    for (i, v) in enumerate(row):
        if isinstance(v, (float, np.floating)):
            if abs(v) < 1e-10:
                row[i] = 0
            else:
                row[i] = sig_digits.format(v)
    return tuple(row)


def write_table(output_file, headings, rows, digits=6):
    with open(output_file, "w") as f:
        w = csv.writer(f, dialect="omnialign-csv")
        # write header row
        w.writerow(list(headings))
        w.writerows(format_row(row, digits) for row in rows)


def write_frame(output_file, frame, digits=6):
    """Write a DataFrame (index included) with write_table."""
    flat = frame if isinstance(frame.index, pd.RangeIndex) else frame.reset_index()
    write_table(
        output_file,
        flat.columns,
        flat.itertuples(index=False, name=None),
        digits,
    )


def text_table(frame, digits=4):
    """Aligned plain-text rendering of a DataFrame."""
    return frame.to_string(float_format=lambda v: "{:.{}f}".format(v, digits))


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError("{!r} is not JSON serializable".format(obj))


def dumps(doc):
    return json.dumps(doc, indent=2, default=_json_default) + "\n"


def write_json(path, doc):
    with open(path, "w") as f:
        f.write(dumps(doc))


def section_tables(section):
    """
    Text tables for one evaluated head of an eval report (a dict as
    written to the JSON report).
    """
    out = []
    if "retrieval" in section:
        r = section["retrieval"]
        frame = pd.DataFrame(r["pairs"]).set_index(["source", "target"])
        avg = pd.DataFrame([dict(source="average", target="", **r["average"])])
        frame = pd.concat([frame, avg.set_index(["source", "target"])])
        out.append("Retrieval\n" + text_table(frame, 3))
    if "diagnostics" in section:
        d = section["diagnostics"]
        frame = pd.DataFrame({"mean cosine": d}).rename_axis("metric")
        out.append("Diagnostics\n" + text_table(frame, 4))
    if "knn" in section:
        rows = []
        for modality, k in section["knn"].items():
            for kk, acc in k["soft"]["accuracy"].items():
                rows.append(dict(modality=modality, k=kk, soft=acc, hard=k["hard"]))
        frame = pd.DataFrame(rows).set_index(["modality", "k"])
        out.append("k-NN accuracy (%)\n" + text_table(frame, 2))
    if "pck" in section:
        p = section["pck"]
        frame = pd.DataFrame(
            [dict(pair=name, **vals) for name, vals in p["pairs"].items()]
        ).set_index("pair")
        out.append("PCK@0 (%)\n" + text_table(frame, 2))
        if p.get("layers"):
            frame = pd.DataFrame(
                [dict(layer=i + 1, **vals) for i, vals in enumerate(p["layers"])]
            ).set_index("layer")
            out.append("PCK@0 by head layer (%)\n" + text_table(frame, 2))
    if "teacher_similarity" in section:
        out.append("Teacher similarity: {:.4f}".format(section["teacher_similarity"]))
    return "\n\n".join(out)
