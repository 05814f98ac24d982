"""JSON triplet format for operators and superoperators.

An operator is stored as::

    {"dims": [rows, cols], "entries": [[row, col, re, im], ...], "label": "..."}

Only entries with magnitude above ``drop_tol`` are written. Superoperator
documents add a ``header`` object with the picture tag and metadata; their
matrix acts on column-stacked operators, ``vec(X)[i + d*j] = X[i, j]``.
"""

from __future__ import annotations

import json

import numpy as np


def matrix_to_triplets(matrix, label="", drop_tol=0.0) -> dict:
    m = np.asarray(matrix, dtype=complex)
    rows, cols = np.nonzero(np.abs(m) > drop_tol)
    entries = [[int(r), int(c), float(m[r, c].real), float(m[r, c].imag)] for r, c in zip(rows, cols)]
    return {"dims": [int(m.shape[0]), int(m.shape[1])], "entries": entries, "label": label}


def triplets_to_matrix(doc) -> np.ndarray:
    rows, cols = doc["dims"]
    m = np.zeros((rows, cols), dtype=complex)
    for r, c, re, im in doc["entries"]:
        m[int(r), int(c)] += complex(re, im)
    return m


def operator_to_json(op, drop_tol=0.0) -> str:
    doc = matrix_to_triplets(op.matrix, op.label, drop_tol)
    doc["hermitian"] = bool(op.hermitian)
    return json.dumps(doc)


def operator_from_json(text, basis):
    from .fock import Operator

    doc = json.loads(text)
    return Operator(basis, triplets_to_matrix(doc), bool(doc.get("hermitian", False)), doc.get("label", ""))


def superoperator_to_json(sop, drop_tol=0.0) -> str:
    doc = matrix_to_triplets(sop.matrix, sop.label, drop_tol)
    sigma = sop.sigma_E
    doc["header"] = {
        "picture": sop.picture,
        "sigma_E": "inf" if np.isinf(sigma) else float(sigma),
        "beta": sop.beta,
        "filter": sop.filter_label,
        "jumps": sop.jumps_label,
        "vectorization": "column-stacking",
    }
    return json.dumps(doc)


def superoperator_from_json(text, basis):
    from .lindblad import SuperOperator

    doc = json.loads(text)
    head = doc["header"]
    sigma = np.inf if head["sigma_E"] == "inf" else float(head["sigma_E"])
    return SuperOperator(
        basis=basis,
        matrix=triplets_to_matrix(doc),
        picture=head["picture"],
        beta=head["beta"],
        sigma_E=sigma,
        filter_label=head["filter"],
        jumps_label=head["jumps"],
        label=doc.get("label", ""),
    )
