"""Model checkpoints: a versioned JSON document that round-trips bit-exactly.

Parameter values and optimizer state are serialized through Python's
``repr``-based JSON float formatting, which is exact for finite float64,
so ``load(save(m))`` reproduces every value bit for bit.
"""

import json

import numpy as np

from .autodiff import Parameter
from .network import (
    AndCell,
    AtomCell,
    ChoiceBlock,
    HistCell,
    IntervalCell,
    Model,
    NotCell,
    OnceCell,
    OrCell,
    SinceCell,
)

FORMAT = "stlmine-model"
VERSION = 1


def _param_out(p: Parameter) -> dict:
    return {"value": p.value, "m": p.m, "v": p.v, "step": p.step}


def _param_in(d: dict) -> Parameter:
    p = Parameter(d["value"])
    p.m = float(d["m"])
    p.v = float(d["v"])
    p.step = int(d["step"])
    return p


def model_to_dict(model: Model) -> dict:
    cells = []
    for cell in model.cells:
        if isinstance(cell, AtomCell):
            cells.append(
                {
                    "kind": "atom",
                    "weights": [_param_out(w) for w in cell.weights],
                    "bias": _param_out(cell.bias),
                }
            )
        elif isinstance(cell, NotCell):
            cells.append({"kind": "not", "child": cell.child})
        elif isinstance(cell, AndCell):
            cells.append({"kind": "and", "left": cell.left, "right": cell.right})
        elif isinstance(cell, OrCell):
            cells.append({"kind": "or", "left": cell.left, "right": cell.right})
        elif isinstance(cell, OnceCell):
            cells.append({"kind": "once", "child": cell.child})
        elif isinstance(cell, HistCell):
            cells.append({"kind": "hist", "child": cell.child})
        elif isinstance(cell, SinceCell):
            cells.append({"kind": "since", "left": cell.left, "right": cell.right})
        elif isinstance(cell, ChoiceBlock):
            cells.append(
                {
                    "kind": "choice",
                    "inputs": list(cell.inputs),
                    "weights": [_param_out(w) for w in cell.weights],
                }
            )
        elif isinstance(cell, IntervalCell):
            cells.append(
                {
                    "kind": "interval",
                    "op": cell.kind,
                    "child": cell.child,
                    "window": cell.window,
                    "weights": [_param_out(w) for w in cell.weights],
                    "drop": cell.drop,
                    "shift": cell.shift,
                }
            )
        else:
            raise TypeError(f"unknown cell {cell!r}")
    norm = None
    if model.normalization is not None:
        mins, maxs = model.normalization
        norm = {"mins": [float(v) for v in mins], "maxs": [float(v) for v in maxs]}
    return {
        "format": FORMAT,
        "version": VERSION,
        "dim": model.dim,
        "output": model.output,
        "head": model.head,
        "quantized": model.quantized,
        "huge": model.huge,
        "normalization": norm,
        "cells": cells,
    }


def model_from_dict(doc: dict) -> Model:
    if doc.get("format") != FORMAT:
        raise ValueError(f"not a {FORMAT} document")
    if doc.get("version") != VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
    cells = []
    for c in doc["cells"]:
        kind = c["kind"]
        if kind == "atom":
            cells.append(AtomCell([_param_in(w) for w in c["weights"]], _param_in(c["bias"])))
        elif kind == "not":
            cells.append(NotCell(c["child"]))
        elif kind == "and":
            cells.append(AndCell(c["left"], c["right"]))
        elif kind == "or":
            cells.append(OrCell(c["left"], c["right"]))
        elif kind == "once":
            cells.append(OnceCell(c["child"]))
        elif kind == "hist":
            cells.append(HistCell(c["child"]))
        elif kind == "since":
            cells.append(SinceCell(c["left"], c["right"]))
        elif kind == "choice":
            cells.append(ChoiceBlock(list(c["inputs"]), [_param_in(w) for w in c["weights"]]))
        elif kind == "interval":
            cell = IntervalCell(
                c["op"], c["child"], c["window"], [_param_in(w) for w in c["weights"]], c["drop"]
            )
            cell.shift = float(c["shift"])
            cells.append(cell)
        else:
            raise ValueError(f"unknown cell kind {kind!r}")
    norm = None
    if doc["normalization"] is not None:
        norm = (
            np.array(doc["normalization"]["mins"], dtype=float),
            np.array(doc["normalization"]["maxs"], dtype=float),
        )
    return Model(
        cells,
        doc["output"],
        doc["dim"],
        head=doc["head"],
        quantized=doc["quantized"],
        normalization=norm,
        huge=doc["huge"],
    )


def save_model(model: Model, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> Model:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
