"""stlmine: mining past-time STL formulas from labeled traces.

The trainable path builds a recurrent network of min/max cells whose
quantized choice weights encode a formula structure; training with a
straight-through estimator selects both structure and atom parameters,
and the result is read back as a formula.  A reference robustness monitor
and an enumerative grid-search baseline provide independent checks.
"""

from .formula import (
    And,
    Atom,
    Formula,
    Hist,
    Mask,
    Not,
    Once,
    Or,
    ParseError,
    Since,
    UNBOUNDED,
    format_formula,
    formula_length,
    parse_formula,
)
from .semantics import boolean_eval, robustness, robustness_recurrent
from .autodiff import Parameter, Tape, quantize_choice
from .data import (
    Dataset,
    Trace,
    gen_cct,
    gen_interval,
    gen_step_threshold,
    label_continuous,
    load_csv,
    reverse,
    save_csv,
)
from .network import (
    Model,
    build_bounded,
    build_fixed_length,
    build_from_formula,
    build_up_to_length,
    embedded_structures,
    extract_formula,
    forward_model,
    interval_cell_forward,
)
from .checkpoint import load_model, save_model
from .training import TrainConfig, TrainReport, adam_step, evaluate_mcr, fit
from .enumeration import EnumConfig, EnumReport, enumerate_structures, fit_structure, run

__all__ = [
    "And", "Atom", "Formula", "Hist", "Mask", "Not", "Once", "Or", "ParseError",
    "Since", "UNBOUNDED", "format_formula", "formula_length", "parse_formula",
    "boolean_eval", "robustness", "robustness_recurrent",
    "Parameter", "Tape", "quantize_choice",
    "Dataset", "Trace", "gen_cct", "gen_interval", "gen_step_threshold",
    "label_continuous", "load_csv", "reverse", "save_csv",
    "Model", "build_bounded", "build_fixed_length", "build_from_formula",
    "build_up_to_length", "embedded_structures", "extract_formula",
    "forward_model", "interval_cell_forward",
    "load_model", "save_model",
    "TrainConfig", "TrainReport", "adam_step", "evaluate_mcr", "fit",
    "EnumConfig", "EnumReport", "enumerate_structures", "fit_structure", "run",
]

__version__ = "0.1.0"
