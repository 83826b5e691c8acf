from app.tensor.tensor import (
    ORACLE,
    TRAINING,
    NumericMode,
    Tape,
    Tensor,
    active_tape,
    as_tensor,
    backward,
    branch_trace,
    get_mode,
    no_grad,
    note_branch,
    numeric_mode,
    ones,
    record,
    set_numeric_mode,
    tape_scope,
    zeros,
)

__all__ = [
    "ORACLE",
    "TRAINING",
    "NumericMode",
    "Tape",
    "Tensor",
    "active_tape",
    "as_tensor",
    "backward",
    "branch_trace",
    "get_mode",
    "no_grad",
    "note_branch",
    "numeric_mode",
    "ones",
    "record",
    "set_numeric_mode",
    "tape_scope",
    "zeros",
]
