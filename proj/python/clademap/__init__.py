"""Genealogy-based association mapping."""

from ._clademap import (
    InputError,
    Panel,
    expected_branch_length,
    load_panel,
    log_bf_table,
    posterior_two_vs_one,
    run_cli,
    scan,
)

__all__ = [
    "InputError",
    "Panel",
    "expected_branch_length",
    "load_panel",
    "log_bf_table",
    "posterior_two_vs_one",
    "run_cli",
    "scan",
]
