"""
Solve reports and convergence traces.
"""
import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

SSP_TRACE_COLUMNS = ('iter', 'alpha', 'obj_est', 'feas_residual', 'dist_sq_opt', 'elapsed_ms')
LS_TRACE_COLUMNS = ('epoch', 'eq_residual', 'ineq_residual', 'elapsed_ms')


class TerminationReason(str, Enum):
    TOLERANCE = 'tolerance met'
    MAX_ITERATIONS = 'max iterations'
    MAX_TIME = 'max time'

    @property
    def status(self):
        return {
            TerminationReason.TOLERANCE: 'converged',
            TerminationReason.MAX_ITERATIONS: 'max_epochs',
            TerminationReason.MAX_TIME: 'max_time',
        }[self]


def format_value(value):
    """Shortest round-trip text for floats, empty for missing values."""
    if value is None:
        return ''
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


class ConvergenceTrace:
    """Rows of per-interval metrics keyed by a fixed column set."""

    def __init__(self, columns):
        self.columns = tuple(columns)
        self.rows = []

    def append(self, **values):
        unknown = set(values) - set(self.columns)
        if unknown:
            raise KeyError(f"Unknown trace columns: {sorted(unknown)}")
        self.rows.append({column: values.get(column) for column in self.columns})

    @property
    def final_row(self):
        return self.rows[-1] if self.rows else None

    def column(self, name):
        return [row[name] for row in self.rows]

    def __len__(self):
        return len(self.rows)

    def write_csv(self, stream):
        writer = csv.DictWriter(stream, fieldnames=self.columns, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({key: format_value(value) for key, value in row.items()})

    def to_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', newline='') as handle:
            self.write_csv(handle)
        return path


@dataclass
class SolveReport:
    point: np.ndarray
    iterations: int
    epochs: float
    objective: Optional[float]
    feasibility_residual: float
    reason: TerminationReason
    elapsed_seconds: float
    extras: dict = field(default_factory=dict)

    @property
    def converged(self):
        return self.reason == TerminationReason.TOLERANCE

    def summary(self):
        """Flat key/value view; wall-clock excluded so equal runs compare equal."""
        values = {
            'status': self.reason.status,
            'iterations': self.iterations,
            'epochs': self.epochs,
            'obj_est': self.objective,
            'feas_residual': self.feasibility_residual,
        }
        values.update(self.extras)
        return values
