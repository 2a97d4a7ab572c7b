"""Trajectory container and its CSV/JSON serialization.

A trajectory holds sampled populations plus per-sample health diagnostics
(trace deviation, hermiticity deviation, minimum eigenvalue of rho).  The
minimum eigenvalue is recorded and never asserted: the dynamics is generated
by an approximate master equation that is not of Lindblad form, so small
negative excursions are physical output, not integrator bugs.
"""

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Trajectory",
    "write_trajectory_csv",
    "write_trajectory_json",
    "read_trajectory_csv",
]


@dataclass(frozen=True)
class Trajectory:
    """Sampled populations and diagnostics of one propagation run.

    `status` is "ok" for a completed run; an aborted run carries a partial
    trajectory and a status of "trace_broken" or "step_underflow".
    """

    times: np.ndarray
    populations: np.ndarray
    trace_dev: np.ndarray
    herm_dev: np.ndarray
    min_eig: np.ndarray
    coherences: np.ndarray | None = None
    status: str = "ok"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        p = np.array(self.populations, dtype=float)
        for name, arr in [("times", t), ("populations", p)]:
            arr.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "populations", p)
        for name in ("trace_dev", "herm_dev", "min_eig"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if p.ndim != 2 or p.shape[0] != t.shape[0]:
            raise ValueError("populations must be (n_times, n_sites)")
        for name in ("trace_dev", "herm_dev", "min_eig"):
            if getattr(self, name).shape != t.shape:
                raise ValueError(f"{name} must match times")

    @property
    def n_sites(self):
        return self.populations.shape[1]

    @property
    def n_times(self):
        return self.times.shape[0]

    @property
    def ok(self):
        return self.status == "ok"

    def worst_positivity_violation(self):
        """Most negative eigenvalue seen (0.0 if rho stayed positive)."""
        return float(min(np.min(self.min_eig, initial=0.0), 0.0))

    def final_populations(self):
        return self.populations[-1]


def _csv_header(n_sites):
    pops = ",".join(f"pop_{i + 1}" for i in range(n_sites))
    return f"time_ps,{pops},trace_dev,herm_dev,min_eig"


def write_trajectory_csv(traj, path):
    """Write the trajectory as CSV with full-precision decimals."""
    rows = np.column_stack([
        traj.times, traj.populations, traj.trace_dev, traj.herm_dev,
        traj.min_eig,
    ])
    np.savetxt(path, rows, fmt="%.17g", delimiter=",",
               header=_csv_header(traj.n_sites), comments="")


def read_trajectory_csv(path):
    """Inverse of write_trajectory_csv (diagnostics included, no metadata)."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n_sites = data.shape[1] - 4
    return Trajectory(
        times=data[:, 0],
        populations=data[:, 1:1 + n_sites],
        trace_dev=data[:, -3],
        herm_dev=data[:, -2],
        min_eig=data[:, -1],
    )


def write_trajectory_json(traj, path, metadata=None):
    """JSON variant: the CSV columns plus run metadata."""
    doc = {
        "status": traj.status,
        "metadata": {**traj.metadata, **(metadata or {})},
        "columns": _csv_header(traj.n_sites).split(","),
        "times_ps": traj.times.tolist(),
        "populations": traj.populations.tolist(),
        "trace_dev": traj.trace_dev.tolist(),
        "herm_dev": traj.herm_dev.tolist(),
        "min_eig": traj.min_eig.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
