"""Two-person constant-sum user-vs-recogniser games.

Entries of a payoff matrix are the recogniser's payoff (a recognition rate in
[0, 1]); the user is the row player and receives one minus the entry. The
user therefore *minimises* and the recogniser *maximises*.

Mixed optima come from a small dense simplex solver using Bland's rule. An
independent support-enumeration oracle is provided for cross-checking.
"""

import csv
import io
import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgument, SolverError, UnsupportedSize

FEASIBILITY_TOL = 1e-9
SADDLE_TOL = 1e-7
PERCENT_FLAG = "scale=percent"


@dataclass(frozen=True, eq=False)
class PayoffMatrix:
    row_labels: tuple
    col_labels: tuple
    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=np.float64)
        if entries.ndim != 2 or entries.size == 0:
            raise InvalidArgument("payoff matrix must be a nonempty 2-D array")
        rows, cols = tuple(map(str, self.row_labels)), tuple(map(str, self.col_labels))
        if (len(rows), len(cols)) != entries.shape:
            raise InvalidArgument(f"labels {len(rows)}x{len(cols)} do not match entries {entries.shape}")
        if len(set(rows)) != len(rows) or len(set(cols)) != len(cols):
            raise InvalidArgument("strategy labels must be unique")
        if not np.all(np.isfinite(entries)) or entries.min() < 0 or entries.max() > 1:
            raise InvalidArgument("payoff entries must be finite and lie in [0, 1]")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "row_labels", rows)
        object.__setattr__(self, "col_labels", cols)

    @property
    def shape(self):
        return self.entries.shape

    @classmethod
    def from_percent(cls, row_labels, col_labels, percent):
        return cls(row_labels, col_labels, np.asarray(percent, dtype=np.float64) / 100.0)

    def entry(self, row, col):
        return float(self.entries[self.row_labels.index(row), self.col_labels.index(col)])

    def to_csv(self, path=None):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([""] + list(self.col_labels))
        for label, row in zip(self.row_labels, self.entries):
            writer.writerow([label] + [repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path):
        return cls.from_csv_text(Path(path).read_text())

    @classmethod
    def from_csv_text(cls, text):
        """A top-left cell of ``scale=percent`` marks entries given in percent."""
        rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
        if len(rows) < 2:
            raise InvalidArgument("payoff CSV needs a header row and at least one data row")
        corner, *cols = [c.strip() for c in rows[0]]
        labels, values = [], []
        for r in rows[1:]:
            if len(r) != len(cols) + 1:
                raise InvalidArgument(f"row {r[0]!r} has {len(r) - 1} entries, expected {len(cols)}")
            labels.append(r[0].strip())
            values.append([float(v) for v in r[1:]])
        values = np.array(values)
        if corner.lower() == PERCENT_FLAG:
            values = values / 100.0
        return cls(labels, cols, values)


@dataclass(frozen=True, eq=False)
class MixedStrategy:
    labels: tuple
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 1 or len(w) != len(self.labels):
            raise InvalidArgument("weights and labels differ in length")
        if np.any(w < -FEASIBILITY_TOL) or abs(w.sum() - 1.0) > 1e-9:
            raise InvalidArgument(f"not a probability vector: {w}")
        w = np.clip(w, 0.0, None)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "labels", tuple(self.labels))

    @classmethod
    def pure(cls, labels, index):
        w = np.zeros(len(labels))
        w[index] = 1.0
        return cls(labels, w)

    @classmethod
    def uniform(cls, labels):
        return cls(labels, np.full(len(labels), 1.0 / len(labels)))

    def weight(self, label):
        return float(self.weights[self.labels.index(label)])

    def support(self, tol=1e-6):
        return {l: float(w) for l, w in zip(self.labels, self.weights) if w > tol}

    def as_dict(self):
        return {l: float(w) for l, w in zip(self.labels, self.weights)}


@dataclass(frozen=True)
class GameSolution:
    theta_u: MixedStrategy
    theta_r: MixedStrategy
    value: float

    def to_dict(self):
        return {"theta_u": self.theta_u.as_dict(), "theta_r": self.theta_r.as_dict(), "value": self.value}

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d):
        u, r = d["theta_u"], d["theta_r"]
        return cls(MixedStrategy(list(u), list(u.values())), MixedStrategy(list(r), list(r.values())), float(d["value"]))


def _weights(strategy):
    return strategy.weights if isinstance(strategy, MixedStrategy) else np.asarray(strategy, dtype=np.float64)


def expected_payoff(P, theta_u, theta_r):
    u, r = _weights(theta_u), _weights(theta_r)
    if u.shape != (P.shape[0],) or r.shape != (P.shape[1],):
        raise InvalidArgument(f"strategy lengths {u.shape}, {r.shape} do not match matrix {P.shape}")
    return float(u @ P.entries @ r)


# -- simplex ---------------------------------------------------------------------------


def simplex_max(A, b, c, tol=FEASIBILITY_TOL, max_pivots=10_000):
    """Maximise c.x subject to A x <= b, x >= 0, for b >= 0.

    Starts from the slack basis and pivots with Bland's rule. Returns
    ``(x, y, objective)`` where ``y`` are the optimal dual prices of the rows.
    """
    A, b, c = (np.asarray(a, dtype=np.float64) for a in (A, b, c))
    m, n = A.shape
    if np.any(b < 0):
        raise InvalidArgument("slack start needs b >= 0")
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n : n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = -c
    basis = list(range(n, n + m))
    for _ in range(max_pivots):
        entering = next((j for j in range(n + m) if T[m, j] < -tol), None)
        if entering is None:
            break
        col = T[:m, entering]
        candidates = [i for i in range(m) if col[i] > tol]
        if not candidates:
            raise SolverError("linear program is unbounded")
        ratios = [T[i, -1] / col[i] for i in candidates]
        best = min(ratios)
        leaving = min((i for i, r in zip(candidates, ratios) if r <= best + tol), key=lambda i: basis[i])
        T[leaving] /= T[leaving, entering]
        for i in range(m + 1):
            if i != leaving and T[i, entering] != 0.0:
                T[i] -= T[i, entering] * T[leaving]
        basis[leaving] = entering
    else:
        raise SolverError("simplex pivot limit reached")
    x = np.zeros(n + m)
    for i, var in enumerate(basis):
        x[var] = T[i, -1]
    return x[:n], T[m, n : n + m].copy(), float(T[m, -1])


def solve_minimax(P):
    """Optimal mixed strategies and game value via the standard LP pair.

    With all entries shifted to be >= 1, the user's problem becomes
    ``max sum(u) s.t. P^T u <= 1, u >= 0`` with ``theta_u = u / sum(u)``;
    its dual prices give the recogniser's strategy.
    """
    if P.entries.size == 0:
        raise InvalidArgument("empty payoff matrix")
    shift = 1.0 - P.entries.min()
    shifted = P.entries + shift
    m, n = shifted.shape
    u, w, total = simplex_max(shifted.T, np.ones(n), np.ones(m))
    if total <= 0:
        raise SolverError("degenerate LP optimum")
    theta_u = np.clip(u / total, 0.0, None)
    theta_r = np.clip(w / total, 0.0, None)
    if abs(theta_u.sum() - 1) > 1e-6 or abs(theta_r.sum() - 1) > 1e-6:
        raise SolverError("LP solution is not a distribution")
    theta_u /= theta_u.sum()
    theta_r /= theta_r.sum()
    value = 1.0 / total - shift
    return GameSolution(MixedStrategy(P.row_labels, theta_u), MixedStrategy(P.col_labels, theta_r), float(value))


def saddle_violation(P, sol):
    row_payoffs = sol.theta_u.weights @ P.entries  # R's payoff per pure column
    col_payoffs = P.entries @ sol.theta_r.weights  # per pure row
    return max(row_payoffs.max() - sol.value, sol.value - col_payoffs.min(), 0.0)


def verify_saddle(P, sol, tol=SADDLE_TOL):
    """(holds, max violation) of the saddle inequalities against all pure strategies."""
    violation = saddle_violation(P, sol)
    return violation <= tol, float(violation)


def solve_deterministic(P):
    """Pure minimax row: the row with the smallest worst-case entry."""
    worst = P.entries.max(axis=1)
    i = int(np.argmin(worst))
    return i, float(worst[i])


def best_response_user(P, theta_r):
    r = _weights(theta_r)
    if r.shape != (P.shape[1],):
        raise InvalidArgument("recogniser strategy length does not match the columns")
    expected = P.entries @ r
    i = int(np.argmin(expected))
    return i, float(expected[i])


def restrict(P, row_subset=None, col_subset=None):
    rows = list(P.row_labels if row_subset is None else row_subset)
    cols = list(P.col_labels if col_subset is None else col_subset)
    if not rows or not cols:
        raise InvalidArgument("restriction must keep at least one row and one column")
    for label in rows:
        if label not in P.row_labels:
            raise InvalidArgument(f"unknown row label {label!r}")
    for label in cols:
        if label not in P.col_labels:
            raise InvalidArgument(f"unknown column label {label!r}")
    ri = [P.row_labels.index(l) for l in rows]
    ci = [P.col_labels.index(l) for l in cols]
    return PayoffMatrix(rows, cols, P.entries[np.ix_(ri, ci)])


# -- support enumeration oracle ---------------------------------------------------------


def _equalizer(M):
    """Solve sum_k p_k M[k, :] = v (all columns), sum p = 1 in the least-squares sense."""
    k, j = M.shape
    A = np.zeros((j + 1, k + 1))
    A[:j, :k] = M.T
    A[:j, k] = -1.0
    A[j, :k] = 1.0
    rhs = np.zeros(j + 1)
    rhs[j] = 1.0
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    return sol[:k], sol[k], np.abs(A @ sol - rhs).max()


def support_equilibria(P, limit=4, tol=1e-9):
    """All saddle points found by enumerating row/column support pairs."""
    m, n = P.shape
    if m > limit or n > limit:
        raise UnsupportedSize(f"support enumeration limited to {limit}x{limit}, got {m}x{n}")
    A = P.entries
    found = []
    for size_i in range(1, m + 1):
        for I in itertools.combinations(range(m), size_i):
            for size_j in range(1, n + 1):
                for J in itertools.combinations(range(n), size_j):
                    sub = A[np.ix_(I, J)]
                    pu, vu, res_u = _equalizer(sub)
                    pr, vr, res_r = _equalizer(sub.T)
                    if max(res_u, res_r) > tol or abs(vu - vr) > tol:
                        continue
                    if pu.min() < -tol or pr.min() < -tol:
                        continue
                    u, r = np.zeros(m), np.zeros(n)
                    u[list(I)], r[list(J)] = np.clip(pu, 0, None), np.clip(pr, 0, None)
                    sol = GameSolution(
                        MixedStrategy(P.row_labels, u / u.sum()), MixedStrategy(P.col_labels, r / r.sum()), float(vu)
                    )
                    if verify_saddle(P, sol, 1e-9)[0]:
                        found.append(sol)
    return found


def oracle_minimax_small(P, limit=4):
    """Exact solution by support enumeration, for matrices up to ``limit`` x ``limit``."""
    found = support_equilibria(P, limit)
    if not found:
        raise SolverError("support enumeration found no saddle point")
    return found[0]


def user_strategy_unique(P, limit=6, tol=1e-6):
    """True if every extreme saddle point found by enumeration shares one user strategy."""
    found = support_equilibria(P, limit)
    first = found[0].theta_u.weights
    return all(np.allclose(s.theta_u.weights, first, atol=tol) for s in found)


def recogniser_strategy_unique(P, limit=6, tol=1e-6):
    found = support_equilibria(P, limit)
    first = found[0].theta_r.weights
    return all(np.allclose(s.theta_r.weights, first, atol=tol) for s in found)
