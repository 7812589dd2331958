"""Optimal-policy extraction and structural checks on a solved belief grid.

The converged field induces, at every lattice point, the set of actions
within a tie tolerance of the best Q value. On top of those tie-aware sets
this module computes decision-region areas, verifies mirror symmetry across
the diagonal, per-line contiguity, single connectedness anchored at the four
corners, and the bet regions' diagonal dominance, locates the edge and
diagonal switching thresholds by bisection, and classifies the diagonal as a
one- or two-threshold structure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .dynamics import ACTION_PRIORITY, Action, Belief, propagate
from .solver import (
    action_value_grids,
    q_balanced,
    q_bet1,
    q_bet2,
    q_conservative,
    _tensor_interp,
)

__all__ = [
    "PolicyField",
    "RegionMap",
    "ContiguityViolation",
    "ConnectivityReport",
    "EdgeThresholds",
    "DiagonalStructure",
    "StructureReport",
    "ANCHOR_CORNERS",
    "extract_policy",
    "region_map",
    "check_contiguity",
    "check_symmetry",
    "check_connectivity",
    "bet_dominance_violations",
    "delta_funcs",
    "edge_thresholds",
    "diagonal_structure",
    "analyze_structure",
    "report_has_violations",
    "save_structure_report",
    "export_policy_csv",
    "export_policy_ppm",
]

_IDX = {a: k for k, a in enumerate(ACTION_PRIORITY)}

# Corner each region must reach: (row index sign, column index sign) with
# -1 meaning the last lattice index.
ANCHOR_CORNERS = {
    Action.CONSERVATIVE: (0, 0),
    Action.BET2: (0, -1),
    Action.BET1: (-1, 0),
    Action.BALANCED: (-1, -1),
}

ONE_THRESHOLD = "one-threshold"
TWO_THRESHOLD = "two-threshold"
OTHER = "other"


@dataclass(frozen=True, eq=False)
class PolicyField:
    """Tie-aware optimal actions on the lattice.

    best[i, j, k] marks action ACTION_PRIORITY[k] as within tie_tol of the
    max Q at point (i, j); primary[i, j] is the first such k in priority
    order (balanced > bet1 > bet2 > conservative).
    """

    grid: object
    best: np.ndarray
    primary: np.ndarray
    tie_tol: float

    def __post_init__(self):
        best = np.array(self.best, dtype=bool)
        primary = np.array(self.primary, dtype=np.int8)
        n = self.grid.n
        if best.shape != (n, n, len(ACTION_PRIORITY)) or primary.shape != (n, n):
            raise ValueError("policy arrays do not match the grid")
        if not best.any(axis=2).all():
            raise ValueError("every lattice point needs at least one best action")
        if not best[np.arange(n)[:, None], np.arange(n)[None, :], primary].all():
            raise ValueError("primary action must belong to the best set")
        best.setflags(write=False)
        primary.setflags(write=False)
        object.__setattr__(self, "best", best)
        object.__setattr__(self, "primary", primary)


def extract_policy(v, ch, econ, discount, tie_tol=None):
    """Tie-aware argmax of the four Q grids against a converged field.

    tie_tol defaults to 1e-8 of the field's value range: the diagonal ties
    the two bet actions exactly in theory, and the tolerance keeps that a
    testable statement on the grid.
    """
    q = action_value_grids(v, ch, econ, discount)
    stack = np.stack([q[a] for a in ACTION_PRIORITY])
    if tie_tol is None:
        spread = float(v.values.max() - v.values.min())
        tie_tol = 1e-8 * (spread if spread > 0.0 else 1.0)
    top = stack.max(axis=0)
    best = np.transpose(stack >= top - tie_tol, (1, 2, 0))
    primary = best.argmax(axis=2).astype(np.int8)
    return PolicyField(v.grid, best, primary, float(tie_tol))


@dataclass(frozen=True, eq=False)
class RegionMap:
    """Per-action decision regions and their normalized areas.

    Ties are split fractionally: a point carrying k tied actions adds 1/k
    to each of their areas, so the areas sum to one.
    """

    masks: dict
    areas: dict


def region_map(p):
    share = 1.0 / p.best.sum(axis=2)
    total = float(p.grid.n * p.grid.n)
    masks = {}
    areas = {}
    for k, a in enumerate(ACTION_PRIORITY):
        mask = p.best[:, :, k].copy()
        mask.setflags(write=False)
        masks[a] = mask
        areas[a] = float((share * p.best[:, :, k]).sum() / total)
    return RegionMap(masks, areas)


@dataclass(frozen=True)
class ContiguityViolation:
    action: Action
    axis: str        # "along-p1": the line varies the first coordinate
    index: int       # lattice index of the fixed coordinate
    gap: tuple       # (first, last) lattice index of the first hole


def _first_hole(line):
    hits = np.flatnonzero(line)
    if hits.size < 2:
        return None
    inner = line[hits[0]:hits[-1] + 1]
    holes = np.flatnonzero(~inner)
    if holes.size == 0:
        return None
    start = int(hits[0] + holes[0])
    end = start
    while end + 1 < hits[-1] and not line[end + 1]:
        end += 1
    return (start, end)


def check_contiguity(p):
    """Membership along every lattice row and column must be an interval."""
    out = []
    for k, a in enumerate(ACTION_PRIORITY):
        m = p.best[:, :, k]
        for i in range(p.grid.n):
            gap = _first_hole(m[i, :])
            if gap is not None:
                out.append(ContiguityViolation(a, "along-p2", i, gap))
        for j in range(p.grid.n):
            gap = _first_hole(m[:, j])
            if gap is not None:
                out.append(ContiguityViolation(a, "along-p1", j, gap))
    return out


def check_symmetry(p):
    """Mirror test across the diagonal.

    Swapping the two belief coordinates must swap the two bet actions and
    fix balanced and conservative; best sets are compared, not single
    argmax picks, so exact ties do not trip the check.
    """
    swapped = p.best[:, :, [_IDX[Action.BALANCED], _IDX[Action.BET2],
                            _IDX[Action.BET1], _IDX[Action.CONSERVATIVE]]]
    bad = (np.transpose(p.best, (1, 0, 2)) != swapped).any(axis=2)
    return [(int(i), int(j)) for i, j in np.argwhere(bad) if i <= j]


@dataclass(frozen=True)
class ConnectivityReport:
    components: int
    anchor_present: bool


def check_connectivity(p):
    """4-neighbor component count per region plus anchor-corner presence."""
    four = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    out = {}
    for k, a in enumerate(ACTION_PRIORITY):
        mask = p.best[:, :, k]
        _, count = ndimage.label(mask, structure=four)
        ai, aj = ANCHOR_CORNERS[a]
        out[a] = ConnectivityReport(int(count), bool(mask[ai, aj]))
    return out


def bet_dominance_violations(p):
    """Bet regions may not cross the diagonal by more than one cell."""
    x = p.grid.points
    h = p.grid.spacing
    slack = h + 1e-12
    p1 = x[:, None]
    p2 = x[None, :]
    out = []
    for (a, bad_side) in ((Action.BET1, p1 < p2 - slack),
                          (Action.BET2, p2 < p1 - slack)):
        for i, j in np.argwhere(p.best[:, :, _IDX[a]] & bad_side):
            out.append((a, int(i), int(j)))
    return out


def delta_funcs(v, p, ch):
    """Chord-above-curve gaps of the field along the two observed rows.

    For each fixed first coordinate (lambda0 and lambda1), compares the
    p-weighted chord between the field values at the two lattice-reachable
    second coordinates against the field value at the propagated belief.
    Convexity makes both gaps nonnegative up to interpolation error, and
    they vanish exactly at p = 0 and p = 1.
    """
    tp = propagate(p, ch)
    lam = np.array([ch.lambda0, ch.lambda1])
    c = _tensor_interp(v.values, v.grid.points, lam, lam)
    e = _tensor_interp(v.values, v.grid.points, lam, np.array([tp]))[:, 0]
    d0 = ((1.0 - p) * c[0, 0] + p * c[0, 1]) - e[0]
    d1 = ((1.0 - p) * c[1, 0] + p * c[1, 1]) - e[1]
    return float(d0), float(d1)


def _bisect(f, lo, hi, xtol=1e-10):
    flo = f(lo)
    fhi = f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo < 0.0) == (fhi < 0.0):
        return None
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm < 0.0) == (flo < 0.0):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class EdgeThresholds:
    """Switching points of the one-dimensional edge restrictions.

    th1: conservative-to-bet2 switch along the p1 = 0 edge.
    th2: bet1-to-balanced switch along the p1 = 1 edge (mirrored on the
    other two edges by symmetry). A missing crossing means the edge is
    single-action for these parameters; that is reported, not fatal.
    """

    th1: float | None
    th2: float | None
    th1_residual: float | None
    th2_residual: float | None
    notes: tuple


def edge_thresholds(v, ch, econ, discount, xtol=1e-10):
    notes = []

    def f1(y):
        b = Belief(0.0, y)
        return q_bet2(v, b, ch, econ, discount) - q_conservative(v, b, ch, discount)

    th1 = _bisect(f1, 0.0, 1.0, xtol)
    th1_res = None
    if th1 is None:
        notes.append("edge p1=0 has no conservative/bet2 crossing")
    else:
        d0, _ = delta_funcs(v, th1, ch)
        th1_res = th1 * (econ.rh + econ.ch) - econ.ch + discount.beta * d0

    def f2(y):
        b = Belief(1.0, y)
        return q_balanced(v, b, ch, econ, discount) - q_bet1(v, b, ch, econ, discount)

    th2 = _bisect(f2, 0.0, 1.0, xtol)
    th2_res = None
    if th2 is None:
        notes.append("edge p1=1 has no bet1/balanced crossing")
    else:
        _, d1 = delta_funcs(v, th2, ch)
        th2_res = (
            th2 * (econ.rl + econ.cl)
            - (econ.rh - econ.rl)
            - econ.cl
            + discount.beta * d1
        )

    return EdgeThresholds(th1, th2, th1_res, th2_res, tuple(notes))


@dataclass(frozen=True)
class DiagonalStructure:
    """Action bands met while walking the diagonal from (0,0) to (1,1)."""

    kind: str                # one-threshold | two-threshold | other
    rho1: float | None
    rho2: float | None
    sequence: str            # run-compressed primary actions, for reports


def _is_prefix(mask):
    hits = np.flatnonzero(mask)
    return hits.size > 0 and hits[-1] == hits.size - 1


def _is_suffix(mask):
    return _is_prefix(mask[::-1])


def _is_interval(mask):
    hits = np.flatnonzero(mask)
    return hits.size == 0 or hits[-1] - hits[0] + 1 == hits.size


def _run_compress(labels):
    runs = []
    for name in labels:
        if runs and runs[-1][0] == name:
            runs[-1][1] += 1
        else:
            runs.append([name, 1])
    return " ".join(f"{name}*{count}" for name, count in runs)


def diagonal_structure(v, policy, ch, econ, discount, xtol=1e-10):
    """Classify the diagonal action sequence and bisect its thresholds.

    Conservative-then-balanced yields one threshold (the rest/balanced
    crossing); conservative, a bet tie band, then balanced yields two (the
    rest/bet and bet/balanced crossings). Any other observed sequence is
    reported as-is rather than force-fitted.
    """
    n = v.grid.n
    x = v.grid.points
    diag = np.arange(n)
    bestd = policy.best[diag, diag, :]
    seq = _run_compress(ACTION_PRIORITY[k].value for k in policy.primary[diag, diag])

    in_bal = bestd[:, _IDX[Action.BALANCED]]
    in_bet = bestd[:, _IDX[Action.BET1]]
    in_rest = bestd[:, _IDX[Action.CONSERVATIVE]]
    covered = (in_bal | in_bet | in_rest).all()
    strict_bet = in_bet & ~in_bal & ~in_rest

    def on_diag(qfun, y):
        return qfun(v, Belief(y, y), ch, econ, discount)

    def rest_val(y):
        return q_conservative(v, Belief(y, y), ch, discount)

    if not (in_rest[0] and in_bal[-1] and covered):
        return DiagonalStructure(OTHER, None, None, seq)

    if strict_bet.any():
        ordered = (
            _is_prefix(in_rest)
            and _is_suffix(in_bal)
            and _is_interval(strict_bet)
        )
        margins = [
            on_diag(q_bet1, x[k]) - max(on_diag(q_balanced, x[k]), rest_val(x[k]))
            for k in np.flatnonzero(strict_bet)
        ]
        y_star = float(x[np.flatnonzero(strict_bet)[int(np.argmax(margins))]])
        rho1 = _bisect(lambda y: on_diag(q_bet1, y) - rest_val(y), 0.0, y_star, xtol)
        rho2 = _bisect(
            lambda y: on_diag(q_bet1, y) - on_diag(q_balanced, y), y_star, 1.0, xtol
        )
        if ordered and rho1 is not None and rho2 is not None and 0.0 < rho1 < rho2 < 1.0:
            return DiagonalStructure(TWO_THRESHOLD, float(rho1), float(rho2), seq)
        return DiagonalStructure(OTHER, rho1, rho2, seq)

    ordered = _is_prefix(in_rest) and _is_suffix(in_bal)
    rho1 = _bisect(lambda y: on_diag(q_balanced, y) - rest_val(y), 0.0, 1.0, xtol)
    if ordered and rho1 is not None and 0.0 < rho1 < 1.0:
        return DiagonalStructure(ONE_THRESHOLD, float(rho1), None, seq)
    return DiagonalStructure(OTHER, rho1, None, seq)


@dataclass(frozen=True, eq=False)
class StructureReport:
    """Everything the structural checks produced for one solved field."""

    corners: dict            # corner label -> {"best": names, "anchor": name, "ok": bool}
    edges: EdgeThresholds
    diagonal: DiagonalStructure
    areas: dict              # action -> normalized region area
    symmetry_violations: list
    contiguity_violations: list
    connectivity: dict
    bet_dominance: list
    flags: dict = field(default=None)

    def __post_init__(self):
        if self.flags is None:
            connected = all(
                r.components == 1 and r.anchor_present
                for r in self.connectivity.values()
            )
            flags = {
                "corners_ok": all(c["ok"] for c in self.corners.values()),
                "symmetry_ok": not self.symmetry_violations,
                "contiguity_ok": not self.contiguity_violations,
                "connectivity_ok": connected,
                "bet_dominance_ok": not self.bet_dominance,
            }
            object.__setattr__(self, "flags", flags)


def analyze_structure(v, ch, econ, discount, tie_tol=None):
    """Run every structural check against a converged field."""
    policy = extract_policy(v, ch, econ, discount, tie_tol)
    regions = region_map(policy)
    n = v.grid.n

    corners = {}
    for a, (ci, cj) in ANCHOR_CORNERS.items():
        i = ci % n
        j = cj % n
        names = tuple(
            ACTION_PRIORITY[k].value
            for k in range(len(ACTION_PRIORITY))
            if policy.best[i, j, k]
        )
        corners[f"{v.grid.points[i]:g},{v.grid.points[j]:g}"] = {
            "best": names,
            "anchor": a.value,
            "ok": bool(policy.best[i, j, _IDX[a]]),
        }

    return StructureReport(
        corners=corners,
        edges=edge_thresholds(v, ch, econ, discount),
        diagonal=diagonal_structure(v, policy, ch, econ, discount),
        areas={a.value: regions.areas[a] for a in ACTION_PRIORITY},
        symmetry_violations=check_symmetry(policy),
        contiguity_violations=check_contiguity(policy),
        connectivity=check_connectivity(policy),
        bet_dominance=bet_dominance_violations(policy),
    )


def report_has_violations(report):
    return not all(report.flags.values())


_LIST_CAP = 50  # violation lists are truncated in files to keep them readable


def _report_dict(report):
    return {
        "corners": report.corners,
        "edge_thresholds": {
            "th1": report.edges.th1,
            "th2": report.edges.th2,
            "th1_residual": report.edges.th1_residual,
            "th2_residual": report.edges.th2_residual,
            "notes": list(report.edges.notes),
        },
        "diagonal": {
            "kind": report.diagonal.kind,
            "rho1": report.diagonal.rho1,
            "rho2": report.diagonal.rho2,
            "sequence": report.diagonal.sequence,
        },
        "areas": report.areas,
        "flags": report.flags,
        "symmetry_violation_count": len(report.symmetry_violations),
        "symmetry_violations": [list(v) for v in report.symmetry_violations[:_LIST_CAP]],
        "contiguity_violation_count": len(report.contiguity_violations),
        "contiguity_violations": [
            {"action": v.action.value, "axis": v.axis, "index": v.index, "gap": list(v.gap)}
            for v in report.contiguity_violations[:_LIST_CAP]
        ],
        "connectivity": {
            a.value: {"components": r.components, "anchor_present": r.anchor_present}
            for a, r in report.connectivity.items()
        },
        "bet_dominance_violation_count": len(report.bet_dominance),
        "bet_dominance_violations": [
            {"action": a.value, "i": i, "j": j} for a, i, j in report.bet_dominance[:_LIST_CAP]
        ],
    }


def save_structure_report(report, path):
    with open(path, "w") as fh:
        json.dump(_report_dict(report), fh, indent=2)
        fh.write("\n")


def export_policy_csv(policy, path):
    """One row per lattice point: indices, beliefs, primary and tied actions."""
    x = policy.grid.points
    with open(path, "w") as fh:
        fh.write("# primary action resolves ties as balanced > bet1 > bet2 > conservative\n")
        fh.write("i,j,p1,p2,primary,best\n")
        for i in range(policy.grid.n):
            for j in range(policy.grid.n):
                names = "|".join(
                    ACTION_PRIORITY[k].value
                    for k in range(len(ACTION_PRIORITY))
                    if policy.best[i, j, k]
                )
                primary = ACTION_PRIORITY[policy.primary[i, j]].value
                fh.write(f"{i},{j},{x[i]!r},{x[j]!r},{primary},{names}\n")


_PPM_COLORS = {
    Action.BALANCED: (0, 153, 0),
    Action.BET1: (204, 0, 0),
    Action.BET2: (0, 102, 204),
    Action.CONSERVATIVE: (128, 128, 128),
}


def export_policy_ppm(policy, path):
    """Plain-text pixmap of the primary action, one pixel per lattice point."""
    n = policy.grid.n
    lines = [
        "P3",
        "# primary action map; legend (r g b):",
    ]
    for a in ACTION_PRIORITY:
        r, g, b = _PPM_COLORS[a]
        lines.append(f"# {a.value} = {r} {g} {b}")
    lines.append("# column c is p1 = c/(n-1); row r is p2 = 1 - r/(n-1) (p2 falls top to bottom)")
    lines.append(f"{n} {n}")
    lines.append("255")
    for r in range(n):
        j = n - 1 - r
        row = []
        for c in range(n):
            col = _PPM_COLORS[ACTION_PRIORITY[policy.primary[c, j]]]
            row.append(f"{col[0]} {col[1]} {col[2]}")
        lines.append("  ".join(row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")
