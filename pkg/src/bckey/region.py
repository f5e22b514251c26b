"""Key-leakage-storage rate tuples and boundary sweeps for the GS and CS models.

For a fixed auxiliary channel ``P_{U|X~}`` the boundary tuple is

    R_s = I(U;Y),  R_l = max(0, I(U;X) - I(U;Y)),
    R_w = I(U;X~) - I(U;Y)   (generated secret)
    R_w = I(U;X~)            (chosen secret)

and the regions are the unions over ``P_{U|X~}`` of the corresponding
down/up-sets.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .bc_model import ClassificationReport, SourceBcModel, aux_candidates, aux_informations
from .info_core import (
    ALGEBRA_TOL,
    PROB_TOL,
    Channel,
    ProbVector,
    bayes_invert,
    bsc,
    mutual_information_joint,
)

CSV_COLUMNS = ("alpha", "r_s", "r_l", "r_w_gs", "r_w_cs", "mi_uy", "mi_ux", "mi_uxt")
DEFAULT_ALPHAS = tuple(np.linspace(0.0, 0.5, 101))
RATIO_FLOOR = 1e-12


@dataclass(frozen=True)
class RateTuple:
    r_s: float
    r_l: float
    r_w: float

    def __post_init__(self):
        for name in ("r_s", "r_l", "r_w"):
            v = float(getattr(self, name))
            if v < -ALGEBRA_TOL:
                raise ValueError(f"RateTuple.{name} = {v} is negative")
            object.__setattr__(self, name, max(v, 0.0))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.r_s, self.r_l, self.r_w)


class AuxInformation(NamedTuple):
    mi_uy: float
    mi_ux: float
    mi_uxt: float


@dataclass(frozen=True, eq=False)
class BoundaryPoint:
    gs: RateTuple
    cs: RateTuple
    mi_uy: float
    mi_ux: float
    mi_uxt: float
    alpha: float | None = None
    aux: Channel | None = None


@dataclass(eq=False)
class RegionBoundary:
    model: str
    points: list[BoundaryPoint]
    pareto_filtered: bool = False
    tight: bool | None = None
    labels: list[str] = field(default_factory=list)

    @property
    def alphas(self) -> np.ndarray:
        return np.array([p.alpha for p in self.points], dtype=float)

    def column(self, name: str) -> np.ndarray:
        getters = {
            "alpha": lambda p: np.nan if p.alpha is None else p.alpha,
            "r_s": lambda p: p.gs.r_s,
            "r_l": lambda p: p.gs.r_l,
            "r_w_gs": lambda p: p.gs.r_w,
            "r_w_cs": lambda p: p.cs.r_w,
            "mi_uy": lambda p: p.mi_uy,
            "mi_ux": lambda p: p.mi_ux,
            "mi_uxt": lambda p: p.mi_uxt,
        }
        return np.array([getters[name](p) for p in self.points], dtype=float)


def aux_information(model: SourceBcModel, aux: Channel) -> AuxInformation:
    """The three mutual informations I(U;Y), I(U;X), I(U;X~) for one aux channel."""
    if aux.output_size > model.xtilde_size + 2:
        warnings.warn(
            f"|U| = {aux.output_size} exceeds the cardinality bound |X~|+2 = "
            f"{model.xtilde_size + 2}",
            stacklevel=3,
        )
    j = model.joint_with_aux(aux)  # [u, x~, x, y]
    return AuxInformation(
        mutual_information_joint(j.sum(axis=(1, 2))),
        mutual_information_joint(j.sum(axis=(1, 3))),
        mutual_information_joint(j.sum(axis=(2, 3))),
    )


def _tuples_from_mi(mi_uy: float, mi_ux: float, mi_uxt: float) -> tuple[RateTuple, RateTuple]:
    r_s = mi_uy
    r_l = max(0.0, mi_ux - mi_uy)
    gs = RateTuple(r_s, r_l, max(0.0, mi_uxt - mi_uy))
    cs = RateTuple(r_s, r_l, mi_uxt)
    return gs, cs


def rate_tuple_gs(model: SourceBcModel, aux: Channel) -> tuple[RateTuple, AuxInformation]:
    """Extreme GS tuple: maximal key rate, minimal leakage and storage."""
    mi = aux_information(model, aux)
    return _tuples_from_mi(*mi)[0], mi


def rate_tuple_cs(model: SourceBcModel, aux: Channel) -> RateTuple:
    mi = aux_information(model, aux)
    return _tuples_from_mi(*mi)[1]


def boundary_point(
    model: SourceBcModel, aux: Channel, alpha: float | None = None, keep_aux: bool = False
) -> BoundaryPoint:
    mi = aux_information(model, aux)
    gs, cs = _tuples_from_mi(*mi)
    return BoundaryPoint(gs, cs, *mi, alpha=alpha, aux=aux if keep_aux else None)


def bsc_aux(alpha: float) -> Channel:
    """``P_{U|X~}`` for uniform binary ``U`` and ``P_{X~|U} = BSC(alpha)``."""
    return bayes_invert(ProbVector.uniform(2), bsc(alpha)).reverse


def sweep_bsc(
    model: SourceBcModel, alphas: Sequence[float] = DEFAULT_ALPHAS, name: str = "model"
) -> RegionBoundary:
    """Boundary triples with ``P_{X~|U}`` restricted to BSC(alpha).

    Requires a binary, uniform ``X~`` so that the reverse channel is again
    BSC(alpha).
    """
    if model.xtilde_size != 2:
        raise ValueError("sweep_bsc needs a binary X~; use sweep_general instead")
    if np.max(np.abs(model.p_xtilde.probs - 0.5)) > PROB_TOL:
        raise ValueError("sweep_bsc needs a uniform X~ marginal; use sweep_general instead")
    alphas = np.asarray(sorted(float(a) for a in alphas))
    if alphas.size == 0:
        raise ValueError("sweep_bsc: empty alpha grid")
    if np.any(np.diff(alphas) <= 0):
        raise ValueError("sweep_bsc: alpha grid contains duplicates")
    points = [boundary_point(model, bsc_aux(a), alpha=float(a)) for a in alphas]
    return RegionBoundary(name, points)


def sweep_general(
    model: SourceBcModel,
    u_size: int,
    grid_resolution: int = 20,
    random_samples: int = 0,
    seed: int = 0,
    name: str = "model",
) -> RegionBoundary:
    """Pareto boundary over a grid (plus random draws) of ``P_{U|X~}``."""
    if u_size < 1:
        raise ValueError("u_size must be at least 1")
    if u_size > model.xtilde_size + 2:
        raise ValueError(
            f"u_size = {u_size} exceeds the cardinality bound |X~|+2 = {model.xtilde_size + 2}"
        )
    if u_size == 1:
        auxes = np.ones((1, model.xtilde_size, 1))
    else:
        rng = np.random.default_rng(seed)
        auxes = aux_candidates(model.xtilde_size, u_size, grid_resolution, random_samples, rng)
    mis = aux_informations(model, auxes)
    points = []
    for k in range(auxes.shape[0]):
        gs, cs = _tuples_from_mi(float(mis["uy"][k]), float(mis["ux"][k]), float(mis["uxt"][k]))
        points.append(
            BoundaryPoint(
                gs, cs, float(mis["uy"][k]), float(mis["ux"][k]), float(mis["uxt"][k]),
                aux=Channel(auxes[k]),
            )
        )
    keep = pareto_indices([p.gs for p in points])
    return RegionBoundary(name, [points[i] for i in keep], pareto_filtered=True)


INNER_BOUND_LABEL = "inner bound only"
BSC_RESTRICTION_LABEL = "BSC-restricted auxiliary; optimality not established for correlated noise"


def label_boundary(boundary: RegionBoundary, report: ClassificationReport) -> RegionBoundary:
    """Attach tightness and caveat labels from a classification of the same model."""
    labels = []
    if not report.tight:
        labels.append(INNER_BOUND_LABEL)
    if not boundary.pareto_filtered and not report.markov_xtilde_x_y:
        labels.append(BSC_RESTRICTION_LABEL)
    boundary.tight = report.tight
    boundary.labels = labels
    return boundary


def _dominates(a: RateTuple, b: RateTuple) -> bool:
    weak = a.r_s >= b.r_s and a.r_l <= b.r_l and a.r_w <= b.r_w
    strict = a.r_s > b.r_s or a.r_l < b.r_l or a.r_w < b.r_w
    return weak and strict


def pareto_indices(points: Sequence[RateTuple]) -> list[int]:
    """Indices of non-dominated tuples, ordered by ``(-r_s, r_w)`` then input order.

    Higher key rate is better, lower leakage and storage are better.
    """
    if not points:
        raise ValueError("pareto_filter: empty input")
    arr = np.array([p.as_tuple() for p in points], dtype=float)
    # After sorting by (-r_s, r_w, r_l) a point can only be dominated by
    # points that precede it, and by transitivity only kept ones matter.
    order = np.lexsort((np.arange(len(arr)), arr[:, 1], arr[:, 2], -arr[:, 0]))
    kept: list[int] = []
    front = np.empty((0, 3))
    for i in order:
        p = arr[i]
        if front.shape[0]:
            weak = (front[:, 0] >= p[0]) & (front[:, 1] <= p[1]) & (front[:, 2] <= p[2])
            strict = (front[:, 0] > p[0]) | (front[:, 1] < p[1]) | (front[:, 2] < p[2])
            if np.any(weak & strict):
                continue
        kept.append(int(i))
        front = np.vstack([front, p])
    kept_arr = np.array(kept)
    final = np.lexsort((kept_arr, arr[kept_arr, 2], -arr[kept_arr, 0]))
    return [int(kept_arr[j]) for j in final]


def pareto_filter(points: Sequence[RateTuple]) -> list[RateTuple]:
    return [points[i] for i in pareto_indices(points)]


@dataclass
class BoundaryComparison:
    """Pointwise comparison of boundary ``b`` against reference ``a``."""

    alphas: np.ndarray
    key_rate_deficit: np.ndarray  # (a.r_s - b.r_s) / a.r_s, NaN where undefined
    leakage_excess: np.ndarray  # (b.r_l - a.r_l) / a.r_l, NaN where undefined
    max_key_rate_deficit: float
    max_key_rate_deficit_alpha: float
    max_leakage_excess: float
    max_leakage_excess_alpha: float
    excluded_key_rate_alphas: list[float]
    excluded_leakage_alphas: list[float]
    max_abs_difference: dict[str, float]
    # smallest margin by which b is at least as good as a in every coordinate
    worst_dominance_margin: float

    def b_dominates_a(self, tol: float = 1e-6) -> bool:
        return self.worst_dominance_margin >= -tol

    def to_json(self) -> dict:
        def clean(v):
            return None if v is None or (isinstance(v, float) and math.isnan(v)) else v

        return {
            "max_key_rate_deficit": clean(self.max_key_rate_deficit),
            "max_key_rate_deficit_alpha": clean(self.max_key_rate_deficit_alpha),
            "max_leakage_excess": clean(self.max_leakage_excess),
            "max_leakage_excess_alpha": clean(self.max_leakage_excess_alpha),
            "excluded_key_rate_alphas": self.excluded_key_rate_alphas,
            "excluded_leakage_alphas": self.excluded_leakage_alphas,
            "max_abs_difference": self.max_abs_difference,
            "worst_dominance_margin": self.worst_dominance_margin,
            "b_dominates_a_within_1e-6": self.b_dominates_a(),
            "per_alpha": [
                {
                    "alpha": float(a),
                    "key_rate_deficit": clean(float(d)),
                    "leakage_excess": clean(float(e)),
                }
                for a, d, e in zip(self.alphas, self.key_rate_deficit, self.leakage_excess)
            ],
        }


def _nanargmax(values: np.ndarray, alphas: np.ndarray) -> tuple[float, float]:
    if np.all(np.isnan(values)):
        return math.nan, math.nan
    k = int(np.nanargmax(values))
    return float(values[k]), float(alphas[k])


def compare_boundaries(a: RegionBoundary, b: RegionBoundary) -> BoundaryComparison:
    """Relative key-rate deficit and leakage excess of ``b`` versus ``a`` at matched alpha."""
    alphas_a, alphas_b = a.alphas, b.alphas
    if (
        alphas_a.shape != alphas_b.shape
        or np.any(np.isnan(alphas_a))
        or np.any(np.abs(alphas_a - alphas_b) > ALGEBRA_TOL)
    ):
        raise ValueError("compare_boundaries: boundaries are not on the same alpha grid")
    rs_a, rs_b = a.column("r_s"), b.column("r_s")
    rl_a, rl_b = a.column("r_l"), b.column("r_l")
    rw_a, rw_b = a.column("r_w_gs"), b.column("r_w_gs")

    ok_s = rs_a > RATIO_FLOOR
    ok_l = rl_a > RATIO_FLOOR
    deficit = np.full(rs_a.shape, np.nan)
    excess = np.full(rl_a.shape, np.nan)
    deficit[ok_s] = (rs_a[ok_s] - rs_b[ok_s]) / rs_a[ok_s]
    excess[ok_l] = (rl_b[ok_l] - rl_a[ok_l]) / rl_a[ok_l]
    max_d, alpha_d = _nanargmax(deficit, alphas_a)
    max_e, alpha_e = _nanargmax(excess, alphas_a)

    margin = np.min(np.concatenate([rs_b - rs_a, rl_a - rl_b, rw_a - rw_b]))
    return BoundaryComparison(
        alphas=alphas_a,
        key_rate_deficit=deficit,
        leakage_excess=excess,
        max_key_rate_deficit=max_d,
        max_key_rate_deficit_alpha=alpha_d,
        max_leakage_excess=max_e,
        max_leakage_excess_alpha=alpha_e,
        excluded_key_rate_alphas=[float(x) for x in alphas_a[~ok_s]],
        excluded_leakage_alphas=[float(x) for x in alphas_a[~ok_l]],
        max_abs_difference={
            "r_s": float(np.max(np.abs(rs_a - rs_b))),
            "r_l": float(np.max(np.abs(rl_a - rl_b))),
            "r_w": float(np.max(np.abs(rw_a - rw_b))),
        },
        worst_dominance_margin=float(margin),
    )


# -- CSV --------------------------------------------------------------


def _fmt(v: float) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.12g}"


def boundary_to_csv(boundary: RegionBoundary) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for p in boundary.points:
        writer.writerow(
            [
                _fmt(p.alpha),
                _fmt(p.gs.r_s),
                _fmt(p.gs.r_l),
                _fmt(p.gs.r_w),
                _fmt(p.cs.r_w),
                _fmt(p.mi_uy),
                _fmt(p.mi_ux),
                _fmt(p.mi_uxt),
            ]
        )
    return buf.getvalue()


def boundary_from_csv(text: str, name: str = "csv") -> RegionBoundary:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_COLUMNS:
        raise ValueError(f"boundary CSV header must be {','.join(CSV_COLUMNS)}")
    points = []
    for row in reader:
        vals = {k: float(v) if v != "" else None for k, v in row.items()}
        points.append(
            BoundaryPoint(
                RateTuple(vals["r_s"], vals["r_l"], vals["r_w_gs"]),
                RateTuple(vals["r_s"], vals["r_l"], vals["r_w_cs"]),
                vals["mi_uy"],
                vals["mi_ux"],
                vals["mi_uxt"],
                alpha=vals["alpha"],
            )
        )
    if not points:
        raise ValueError("boundary CSV has no rows")
    return RegionBoundary(name, points)
