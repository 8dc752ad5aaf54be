"""Posterior summaries: HPD intervals, significance counts, Geweke diagnostic, reports."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg

from .data_model import ATTRIBUTE_LABELS, MARKETING_LABELS
from .sampler import ChainDraws

REPORT_COLUMNS = ("", "Posterior Mean", "S.D.", "HPD", "(+)", "(−)")
MARKET_RESPONSE_HEADING = "Market Response Parameter"


class DiagnosticUnavailableError(ValueError):
    """The chain has no variability, so the diagnostic is undefined."""


@dataclass(frozen=True)
class SummaryRow:
    label: str
    posterior_mean: float
    sd: float
    hpd_count: int
    pos_count: int
    neg_count: int

    def __post_init__(self) -> None:
        if self.pos_count + self.neg_count != self.hpd_count:
            raise ValueError(f"{self.label}: (+) + (-) must equal the HPD count")


# --- HPD ------------------------------------------------------------------------


def _window_size(n: int, level: float) -> int:
    # guard against level*n landing a hair above an integer
    return min(n, max(1, math.ceil(round(level * n, 9))))


def hpd_interval(draws: ArrayLike, level: float = 0.95) -> tuple[float, float]:
    """Shortest window of the sorted draws holding ceil(level * n) of them."""
    x = np.sort(np.asarray(draws, dtype=np.float64).ravel())
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    if x.size < 2:
        raise ValueError("need at least two draws for an HPD interval")
    k = _window_size(x.size, level)
    widths = x[k - 1:] - x[: x.size - k + 1]
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + k - 1])


def hpd_bounds(draws: NDArray[np.float64], level: float = 0.95, axis: int = 0) -> tuple[NDArray, NDArray]:
    """Vectorized ``hpd_interval`` along ``axis``; returns (lower, upper) arrays."""
    x = np.sort(np.moveaxis(np.asarray(draws, dtype=np.float64), axis, 0), axis=0)
    n = x.shape[0]
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    if n < 2:
        raise ValueError("need at least two draws for an HPD interval")
    k = _window_size(n, level)
    widths = x[k - 1:] - x[: n - k + 1]
    i = np.argmin(widths, axis=0)[None]
    lower = np.take_along_axis(x, i, axis=0)[0]
    upper = np.take_along_axis(x, i + k - 1, axis=0)[0]
    return lower, upper


# --- parameter selectors ----------------------------------------------------------

Selector = Callable[[ChainDraws], tuple[list[str], NDArray[np.float64]]]


def market_response(chain: ChainDraws) -> tuple[list[str], NDArray[np.float64]]:
    """Display, price and brand intercepts, shape (S, H, 2 + J)."""
    J = chain.alpha.shape[2]
    labels = list(MARKETING_LABELS) + [f"Product {j + 1}" for j in range(J)]
    return labels, np.concatenate([chain.beta, chain.alpha], axis=2)


def engineering(chain: ChainDraws) -> tuple[list[str], NDArray[np.float64]]:
    R = chain.delta.shape[2]
    labels = list(ATTRIBUTE_LABELS) if R == len(ATTRIBUTE_LABELS) else [f"attr{r}" for r in range(R)]
    return labels, chain.delta


def intercept_contrasts(chain: ChainDraws) -> tuple[list[str], NDArray[np.float64]]:
    """alpha_hj - alpha_h1 for j >= 2; identified without any location prior."""
    J = chain.alpha.shape[2]
    labels = [f"Product {j + 1} - Product 1" for j in range(1, J)]
    return labels, chain.alpha[:, :, 1:] - chain.alpha[:, :, :1]


SELECTORS: dict[str, Selector] = {
    "market_response": market_response,
    "engineering": engineering,
    "contrasts": intercept_contrasts,
}


def significance_table(chain: ChainDraws, selector: Selector | str = market_response,
                       level: float = 0.95) -> list[SummaryRow]:
    """One row per parameter: cross-household summary and HPD significance counts.

    A household counts as significant when its HPD interval excludes zero; the
    (+)/(-) split is over significant households only, by the sign of the
    household's posterior mean.
    """
    if chain.n_draws == 0:
        raise ValueError("empty chain")
    if isinstance(selector, str):
        selector = SELECTORS[selector]
    labels, draws = selector(chain)
    hh_mean = draws.mean(axis=0)  # (H, P)
    lower, upper = hpd_bounds(draws, level, axis=0)
    significant = (lower > 0) | (upper < 0)
    H = hh_mean.shape[0]
    rows = []
    for p, label in enumerate(labels):
        m = hh_mean[:, p]
        sig = significant[:, p]
        pos = int(np.count_nonzero(sig & (m > 0)))
        neg = int(np.count_nonzero(sig & (m < 0)))
        rows.append(SummaryRow(
            label=label,
            posterior_mean=float(m.mean()),
            sd=float(m.std(ddof=1)) if H > 1 else 0.0,
            hpd_count=pos + neg,
            pos_count=pos,
            neg_count=neg,
        ))
    return rows


# --- Geweke -----------------------------------------------------------------------


def spectral_density_zero(x: NDArray[np.float64], max_order: int | None = None) -> float:
    """Spectral density at frequency zero from an AR fit with AIC order choice."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    xc = x - x.mean()
    gamma0 = float(xc @ xc) / n
    if gamma0 <= 0:
        raise DiagnosticUnavailableError("zero-variance segment")
    if max_order is None:
        max_order = int(min(n - 1, 10 * np.log10(n)))
    acov = np.array([float(xc[: n - k] @ xc[k:]) / n for k in range(max_order + 1)])
    best_aic, best = n * np.log(gamma0), gamma0
    for p in range(1, max_order + 1):
        try:
            phi = linalg.solve_toeplitz(acov[:p], acov[1: p + 1])
        except (linalg.LinAlgError, ValueError):
            break
        sigma2 = acov[0] - phi @ acov[1: p + 1]
        if sigma2 <= 0:
            break
        aic = n * np.log(sigma2) + 2 * p
        if aic < best_aic:
            denom = (1.0 - phi.sum()) ** 2
            if denom > 0:
                best_aic, best = aic, sigma2 / denom
    return float(best)


def geweke_z(draws: ArrayLike, first_frac: float = 0.1, last_frac: float = 0.5) -> float:
    """Standardized difference between early and late segment means."""
    x = np.asarray(draws, dtype=np.float64).ravel()
    if not (0 < first_frac < 1 and 0 < last_frac < 1 and first_frac + last_frac <= 1):
        raise ValueError("segment fractions must be in (0, 1) and sum to at most 1")
    n = x.size
    na, nb = int(first_frac * n), int(last_frac * n)
    if na < 10 or nb < 10:
        raise ValueError(f"chain of {n} draws too short for Geweke segments")
    if np.ptp(x) == 0:
        raise DiagnosticUnavailableError("constant chain; Geweke diagnostic unavailable")
    a, b = x[:na], x[n - nb:]
    try:
        var = spectral_density_zero(a) / na + spectral_density_zero(b) / nb
    except DiagnosticUnavailableError:
        if a.mean() == b.mean():
            raise
        return math.copysign(math.inf, a.mean() - b.mean())
    return float((a.mean() - b.mean()) / math.sqrt(var))


# --- rendering --------------------------------------------------------------------


def _cells(row: SummaryRow) -> list[str]:
    return [row.label, f"{row.posterior_mean:.3f}", f"{row.sd:.3f}",
            str(row.hpd_count), str(row.pos_count), str(row.neg_count)]


def render_report(rows: Sequence[SummaryRow], fmt: str = "text", heading: str | None = None) -> str:
    """Render rows with the Posterior Mean / S.D. / HPD / (+) / (-) layout.

    ``fmt`` is ``text`` (aligned columns), ``csv`` or ``json``. ``heading``
    adds a section line under the header in text output only.
    """
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for row in rows:
            w.writerow(_cells(row))
        return buf.getvalue()
    if fmt == "json":
        return json.dumps([asdict(r) for r in rows], indent=2) + "\n"
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")
    body = [_cells(r) for r in rows]
    label_w = max([len(REPORT_COLUMNS[0])] + [len(c[0]) for c in body]) + 2
    widths = [label_w] + [max(len(h), *(len(c[i]) for c in body)) + 2 if body else len(h) + 2
                          for i, h in enumerate(REPORT_COLUMNS[1:], start=1)]

    def line(cells: Sequence[str]) -> str:
        return (cells[0].ljust(widths[0]) + "".join(c.rjust(w) for c, w in zip(cells[1:], widths[1:]))).rstrip()

    out = [line(REPORT_COLUMNS)]
    if heading:
        out.append(heading)
    out.extend(line(c) for c in body)
    return "\n".join(out) + "\n"


def parse_report(text: str, fmt: str = "text") -> list[SummaryRow]:
    """Inverse of ``render_report`` (numbers come back rounded to 3 decimals)."""
    if fmt == "json":
        return [SummaryRow(**r) for r in json.loads(text)]
    if fmt == "csv":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if tuple(header) != REPORT_COLUMNS:
            raise ValueError(f"unexpected header {header}")
        records = list(reader)
    else:
        records = []
        for ln in text.splitlines()[1:]:
            parts = ln.split()
            if len(parts) < 6:
                continue
            records.append([" ".join(parts[:-5])] + parts[-5:])
    return [SummaryRow(r[0], float(r[1]), float(r[2]), int(r[3]), int(r[4]), int(r[5])) for r in records]
