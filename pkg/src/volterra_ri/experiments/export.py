"""CSV persistence for comparison results.

Every table has a header row, a fixed column order, 12 significant digits
and LF line endings.  Percentage cells whose denominator fell below the
floor are written empty; an undefined standard error is written ``nan``.
Nothing time- or host-dependent is written, so ``(config, seed)`` fixes
every byte.
"""

import csv
import logging
import math
from pathlib import Path

import numpy as np

from ..errors import VolterraRIError

log = logging.getLogger(__name__)

FIGURE_FILES = (
    "fig1_paths.csv",
    "fig2_strategies.csv",
    "fig3_wealth.csv",
    "fig4_reinsurance_pct.csv",
    "fig5_wealth_pct.csv",
)


class ExportError(VolterraRIError, OSError):
    """A result file could not be written."""


def fmt(value, null=""):
    """Format a number with 12 significant digits; non-finite -> ``null``."""
    if value is None:
        return null
    v = float(value)
    if not math.isfinite(v):
        return null
    if v == 0.0:
        return "0"
    return f"{v:.12g}"


def fmt_se(value):
    return fmt(value, null="nan")


def write_table(path, header, rows):
    """Write one CSV with LF endings; rows are sequences of strings."""
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc.strerror or exc}") from None
    return path


def _level_label(result, lv):
    return f"{'phi2' if result.regime == 'constant' else 'phi1'}_{fmt(lv)}"


def _headline_level(result):
    cfg = result.config
    return cfg.risk.phi2 if result.regime == "constant" else cfg.risk.phi1


def _fig1(result):
    cfg = result.config
    path, scen = result.path, result.scenario
    times = path.times
    age = cfg["mortality.start_age"] + (times - cfg["mortality.history_start"])
    start = result.grid.index_of(result.control_grid.t0)
    rows = []
    for i, t in enumerate(times):
        asset = fmt(scen.asset[i - start]) if i >= start else ""
        rows.append([fmt(t), fmt(age[i]), fmt(path.lam[i]), fmt(path.lam_hat[i]), asset])
    return ["t", "age", "lambda", "lambda_hat", "asset"], rows


def _fig2(result):
    lv = _headline_level(result)
    lrd, mk = result.lrd[lv], result.markov[lv]
    rows = [[fmt(t), fmt(lrd.pi[i]), fmt(mk.pi[i]), fmt(lrd.a[i]), fmt(mk.a[i])]
            for i, t in enumerate(result.control_grid.times)]
    return ["t", "pi_lrd", "pi_markov", "a_lrd", "a_markov"], rows


def _fig3(result):
    lv = _headline_level(result)
    lrd, mk = result.lrd[lv], result.markov[lv]
    rows = [[fmt(t), fmt(lrd.X[i]), fmt(mk.X[i])] for i, t in enumerate(result.control_grid.times)]
    return ["t", "X_lrd", "X_markov"], rows


def _pct_table(result, series):
    times = result.control_grid.times
    header = ["t"]
    cols = []
    for lv in result.levels:
        label = _level_label(result, lv)
        if result.n_paths == 1:
            header.append(label)
            cols.append((series[lv], fmt))
        else:
            mean, se = series[lv]
            header += [f"{label}_mean", f"{label}_se"]
            cols += [(mean, fmt), (se, fmt_se)]
    rows = [[fmt(t)] + [f(c[i]) for c, f in cols] for i, t in enumerate(times)]
    return header, rows


def manifest_lines(result):
    cfg = result.config
    out = [
        f"config_sha256 = {cfg.digest()}",
        f"seed = {result.seed}",
        f"n_paths = {result.n_paths}",
        f"mode = {'single path' if result.n_paths == 1 else 'ensemble mean and standard error (extension)'}",
        f"regime = {result.regime}",
        f"history_grid = [{fmt(result.grid.t0)}, {fmt(result.grid.T)}] with {result.grid.n_steps} steps",
        f"control_grid = [{fmt(result.control_grid.t0)}, {fmt(result.control_grid.T)}]"
        f" with {result.control_grid.n_steps} steps",
        "shared_shocks = both models consume the streams below",
    ]
    out += [f"checksum.{k} = {v}" for k, v in sorted(result.checksums.items())]
    out.append("summary = level, max_abs_pct_a, max_abs_pct_x, se_pct_a, se_pct_x")
    for row in result.summary:
        out.append(f"summary.{_level_label(result, row.phi1)} = {fmt(row.max_pct_a)}, {fmt(row.max_pct_x)}, "
                   f"{fmt_se(row.se_pct_a)}, {fmt_se(row.se_pct_x)}")
    return out


def export_csv(result, directory):
    """Write the five figure tables and ``manifest.txt`` into ``directory``.

    Returns
    -------
    list of pathlib.Path
        Written files in a fixed order.
    """
    d = Path(directory)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ExportError(f"cannot create {d}: {exc.strerror or exc}") from None
    builders = (_fig1, _fig2, _fig3, lambda r: _pct_table(r, r.pct_a), lambda r: _pct_table(r, r.pct_x))
    written = []
    for name, build in zip(FIGURE_FILES, builders):
        header, rows = build(result)
        written.append(write_table(d / name, header, rows))
    man = d / "manifest.txt"
    try:
        man.write_text("\n".join(manifest_lines(result)) + "\n", encoding="utf-8", newline="\n")
    except OSError as exc:
        raise ExportError(f"cannot write {man}: {exc.strerror or exc}") from None
    written.append(man)
    log.info("wrote %d files to %s", len(written), d)
    return written


def objective_rows(estimates):
    """Rows for an objective table; ``estimates`` maps a label to an ObjectiveEstimate."""
    rows = []
    for label, est in estimates.items():
        rows.append([label, str(est.n_paths), fmt(est.J), fmt_se(est.std_error), fmt(est.mean_XT),
                     fmt(est.var_XT)])
    return ["policy", "n_paths", "J", "se", "mean_XT", "var_XT"], rows


def array_rows(times, **columns):
    cols = [np.asarray(v, dtype=float) for v in columns.values()]
    rows = [[fmt(t)] + [fmt(c[i]) for c in cols] for i, t in enumerate(times)]
    return ["t", *columns.keys()], rows


__all__ = ["ExportError", "FIGURE_FILES", "array_rows", "export_csv", "fmt", "fmt_se", "manifest_lines",
           "objective_rows", "write_table"]
