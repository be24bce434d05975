"""Figure rendering: SVG plots plus companion CSVs with the plotted numbers.

Every figure kind reads previously-written artifacts (sweep ledger, fit
CSVs, loss traces) or pure parameters, and emits a deterministic SVG: the
matplotlib SVG backend is pinned to a fixed hash salt and no date metadata,
so identical inputs produce byte-identical files.  All plotted values are
duplicated into a companion CSV next to the SVG.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

import numpy as np  # noqa: E402

from . import zipffit  # noqa: E402
from .grammar import ZipfParams, parse_alpha, format_alpha, subject_distribution  # noqa: E402

KINDS = ("accuracy-vs-alpha", "rank-frequency-fit", "alpha-vs-age",
         "loss-curves", "noun-distribution")

_SVG_OPTS = {"format": "svg", "metadata": {"Date": None}}
matplotlib.rcParams["svg.hashsalt"] = "zipfagree"


class MissingInput(FileNotFoundError):
    pass


class SchemaMismatch(ValueError):
    pass


@dataclass
class FigureSpec:
    kind: str
    inputs: dict[str, Path] = field(default_factory=dict)
    out: Path = Path("figure.svg")
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}")
        self.inputs = {k: Path(v) for k, v in self.inputs.items()}
        self.out = Path(self.out)


def render(spec: FigureSpec) -> tuple[Path, Path]:
    """Write the figure and its companion CSV; returns both paths."""
    for name, path in spec.inputs.items():
        if not path.exists():
            raise MissingInput(f"{name} input not found: {path}")
    spec.out.parent.mkdir(parents=True, exist_ok=True)
    csv_path = spec.out.with_suffix(".csv")
    renderer = {
        "accuracy-vs-alpha": _render_accuracy,
        "rank-frequency-fit": _render_rank_fit,
        "alpha-vs-age": _render_alpha_age,
        "loss-curves": _render_loss,
        "noun-distribution": _render_noun_dist,
    }[spec.kind]
    fig = plt.figure(figsize=(7, 4.5), dpi=100)
    try:
        renderer(spec, fig, csv_path)
        fig.savefig(spec.out, **_SVG_OPTS)
    finally:
        plt.close(fig)
    return spec.out, csv_path


def _read_csv(path: Path, required: tuple[str, ...]) -> list[dict]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise SchemaMismatch(f"{path} has no data rows")
    missing = [c for c in required if c not in rows[0]]
    if missing:
        raise SchemaMismatch(f"{path} lacks columns {missing}")
    return rows


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def _alpha_axis(alphas: list[str]) -> tuple[list[float], dict]:
    """Map alpha labels to x positions; infinity sits one step past the end."""
    finite = sorted({parse_alpha(a) for a in alphas if a != "inf"})
    step = (finite[-1] - finite[0]) / max(len(finite) - 1, 1) if len(finite) > 1 else 0.5
    positions = {format_alpha(a): a for a in finite}
    if "inf" in alphas:
        positions["inf"] = (finite[-1] + 2 * step) if finite else 1.0
    return finite, positions


def _render_accuracy(spec: FigureSpec, fig, csv_path: Path) -> None:
    rows = _read_csv(spec.inputs["ledger"],
                     ("alpha", "condition", "accuracy"))
    by_key: dict[tuple[str, str], list[float]] = {}
    for r in rows:
        by_key.setdefault((r["alpha"], r["condition"]), []).append(
            float(r["accuracy"]))
    alphas = sorted({a for a, _ in by_key}, key=parse_alpha)
    conditions = sorted({c for _, c in by_key})
    _, positions = _alpha_axis(alphas)

    ax = fig.add_subplot(111)
    out_rows = []
    for cond in conditions:
        xs, means, sds, ns = [], [], [], []
        for a in alphas:
            accs = by_key.get((a, cond))
            if not accs:
                continue
            xs.append(positions[a])
            means.append(float(np.mean(accs)))
            sds.append(float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0)
            ns.append(len(accs))
            out_rows.append([a, cond, f"{means[-1]:.6f}", f"{sds[-1]:.6f}",
                             ns[-1]])
        ax.errorbar(xs, means, yerr=sds, marker="o", capsize=3, label=cond)
    ax.set_xlabel("alpha")
    ax.set_ylabel("accuracy")
    ax.set_ylim(-0.02, 1.05)
    xticks = [positions[a] for a in alphas]
    ax.set_xticks(xticks)
    ax.set_xticklabels([("∞" if a == "inf" else a) for a in alphas])
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    _write_csv(csv_path, ["alpha", "condition", "mean", "sd", "n"], out_rows)


def _render_rank_fit(spec: FigureSpec, fig, csv_path: Path) -> None:
    rows = _read_csv(spec.inputs["profile"], ("rank", "f_empirical"))
    ranks = np.array([int(r["rank"]) for r in rows])
    emp = np.array([float(r["f_empirical"]) for r in rows])
    alpha_hat = spec.options.get("alpha_hat")
    if alpha_hat is None:
        fit_rows = _read_csv(spec.inputs["fit"], ("alpha_hat",))
        alpha_hat = float(fit_rows[0]["alpha_hat"])
    theo = zipffit.theoretical_profile(float(alpha_hat), len(ranks))

    ax = fig.add_subplot(111)
    pos = emp > 0
    ax.loglog(ranks[pos], emp[pos], "o", markersize=3, label="empirical")
    ax.loglog(ranks, theo, "-",
              label=f"power law, alpha={float(alpha_hat):.2f}")
    ax.set_xlabel("subject rank")
    ax.set_ylabel("mean proportion")
    ax.legend()
    ax.grid(alpha=0.3, which="both")
    _write_csv(csv_path, ["rank", "f_empirical", "f_theoretical"],
               [[int(r), f"{e:.10g}", f"{t:.10g}"]
                for r, e, t in zip(ranks, emp, theo)])


def _render_alpha_age(spec: FigureSpec, fig, csv_path: Path) -> None:
    rows = _read_csv(spec.inputs["fit"], ("bin", "alpha_hat", "status"))
    fitted = [r for r in rows if r["status"] == "ok"]
    if not fitted:
        raise SchemaMismatch("no successfully fitted age bins")
    labels = [r["bin"] for r in fitted]
    values = [float(r["alpha_hat"]) for r in fitted]
    xs = list(range(len(fitted)))

    ax = fig.add_subplot(111)
    ax.plot(xs, values, "o-", label="age-bin fit")
    ref_opt = spec.options.get("ref_optimal")
    if ref_opt is not None:
        ax.axhline(float(ref_opt), color="red", linestyle="--",
                   label=f"model-optimal alpha={float(ref_opt):.2f}")
    ref_all = spec.options.get("ref_overall")
    if ref_all is not None:
        ax.axhline(float(ref_all), color="purple", linestyle=":",
                   label=f"overall corpus alpha={float(ref_all):.2f}")
    ax.set_xticks(xs)
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_xlabel("child age bin")
    ax.set_ylabel("fitted alpha")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    _write_csv(csv_path, ["bin", "alpha_hat"],
               [[lab, f"{v:.4f}"] for lab, v in zip(labels, values)])


def _render_loss(spec: FigureSpec, fig, csv_path: Path) -> None:
    traces = {name: _read_csv(path, ("step", "train_loss"))
              for name, path in spec.inputs.items()}
    ax = fig.add_subplot(111)
    out_rows = []
    for name, rows in sorted(traces.items()):
        steps = [int(r["step"]) for r in rows]
        train = [float(r["train_loss"]) for r in rows]
        ax.plot(steps, train, label=f"{name} train", linewidth=0.9)
        val_pts = [(int(r["step"]), float(r["val_loss"]))
                   for r in rows if r.get("val_loss")]
        if val_pts:
            vx, vy = zip(*val_pts)
            ax.plot(vx, vy, "o--", label=f"{name} val")
        for r in rows:
            out_rows.append([name, r["step"], r["train_loss"],
                             r.get("val_loss", "")])
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    _write_csv(csv_path, ["trace", "step", "train_loss", "val_loss"], out_rows)


def _render_noun_dist(spec: FigureSpec, fig, csv_path: Path) -> None:
    alphas = spec.options.get("alphas") or [0.0, 1.0, 1.4, 2.0, 3.0, math.inf]
    cutoff = int(spec.options.get("cutoff", 30))
    ax = fig.add_subplot(111)
    out_rows = []
    offsets = np.arange(1, 41)
    for alpha in alphas:
        dist = subject_distribution(0, ZipfParams(float(alpha), cutoff=cutoff))
        label = ("∞" if math.isinf(float(alpha))
                 else f"{float(alpha):g}")
        pos = dist > 0
        ax.semilogy(offsets[pos], dist[pos], "o-", markersize=3,
                    label=f"alpha={label}", linewidth=0.9)
        for off, p in zip(offsets, dist):
            out_rows.append([format_alpha(float(alpha)), int(off),
                             f"{p:.10g}"])
    ax.axvline(cutoff + 0.5, color="gray", linestyle=":",
               label="truncation")
    ax.set_xlabel("subject offset rank")
    ax.set_ylabel("probability")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3, which="both")
    _write_csv(csv_path, ["alpha", "offset_rank", "probability"], out_rows)
