"""SVG rendering of analysis and certification CSVs.

Pure presentation: every value plotted is read back from the CSVs, nothing
is recomputed.  Figures are semilog scatter-plus-bound-line plots over the
controller index; empty CSVs yield axes-only figures.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .storage import DataError, read_csv  # noqa: E402

__all__ = [
    "plot_sensitivity",
    "plot_theorem3",
    "plot_algorithm1",
]

_MARKERS = ["o", "s", "^", "v", "D", "P", "*"]


def _labels_from(provenance: dict, path) -> list:
    labels = provenance.get("labels", "")
    if not labels:
        raise DataError(f"{path}: missing 'labels' provenance line")
    return labels.split(",")


def _finish(fig, ax, out_path):
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)


def plot_sensitivity(sensitivity_csv, bounds_csv, out_path) -> None:
    """Per-controller |zeta| markers per structure with the B2/B3 bound lines."""
    _, srows, sprov = read_csv(sensitivity_csv,
                               required_columns=["controller", "structure", "zeta"])
    _, brows, _ = read_csv(bounds_csv, required_columns=["controller", "b2", "b3"])
    labels = _labels_from(sprov, sensitivity_csv)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.set_xlabel("controller index")
    ax.set_ylabel("differential sensitivity magnitude")
    ax.set_yscale("log")
    if brows:
        idx = [int(r["controller"]) for r in brows]
        ax.plot(idx, [float(r["b3"]) for r in brows], "-", color="black",
                label="B3 (time-varying bound)")
        ax.plot(idx, [float(r["b2"]) for r in brows], "--", color="gray",
                label="B2 (static bound)")
    for j, lab in enumerate(labels):
        pts = [(int(r["controller"]), abs(float(r["zeta"])))
               for r in srows if r["structure"] == lab]
        if pts:
            xs, ys = zip(*pts)
            ax.plot(xs, ys, _MARKERS[j % len(_MARKERS)], ms=4, ls="none",
                    label=f"|zeta| for {lab}")
    if srows or brows:
        ax.legend(fontsize=8)
    _finish(fig, ax, out_path)


def plot_theorem3(certificates_csv, out_path) -> None:
    """Analytic margin line with the verified perturbed errors at that margin."""
    _, rows, prov = read_csv(certificates_csv, required_columns=["controller"])
    labels = _labels_from(prov, certificates_csv)
    drift = labels[0]
    for col in (f"thm3_{drift}", f"err_thm3_{drift}", "epsilon"):
        if rows and col not in rows[0]:
            raise DataError(f"{certificates_csv}: missing column(s) ['{col}']")
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.set_xlabel("controller index")
    ax.set_ylabel("margin / perturbed error")
    ax.set_yscale("log")
    if rows:
        idx = [int(r["controller"]) for r in rows]
        ax.plot(idx, [float(r[f"thm3_{drift}"]) for r in rows], "-",
                color="black", label="analytic margin")
        ax.plot(idx, [float(r[f"err_thm3_{drift}"]) for r in rows], "o", ms=4,
                ls="none", label=f"error at margin ({drift})")
        ax.axhline(float(rows[0]["epsilon"]), ls=":", color="red",
                   label="threshold")
        ax.legend(fontsize=8)
    _finish(fig, ax, out_path)


def plot_algorithm1(certificates_csv, out_path) -> None:
    """Iterated worst-case margin with per-structure errors at that margin."""
    _, rows, prov = read_csv(certificates_csv,
                             required_columns=["controller", "alg1_delta_bar"])
    labels = _labels_from(prov, certificates_csv)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.set_xlabel("controller index")
    ax.set_ylabel("margin / perturbed error")
    ax.set_yscale("log")
    if rows:
        for col in ["err_alg1_worst"] + [f"err_alg1_{lab}" for lab in labels]:
            if col not in rows[0]:
                raise DataError(f"{certificates_csv}: missing column(s) ['{col}']")
        idx = [int(r["controller"]) for r in rows]
        ax.plot(idx, [float(r["alg1_delta_bar"]) for r in rows], "-",
                color="black", label="iterated margin")
        ax.plot(idx, [float(r["err_alg1_worst"]) for r in rows], "x", ms=5,
                ls="none", color="red", label="error, worst-case path")
        for j, lab in enumerate(labels):
            ax.plot(idx, [float(r[f"err_alg1_{lab}"]) for r in rows],
                    _MARKERS[j % len(_MARKERS)], ms=4, ls="none",
                    label=f"error at margin ({lab})")
        ax.axhline(float(rows[0]["epsilon"]), ls=":", color="red",
                   label="threshold")
        ax.legend(fontsize=8)
    _finish(fig, ax, out_path)
