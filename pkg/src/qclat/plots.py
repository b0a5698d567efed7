"""Batch plotting of the CSV series written by the command line runs.

Figures are rendered headlessly from the delimited files alone, so they
can be regenerated after the fact: ``python -m qclat.plots <output-dir>``
re-renders every known series found in the directory.
"""

import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .fracture import fit_toughness_scaling  # noqa: E402

DPI = 150


def _read(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return header, body


def _column(header, body, name, cast=float):
    k = header.index(name)
    return [cast(row[k]) for row in body]


def plot_stages(csv_path, png_path):
    """Refinement history: repUC density and peak tensile stress per stage."""
    header, body = _read(csv_path)
    stages = _column(header, body, "stage", int)
    density = _column(header, body, "repuc_density")
    tensile = _column(header, body, "max_tensile")
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(stages, density, "o-", color="tab:blue", label="repUC density")
    ax.set_xlabel("stage")
    ax.set_ylabel("repUC density", color="tab:blue")
    twin = ax.twinx()
    twin.plot(stages, tensile, "s--", color="tab:red", label="max tensile")
    twin.set_ylabel("max tensile stress", color="tab:red")
    ax.set_xticks(stages)
    fig.tight_layout()
    fig.savefig(png_path, dpi=DPI)
    plt.close(fig)


def plot_histogram(csv_path, png_path):
    """Normalized tensile-stress histogram as a filled step plot."""
    header, body = _read(csv_path)
    left = _column(header, body, "bin_left")
    right = _column(header, body, "bin_right")
    counts = _column(header, body, "count")
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(left, counts, width=[r - l for l, r in zip(left, right)],
           align="edge", color="tab:blue", edgecolor="none")
    ax.set_xlabel(r"$\sigma_t / \sigma_{t,\max}$")
    ax.set_ylabel("beams")
    ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(png_path, dpi=DPI)
    plt.close(fig)


def plot_orders(csv_path, png_path):
    """Tip-displacement error against repUC density, one line per order."""
    header, body = _read(csv_path)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for mode, style in (("first", "o-"), ("second", "s-")):
        rows = [row for row in body if row[header.index("mode")] == mode]
        dens = _column(header, rows, "repuc_density")
        err = _column(header, rows, "rel_error")
        # the fully resolved sanity row has zero error; log axes drop it
        keep = [(d, e) for d, e in zip(dens, err) if e > 0.0]
        if keep:
            ax.loglog(*zip(*keep), style, label=f"{mode} order")
    ax.set_xlabel("repUC density")
    ax.set_ylabel("relative tip-displacement error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(png_path, dpi=DPI)
    plt.close(fig)


def plot_toughness(csv_path, png_path):
    """Toughness against relative density, with the power-law fit overlaid."""
    header, body = _read(csv_path)
    dens = _column(header, body, "rel_density")
    kbar = _column(header, body, "kbar_ic")
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.loglog(dens, kbar, "o", color="tab:blue", label="runs")
    if len(dens) >= 3:
        fit = fit_toughness_scaling(dens, kbar)
        lo, hi = min(dens), max(dens)
        line = [lo, hi]
        ax.loglog(line, fit.predict(line), "-", color="tab:red",
                  label=(rf"$\bar K_{{IC}} = {fit.prefactor:.3g}\,"
                         rf"\bar\rho^{{{fit.exponent:.3g}}}$"))
    ax.set_xlabel(r"relative density $\bar\rho$")
    ax.set_ylabel(r"$\bar K_{IC}$")
    ax.legend()
    fig.tight_layout()
    fig.savefig(png_path, dpi=DPI)
    plt.close(fig)


def plot_layers(csv_path, png_path):
    """Peak tensile stress per through-thickness cell layer."""
    header, body = _read(csv_path)
    layer = _column(header, body, "layer", int)
    peak = _column(header, body, "peak_tensile")
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(layer, peak, color="tab:blue")
    ax.set_xlabel("cell layer")
    ax.set_ylabel("peak tensile stress")
    ax.set_xticks(layer)
    fig.tight_layout()
    fig.savefig(png_path, dpi=DPI)
    plt.close(fig)


SERIES = (("stages.csv", "stages.png", plot_stages),
          ("histogram.csv", "histogram.png", plot_histogram),
          ("orders.csv", "orders.png", plot_orders),
          ("toughness.csv", "toughness.png", plot_toughness),
          ("layers.csv", "layers.png", plot_layers))


def render_all(directory):
    """Render a figure for every known CSV present; returns written paths."""
    directory = Path(directory)
    written = []
    for csv_name, png_name, renderer in SERIES:
        src = directory / csv_name
        if src.exists():
            dst = directory / png_name
            renderer(src, dst)
            written.append(dst)
    return written


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print("usage: python -m qclat.plots <output-dir>", file=sys.stderr)
        return 2
    written = render_all(argv[0])
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
