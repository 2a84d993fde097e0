from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "cybersis"

_SVG_META = {"Date": None, "Creator": None}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return path


def run_figure(art, path: Path) -> Path:
    """Value, controls and (when available) the iteration error of one run."""
    errors = art.trace.get("errors") if art.trace else None
    ncols = 3 if errors else 2
    fig, axes = plt.subplots(1, ncols, figsize=(4.2 * ncols, 3.4))
    axes[0].plot(art.x, art.v)
    axes[0].set_xlabel("x")
    axes[0].set_ylabel("v(x)")
    axes[1].plot(art.x, art.eta, label="eta")
    axes[1].plot(art.x, art.rho, label="rho")
    axes[1].set_xlabel("x")
    axes[1].legend()
    if errors:
        axes[2].semilogy(range(1, len(errors) + 1), errors, marker="o")
        axes[2].set_xlabel("iteration")
        axes[2].set_ylabel("normalised L2 error")
    fig.suptitle(f"{art.experiment} / {art.variant} / {art.label}")
    return _save(fig, Path(path))


def family_figure(artifacts, path: Path, title: str) -> Path:
    """Overlay v, eta and rho of several runs."""
    fig, axes = plt.subplots(1, 3, figsize=(12.6, 3.4))
    for art in artifacts:
        axes[0].plot(art.x, art.v, label=art.label)
        axes[1].plot(art.x, art.eta, label=art.label)
        axes[2].plot(art.x, art.rho, label=art.label)
    for ax, name in zip(axes, ("v", "eta", "rho")):
        ax.set_xlabel("x")
        ax.set_ylabel(name)
    axes[0].legend(fontsize="small")
    fig.suptitle(title)
    return _save(fig, Path(path))
