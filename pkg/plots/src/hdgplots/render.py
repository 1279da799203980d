"""Deterministic figure output shared by all plot scripts."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def new_figure(width=6.4, height=4.8):
    return plt.figure(figsize=(width, height), dpi=100)


def save(fig, path):
    """Write a byte-stable PNG: fixed size/dpi, no metadata, no timestamps."""
    fig.savefig(path, format="png", dpi=100, metadata={"Software": None})
    plt.close(fig)
