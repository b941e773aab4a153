"""Dual-branch CNN segmentation with cross-shaped patches."""

from crossnet._core import (
    Model,
    dsc,
    extract_crossover,
    hausdorff,
    influence_oracle,
    invert_to_slice,
    over_under,
    receptive_rows,
    sample_centers,
    synth_generate,
)


def thin_sequence(sequence):
    """Keep every other element (even positions), preserving order."""
    return list(sequence[::2])


__all__ = [
    "Model",
    "dsc",
    "extract_crossover",
    "hausdorff",
    "influence_oracle",
    "invert_to_slice",
    "over_under",
    "receptive_rows",
    "sample_centers",
    "synth_generate",
    "thin_sequence",
]
