"""Execution counters used to prove which code paths ran.

The evaluation path must never touch pseudo-label construction, k-means,
or the alignment losses, and a baseline model must never allocate
segmentation / alignment / glyph tensors.  Rather than trusting the
control flow by inspection, the hot functions bump a counter here and
tests assert on the deltas.
"""

from dataclasses import dataclass, fields


@dataclass
class Counters:
    kmeans_calls: int = 0
    gpc_builds: int = 0
    alignment_losses: int = 0
    pyramid_forwards: int = 0
    glyph_head_forwards: int = 0
    glyph_poolings: int = 0
    fusion_gates: int = 0

    def reset(self) -> None:
        for f in fields(self):
            setattr(self, f.name, 0)

    def snapshot(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


COUNTERS = Counters()
