"""headqa: desk-scale quality-assessment workbench for textured head meshes.

Stages: distortion synthesis (7 families x 4 levels), deterministic
projection rendering, subjective-score processing to MOS, classic
full-reference metrics, a learned attention-fusion quality model, and a
correlation-based evaluation harness. The `headqa` CLI chains the stages;
`headqa serve` hosts the rating interface for live score collection.
"""

__version__ = "0.1.0"
