"""Edge-level differentially private node classification.

Propagates encoded node features with (approximate) personalized PageRank,
trains a linear classifier on them under objective perturbation, and
releases the exact minimizer of the noisy, strongly convex objective.
"""

__version__ = "0.1.0"
