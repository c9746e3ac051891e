"""Diagnostics for audio embedding encoders: do they preserve distance structure?

Applies graded transformations to audio, measures distances in audio space
(DTW / similarity matrix profile over MFCC sequences) and in latent space
(Euclidean / cosine over embeddings), and reports within-space and
between-space consistency with bootstrap confidence intervals.
"""

__version__ = "0.1.0"

# Bumped whenever a numerical algorithm changes, so cached stage results
# from older code are never reused.
ALGORITHM_REVISION = "r1"
