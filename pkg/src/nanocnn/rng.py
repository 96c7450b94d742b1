"""Deterministic random-stream derivation.

Every stochastic step in the pipeline draws from a PCG64 generator whose
state is derived from the single run seed plus a fixed integer path, e.g.
``derive(seed, STREAM_SPLIT, class_index)``. Streams are therefore
independent of each other and of how work is batched across workers:
reordering or parallelizing consumers cannot change what any one stream
produces. Determinism is promised for this implementation (numpy's PCG64
via SeedSequence), not across third-party reimplementations.
"""

import numpy as np

# Stream domain tags. Never renumber: manifests and runs produced with one
# numbering are not reproducible under another.
STREAM_SPLIT = 1
STREAM_INIT = 2
STREAM_SHUFFLE = 3
STREAM_AUGMENT = 4
STREAM_SYNTH = 5


def derive(seed: int, *path: int) -> np.random.Generator:
    """Return a generator for the stream identified by (seed, *path)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *path])))
