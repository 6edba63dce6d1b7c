from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PathStreams:
    # Component 1
    brownian1: np.random.Generator
    jumps1: np.random.Generator

    # Component 2
    brownian2: np.random.Generator
    jumps2: np.random.Generator

    # Random initial conditions
    auxiliary: np.random.Generator


def make_streams(master_seed: int, path_index: int) -> PathStreams:
    """
    Deterministically create the independent noise channels of one sample path.

    Structure:
      path
        ├── component 1
        │     ├── brownian
        │     └── jumps
        ├── component 2
        │     ├── brownian
        │     └── jumps
        └── auxiliary
    """
    root = np.random.SeedSequence([int(master_seed), int(path_index)])
    ss_one, ss_two, ss_aux = root.spawn(3)
    ss_w1, ss_n1 = ss_one.spawn(2)
    ss_w2, ss_n2 = ss_two.spawn(2)

    return PathStreams(
        brownian1=np.random.default_rng(ss_w1),
        jumps1=np.random.default_rng(ss_n1),
        brownian2=np.random.default_rng(ss_w2),
        jumps2=np.random.default_rng(ss_n2),
        auxiliary=np.random.default_rng(ss_aux),
    )


def sampling_generator(seed: int) -> np.random.Generator:
    """Generator for validators that sample the state space rather than paths."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), 2**32 - 1]))
