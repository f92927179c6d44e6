import numpy as np
import pytest
import torch

from kgamc import SynthConfig, load_default_graph, synth_dataset

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def default_graph():
    g, triples, type_map = load_default_graph()
    return g


@pytest.fixture(scope="session")
def default_triples():
    _, triples, type_map = load_default_graph()
    return triples, type_map


@pytest.fixture(scope="session")
def tiny_dataset():
    """Two easy classes at high SNR, 200 frames, for quick training checks."""
    cfg = SynthConfig(seed=101, snr_grid=[18])
    from kgamc import ModulationClass

    return synth_dataset(cfg, 100, classes=(ModulationClass.BPSK, ModulationClass.QPSK))


def rand_rng(seed):
    return np.random.default_rng(seed)
