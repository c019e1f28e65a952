import numpy as np
import pytest
import torch

from skinadapt.data import DomainDescriptor, ImageSample, make_synthetic_domain, split_dataset

torch.use_deterministic_algorithms(True)


def iso(var):
    return ((var, 0.0, 0.0), (0.0, var, 0.0), (0.0, 0.0, var))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def easy_domain():
    """Bright blobs on a dark background; trivially separable by colour."""
    return DomainDescriptor(
        name="easy", fg_mean=(0.8, 0.8, 0.8), fg_cov=iso(0.0025),
        bg_mean=(0.2, 0.2, 0.2), bg_cov=iso(0.0025), noise=0.0, count_range=(1, 2),
    )


@pytest.fixture
def tiny_split(easy_domain):
    ds = make_synthetic_domain(easy_domain, 8, (32, 32), seed=5)
    return split_dataset(ds, 0.25, seed=1)


def random_sample(rng, h=20, w=24, with_mask=True, ident="s0"):
    px = rng.random((h, w, 3)).astype(np.float32)
    mask = (rng.random((h, w)) < 0.4).astype(np.uint8) if with_mask else None
    return ImageSample(ident, "test", px, mask)


def pytest_terminal_summary(terminalreporter):
    from .test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
