"""Seeded generators and synthetic corpora shared by the test modules."""
import numpy as np
import pytest

from rvector.audio import AudioBuffer
from rvector.store import EmbeddingStore


@pytest.fixture
def rng():
    return np.random.default_rng(20220523)


@pytest.fixture
def make_buffer(rng):
    """Gaussian noise buffers with a peak well inside full scale."""

    def factory(seconds=1.0, sample_rate=16000, amplitude=0.1, **ids):
        n = int(round(seconds * sample_rate))
        samples = np.clip(amplitude * rng.standard_normal(n), -0.99, 0.99)
        return AudioBuffer(samples=samples, sample_rate=sample_rate, **ids)

    return factory


def orthonormal_means(n_classes, dim, spacing, rng):
    """Class means along orthonormal directions, pairwise ``spacing`` apart."""
    basis, _ = np.linalg.qr(rng.standard_normal((dim, n_classes)))
    return basis.T * spacing / np.sqrt(2.0)


@pytest.fixture
def gaussian_clusters(rng):
    """
    (points, labels, means) with isotropic noise of RMS norm sigma.

    Class means sit ``separation * sigma`` apart pairwise.
    """

    def factory(n_classes=16, per_class=20, dim=64, separation=4.0, sigma=1.0):
        means = orthonormal_means(n_classes, dim, separation * sigma, rng)
        labels = np.repeat(np.arange(n_classes), per_class)
        noise = rng.standard_normal((labels.size, dim)) * sigma / np.sqrt(dim)
        return means[labels] + noise, labels, means

    return factory


@pytest.fixture
def make_store(rng):
    """Store with ``per_speaker`` noisy utterances around each speaker mean."""

    def factory(n_speakers=5, per_speaker=3, dim=16, noise=0.1, prefix="spk"):
        records = {}
        for s in range(n_speakers):
            mean = rng.standard_normal(dim)
            for u in range(per_speaker):
                vector = mean + noise * rng.standard_normal(dim)
                records["{}{:03d}-utt{}".format(prefix, s, u)] = (
                    "{}{:03d}".format(prefix, s),
                    vector,
                )
        return EmbeddingStore(dim=dim, records=records)

    return factory
