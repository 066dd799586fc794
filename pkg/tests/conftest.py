import numpy as np
import pytest

from emflows import GaussianLaw, HierarchicalModelConfig, make_conjugate_1d, make_hierarchical


@pytest.fixture
def conjugate():
    """The verification workhorse: y=0, unit variances."""
    return make_conjugate_1d(0.0, 1.0, 1.0)


def random_spd(rng, d, scale=1.0):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    eigs = rng.uniform(0.4, 2.0, size=d) * scale
    return q @ np.diag(eigs) @ q.T


def random_hierarchical(rng, max_blocks=4, max_block_dim=2):
    """A random well-posed hierarchical model (invertible observation maps,
    full-column-rank loading)."""
    m = int(rng.integers(1, max_blocks + 1))
    d_b = int(rng.integers(1, max_block_dim + 1))
    d_theta = int(rng.integers(1, d_b + 1))
    c_blocks = []
    for _ in range(m):
        c = rng.standard_normal((d_b, d_b))
        c += np.eye(d_b) * (2.0 * np.sign(np.linalg.det(c)) or 2.0)
        c_blocks.append(c)
    loading = rng.standard_normal((d_b, d_theta))
    u, _, vt = np.linalg.svd(loading, full_matrices=False)
    loading = u @ vt + 0.1 * rng.standard_normal((d_b, d_theta))
    cfg = HierarchicalModelConfig(
        m=m,
        c_blocks=c_blocks,
        loading=loading,
        sigma_u=random_spd(rng, d_b),
        sigma_v=random_spd(rng, d_b),
        y=rng.standard_normal(m * d_b),
    )
    return make_hierarchical(cfg)


@pytest.fixture
def hierarchical_2d():
    """m=1, identity maps, unit covariances, y=(0,0): two independent copies
    of the unit conjugate model."""
    cfg = HierarchicalModelConfig(
        m=1,
        c_blocks=[np.eye(2)],
        loading=np.eye(2),
        sigma_u=np.eye(2),
        sigma_v=np.eye(2),
        y=np.zeros(2),
    )
    return make_hierarchical(cfg)


def law1(mean, var):
    return GaussianLaw(np.array([float(mean)]), np.array([[float(var)]]))
