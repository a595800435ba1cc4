import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from igeb_net import BeamParams, NetworkScenario, NetworkTopology, NodeCondition, RotationField


def random_spd(rng, n=6, lo=0.5, hi=2.0):
    a = rng.standard_normal((n, n))
    q, _ = np.linalg.qr(a)
    return (q * rng.uniform(lo, hi, n)) @ q.T


def random_rotation(rng):
    return Rotation.random(random_state=int(rng.integers(2**31))).as_matrix()


def random_beam(rng, length=None, rotate=True):
    R = RotationField.constant(random_rotation(rng)) if rotate else RotationField.identity()
    return BeamParams.uniform(rng.uniform(0.5, 2.0) if length is None else length,
                              random_spd(rng), random_spd(rng), R)


def star(beams, centre="free", K=None, node0=None):
    """Star with edge 1 from node 0 to the centre node 1, the rest leaving node 1."""
    N = len(beams)
    K = np.eye(6) if K is None else K
    conds = {n: NodeCondition.feedback(K) for n in range(N + 1)}
    conds[1] = NodeCondition.free() if centre == "free" else centre
    if node0 is not None:
        conds[0] = node0
    return NetworkScenario(NetworkTopology((0,) + (1,) * (N - 1)), list(beams), conds)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


@pytest.fixture
def unit_star():
    return star([BeamParams.uniform(1.0) for _ in range(3)])
