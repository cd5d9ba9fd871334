import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=30,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

torch.set_num_threads(1)

CHAIN_BVH = """\
HIERARCHY
ROOT Hips
{
\tOFFSET 0.000000 0.000000 0.000000
\tCHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
\tJOINT Spine
\t{
\t\tOFFSET 0.000000 10.000000 0.000000
\t\tCHANNELS 3 Zrotation Xrotation Yrotation
\t\tJOINT Head
\t\t{
\t\t\tOFFSET 0.000000 10.000000 0.000000
\t\t\tCHANNELS 3 Zrotation Xrotation Yrotation
\t\t\tEnd Site
\t\t\t{
\t\t\t\tOFFSET 0.000000 5.000000 0.000000
\t\t\t}
\t\t}
\t}
}
MOTION
Frames: 12
Frame Time: 0.033333
"""


def chain_document(rng: np.random.Generator | None = None, n_frames: int = 12) -> str:
    """The 3-joint chain fixture, optionally with random channel values."""
    rows = []
    for f in range(n_frames):
        if rng is None:
            values = np.zeros(12)
        else:
            values = np.concatenate([rng.uniform(-5, 5, 3), rng.uniform(-170, 170, 9)])
        rows.append(" ".join(f"{v:.6f}" for v in values))
    doc = CHAIN_BVH.replace("Frames: 12", f"Frames: {n_frames}")
    return doc + "\n".join(rows) + "\n"


@pytest.fixture
def chain_motion():
    from gestureforge.bvh import parse_bvh

    return parse_bvh(chain_document(np.random.default_rng(11)))


def random_rotations(seed: int, count: int) -> np.ndarray:
    """Uniform random rotation matrices from normalized quaternions (oracle path)."""
    rng = np.random.default_rng(seed)
    q = rng.normal(size=(count, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    r, i, j, k = q.T
    return np.stack(
        [
            1 - 2 * (j * j + k * k), 2 * (i * j - k * r), 2 * (i * k + j * r),
            2 * (i * j + k * r), 1 - 2 * (i * i + k * k), 2 * (j * k - i * r),
            2 * (i * k - j * r), 2 * (j * k + i * r), 1 - 2 * (i * i + j * j),
        ],
        axis=-1,
    ).reshape(-1, 3, 3)
