import numpy as np
import pytest

from headqa import synth
from headqa.mesh_io import TexturedMesh, TextureImage


@pytest.fixture(scope="session")
def small_head():
    return synth.make_head(seed=0, grid=12, texture_size=64)


@pytest.fixture(scope="session")
def icosahedron():
    return synth.make_icosahedron()


@pytest.fixture()
def single_triangle():
    positions = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    uvs = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    faces = np.array([[[0, 0], [1, 1], [2, 2]]])
    tex = TextureImage(np.full((8, 8, 3), 200, dtype=np.uint8))
    return TexturedMesh(positions, uvs, faces, tex, name="tri")


def random_valid_mesh(rng: np.random.Generator, n_verts: int = 8,
                      n_faces: int = 6) -> TexturedMesh:
    positions = rng.normal(size=(n_verts, 3))
    uvs = rng.random(size=(n_verts, 2))
    faces = []
    for _ in range(n_faces):
        tri = rng.choice(n_verts, size=3, replace=False)
        faces.append([[v, v] for v in tri])
    tex = TextureImage(rng.integers(0, 256, size=(8, 8, 3)).astype(np.uint8))
    return TexturedMesh(positions, uvs, np.array(faces), tex)
