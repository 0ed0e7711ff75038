import numpy as np
import pytest

from headqa import synth
from headqa.mesh_io import (MeshError, TextureImage, TexturedMesh, bounding_box,
                            load_image, load_mesh, save_image, save_mesh)

from conftest import random_valid_mesh


def write_obj(tmp_path, text, texture=None, name="mesh.obj"):
    path = tmp_path / name
    path.write_text(text)
    tex = texture if texture is not None else np.zeros((4, 4, 3), dtype=np.uint8)
    save_image(TextureImage(tex), path.with_suffix(".ppm"))
    return path


MINIMAL_OBJ = """v 0 0 0
v 1 0 0
v 0 1 0
vt 0 0
vt 1 0
vt 0 1
f 1/1 2/2 3/3
"""


class TestLoadMesh:
    def test_minimal_obj(self, tmp_path):
        mesh = load_mesh(write_obj(tmp_path, MINIMAL_OBJ))
        assert mesh.n_faces == 1
        assert len(mesh.positions) == 3
        assert len(mesh.uvs) == 3
        np.testing.assert_array_equal(mesh.faces[0, :, 0], [0, 1, 2])

    def test_face_index_out_of_range(self, tmp_path):
        bad = MINIMAL_OBJ.replace("f 1/1 2/2 3/3", "f 1/1 2/2 9/3")
        with pytest.raises(MeshError, match="out of range"):
            load_mesh(write_obj(tmp_path, bad))

    def test_face_without_uv_index(self, tmp_path):
        bad = MINIMAL_OBJ.replace("f 1/1 2/2 3/3", "f 1 2 3")
        with pytest.raises(MeshError, match="uv index"):
            load_mesh(write_obj(tmp_path, bad))

    def test_missing_file(self, tmp_path):
        with pytest.raises(MeshError, match="not found"):
            load_mesh(tmp_path / "nope.obj")

    def test_missing_texture(self, tmp_path):
        path = tmp_path / "mesh.obj"
        path.write_text(MINIMAL_OBJ)
        with pytest.raises(MeshError, match="no texture found"):
            load_mesh(path)

    def test_uvs_clamped(self, tmp_path):
        text = MINIMAL_OBJ.replace("vt 1 0", "vt 1.4 -0.2")
        mesh = load_mesh(write_obj(tmp_path, text))
        assert mesh.uvs.min() >= 0.0
        assert mesh.uvs.max() <= 1.0

    def test_quad_fan_triangulation(self, tmp_path):
        text = """v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0
vt 0 0\nvt 1 0\nvt 1 1\nvt 0 1
f 1/1 2/2 3/3 4/4
"""
        mesh = load_mesh(write_obj(tmp_path, text))
        assert mesh.n_faces == 2
        np.testing.assert_array_equal(mesh.faces[:, :, 0], [[0, 1, 2], [0, 2, 3]])

    def test_ignored_keywords_warn(self, tmp_path):
        text = "vn 0 0 1\nusemtl skin\n" + MINIMAL_OBJ
        with pytest.warns(UserWarning):
            mesh = load_mesh(write_obj(tmp_path, text))
        assert mesh.n_faces == 1

    def test_fuzzed_meshes_pass_invariants(self, tmp_path):
        rng = np.random.default_rng(31)
        for trial in range(15):
            mesh = random_valid_mesh(rng)
            path = tmp_path / f"fuzz{trial}.obj"
            save_mesh(mesh, path)
            loaded = load_mesh(path)
            loaded.validate()
            assert loaded.n_faces == mesh.n_faces


class TestSaveMesh:
    def test_single_triangle_line_counts(self, tmp_path, single_triangle):
        path = tmp_path / "tri.obj"
        save_mesh(single_triangle, path)
        lines = path.read_text().splitlines()
        assert sum(1 for l in lines if l.startswith("v ")) == 3
        assert sum(1 for l in lines if l.startswith("vt ")) == 3
        assert sum(1 for l in lines if l.startswith("f ")) == 1

    def test_zero_faces_valid_obj(self, tmp_path, single_triangle):
        mesh = single_triangle.copy()
        mesh.faces = np.zeros((0, 3, 2), dtype=np.int64)
        path = tmp_path / "empty.obj"
        save_mesh(mesh, path)
        lines = path.read_text().splitlines()
        assert not any(l.startswith("f ") for l in lines)
        loaded = load_mesh(path)
        assert loaded.n_faces == 0

    def test_round_trip(self, tmp_path, small_head):
        path = tmp_path / "head.obj"
        save_mesh(small_head, path)
        loaded = load_mesh(path)
        np.testing.assert_array_equal(loaded.faces, small_head.faces)
        np.testing.assert_allclose(loaded.positions, small_head.positions, atol=1e-5)
        np.testing.assert_allclose(loaded.uvs, small_head.uvs, atol=1e-5)
        np.testing.assert_array_equal(loaded.texture.pixels, small_head.texture.pixels)

    def test_png_texture_round_trip(self, tmp_path, small_head):
        path = tmp_path / "head.obj"
        save_mesh(small_head, path, texture_format="png")
        loaded = load_mesh(path)
        np.testing.assert_array_equal(loaded.texture.pixels, small_head.texture.pixels)


class TestImages:
    def test_ppm_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(5)
        img = TextureImage(rng.integers(0, 256, size=(9, 13, 3)).astype(np.uint8))
        path = tmp_path / "img.ppm"
        save_image(img, path)
        np.testing.assert_array_equal(load_image(path).pixels, img.pixels)

    def test_ppm_header_comment(self, tmp_path):
        body = bytes(range(12))
        (tmp_path / "c.ppm").write_bytes(b"P6\n# a comment\n2 2\n255\n" + body)
        img = load_image(tmp_path / "c.ppm")
        assert (img.width, img.height) == (2, 2)

    def test_unsupported_format(self, tmp_path):
        (tmp_path / "img.gif").write_bytes(b"GIF89a")
        with pytest.raises(MeshError, match="unsupported texture format"):
            load_image(tmp_path / "img.gif")

    def test_texture_invariants(self):
        with pytest.raises(MeshError):
            TextureImage(np.zeros((0, 4, 3), dtype=np.uint8))
        with pytest.raises(MeshError):
            TextureImage(np.zeros((4, 4, 4), dtype=np.uint8))


class TestBoundingBox:
    def test_two_points(self, single_triangle):
        mesh = single_triangle.copy()
        mesh.positions = np.array([[0.0, 0, 0], [1.0, 2, 3], [0.5, 0.5, 0.5]])
        box = bounding_box(mesh)
        np.testing.assert_array_equal(box.min, [0, 0, 0])
        np.testing.assert_array_equal(box.max, [1, 2, 3])
        assert box.diagonal == pytest.approx(np.sqrt(14.0))

    def test_single_point(self, single_triangle):
        mesh = single_triangle.copy()
        mesh.positions = np.array([[2.0, 2.0, 2.0]] * 3)
        box = bounding_box(mesh)
        np.testing.assert_array_equal(box.min, box.max)
        assert box.diagonal == 0.0

    def test_unit_cube(self, single_triangle):
        corners = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)],
                           dtype=np.float64)
        mesh = single_triangle.copy()
        mesh.positions = corners
        assert bounding_box(mesh).diagonal == pytest.approx(np.sqrt(3.0))

    def test_permutation_invariance(self, small_head):
        rng = np.random.default_rng(17)
        box = bounding_box(small_head)
        shuffled = small_head.copy()
        perm = rng.permutation(len(shuffled.positions))
        shuffled.positions = shuffled.positions[perm]
        shuffled.faces = np.zeros((0, 3, 2), dtype=np.int64)  # indices now meaningless
        box2 = bounding_box(shuffled)
        np.testing.assert_array_equal(box.min, box2.min)
        np.testing.assert_array_equal(box.max, box2.max)

    def test_empty_error(self, single_triangle):
        mesh = single_triangle.copy()
        mesh.positions = np.zeros((0, 3))
        mesh.faces = np.zeros((0, 3, 2), dtype=np.int64)
        with pytest.raises(MeshError):
            bounding_box(mesh)
