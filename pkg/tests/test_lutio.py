import numpy as np
import pytest

from conftest import random_lattice

from nulut.lattice import Lattice, identity_lut, uniform_coordinates
from nulut.lutio import (
    LutFormatError,
    export_cube,
    load_checkpoint,
    load_lattice,
    save_lattice,
)
from nulut.predictor import init_params
from nulut.transform import transform_pixel


class TestLatticeRoundTrip:
    def test_100_random_lattices_round_trip_exactly(self, rng, tmp_path):
        path = tmp_path / "rt.nulut"
        for trial in range(100):
            n_s = int(rng.integers(2, 9))
            lattice = random_lattice(rng, n_s, logit_scale=3.0)
            save_lattice(lattice, path)
            loaded = load_lattice(path)
            assert np.array_equal(loaded.coords, lattice.coords)
            assert np.array_equal(loaded.values, lattice.values)

    def test_non_monotone_coords_rejected_with_index(self, tmp_path):
        path = tmp_path / "bad.nulut"
        values = " ".join(["0"] * 3 * 64)
        path.write_text(
            "NULUT3D 1\nsize 4\n"
            "coords r 0 0.5 0.4 1\n"
            "coords g 0 0.3 0.6 1\n"
            "coords b 0 0.3 0.6 1\n"
            f"values\n{values}\n"
        )
        with pytest.raises(LutFormatError, match="non-monotone at index 2"):
            load_lattice(path)

    def test_size_mismatch_rejected(self, tmp_path):
        path = tmp_path / "short.nulut"
        path.write_text(
            "NULUT3D 1\nsize 5\n"
            "coords r 0 0.3 0.6 1\n"
        )
        with pytest.raises(LutFormatError):
            load_lattice(path)

    def test_version_mismatch_rejected(self, tmp_path):
        path = tmp_path / "v2.nulut"
        path.write_text("NULUT3D 2\nsize 2\n")
        with pytest.raises(LutFormatError, match="version"):
            load_lattice(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "magic.nulut"
        path.write_text("SOMETHING 1\n")
        with pytest.raises(LutFormatError, match="magic"):
            load_lattice(path)

    def test_trailing_garbage_rejected(self, rng, tmp_path):
        path = tmp_path / "trail.nulut"
        save_lattice(random_lattice(rng, 3), path)
        with open(path, "a") as fh:
            fh.write("leftover\n")
        with pytest.raises(LutFormatError):
            load_lattice(path)


class TestPredictorCheckpoint:
    def test_round_trip_with_predictor(self, rng, tmp_path):
        params = init_params(n_s=4, m=2, seed=3)
        params.g_weights[:] = rng.normal(size=params.g_weights.shape)
        lattice = random_lattice(rng, 4)
        path = tmp_path / "ckpt.nulut"
        save_lattice(lattice, path, predictor=params)
        loaded_lattice, loaded = load_checkpoint(path)
        assert np.array_equal(loaded_lattice.values, lattice.values)
        assert loaded is not None
        assert loaded.m == params.m and loaded.f_dim == params.f_dim
        assert loaded.shared == params.shared
        for name in ("g_weights", "g_bias", "h0_weights", "h0_bias", "basis_luts", "h1_bias"):
            assert np.array_equal(getattr(loaded, name), getattr(params, name))

    def test_lattice_only_file_has_no_predictor(self, rng, tmp_path):
        path = tmp_path / "plain.nulut"
        save_lattice(random_lattice(rng, 3), path)
        _, predictor = load_checkpoint(path)
        assert predictor is None

    def test_shared_predictor_round_trip(self, rng, tmp_path):
        params = init_params(n_s=5, m=2, shared=True, seed=9)
        path = tmp_path / "shared.nulut"
        save_lattice(random_lattice(rng, 5), path, predictor=params)
        _, loaded = load_checkpoint(path)
        assert loaded.shared is True
        assert loaded.g_bias.shape == (4,)


def uniform_cube_interpolate(table, n, x):
    """Reference trilinear interpolation on a uniform grid (floor indexing)."""
    out = np.empty(3)
    idx = np.minimum((np.asarray(x) * (n - 1)).astype(int), n - 2)
    frac = np.asarray(x) * (n - 1) - idx
    for c in range(3):
        acc = 0.0
        for i in (0, 1):
            for j in (0, 1):
                for k in (0, 1):
                    w = (
                        (frac[0] if i else 1 - frac[0])
                        * (frac[1] if j else 1 - frac[1])
                        * (frac[2] if k else 1 - frac[2])
                    )
                    acc += w * table[idx[0] + i, idx[1] + j, idx[2] + k, c]
        out[c] = acc
    return out


def parse_cube(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("LUT_3D_SIZE ")
    n = int(lines[0].split()[1])
    data = np.array([[float(v) for v in line.split()] for line in lines[1:]])
    assert data.shape == (n**3, 3)
    # red fastest: line = r + g*n + b*n^2
    return n, data.reshape(n, n, n, 3)  # [b][g][r][channel] after reshape


class TestExportCube:
    def test_identity_two_knot_cube_lists_corners(self, tmp_path):
        coords = uniform_coordinates(2)
        lattice = Lattice(coords, identity_lut(coords))
        path = tmp_path / "id.cube"
        export_cube(lattice, 2, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "LUT_3D_SIZE 2"
        got = [tuple(float(v) for v in line.split()) for line in lines[1:]]
        expected = [
            (0.0, 0.0, 0.0), (1.0, 0.0, 0.0),  # red varies fastest
            (0.0, 1.0, 0.0), (1.0, 1.0, 0.0),
            (0.0, 0.0, 1.0), (1.0, 0.0, 1.0),
            (0.0, 1.0, 1.0), (1.0, 1.0, 1.0),
        ]
        assert got == expected

    def test_matching_size_on_uniform_grid_reproduces_table(self, rng, tmp_path):
        n = 5
        values = rng.random((3, n, n, n))
        lattice = Lattice(uniform_coordinates(n), values)
        path = tmp_path / "exact.cube"
        export_cube(lattice, n, path)
        size, cube = parse_cube(path)
        assert size == n
        for c in range(3):
            # cube[b][g][r][c] must equal values[c][r][g][b] bit-exactly
            assert np.array_equal(cube[..., c].transpose(2, 1, 0), values[c])

    def test_resampled_cube_approximates_transform(self, rng, tmp_path):
        lattice = random_lattice(rng, 5, value_noise=0.05)
        path = tmp_path / "resampled.cube"
        export_cube(lattice, 17, path)
        size, cube = parse_cube(path)
        worst = 0.0
        for x in rng.random((200, 3)):
            reference = np.clip(transform_pixel(x, lattice), 0.0, 1.0)
            resampled = uniform_cube_interpolate(cube.transpose(2, 1, 0, 3), size, x)
            worst = max(worst, np.abs(reference - resampled).max())
        # resampling error bound measured for this lattice family at 17 knots
        assert worst <= 0.02

    def test_rejects_tiny_size(self, rng, tmp_path):
        with pytest.raises(ValueError):
            export_cube(random_lattice(rng, 3), 1, tmp_path / "x.cube")
