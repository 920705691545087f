import numpy as np
import pytest

from terrainmaker.exceptions import (DataError, EmptyIntersectionError, MisalignedGridError,
                                     OutOfBoundsError)
from terrainmaker.gridmap import GridGeometry, MultiLayerGrid, lattice_geometry


@pytest.fixture
def geometry():
    return GridGeometry(0.1, (0.0, 0.0), 10, 10)


def test_world_to_cell_nearest_center(geometry):
    assert tuple(geometry.world_to_cell((0.0, 0.0))) == (0, 0)
    assert tuple(geometry.world_to_cell((0.06, 0.31))) == (3, 1)


def test_world_to_cell_halfway_goes_lower(geometry):
    assert tuple(geometry.world_to_cell((0.05, 0.15))) == (1, 0)


def test_world_to_cell_out_of_bounds(geometry):
    with pytest.raises(OutOfBoundsError):
        geometry.world_to_cell((-0.06, 0.0))
    with pytest.raises(OutOfBoundsError):
        geometry.cell_to_world((10, 0))


def test_cell_to_world_roundtrip(geometry):
    for cell in [(0, 0), (4, 7), (9, 9)]:
        assert tuple(geometry.world_to_cell(geometry.cell_to_world(cell))) == cell


def test_world_to_cells_matches_scalar(geometry):
    rng = np.random.default_rng(0)
    xy = rng.uniform(-0.04, 0.94, size=(200, 2))
    rows, cols, inside = geometry.world_to_cells(xy)
    assert inside.all()
    for p, r, c in zip(xy, rows, cols):
        assert tuple(geometry.world_to_cell(p)) == (r, c)


def test_invalid_geometry():
    with pytest.raises(DataError):
        GridGeometry(0.0, (0.0, 0.0), 4, 4)
    with pytest.raises(DataError):
        GridGeometry(0.1, (0.0, 0.0), 0, 4)


def test_cells_within_radius_clipped_at_corner(geometry):
    hood = geometry.cells_within_radius((0, 0), 0.1)
    assert sorted(hood.members) == [(0, 0), (0, 1), (1, 0)]
    hood = geometry.cells_within_radius((5, 5), 0.1)
    assert len(hood) == 5


def test_stride_radius_cell_count():
    fine = GridGeometry(0.02, (0.0, 0.0), 41, 41)
    assert len(fine.radius_offsets(0.20)) == 317
    hood = fine.cells_within_radius((20, 20), 0.20)
    assert len(hood) == 317
    assert (20, 30) in hood.members and (27, 27) in hood.members
    assert (28, 27) not in hood.members


def test_radius_zero_is_center_only(geometry):
    assert geometry.cells_within_radius((3, 3), 0.0).members == [(3, 3)]


def test_cell_offset_requires_common_lattice(geometry):
    other = GridGeometry(0.1, (0.3, 0.2), 4, 4)
    assert geometry.cell_offset(other) == (2, 3)
    with pytest.raises(MisalignedGridError):
        geometry.cell_offset(GridGeometry(0.1, (0.05, 0.0), 4, 4))
    with pytest.raises(MisalignedGridError):
        geometry.cell_offset(GridGeometry(0.2, (0.0, 0.0), 4, 4))


def test_lattice_geometry():
    g = lattice_geometry(0.1, (0.02, 0.02), (0.98, 0.51))
    assert g.origin == (0.0, 0.0)
    assert g.shape == (6, 11)


def test_grid_has_elevation_layer(geometry):
    grid = MultiLayerGrid(geometry)
    assert grid.layer_names == ["elevation"]
    assert not grid.known_mask().any()
    with pytest.raises(DataError):
        grid.remove_layer("elevation")
    with pytest.raises(DataError):
        MultiLayerGrid(geometry, frame="world")


def test_crop_copies_values(geometry):
    grid = MultiLayerGrid(geometry)
    grid["elevation"][:] = np.arange(100.0).reshape(10, 10)
    sub = grid.crop((0.2, 0.2), (0.5, 0.4))
    assert sub.geometry.shape == (3, 4)
    np.testing.assert_allclose(sub.geometry.origin, (0.2, 0.2))
    np.testing.assert_array_equal(sub.elevation, grid.elevation[2:5, 2:6])
    sub.elevation[0, 0] = -1.0
    assert grid.elevation[2, 2] == 22.0


def test_crop_outside_raises(geometry):
    grid = MultiLayerGrid(geometry)
    with pytest.raises(EmptyIntersectionError):
        grid.crop((2.0, 2.0), (3.0, 3.0))


def test_paste_only_known_values(geometry):
    grid = MultiLayerGrid(geometry)
    grid.elevation[:] = 1.0
    patch = MultiLayerGrid(GridGeometry(0.1, (0.8, 0.8), 4, 4))
    patch.elevation[0, 0] = 5.0
    grid.paste(patch)
    assert grid.elevation[8, 8] == 5.0
    assert grid.elevation[8, 9] == 1.0
    assert grid.elevation[9, 9] == 1.0
