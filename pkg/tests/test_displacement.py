"""Dense offset grid: anchors, encode/decode, the mean-error statistic.

``decode_oracle`` below rebuilds every estimate with explicit Python loops
straight from the definition (estimate = cell anchor + stored offset); the
vectorized implementation must agree with it elementwise.
"""

import numpy as np
import pytest

from satpose import (
    CELLS,
    GRID,
    STRIDE,
    DisplacementField,
    KeypointPredictions,
    anchor,
    anchor_grid,
    decode,
    encode,
    encode_predictions,
    keypoint_error,
    load_field,
    save_field,
)


def decode_oracle(grid):
    n = grid.shape[2] // 2
    est = np.zeros((n, CELLS, 2))
    for i in range(n):
        for r in range(GRID):
            for c in range(GRID):
                ax = (c + 0.5) * STRIDE
                ay = (r + 0.5) * STRIDE
                est[i, r * GRID + c, 0] = ax + grid[r, c, 2 * i]
                est[i, r * GRID + c, 1] = ay + grid[r, c, 2 * i + 1]
    return est


class TestAnchors:
    def test_corner_and_interior_cells(self):
        assert anchor(0, 0) == (8.0, 8.0)
        assert anchor(13, 13) == (216.0, 216.0)
        # x follows the column index, y the row
        assert anchor(6, 7) == (120.0, 104.0)

    def test_out_of_grid_cells_rejected(self):
        for r, c in [(-1, 0), (0, -1), (14, 0), (0, 14)]:
            with pytest.raises(ValueError):
                anchor(r, c)

    def test_grid_matches_scalar_anchor(self):
        ag = anchor_grid()
        assert ag.shape == (GRID, GRID, 2)
        for r in range(GRID):
            for c in range(GRID):
                assert tuple(ag[r, c]) == anchor(r, c)


class TestCodec:
    def test_keypoint_at_anchor_has_zero_offset(self):
        field = encode(np.array([[120.0, 104.0]]))
        np.testing.assert_array_equal(field.grid[6, 7], [0.0, 0.0])

    def test_all_estimates_recover_the_keypoint(self, rng):
        kps = rng.uniform(0, 224, size=(20, 2))
        est = decode(encode(kps)).estimates
        assert est.shape == (20, CELLS, 2)
        np.testing.assert_allclose(est, np.broadcast_to(kps[:, None, :], est.shape), atol=1e-12)

    def test_keypoint_outside_crop_is_preserved(self):
        kps = np.array([[300.0, -10.0]])
        est = decode(encode(kps)).estimates
        np.testing.assert_array_equal(est, np.broadcast_to(kps[:, None, :], (1, CELLS, 2)))

    def test_zero_field_decodes_to_anchors(self):
        est = decode(DisplacementField(np.zeros((GRID, GRID, 2)))).estimates
        np.testing.assert_array_equal(est[0], anchor_grid().reshape(CELLS, 2))

    def test_constant_offset_shifts_every_anchor(self):
        grid = np.zeros((GRID, GRID, 2))
        grid[:, :, 0] = 5.0
        grid[:, :, 1] = -3.0
        est = decode(DisplacementField(grid)).estimates
        np.testing.assert_array_equal(est[0], anchor_grid().reshape(CELLS, 2) + [5.0, -3.0])

    def test_decode_matches_loop_oracle(self, rng):
        for _ in range(20):
            n = int(rng.integers(1, 8))
            grid = rng.normal(scale=80, size=(GRID, GRID, 2 * n))
            np.testing.assert_allclose(
                decode(DisplacementField(grid)).estimates, decode_oracle(grid), atol=1e-9
            )

    def test_encode_predictions_inverts_decode(self, rng):
        grid = rng.normal(scale=50, size=(GRID, GRID, 10))
        field = DisplacementField(grid)
        back = encode_predictions(decode(field))
        # adding then subtracting the anchors costs at most one rounding step
        np.testing.assert_allclose(back.grid, grid, atol=1e-12)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            DisplacementField(np.zeros((GRID, GRID, 3)))  # odd channel count
        with pytest.raises(ValueError):
            DisplacementField(np.zeros((GRID, GRID, 0)))
        with pytest.raises(ValueError):
            DisplacementField(np.zeros((7, GRID, 2)))
        with pytest.raises(ValueError):
            KeypointPredictions(np.zeros((2, CELLS + 1, 2)))
        with pytest.raises(ValueError):
            encode(np.zeros((4, 3)))

    def test_n_keypoints_property(self):
        assert DisplacementField(np.zeros((GRID, GRID, 12))).n_keypoints == 6
        assert KeypointPredictions(np.zeros((6, CELLS, 2))).n_keypoints == 6


class TestErrorStatistic:
    def test_exact_predictions_score_zero(self, rng):
        kps = rng.uniform(0, 224, size=(5, 2))
        assert keypoint_error(decode(encode(kps)), kps) == 0.0

    def test_uniform_three_four_offset_scores_five(self):
        kps = np.array([[100.0, 100.0]])
        est = np.broadcast_to(kps + [3.0, 4.0], (1, CELLS, 2))
        assert keypoint_error(KeypointPredictions(est.copy()), kps) == pytest.approx(5.0)

    def test_matches_double_loop_oracle(self, rng):
        for _ in range(10):
            n = int(rng.integers(1, 6))
            est = rng.uniform(-50, 274, size=(n, CELLS, 2))
            gt = rng.uniform(0, 224, size=(n, 2))
            total = 0.0
            for i in range(n):
                for j in range(CELLS):
                    total += np.hypot(est[i, j, 0] - gt[i, 0], est[i, j, 1] - gt[i, 1])
            expect = total / (n * CELLS)
            assert keypoint_error(KeypointPredictions(est), gt) == pytest.approx(expect, abs=1e-9)

    def test_ground_truth_shape_checked(self):
        pred = KeypointPredictions(np.zeros((3, CELLS, 2)))
        with pytest.raises(ValueError):
            keypoint_error(pred, np.zeros((4, 2)))


class TestFieldFiles:
    def test_round_trip(self, rng, tmp_path):
        grid = rng.normal(size=(GRID, GRID, 8))
        path = tmp_path / "field.bin"
        save_field(DisplacementField(grid), path)
        np.testing.assert_array_equal(load_field(path).grid, grid)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + bytes(200))
        with pytest.raises(ValueError):
            load_field(path)

    def test_truncated_payload_rejected(self, rng, tmp_path):
        path = tmp_path / "field.bin"
        save_field(DisplacementField(rng.normal(size=(GRID, GRID, 4))), path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])
        with pytest.raises(ValueError):
            load_field(path)

    def test_short_file_rejected(self, tmp_path):
        path = tmp_path / "tiny.bin"
        path.write_bytes(b"DF")
        with pytest.raises(ValueError):
            load_field(path)
