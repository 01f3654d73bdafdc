import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ctxprop.dataset import (
    LabelRecord,
    SceneRecord,
    SplitSpec,
    SynthSpec,
    generate_synthetic,
    load_dataset,
    parse_calibration,
    parse_detection_file,
    parse_label_file,
    serialize_calibration,
    serialize_labels,
    split_dataset,
    write_dataset,
)
from ctxprop.errors import MalformedLine, MalformedMatrix, MissingMatrix
from ctxprop.geometry import Box2D, Box3D, project_box

LINE = "Car 0.12 1 -1.57 100.5 150.25 200.75 250.0 1.5 1.6 3.9 2.5 1.65 20.0 -1.45"


class TestLabels:
    def test_fields_echoed(self):
        (r,) = parse_label_file(LINE)
        assert r.cls == "Car" and r.truncated == 0.12 and r.occluded == 1
        assert r.alpha == -1.57
        assert r.box2d == Box2D(100.5, 150.25, 200.75, 250.0)
        assert r.dims == (1.5, 1.6, 3.9) and r.location == (2.5, 1.65, 20.0)
        assert r.rotation_y == -1.45 and r.score is None
        assert r.box3d == Box3D(2.5, 20.0, 3.9, 1.6, 1.5, -1.45)

    def test_arity(self):
        with pytest.raises(MalformedLine) as e:
            parse_label_file(" ".join(LINE.split()[:14]))
        assert e.value.line_no == 1

    def test_bad_number_reports_field(self):
        parts = LINE.split()
        parts[9] = "wide"
        with pytest.raises(MalformedLine) as e:
            parse_label_file("\n" + " ".join(parts))
        assert (e.value.line_no, e.value.field_index) == (2, 9)

    def test_empty(self):
        assert parse_label_file("") == []

    def test_other_classes_kept(self):
        text = LINE + "\n" + LINE.replace("Car", "Pedestrian", 1)
        assert [r.cls for r in parse_label_file(text)] == ["Car", "Pedestrian"]

    def test_dontcare_has_no_box3d(self):
        (r,) = parse_label_file("DontCare -1 -1 -10 5 5 50 50 -1 -1 -1 -1000 -1000 -1000 -10")
        assert r.box3d is None

    def test_detections_need_score(self):
        with pytest.raises(MalformedLine):
            parse_detection_file(LINE)
        (d,) = parse_detection_file(LINE + " 0.83")
        assert d.score == 0.83 and d.viewpoint_alpha == -1.57

    @given(
        st.floats(-math.pi, math.pi),
        st.floats(0, 500),
        st.floats(0, 200),
        st.floats(1, 100),
        st.floats(1, 100),
        st.floats(-20, 20),
        st.floats(2, 60),
        st.floats(-math.pi, math.pi),
    )
    def test_serialize_parse_identity(self, alpha, x1, y1, w, h, x, z, ry):
        rec = LabelRecord("Car", 0.0, 0, alpha, Box2D(x1, y1, x1 + w, y1 + h), (1.5, 1.6, 3.9), (x, 1.65, z), ry)
        (back,) = parse_label_file(serialize_labels([rec]))
        assert back.alpha == pytest.approx(alpha, abs=1e-6)
        assert back.box2d.as_tuple() == pytest.approx(rec.box2d.as_tuple(), abs=1e-6)
        assert back.location == pytest.approx(rec.location, abs=1e-6)
        assert back.rotation_y == pytest.approx(ry, abs=1e-6)


class TestCalibration:
    def test_layout(self):
        cam = parse_calibration("P0: 0 0 0 0 0 0 0 0 0 0 0 0\nP2: " + " ".join(str(i) for i in range(1, 13)))
        assert cam.matrix.tolist() == [[1, 2, 3, 4], [5, 6, 7, 8], [9, 10, 11, 12]]

    def test_missing(self):
        with pytest.raises(MissingMatrix):
            parse_calibration("P0: 1 2 3 4 5 6 7 8 9 10 11 12\n")

    def test_short(self):
        with pytest.raises(MalformedMatrix):
            parse_calibration("P2: " + " ".join(["1"] * 11))

    def test_roundtrip(self, camera):
        assert parse_calibration(serialize_calibration(camera), image_size=(1242, 375)) == camera


def _rec(i, n, ts=None):
    b = Box3D(0.0, 10.0, 3.9, 1.6, 1.5)
    return SceneRecord(f"{i:03d}", None, [(Box2D(0, 0, 1, 1), b)] * n, timestamp=ts)


class TestSplit:
    def test_half(self):
        train, test = split_dataset([_rec(i, 2) for i in range(10)])
        assert len(train) == len(test) == 5
        assert {r.image_id for r in train}.isdisjoint(r.image_id for r in test)

    def test_sparse_images_excluded(self):
        train, test = split_dataset([_rec(0, 1), _rec(1, 2), _rec(2, 3)])
        assert "000" not in {r.image_id for r in train + test}

    def test_timestamp_order(self):
        recs = [_rec(i, 2, ts=10 - i) for i in range(4)]
        train, _ = split_dataset(recs)
        assert [r.image_id for r in train] == ["003", "002"]
        train, _ = split_dataset(recs, SplitSpec("image_id"))
        assert [r.image_id for r in train] == ["000", "001"]

    @given(st.lists(st.integers(0, 4), max_size=30), st.floats(0.05, 0.95))
    def test_stable_and_disjoint(self, counts, frac):
        recs = [_rec(i, c) for i, c in enumerate(counts)]
        a = split_dataset(recs, SplitSpec(fraction=frac))
        b = split_dataset(list(reversed(recs)), SplitSpec(fraction=frac))
        assert [r.image_id for r in a[0]] == [r.image_id for r in b[0]]
        assert not {r.image_id for r in a[0]} & {r.image_id for r in a[1]}


class TestSynthetic:
    def test_counting(self):
        recs = generate_synthetic(SynthSpec(num_scenes=3, occupancy=1.0, slots_per_lane=3))
        assert all(len(r.annotations) == 6 for r in recs)

    def test_zero_noise_spacing(self):
        (rec,) = generate_synthetic(SynthSpec(num_scenes=1, occupancy=1.0, spacing_sd=0.0, lanes=1))
        zs = [b.z for b in rec.boxes3d]
        assert np.allclose(np.diff(zs), 8.0)

    def test_deterministic(self):
        assert generate_synthetic(SynthSpec(num_scenes=4, rng_seed=5)) == generate_synthetic(SynthSpec(num_scenes=4, rng_seed=5))

    def test_annotations_are_projections(self):
        for rec in generate_synthetic(SynthSpec(num_scenes=5, rng_seed=2)):
            for b2, b3 in rec.annotations:
                assert b2 == project_box(b3, rec.camera)

    def test_nearest_car_is_the_seed(self):
        for rec in generate_synthetic(SynthSpec(num_scenes=5, rng_seed=3)):
            (d,) = rec.detections
            nearest = min(rec.annotations, key=lambda a: (a[1].z, a[1].x))
            assert d.box == nearest[0]
            b = nearest[1]
            assert math.remainder(d.viewpoint_alpha + math.atan2(b.x, b.z) - b.theta, 2 * math.pi) == pytest.approx(0, abs=1e-12)

    def test_bad_spec(self):
        with pytest.raises(ValueError):
            SynthSpec(occupancy=1.5)


class TestFiles:
    def test_write_load_roundtrip(self, tmp_path):
        recs = generate_synthetic(SynthSpec(num_scenes=3, rng_seed=8))
        write_dataset(recs, tmp_path)
        back = load_dataset(tmp_path)
        assert [r.image_id for r in back] == [r.image_id for r in recs]
        for a, b in zip(recs, back):
            assert len(a.annotations) == len(b.annotations)
            for (a2, a3), (b2, b3) in zip(a.annotations, b.annotations):
                assert b2.as_tuple() == pytest.approx(a2.as_tuple(), abs=1e-6)
                assert (b3.x, b3.z, b3.theta) == pytest.approx((a3.x, a3.z, a3.theta), abs=1e-6)
            assert [d.score for d in b.detections] == [d.score for d in a.detections]

    def test_missing_labels(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path / "nope")
