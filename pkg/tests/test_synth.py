import json

import numpy as np
import pytest

from motionpred.detector import NoiseSpec
from motionpred.geometry import RansacConfig, ransac_homography
from motionpred.synth import (CameraSpec, CorrespondenceSpec, ObjectSpec, ScenarioSpec, SpecError,
                              generate, load_spec, read_sequence, spec_from_dict, write_scenario)


def test_static_scene_is_constant():
    sc = generate(ScenarioSpec(length=12, detection=NoiseSpec(sigma_pos=0, sigma_size=0),
                               correspondence=CorrespondenceSpec(count=20)))
    boxes = {(g.box.x, g.box.y, g.box.w, g.box.h) for g in sc.ground_truth}
    assert len(boxes) == 1
    for f in sc.frames:
        np.testing.assert_allclose(f.true_homography.m, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(f.pairs.src, f.pairs.dst, atol=1e-9)
    assert {(d.x, d.y) for _, d in sc.detections} == {(320.0, 240.0)}


def test_pan_moves_static_object_backwards():
    sc = generate(ScenarioSpec(length=15, camera=CameraSpec(kind="pan", pan=(2.0, 0.0))))
    xs = np.array([g.box.x for g in sc.ground_truth])
    np.testing.assert_allclose(np.diff(xs), -2.0, atol=1e-9)
    np.testing.assert_allclose([g.vx for g in sc.ground_truth[1:]], -2.0, atol=1e-9)


def test_shake_amplitude_recovered_by_refit():
    spec = ScenarioSpec(length=40, camera=CameraSpec(kind="shake", amplitude=8.0, period=20.0),
                        correspondence=CorrespondenceSpec(count=100, noise=0.5, outlier_fraction=0.2),
                        ref_interval=1000)
    sc = generate(spec)
    tx = []
    for f in sc.frames:
        rep = ransac_homography(f.pairs, RansacConfig(), np.random.default_rng(f.frame_id))
        tx.append(rep.homography.m[0, 2])
    # reference is frame 0 throughout, so the refit x-translation is -8 sin(2 pi t / 20)
    amp = 0.5 * (max(tx) - min(tx))
    assert abs(amp - 8.0) < 0.05 * 8.0


def test_clean_correspondences_recover_true_homography():
    spec = ScenarioSpec(length=30, camera=CameraSpec(kind="composite", pan=(1.0, -0.5),
                                                     amplitude=5.0, rotation=0.02),
                        correspondence=CorrespondenceSpec(count=40))
    for f in generate(spec).frames:
        rep = ransac_homography(f.pairs, RansacConfig(), np.random.default_rng(0))
        assert np.max(np.abs(rep.homography.m - f.true_homography.m)) < 1e-6


def test_determinism():
    spec = ScenarioSpec(length=25, camera=CameraSpec(kind="shake", amplitude=3),
                        correspondence=CorrespondenceSpec(count=30, noise=1.0, outlier_fraction=0.3),
                        seed=11)
    a, b = generate(spec), generate(spec)
    for fa, fb in zip(a.frames, b.frames):
        np.testing.assert_array_equal(fa.pairs.dst, fb.pairs.dst)
    assert a.detections == b.detections
    assert a.ground_truth == b.ground_truth


def test_occlusion_windows_have_no_detections():
    sc = generate(ScenarioSpec(length=30, occlusions=((10, 15), (20, 22))))
    frames = {t for t, _ in sc.detections}
    assert frames == set(range(30)) - set(range(10, 15)) - set(range(20, 22))


def test_reference_schedule():
    sc = generate(ScenarioSpec(length=25, ref_interval=10))
    assert [f.ref_frame for f in sc.frames[:12]] == [0] * 11 + [10]
    assert sc.frames[21].ref_frame == 20


def test_object_motion_models():
    pw = ObjectSpec(kind="piecewise", start=(0, 0), segments=((0, 1, 0), (5, 0, 2)))
    assert pw.position(8) == (5.0, 6.0)
    acc = ObjectSpec(kind="accelerating", start=(0, 0), velocity=(1, 0), acceleration=(2, 0))
    assert acc.position(3) == (12.0, 0.0)


@pytest.mark.parametrize("data, path", [
    ({"length": 0}, "length"),
    ({"camera": {"kind": "dolly"}}, "camera.kind"),
    ({"camera": {"amplitude": "big"}}, "camera.amplitude"),
    ({"object": {"size": [3]}}, "object.size"),
    ({"occlusions": [[5, 200]], "length": 100}, "occlusions[0]"),
    ({"correspondence": {"outlier_fraction": 1.0}}, "correspondence.outlier_fraction"),
    ({"detection": {"occlusion_policy": "hide"}}, "detection"),
    ({"colour": "red"}, "colour"),
])
def test_validation_reports_field_path(data, path):
    with pytest.raises(SpecError) as exc:
        spec_from_dict(data)
    assert exc.value.path == path


def test_write_and_read_back(tmp_path):
    spec = ScenarioSpec(length=20, camera=CameraSpec(kind="pan", pan=(1, 1)), occlusions=((5, 8),),
                        correspondence=CorrespondenceSpec(count=10, noise=0.3))
    sc = generate(spec)
    paths = write_scenario(sc, tmp_path)
    assert [p.name for p in paths] == ["correspondences.jsonl", "detections.jsonl",
                                       "ground_truth.jsonl", "manifest.json"]
    first = json.loads(paths[0].read_text().splitlines()[0])
    assert set(first) == {"frame", "ref_frame", "pairs"} and len(first["pairs"][0]) == 4
    gt_line = json.loads(paths[2].read_text().splitlines()[3])
    assert set(gt_line) == {"frame", "x", "y", "w", "h", "vx", "vy"}
    frames, provider, gts = read_sequence(tmp_path)
    assert len(frames) == 20 and len(gts) == 20 and provider.n_frames == 20
    np.testing.assert_array_equal(frames[7].pairs.dst, sc.frames[7].pairs.dst)
    assert provider.records(6) == []
    # the embedded spec reproduces the sequence
    again = spec_from_dict(json.loads(paths[3].read_text())["spec"])
    assert again == spec


def test_load_spec_rejects_bad_json(tmp_path):
    p = tmp_path / "s.json"
    p.write_text("{not json")
    with pytest.raises(SpecError):
        load_spec(p)
