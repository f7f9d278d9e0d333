import math

import numpy as np
import pytest

from stereovol.errors import DomainError
from stereovol.geom import Box3D, CameraModel, StereoRig, make_rig, project_box, project_points
from stereovol.kitti_io import synth_scene
from stereovol.slcp import (
    ObjectBank,
    Scene,
    build_bank,
    hflip,
    paste,
    sample_objects,
    warp_patch,
)


@pytest.fixture(scope="module")
def scenes():
    return [synth_scene(s) for s in range(4)]


@pytest.fixture(scope="module")
def bank(scenes):
    return build_bank(scenes)


def _empty_scene(rig, boxes=(), points=None):
    rows, cols = rig.image_size
    img = np.full((rows, cols, 3), 0.5, np.float32)
    pts = np.zeros((0, 4)) if points is None else points
    return Scene(img, img, pts, rig, boxes)


def test_build_bank_visibility_filter():
    rig = make_rig(720.0, 621.0, 187.0, 0.5, 1242, 375)
    boxes = (Box3D((0, 1, 15), (3.9, 1.6, 1.5)), Box3D((4, 1, 20), (3.9, 1.6, 1.5)),
             Box3D((14, 1, 12), (3.9, 1.6, 1.5)))
    bank = build_bank([_empty_scene(rig, boxes)])
    assert len(bank.samples["Car"]) == 2 and bank.skipped == 1
    assert len(build_bank([])) == 0


def test_build_bank_classes_and_points(scenes, bank):
    assert set(bank.samples) == {"Car", "Pedestrian", "Cyclist"}
    for s in bank.samples["Car"]:
        assert len(s.object_points) > 0
        assert s.box.contains(s.object_points[:, :3], eps=1e-6).all()
        assert all(p.size > 0 for p in s.patches)


def test_sample_objects(bank):
    out = sample_objects(bank, seed=3)
    assert len(out) == 15
    assert [s.box.class_id for s in out] == ["Car"] * 5 + ["Pedestrian"] * 5 + ["Cyclist"] * 5
    assert len({id(s) for s in out}) == 15
    small = ObjectBank({"Car": bank.samples["Car"][:3]})
    assert len(sample_objects(small, {"Car": 5})) == 3
    again = sample_objects(bank, seed=3)
    assert [id(s) for s in out] == [id(s) for s in again]


def test_paste_identity_calibration_restores_patch(scenes, bank):
    sample = bank.samples["Car"][0]
    target = _empty_scene(sample.source_rig)
    res = paste(target, [sample], seed=0, apply_prob=1.0)
    assert len(res.accepted) == 1
    src = scenes[sample.source[0]]
    for view, img in enumerate((res.scene.left_image, res.scene.right_image)):
        bb = res.target_boxes[0][view]
        np.testing.assert_allclose(bb, sample.patch_boxes[view])
        r0, r1 = math.ceil(bb[1]), math.floor(bb[3]) + 1
        c0, c1 = math.ceil(bb[0]), math.floor(bb[2]) + 1
        srcimg = src.left_image if view == 0 else src.right_image
        np.testing.assert_allclose(img[r0:r1, c0:c1], srcimg[r0:r1, c0:c1], atol=1e-5)


def test_paste_subpixel_alignment(bank):
    sample = bank.samples["Car"][0]
    rig = make_rig(720.0, 600.0, 180.0, 0.5, 1242, 375)
    res = paste(_empty_scene(rig), [sample], seed=0, apply_prob=1.0)
    for box in res.scene.boxes:
        ul, _ = project_points(rig.left, box.corners())
        ur, _ = project_points(rig.right_camera(), box.corners())
        z = box.corners()[:, 2]
        np.testing.assert_allclose(ul[:, 0] - ur[:, 0], 360.0 / z, atol=1e-6, rtol=0)
        np.testing.assert_allclose(ul[:, 1] - ur[:, 1], 0.0, atol=1e-6)


def test_paste_removes_occluded_points(bank):
    sample = bank.samples["Car"][0]
    rig = sample.source_rig
    pb = project_box(rig.left, sample.box)
    u = (pb.bbox[0] + pb.bbox[2]) / 2
    v = (pb.bbox[1] + pb.bbox[3]) / 2
    behind = np.array([[(u - rig.left.c_u) * 80 / 720, (v - rig.left.c_v) * 80 / 720, 80.0, 0.1],
                       [0.0, -30.0, 80.0, 0.1]])
    res = paste(_empty_scene(rig, points=behind), [sample], seed=0, apply_prob=1.0)
    kept = {tuple(p) for p in res.scene.points}
    assert tuple(behind[0]) not in kept
    assert tuple(behind[1]) in kept
    assert len(res.scene.points) == 1 + len(sample.object_points)


def test_paste_rejects_overlap_and_counts(bank):
    sample = bank.samples["Car"][0]
    rig = sample.source_rig
    target = _empty_scene(rig, boxes=(sample.box,))
    res = paste(target, [sample], seed=0, apply_prob=1.0)
    assert res.applied and not res.accepted
    assert res.rejected[0][1] == "overlap"
    assert len(res.scene.boxes) == 1


def test_paste_probability_zero_is_identity(scenes, bank):
    res = paste(scenes[0], sample_objects(bank, seed=1), seed=5, apply_prob=0.0)
    assert not res.applied and res.scene is scenes[0]
    with pytest.raises(DomainError):
        paste(scenes[0], [], apply_prob=1.5)


def test_paste_label_consistency_and_no_overlap(scenes, bank):
    samples = sample_objects(bank, seed=2)
    res = paste(scenes[1], samples, seed=0, apply_prob=1.0)
    assert len(res.scene.boxes) == len(scenes[1].boxes) + len(res.accepted)
    assert len(res.accepted) + len(res.rejected) == len(samples)
    from stereovol.analytics import bev_intersection

    boxes = res.scene.boxes
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            assert bev_intersection(boxes[i], boxes[j]) == 0.0


def test_paste_far_to_near_and_uni_peak(scenes, bank):
    samples = sample_objects(bank, seed=7)
    res = paste(scenes[2], samples, seed=0, apply_prob=1.0)
    depths = [s.box.center[2] for s in res.accepted]
    assert depths == sorted(depths, reverse=True)
    # Any point inside a pasted target box belongs to the nearest pasted object covering it.
    cams = res.scene.rig.cameras()
    for view, cam in enumerate(cams):
        uv, z = project_points(cam, res.scene.points[:, :3])
        for k in range(len(res.accepted)):
            bb = res.target_boxes[k][view]
            inside = (z > 0) & (uv[:, 0] >= bb[0]) & (uv[:, 0] <= bb[2]) & (uv[:, 1] >= bb[1]) & (uv[:, 1] <= bb[3])
            for idx in np.nonzero(inside)[0]:
                owners = [j for j in range(k, len(res.accepted))
                          if res.accepted[j].box.contains(res.scene.points[idx, :3], eps=1e-6)[0]]
                assert owners, "background point survived inside a pasted box"


def test_paste_deterministic(scenes, bank):
    a = paste(scenes[3], sample_objects(bank, seed=4), seed=9, apply_prob=0.6)
    b = paste(scenes[3], sample_objects(bank, seed=4), seed=9, apply_prob=0.6)
    assert a.applied == b.applied and a.scene.same_as(b.scene)


def test_warp_patch_scales():
    img = np.zeros((10, 10, 1), np.float32)
    patch = np.arange(3, dtype=np.float32).reshape(1, 3, 1).repeat(2, axis=0)
    warp_patch(img, patch, (0, 0), (0, 0, 2, 1), (2, 2, 6, 3), (2, 2, 6, 3))
    np.testing.assert_allclose(img[2, 2:7, 0], [0, 0.5, 1, 1.5, 2])


def test_hflip_involution_and_epipolar(scenes):
    for s in scenes:
        f = hflip(s)
        assert hflip(f).same_as(s)
        assert f.rig.left.c_u == (s.rig.image_size[1] - 1) - s.rig.right.c_u
        for box in f.boxes:
            c = box.corners()
            ul, zl = project_points(f.rig.left, c)
            ur, _ = project_points(f.rig.right_camera(), c)
            np.testing.assert_allclose(ul[:, 0] - ur[:, 0], 360.0 / zl, rtol=1e-9)
            np.testing.assert_array_equal(ul[:, 1], ur[:, 1])


def test_hflip_box_mirror():
    rig = make_rig(720.0, 621.0, 187.0, 0.5, 1242, 375)
    f = hflip(_empty_scene(rig, (Box3D((2, 1, 15), (3.9, 1.6, 1.5), 0.25),)))
    assert f.boxes[0].center == (-2.0, 1.0, 15.0)
    assert f.boxes[0].yaw == pytest.approx(math.pi - 0.25)


def test_hflip_projection_mirrors_pixels(scenes):
    s = scenes[0]
    f = hflip(s)
    w = s.rig.image_size[1]
    pts = s.points[:, :3]
    ul, _ = project_points(s.rig.left, pts)
    ur_f, _ = project_points(f.rig.right_camera(), pts * [-1, 1, 1])
    np.testing.assert_allclose(ur_f[:, 0], (w - 1) - ul[:, 0], atol=1e-9)


def test_scene_validation():
    rig = make_rig(720.0, 621.0, 187.0, 0.5, 1242, 375)
    img = np.zeros((375, 1242, 3))
    with pytest.raises(DomainError):
        Scene(img, img[:, :-1], np.zeros((0, 4)), rig)
    with pytest.raises(DomainError):
        Scene(img[:-1], img[:-1], np.zeros((0, 4)), rig)
    with pytest.raises(DomainError):
        Scene(img, img, np.zeros((0, 4)), rig, (Box3D((0, 0, 5), (1, 1, 1)),), ((0.0, 0), (0.0, 0)))
