"""BVH parse/export, Euler conversions and joint renaming."""

import math
import random

import numpy as np
import pytest
from scipy.spatial.transform import Rotation as R

from midifusion import quat
from midifusion.bvh import (
    ChannelCountMismatch,
    DuplicateTargetName,
    FrameCountMismatch,
    MalformedHierarchy,
    export_bvh,
    map_joint_names,
    parse_bvh,
)
from midifusion.skeleton import (
    AnimationClip,
    Joint,
    PoseFrame,
    Skeleton,
    SkeletonMismatch,
    identity_pose,
)

MINIMAL = """HIERARCHY
ROOT Hips
{
  OFFSET 0.0 90.0 0.0
  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
  End Site
  {
    OFFSET 0.0 10.0 0.0
  }
}
MOTION
Frames: 1
Frame Time: 0.033333
1.0 2.0 3.0 0.0 0.0 0.0
"""


class TestEulerQuat:
    def test_zxy_single_z(self):
        q = quat.from_euler("zxy", (90.0, 0.0, 0.0))
        assert q[0] == pytest.approx(math.cos(math.pi / 4), abs=1e-9)
        assert q[3] == pytest.approx(math.sin(math.pi / 4), abs=1e-9)

    def test_matches_scipy_all_orders(self):
        rng = random.Random(9)
        for order in ("xyz", "zxy", "zyx", "yxz", "xzy", "yzx"):
            for _ in range(25):
                angles = [rng.uniform(-179, 179) for _ in range(3)]
                mine = quat.from_euler(order, angles)
                ref = R.from_euler(order.upper(), angles, degrees=True).as_quat()
                ref_wxyz = np.array([ref[3], ref[0], ref[1], ref[2]])
                # acos near 1 cannot resolve angles much below ~3e-8
                assert quat.angle_between(mine, ref_wxyz) < 1e-6

    def test_zxy_roundtrip_off_lock(self):
        rng = random.Random(10)
        for _ in range(200):
            angles = (rng.uniform(-179, 179), rng.uniform(-80, 80), rng.uniform(-179, 179))
            q = quat.from_euler("zxy", angles)
            back = quat.from_euler("zxy", quat.to_euler_zxy(q))
            assert quat.angle_between(q, back) < 1e-4

    def test_gimbal_zeroes_dependent_axis(self):
        q = quat.from_euler("zxy", (30.0, 90.0, 20.0))
        z, x, y = quat.to_euler_zxy(q)
        assert y == 0.0
        assert abs(x) == pytest.approx(90.0, abs=1e-4)
        back = quat.from_euler("zxy", (z, x, y))
        assert quat.angle_between(q, back) < 1e-6

    def test_identity_formats_as_zeros(self):
        z, x, y = quat.to_euler_zxy(quat.identity())
        assert f"{z:.6f} {x:.6f} {y:.6f}" == "0.000000 0.000000 0.000000"


class TestParse:
    def test_minimal(self):
        skeleton, clip = parse_bvh(MINIMAL)
        assert skeleton.names == ["Hips"]
        assert skeleton.joints[0].rest_offset[1] == pytest.approx(0.9)
        assert clip.frame_rate == 30.0
        assert len(clip.frames) == 1
        frame = clip.frames[0]
        assert np.allclose(frame.rotations[0], quat.identity())
        assert np.allclose(frame.root_translation, [0.01, 0.02, 0.03])

    def test_zxy_90_z(self):
        text = MINIMAL.replace("1.0 2.0 3.0 0.0 0.0 0.0", "0 0 0 90.0 0.0 0.0")
        _, clip = parse_bvh(text)
        q = clip.frames[0].rotations[0]
        assert q[0] == pytest.approx(math.cos(math.pi / 4), abs=1e-6)
        assert q[3] == pytest.approx(math.sin(math.pi / 4), abs=1e-6)

    def test_channel_order_honored(self):
        text = MINIMAL.replace(
            "CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation",
            "CHANNELS 6 Xposition Yposition Zposition Xrotation Yrotation Zrotation",
        ).replace("1.0 2.0 3.0 0.0 0.0 0.0", "0 0 0 10.0 20.0 30.0")
        _, clip = parse_bvh(text)
        expected = quat.from_euler("xyz", (10.0, 20.0, 30.0))
        assert quat.angle_between(clip.frames[0].rotations[0], expected) < 1e-9

    def test_missing_hierarchy(self):
        with pytest.raises(MalformedHierarchy):
            parse_bvh("MOTION\n")

    def test_channel_count_mismatch(self):
        bad = MINIMAL.replace("CHANNELS 6", "CHANNELS 5")
        with pytest.raises(ChannelCountMismatch):
            parse_bvh(bad)

    def test_frame_count_mismatch(self):
        bad = MINIMAL.replace("Frames: 1", "Frames: 2")
        with pytest.raises(FrameCountMismatch):
            parse_bvh(bad)

    def test_frame_value_count_mismatch(self):
        bad = MINIMAL.replace("1.0 2.0 3.0 0.0 0.0 0.0", "1.0 2.0 3.0 0.0 0.0")
        with pytest.raises(FrameCountMismatch):
            parse_bvh(bad)

    def test_frame_rate_snapped(self):
        # 1/0.033333 = 30.00003; integer rates survive the 6-decimal field
        _, clip = parse_bvh(MINIMAL)
        assert clip.frame_rate == 30.0


def _random_skeleton(rng, n_joints):
    """Random tree in preorder, the only joint order BVH text can carry."""
    joints = [Joint("j0", -1, quat.identity(), np.array([0.0, 1.0, 0.0]))]
    path = [0]
    for i in range(1, n_joints):
        path = path[: rng.randrange(len(path)) + 1]
        offset = np.array([rng.uniform(-0.5, 0.5) for _ in range(3)])
        joints.append(Joint(f"j{i}", path[-1], quat.identity(), offset))
        path.append(i)
    return Skeleton(joints)


def _random_clip(rng, skeleton, frames, rate):
    out = []
    for _ in range(frames):
        pose = identity_pose(skeleton.joint_count)
        for j in range(skeleton.joint_count):
            # stay clear of the ZXY gimbal band (|x| < 80 deg)
            angles = (rng.uniform(-179, 179), rng.uniform(-80, 80), rng.uniform(-179, 179))
            pose.rotations[j] = quat.from_euler("zxy", angles)
        pose.root_translation = np.array([rng.uniform(-2, 2) for _ in range(3)])
        out.append(pose)
    return AnimationClip(frames=out, frame_rate=rate)


class TestExport:
    def test_identity_all_zero_rotations(self, humanoid):
        clip = AnimationClip([identity_pose(humanoid.joint_count)], 30.0)
        text = export_bvh(humanoid, clip)
        motion = text.split("MOTION\n", 1)[1].splitlines()
        values = motion[2].split()
        assert all(v == "0.000000" for v in values[3:])

    def test_frame_time_fixed_decimals(self, humanoid):
        clip = AnimationClip([identity_pose(humanoid.joint_count)], 30.0)
        assert "Frame Time: 0.033333" in export_bvh(humanoid, clip)

    def test_structure_reparses(self, humanoid):
        clip = AnimationClip([identity_pose(humanoid.joint_count)] * 3, 24.0)
        skeleton2, clip2 = parse_bvh(export_bvh(humanoid, clip))
        assert skeleton2.names == humanoid.names
        assert [j.parent for j in skeleton2.joints] == [j.parent for j in humanoid.joints]
        assert len(clip2.frames) == 3
        assert clip2.frame_rate == 24.0

    def test_skeleton_mismatch(self, humanoid):
        clip = AnimationClip([identity_pose(3)], 30.0)
        with pytest.raises(SkeletonMismatch):
            export_bvh(humanoid, clip)

    def test_roundtrip_random_clips(self):
        rng = random.Random(42)
        for _ in range(30):
            skeleton = _random_skeleton(rng, rng.randrange(2, 7))
            clip = _random_clip(rng, skeleton, rng.randrange(1, 6), float(rng.choice([24, 30, 60])))
            skeleton2, clip2 = parse_bvh(export_bvh(skeleton, clip))
            assert skeleton2.names == skeleton.names
            assert [j.parent for j in skeleton2.joints] == [j.parent for j in skeleton.joints]
            assert clip2.frame_rate == clip.frame_rate
            assert len(clip2.frames) == len(clip.frames)
            for f1, f2 in zip(clip.frames, clip2.frames):
                for j in range(skeleton.joint_count):
                    assert quat.angle_between(f1.rotations[j], f2.rotations[j]) < 1e-4
                assert np.allclose(f1.root_translation, f2.root_translation, atol=1e-6)
                off1 = [j.rest_offset for j in skeleton.joints]
                off2 = [j.rest_offset for j in skeleton2.joints]
                assert np.allclose(off1, off2, atol=1e-7)


class TestMapJointNames:
    def test_empty_map(self, humanoid):
        out = map_joint_names(humanoid, {})
        assert out.names == humanoid.names

    def test_single_rename(self, humanoid):
        out = map_joint_names(humanoid, {"Hips": "hips_jnt"})
        assert out.names[0] == "hips_jnt"
        assert out.names[1:] == humanoid.names[1:]

    def test_duplicate_target(self, humanoid):
        with pytest.raises(DuplicateTargetName):
            map_joint_names(humanoid, {"LeftHand": "hand", "RightHand": "hand"})

    def test_structure_untouched(self, humanoid):
        out = map_joint_names(humanoid, {"Head": "Skull"})
        assert [j.parent for j in out.joints] == [j.parent for j in humanoid.joints]
