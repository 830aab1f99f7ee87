import math

import numpy as np
import pytest

from memory.models import AttentionState, Frame
from services.errors import StreamError
from services.scenes import (
    PRESETS,
    ObjectSpec,
    SceneSpec,
    brightness,
    generate_stream,
    lap_schedule,
    object_pose,
    plan_supervisions,
    preset,
    spin_rate,
)


def _still(bundle, x, y):
    return [AttentionState(position=(x, y), velocity=(0.0, 0.0), saccade=False)
            for _ in range(len(bundle))]


class TestGenerateStream:
    def test_empty_2_has_two_objects(self, tiny_stream):
        man = tiny_stream.manifest
        assert man.object_count == 2
        assert man.m == 3
        assert man.channels == 3
        assert len(tiny_stream) == man.frame_count == 2 * 4 * 12

    def test_deterministic_in_seed(self):
        scene = preset("empty-2", laps=2, size=24, lap_frames=8)
        a, b = generate_stream(scene, 3), generate_stream(scene, 3)
        np.testing.assert_array_equal(a.frames, b.frames)
        np.testing.assert_array_equal(a.flows, b.flows)
        np.testing.assert_array_equal(a.masks, b.masks)

    def test_flow_zero_outside_objects(self, tiny_stream):
        outside = tiny_stream.masks == 0
        assert np.all(tiny_stream.flows[outside] == 0.0)

    def test_object_pixels_move(self, tiny_stream):
        mag = np.hypot(tiny_stream.flows[..., 0], tiny_stream.flows[..., 1])
        moving = mag[tiny_stream.masks > 0] > 0.1
        assert moving.mean() > 0.9

    def test_translation_flow_is_pose_velocity(self):
        obj = ObjectSpec(shape="circle", class_id=1, size=3.0, center=(16.5, 16.5),
                         radius=(5.0, 3.0), lap_frames=10)
        scene = SceneSpec(width=32, height=32, objects=[obj], laps_total=1, class_names=["unknown", "disc"])
        bundle = generate_stream(scene, seed=0)
        for k in range(obj.lap_frames):
            inside = bundle.masks[k] == 1
            vx, vy = object_pose(obj, k).velocity
            np.testing.assert_allclose(bundle.flows[k][inside][:, 0], vx, rtol=1e-6, atol=1e-6)
            np.testing.assert_allclose(bundle.flows[k][inside][:, 1], vy, rtol=1e-6, atol=1e-6)

    def test_rotation_flow_matches_pose_difference(self):
        omega = spin_rate(1, 40)
        obj = ObjectSpec(shape="rectangle", class_id=1, size=4.0, path="static", center=(16.5, 16.5),
                         rotation_rate=omega, lap_frames=40)
        scene = SceneSpec(width=32, height=32, objects=[obj], laps_total=1, class_names=["unknown", "box"])
        bundle = generate_stream(scene, seed=5)
        ys, xs = np.nonzero(bundle.masks[0] == 1)
        rx, ry = xs + 1 - 16.5, ys + 1 - 16.5
        # where the same body point sits one frame later
        dx = math.cos(omega) * rx - math.sin(omega) * ry - rx
        dy = math.sin(omega) * rx + math.cos(omega) * ry - ry
        flow = bundle.flows[0][ys, xs]
        assert np.max(np.hypot(flow[:, 0] - dx, flow[:, 1] - dy)) < 0.5
        np.testing.assert_allclose(flow[:, 0], -omega * ry, atol=1e-5)
        np.testing.assert_allclose(flow[:, 1], omega * rx, atol=1e-5)

    def test_laps_are_periodic(self, tiny_stream):
        first, second = tiny_stream.manifest.laps_of(0)[:2]
        np.testing.assert_array_equal(
            tiny_stream.frames[first.start:first.end + 1],
            tiny_stream.frames[second.start:second.end + 1],
        )

    def test_only_active_object_is_drawn(self, tiny_stream):
        man = tiny_stream.manifest
        for span in man.laps[:4]:
            cls = man.object_classes[span.obj]
            present = set(np.unique(tiny_stream.masks[span.start:span.end + 1]).tolist())
            assert present <= {0, cls}
            assert cls in present

    def test_static_preset_has_zero_flow(self):
        bundle = generate_stream(preset("static-1", laps=1, size=24, lap_frames=4), seed=0)
        assert not bundle.flows.any()

    def test_solid_preset_is_black_and_white(self):
        bundle = generate_stream(preset("solid-3", laps=1, size=32, lap_frames=4), seed=0)
        assert bundle.manifest.channels == 1
        assert bundle.frames.shape[-1] == 1

    def test_object_leaving_frame_raises(self):
        obj = ObjectSpec(shape="circle", class_id=1, size=6.0, center=(10.0, 10.0),
                         radius=(8.0, 8.0), lap_frames=8)
        scene = SceneSpec(width=20, height=20, objects=[obj], laps_total=1,
                         class_names=["unknown", "disc"])
        with pytest.raises(StreamError) as err:
            generate_stream(scene, seed=0)
        assert err.value.obj == 0

    def test_rotation_must_close_the_lap(self):
        obj = ObjectSpec(shape="rectangle", class_id=1, size=3.0, rotation_rate=0.3, lap_frames=8)
        scene = SceneSpec(objects=[obj], laps_total=1, class_names=["unknown", "box"])
        with pytest.raises(StreamError):
            generate_stream(scene, seed=0)

    def test_unknown_preset(self):
        with pytest.raises(StreamError):
            preset("nebula-9")

    @pytest.mark.parametrize("name", PRESETS)
    def test_every_preset_renders(self, name):
        bundle = generate_stream(preset(name, laps=1, size=32, lap_frames=6), seed=1)
        assert len(bundle) == 6 * bundle.manifest.object_count


class TestPoses:
    def test_lap_returns_to_start(self):
        obj = ObjectSpec(shape="triangle", class_id=1, size=3.0, rotation_rate=spin_rate(2, 10), lap_frames=10)
        start, end = object_pose(obj, 0, 0.4), object_pose(obj, 10, 0.4)
        assert start.center == pytest.approx(end.center)
        assert math.cos(start.angle) == pytest.approx(math.cos(end.angle))

    def test_lap_schedule_rounds(self):
        objs = [ObjectSpec(shape="circle", class_id=1, size=2.0, lap_frames=3),
                ObjectSpec(shape="circle", class_id=1, size=2.0, lap_frames=5)]
        spans = lap_schedule(SceneSpec(objects=objs, laps_total=2, class_names=["unknown", "a"]))
        assert [(s.obj, s.start, s.end) for s in spans] == [(0, 0, 2), (1, 3, 7), (0, 8, 10), (1, 11, 15)]


class TestBrightness:
    def test_rgb_luminance(self):
        px = np.zeros((2, 2, 3))
        px[..., 1] = 1.0
        np.testing.assert_allclose(brightness(Frame(pixels=px, index=0)), 0.587)

    def test_gray_identity(self):
        px = np.linspace(0, 1, 4).reshape(2, 2, 1)
        np.testing.assert_array_equal(brightness(Frame(pixels=px, index=0)), px[..., 0])


class TestPlanSupervisions:
    def test_attention_on_object_gives_supervision(self, tiny_stream):
        man = tiny_stream.manifest
        span = man.laps_of(0)[1]
        ys, xs = np.nonzero(tiny_stream.masks[span.start] == man.object_classes[0])
        traj = _still(tiny_stream, float(xs[0] + 1), float(ys[0] + 1))
        plan = plan_supervisions(tiny_stream, traj, 2, 2, per_object=1, min_spacing=0)
        first = [e for e in plan.events if e.class_id == man.object_classes[0]]
        assert first[0].t == span.start
        assert first[0].index == int(ys[0]) * man.width + int(xs[0])

    def test_centroid_fallback_when_attention_never_lands(self, tiny_stream):
        traj = _still(tiny_stream, 1.0, 1.0)
        plan = plan_supervisions(tiny_stream, traj, 1, 2, per_object=1, min_spacing=0)
        assert len(plan.events) == 2
        assert {f["object"] for f in plan.fallbacks} == {0, 1}
        for e in plan.events:
            x, y = e.coords(tiny_stream.manifest.width)
            assert tiny_stream.mask(e.t)[y - 1, x - 1] == e.class_id

    def test_min_spacing_is_respected(self, tiny_stream):
        traj = _still(tiny_stream, 1.0, 1.0)
        plan = plan_supervisions(tiny_stream, traj, 1, 4, per_object=3, min_spacing=12)
        for obj_cls in tiny_stream.manifest.object_classes:
            ts = [e.t for e in plan.events if e.class_id == obj_cls]
            assert len(ts) == 3
            assert all(b - a >= 12 for a, b in zip(ts, ts[1:]))

    def test_events_fall_inside_the_lap_window(self, tiny_stream):
        traj = _still(tiny_stream, 12.0, 12.0)
        plan = plan_supervisions(tiny_stream, traj, 3, 4, per_object=2, min_spacing=1)
        window = set(tiny_stream.manifest.frames_of_laps(3, 4))
        assert all(e.t in window for e in plan.events)
