# tests/test_camera.py

import numpy as np
import pytest

from src.geometry.camera import (
    Camera,
    Ray,
    look_at,
    project,
    project_points,
    ray_for_pixel,
    stratified_samples,
)


def identity_camera(**kw) -> Camera:
    return Camera(fx=50.0, fy=50.0, cx=16.0, cy=12.0, width=32, height=24, **kw)


def random_camera(rng: np.random.Generator) -> Camera:
    eye = rng.normal(size=3)
    eye = 3.0 * eye / np.linalg.norm(eye)
    return Camera(
        fx=rng.uniform(20, 80), fy=rng.uniform(20, 80), cx=rng.uniform(10, 22), cy=rng.uniform(8, 16),
        width=32, height=24, cam_to_world=look_at(eye, rng.normal(size=3) * 0.2), near=0.5, far=6.0,
    )


def test_optical_axis_of_identity_pose():
    cam = identity_camera()
    ray = ray_for_pixel(cam, cam.cx - 0.5, cam.cy - 0.5)
    np.testing.assert_allclose(ray.direction, [0.0, 0.0, -1.0], atol=1e-15)
    np.testing.assert_array_equal(ray.origin, [0.0, 0.0, 0.0])
    assert np.linalg.norm(ray_for_pixel(cam, 0, 23.7).direction) == pytest.approx(1.0, abs=1e-12)


def test_image_axes_point_right_and_down():
    cam = identity_camera()
    right = ray_for_pixel(cam, 31, cam.cy - 0.5).direction
    down = ray_for_pixel(cam, cam.cx - 0.5, 23).direction
    assert right[0] > 0 and abs(right[1]) < 1e-12
    assert down[1] < 0 and abs(down[0]) < 1e-12


def test_on_axis_point_projects_to_principal_point():
    cam = identity_camera()
    proj = project(cam, [0.0, 0.0, -5.0])
    assert (proj.u, proj.v) == (cam.cx - 0.5, cam.cy - 0.5)
    assert proj.depth == 5.0
    assert not proj.behind_camera


def test_camera_centre_and_points_behind_are_flagged():
    cam = identity_camera()
    assert project(cam, cam.center).behind_camera
    behind = project(cam, [0.0, 0.0, 2.0])
    assert behind.behind_camera and np.isnan(behind.u)


def test_pixel_ray_pixel_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(20):
        cam = random_camera(rng)
        u, v = rng.uniform(0, cam.width), rng.uniform(0, cam.height)
        ray = ray_for_pixel(cam, u, v)
        proj = project(cam, ray.at(2.5))
        assert proj.u == pytest.approx(u, abs=1e-9)
        assert proj.v == pytest.approx(v, abs=1e-9)


def test_point_ray_direction_round_trip():
    rng = np.random.default_rng(1)
    cam = random_camera(rng)
    points = cam.center + rng.normal(size=(100, 3))
    u, v, depth, in_front = project_points(cam, points)
    for p, pu, pv, ok in zip(points, u, v, in_front):
        if not ok or not (0 <= pu < cam.width and 0 <= pv < cam.height):
            continue
        expected = (p - cam.center) / np.linalg.norm(p - cam.center)
        np.testing.assert_allclose(ray_for_pixel(cam, pu, pv).direction, expected, atol=1e-9)


def test_out_of_bounds_pixel_is_rejected():
    cam = identity_camera()
    with pytest.raises(ValueError):
        ray_for_pixel(cam, 32, 0)
    with pytest.raises(ValueError):
        ray_for_pixel(cam, 0, -0.1)


def test_camera_validation():
    with pytest.raises(ValueError):
        Camera(fx=0.0, fy=1.0, cx=1.0, cy=1.0, width=4, height=4)
    with pytest.raises(ValueError):
        Camera(fx=1.0, fy=1.0, cx=4.0, cy=1.0, width=4, height=4)
    skewed = np.eye(4)
    skewed[0, 1] = 0.1
    with pytest.raises(ValueError):
        Camera(fx=1.0, fy=1.0, cx=1.0, cy=1.0, width=4, height=4, cam_to_world=skewed)
    with pytest.raises(ValueError):
        Ray(origin=np.zeros(3), direction=[0.0, 0.0, 2.0], near=0.1, far=1.0)


def test_look_at_centres_the_target():
    m = look_at([2.0, 1.0, 2.0])
    cam = Camera(fx=30.0, fy=30.0, cx=16.0, cy=16.0, width=32, height=32, cam_to_world=m)
    proj = project(cam, [0.0, 0.0, 0.0])
    assert proj.u == pytest.approx(15.5, abs=1e-9)
    assert proj.v == pytest.approx(15.5, abs=1e-9)
    assert proj.depth == pytest.approx(3.0, abs=1e-12)


def test_midpoint_samples():
    ray = Ray(origin=np.zeros(3), direction=[0.0, 0.0, -1.0], near=1e-9, far=1.0)
    t, delta = stratified_samples(ray, 2)
    np.testing.assert_allclose(t, [0.25, 0.75], atol=1e-8)
    np.testing.assert_allclose(delta, [0.5, 0.25], atol=1e-8)

    ray = Ray(origin=np.zeros(3), direction=[0.0, 0.0, -1.0], near=2.0, far=4.0)
    t, delta = stratified_samples(ray, 1)
    assert t.tolist() == [3.0]
    assert delta.tolist() == [1.0]


def test_jittered_samples_stay_in_their_bins():
    ray = Ray(origin=np.zeros(3), direction=[1.0, 0.0, 0.0], near=0.5, far=2.5)
    n = 8
    edges = 0.5 + np.arange(n + 1) * (2.0 / n)
    for seed in range(1000):
        t, delta = stratified_samples(ray, n, jitter=True, rng_seed=seed)
        assert np.all(t >= edges[:-1]) and np.all(t < edges[1:])
        assert np.all(np.diff(t) > 0) and np.all(delta > 0)
    again, _ = stratified_samples(ray, n, jitter=True, rng_seed=3)
    first, _ = stratified_samples(ray, n, jitter=True, rng_seed=3)
    assert again.tobytes() == first.tobytes()
