"""Relighting accumulation, masks, and caching tests."""
import numpy as np
import pytest

from splatlight import sh
from splatlight.relight import (
    COMPONENT_VIEWS,
    ComponentMask,
    DIFFUSE_VIEW,
    DIRECT_VIEW,
    DIRECTIONAL_VIEW,
    FULL,
    INDIRECT_VIEW,
    RelightCache,
    relight_colors,
    relight_primitive,
)
from splatlight.scene import (
    DirectionalLight,
    LightSample,
    PointLight,
    make_random_scene,
)

TWO_SQRT_PI = 2.0 * np.sqrt(np.pi)


def test_mask_requires_one_flag():
    with pytest.raises(ValueError):
        ComponentMask(diffuse=False, directional=False, direct=False, indirect=False)


def test_zero_radiance_gives_zero_color():
    scene = make_random_scene(4, seed=0)
    light = DirectionalLight(direction=(0.0, 1.0, 0.0), radiance=(0.0, 0.0, 0.0))
    colors = relight_colors(scene, [light])
    np.testing.assert_array_equal(colors, 0.0)


def test_empty_light_list_gives_zero():
    scene = make_random_scene(3, seed=1)
    np.testing.assert_array_equal(relight_colors(scene, []), 0.0)


def test_linear_in_radiance():
    scene = make_random_scene(5, seed=2)
    one = DirectionalLight(direction=sh.normalize((0.3, 0.8, -0.2)), radiance=(0.5, 0.7, 0.2))
    two = DirectionalLight(direction=one.direction, radiance=2.0 * one.radiance)
    np.testing.assert_allclose(relight_colors(scene, [two]),
                               2.0 * relight_colors(scene, [one]), rtol=1e-12)


def test_additive_across_lights():
    scene = make_random_scene(6, seed=3)
    a = PointLight(position=(2.0, 2.0, 0.0), intensity=(3.0, 1.0, 1.0))
    b = DirectionalLight(direction=(0.0, 1.0, 0.0), radiance=(0.5, 0.5, 2.0))
    both = relight_colors(scene, [a, b])
    split = relight_colors(scene, [a]) + relight_colors(scene, [b])
    np.testing.assert_allclose(both, split, rtol=1e-9, atol=1e-12)


def test_diffuse_view_reconstructs_albedo():
    # T_dir identically 1, one unit directional light: the diffuse view
    # reconstructs exactly the albedo in any view direction.
    scene = make_random_scene(3, seed=4)
    scene.t_dir[:] = 0.0
    scene.t_dir[:, 0] = TWO_SQRT_PI
    light = DirectionalLight(direction=(0.0, 0.0, 1.0), radiance=(1.0, 1.0, 1.0))
    colors = relight_colors(scene, [light], DIFFUSE_VIEW)
    rng = np.random.default_rng(5)
    for wo in sh.sample_uniform_sphere(10, rng):
        recon = np.einsum("ncj,j->nc", colors, sh.eval_sh_basis(wo))
        np.testing.assert_allclose(recon, scene.albedos(), rtol=1e-9)


def test_component_views_superpose_exactly():
    scene = make_random_scene(8, seed=6)
    lights = [PointLight(position=(1.5, 2.0, 1.0), intensity=(4.0, 4.0, 4.0)),
              DirectionalLight(direction=(0.2, 0.9, 0.1), radiance=(0.3, 0.2, 0.6))]
    full = relight_colors(scene, lights, FULL)
    parts = (relight_colors(scene, lights, DIFFUSE_VIEW)
             + relight_colors(scene, lights, DIRECTIONAL_VIEW)
             + relight_colors(scene, lights, INDIRECT_VIEW))
    np.testing.assert_allclose(parts, full, rtol=1e-12, atol=1e-14)
    direct = relight_colors(scene, lights, DIRECT_VIEW)
    indirect = relight_colors(scene, lights, INDIRECT_VIEW)
    np.testing.assert_allclose(direct + indirect, full, rtol=1e-12, atol=1e-14)


def test_reciprocity_of_directional_contribution():
    # Swapping the light direction with the later view direction leaves the
    # scattering reconstruction unchanged.
    scene = make_random_scene(4, seed=7)
    rng = np.random.default_rng(8)
    wi, wo = sh.sample_uniform_sphere(2, rng)
    light_i = DirectionalLight(direction=wi, radiance=(1.0, 1.0, 1.0))
    light_o = DirectionalLight(direction=wo, radiance=(1.0, 1.0, 1.0))
    scene.t_dir[:] = 0.0
    scene.t_dir[:, 0] = TWO_SQRT_PI  # unit transport to isolate s
    ci = relight_colors(scene, [light_i], DIRECTIONAL_VIEW)
    co = relight_colors(scene, [light_o], DIRECTIONAL_VIEW)
    at_wo = np.einsum("ncj,j->nc", ci, sh.eval_sh_basis(wo))
    at_wi = np.einsum("ncj,j->nc", co, sh.eval_sh_basis(wi))
    np.testing.assert_allclose(at_wo, at_wi, rtol=1e-9)


def test_relight_primitive_matches_scene_path():
    scene = make_random_scene(3, seed=9)
    light = PointLight(position=(0.5, 1.5, 0.3), intensity=(2.0, 1.0, 0.5))
    colors = relight_colors(scene, [light])
    for i in range(3):
        samples = [LightSample(wi=s.wi, radiance=s.radiance)
                   for s in __import__("splatlight").scene.light_samples(light, scene.positions[i])]
        single = relight_primitive(scene.primitive(i), samples)
        np.testing.assert_allclose(single.sh_rgb, colors[i], rtol=1e-12)


def test_relight_primitive_requires_samples():
    scene = make_random_scene(1, seed=10)
    with pytest.raises(ValueError):
        relight_primitive(scene.primitive(0), [])


def test_cache_hits_on_same_lighting():
    scene = make_random_scene(4, seed=11)
    light = DirectionalLight(direction=(0.0, 1.0, 0.0), radiance=(1.0, 1.0, 1.0))
    cache = RelightCache()
    first = cache.colors(scene, [light], FULL)
    second = cache.colors(scene, [light], FULL)
    assert cache.evaluations == 1
    assert cache.hits == 1
    assert second is first


def test_cache_invalidated_by_light_change():
    scene = make_random_scene(4, seed=12)
    cache = RelightCache()
    cache.colors(scene, [DirectionalLight(direction=(0, 1, 0), radiance=(1, 1, 1))], FULL)
    cache.colors(scene, [DirectionalLight(direction=(1, 0, 0), radiance=(1, 1, 1))], FULL)
    assert cache.evaluations == 2


def test_cache_invalidated_by_scene_mutation():
    scene = make_random_scene(4, seed=13)
    light = DirectionalLight(direction=(0, 1, 0), radiance=(1, 1, 1))
    cache = RelightCache()
    cache.colors(scene, [light], FULL)
    scene.t_dir[:, 0] += 0.1
    scene.touch()
    cache.colors(scene, [light], FULL)
    assert cache.evaluations == 2


def test_component_view_registry():
    assert set(COMPONENT_VIEWS) == {"diffuse", "directional", "direct", "indirect"}
