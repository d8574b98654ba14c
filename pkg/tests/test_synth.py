"""合成数据测试：SKU 资产、场景、补丁、清单"""

from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from skupatch.common.config import DataConfig, load_config
from skupatch.common.errors import InputError
from skupatch.synth import (
    MANIFEST_NAME,
    DatasetService,
    ManifestRepository,
    SplitMix64,
    canonical_patch,
    compose_scene,
    derive_seed,
    ellipse_mask,
    extract_patches,
    format_manifest,
    generate_catalog,
    generate_sku,
    parse_manifest,
)
from skupatch.synth.repository import ManifestFormatError
from skupatch.utils.image import normalized_cross_correlation, read_pgm, read_ppm

TINY_CONF = Path(__file__).resolve().parents[1] / "configs" / "tiny.conf"


@pytest.fixture(scope="module")
def catalog():
    return generate_catalog(seed=0, count=8)


# ==================== 随机数 ====================

class TestRandom:

    def test_splitmix_reference_value(self):
        assert SplitMix64(0).next_u64() == 0xE220A8397B1DCDAF

    def test_derived_seeds_differ_by_key(self):
        seeds = {derive_seed(7, "train", i) for i in range(100)}
        seeds |= {derive_seed(7, "test", i) for i in range(100)}
        assert len(seeds) == 200
        assert derive_seed(7, "train", 3) == derive_seed(7, "train", 3)

    def test_randint_is_inclusive(self):
        rng = SplitMix64(1)
        values = {rng.randint(2, 4) for _ in range(200)}
        assert values == {2, 3, 4}


# ==================== SKU 资产 ====================

class TestSkuAssets:

    def test_ellipse_mask(self):
        expected = np.array([
            [0, 1, 1, 0],
            [1, 1, 1, 1],
            [1, 1, 1, 1],
            [0, 1, 1, 0],
        ], dtype=bool)
        assert_array_equal(ellipse_mask(4, 4), expected)

    def test_same_seed_same_asset(self):
        a, b = generate_sku(3, 11), generate_sku(3, 11)
        assert a.signature == b.signature
        assert_array_equal(a.raster, b.raster)

    def test_catalog_appearances_are_distinct(self):
        catalog = generate_catalog(seed=1, count=50, asset_size=24)
        assert len({a.signature for a in catalog}) == 50
        assert len({a.raster.tobytes() for a in catalog}) == 50
        assert [a.sku_id for a in catalog] == list(range(50))

    def test_raster_is_black_outside_shape(self, catalog):
        for asset in catalog:
            assert not asset.raster[~asset.mask].any()
            assert asset.rgba().shape == asset.raster.shape[:2] + (4,)


# ==================== 场景 ====================

class TestScenes:

    def test_deterministic(self, catalog):
        params = DataConfig()
        a = compose_scene(catalog[:4], params, seed=5)
        b = compose_scene(catalog[:4], params, seed=5)
        assert_array_equal(a.image, b.image)
        assert [i.box for i in a.instances] == [i.box for i in b.instances]

    def test_masks_disjoint_and_boxes_tight(self, catalog):
        params = DataConfig()
        for seed in range(8):
            scene = compose_scene(catalog, params, seed=seed)
            assert scene.image.shape == (64, 64, 3) and scene.image.dtype == np.uint8
            coverage = np.zeros((64, 64), dtype=int)
            for inst in scene.instances:
                coverage += inst.mask
                ys, xs = np.nonzero(inst.mask)
                assert inst.box == (xs.min(), ys.min(), xs.max() + 1, ys.max() + 1)
                assert inst.visibility >= params.visibility_threshold
            assert coverage.max() <= 1

    def test_hard_scenes_hold_more_instances(self, catalog):
        params = DataConfig(min_scale=0.1, max_scale=0.15)
        easy = [len(compose_scene(catalog, params, seed=s, clutter="easy").instances) for s in range(10)]
        hard = [len(compose_scene(catalog, params, seed=s, clutter="hard").instances) for s in range(10)]
        assert np.mean(hard) > np.mean(easy)
        assert max(easy) <= params.easy_max

    def test_requested_clutter_is_kept(self, catalog):
        assert compose_scene(catalog, DataConfig(), seed=0, clutter="hard").clutter == "hard"

    def test_instances_only_from_given_assets(self, catalog):
        scene = compose_scene(catalog[2:4], DataConfig(), seed=9)
        assert set(scene.sku_ids) <= {2, 3}

    def test_needs_assets(self):
        with pytest.raises(InputError):
            compose_scene([], DataConfig(), seed=0)


# ==================== 补丁 ====================

class TestPatches:

    def test_patch_shape(self, catalog):
        patches = extract_patches(catalog[0], n=4, seed=0, patch_size=24)
        assert len(patches) == 4
        assert all(p.shape == (24, 24, 3) and p.dtype == np.uint8 for p in patches)

    def test_jittered_patches_resemble_appearance(self, catalog):
        for asset in catalog[:5]:
            reference = canonical_patch(asset, 32)
            for patch in extract_patches(asset, n=10, seed=3, patch_size=32):
                assert normalized_cross_correlation(patch, reference) >= 0.8

    def test_without_jitter_all_canonical(self, catalog):
        for patch in extract_patches(catalog[1], n=3, seed=0, patch_size=16, jitter=False):
            assert_array_equal(patch, canonical_patch(catalog[1], 16))

    def test_jitter_varies_patches(self, catalog):
        patches = extract_patches(catalog[1], n=5, seed=0, patch_size=32)
        assert len({p.tobytes() for p in patches}) > 1

    @pytest.mark.parametrize("n", [0, 11])
    def test_patch_count_range(self, catalog, n):
        with pytest.raises(InputError):
            extract_patches(catalog[0], n=n, seed=0)


# ==================== 清单 ====================

MANIFEST_TEXT = """\
# 示例
seed 4
config_hash abc123
image_size 32
seen 0 1
unseen 2
split train
scene train/scene_0000.ppm easy 2
instance 0 1 2 10 12 train/scene_0000_m00.pgm
instance 1 5 5 9 9 train/scene_0000_m01.pgm
split test
scene test/scene_0000.ppm hard 1
instance 2 0 0 4 4 test/scene_0000_m00.pgm
patch 2 patches/sku_002/patch_00.ppm
"""


class TestManifest:

    def test_parse(self):
        manifest = parse_manifest(MANIFEST_TEXT, Path("/data"))
        assert manifest.seed == 4 and manifest.image_size == 32
        assert manifest.seen == [0, 1] and manifest.unseen == [2]
        assert [s.split for s in manifest.scenes] == ["train", "test"]
        assert manifest.scenes[0].instances[1].box == (5, 5, 9, 9)
        assert manifest.patch_paths(2) == [Path("/data/patches/sku_002/patch_00.ppm")]
        assert manifest.audit() == []

    def test_format_is_stable(self):
        text = format_manifest(parse_manifest(MANIFEST_TEXT, Path(".")))
        assert format_manifest(parse_manifest(text, Path("."))) == text

    @pytest.mark.parametrize("broken", [
        MANIFEST_TEXT.replace("easy 2", "easy 3"),
        MANIFEST_TEXT.replace("seed 4\n", ""),
        MANIFEST_TEXT.replace("instance 1 5 5 9 9", "instance 1 5 5 5 9"),
        MANIFEST_TEXT + "bogus 1\n",
        MANIFEST_TEXT.replace("split test", "split val"),
    ])
    def test_malformed(self, broken):
        with pytest.raises(ManifestFormatError):
            parse_manifest(broken, Path("."))

    def test_audit_flags_unseen_in_training(self):
        text = MANIFEST_TEXT.replace("instance 1 5 5 9 9", "instance 2 5 5 9 9")
        problems = parse_manifest(text, Path(".")).audit()
        assert len(problems) == 1 and "unseen sku 2" in problems[0]

    def test_repository_rejects_failed_audit(self, tmp_path):
        path = tmp_path / MANIFEST_NAME
        path.write_text(MANIFEST_TEXT.replace("instance 1 5 5 9 9", "instance 2 5 5 9 9"), encoding="utf-8")
        result = ManifestRepository().load(tmp_path)
        assert not result.is_success

    def test_missing_file(self, tmp_path):
        assert not ManifestRepository().load(tmp_path / "nothing.txt").is_success


# ==================== 数据集服务 ====================

class TestDatasetService:

    def build(self, out):
        config = load_config(TINY_CONF).unwrap()
        service = DatasetService.get_instance()
        service.initialize()
        return config, service.build_dataset(config, seed=0, out_dir=out)

    def test_builds_consistent_dataset(self, clean_services, tmp_path):
        config, result = self.build(tmp_path / "data")
        assert result.is_success, result.error
        manifest = result.value
        assert manifest.audit() == []
        assert len(manifest.scenes_in("train")) == config.data.train_scenes
        assert len(manifest.scenes_in("test")) == config.data.test_scenes
        assert set(manifest.patches) == set(manifest.seen) | set(manifest.unseen)

        loaded = DatasetService.get_instance().load_manifest(tmp_path / "data" / MANIFEST_NAME)
        assert loaded.is_success, loaded.error
        assert format_manifest(loaded.value) == format_manifest(manifest)

        scene = manifest.scenes[0]
        image = read_ppm(manifest.resolve(scene.path)).unwrap()
        assert image.shape == (32, 32, 3)
        for inst in scene.instances:
            mask = read_pgm(manifest.resolve(inst.mask_path)).unwrap()
            ys, xs = np.nonzero(mask)
            assert inst.box == (xs.min(), ys.min(), xs.max() + 1, ys.max() + 1)

    def test_same_seed_same_files(self, clean_services, tmp_path):
        _, first = self.build(tmp_path / "a")
        _, second = self.build(tmp_path / "b")
        assert format_manifest(first.value) == format_manifest(second.value)
        for scene in first.value.scenes:
            a = (tmp_path / "a" / scene.path).read_bytes()
            b = (tmp_path / "b" / scene.path).read_bytes()
            assert a == b
