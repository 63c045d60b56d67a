# -*- coding: utf-8 -*-
"""
存储层单元测试

测试覆盖：
1. 检查点的读写、损坏检测与优化器状态
2. PNG/JPEG 读取与 8 位 PNG 写出
3. 数据集划分与清单 CSV
"""
import numpy as np
import pandas as pd
import pytest
from PIL import Image

from src.core.exceptions import CheckpointError, DatasetError, ImageFormatError
from src.models.mtrl_model import MTRLModel
from src.numerics.tensor import ParamStore
from src.services.optimizer import OptState
from src.storage.checkpoint import (HEADER, MAGIC, decode_checkpoint, encode_checkpoint, load_checkpoint,
                                    save_checkpoint)
from src.storage.dataset import DatasetManifest, split_dataset, split_paths, train_count
from src.storage.image_io import list_images, load_image, quantize, resize_image, save_image


@pytest.fixture
def checkpoint_bytes(tiny_config):
    model = MTRLModel(tiny_config)
    return encode_checkpoint(model.store, tiny_config, epoch=3, step=12)


class TestCheckpoint:
    """测试检查点"""

    @pytest.mark.unit
    @pytest.mark.storage
    def test_round_trip(self, tmp_path, tiny_config, tiny_train_config):
        model = MTRLModel(tiny_config)
        path = save_checkpoint(model.store, tiny_config, tmp_path / 'm.ckpt', train_config=tiny_train_config,
                               epoch=2, step=5)
        ckpt = load_checkpoint(path)
        assert ckpt.model_config == tiny_config
        assert ckpt.train_config == tiny_train_config
        assert (ckpt.epoch, ckpt.step) == (2, 5)
        assert ckpt.opt_state is None
        assert ckpt.store.names() == model.store.names()
        for name, value in model.store.items():
            assert ckpt.store[name].dtype == value.dtype
            assert ckpt.store[name].tobytes() == value.tobytes()

    @pytest.mark.unit
    @pytest.mark.storage
    def test_reloaded_model_identical_output(self, tmp_path, rng, tiny_config):
        model = MTRLModel(tiny_config)
        store, config = load_checkpoint(save_checkpoint(model.store, tiny_config, tmp_path / 'm.ckpt'))
        x = rng.random((1, 3, 16, 16)).astype(np.float32)
        assert MTRLModel(config, store).enhance(x).tobytes() == model.enhance(x).tobytes()

    @pytest.mark.unit
    @pytest.mark.storage
    def test_encoding_is_deterministic(self, tiny_config):
        a = encode_checkpoint(MTRLModel(tiny_config).store, tiny_config)
        b = encode_checkpoint(MTRLModel(tiny_config).store, tiny_config)
        assert a == b

    @pytest.mark.unit
    @pytest.mark.storage
    def test_optimizer_state_restored(self, tiny_config, tiny_train_config):
        model = MTRLModel(tiny_config)
        state = OptState(step=7)
        for name, value in model.store.items():
            state.moments(name, value)
            state.m[name] += 0.25
            state.v[name] += 0.5
        ckpt = decode_checkpoint(encode_checkpoint(model.store, tiny_config, tiny_train_config, state, 1, 7))
        assert ckpt.opt_state.step == 7
        assert sorted(ckpt.opt_state.m) == model.store.names()
        name = model.store.names()[0]
        np.testing.assert_array_equal(ckpt.opt_state.m[name], state.m[name])
        np.testing.assert_array_equal(ckpt.opt_state.v[name], state.v[name])
        assert ckpt.store.names() == model.store.names()

    @pytest.mark.unit
    @pytest.mark.storage
    def test_float64_store(self, store64, tiny_config):
        model = MTRLModel(tiny_config, store64)
        ckpt = decode_checkpoint(encode_checkpoint(model.store, tiny_config))
        assert ckpt.store.dtype == np.float64

    @pytest.mark.unit
    @pytest.mark.storage
    def test_single_byte_corruption_detected(self, checkpoint_bytes):
        """任意单字节损坏都必须被检测到"""
        positions = np.random.default_rng(0).choice(len(checkpoint_bytes), size=100, replace=False)
        for pos in positions:
            corrupted = bytearray(checkpoint_bytes)
            corrupted[pos] ^= 0xFF
            with pytest.raises(CheckpointError):
                decode_checkpoint(bytes(corrupted))

    @pytest.mark.unit
    @pytest.mark.storage
    def test_truncated(self, checkpoint_bytes):
        with pytest.raises(CheckpointError) as exc_info:
            decode_checkpoint(checkpoint_bytes[:-10])
        assert exc_info.value.details['actual_bytes'] < exc_info.value.details['expected_bytes']
        assert '截断' in str(exc_info.value)

    @pytest.mark.unit
    @pytest.mark.storage
    def test_trailing_bytes(self, checkpoint_bytes):
        with pytest.raises(CheckpointError):
            decode_checkpoint(checkpoint_bytes + b'\x00')

    @pytest.mark.unit
    @pytest.mark.storage
    def test_bad_magic_and_version(self, checkpoint_bytes):
        with pytest.raises(CheckpointError):
            decode_checkpoint(b'PK\x03\x04' + checkpoint_bytes[4:])
        _, _, crc = HEADER.unpack_from(checkpoint_bytes)
        future = HEADER.pack(MAGIC, 99, crc) + checkpoint_bytes[HEADER.size:]
        with pytest.raises(CheckpointError) as exc_info:
            decode_checkpoint(future)
        assert '版本' in str(exc_info.value)

    @pytest.mark.unit
    @pytest.mark.storage
    def test_save_load_save_byte_identical(self, tmp_path, tiny_config, tiny_train_config):
        model = MTRLModel(tiny_config)
        first = save_checkpoint(model.store, tiny_config, tmp_path / 'a.ckpt', train_config=tiny_train_config,
                                epoch=1, step=2)
        ckpt = load_checkpoint(first)
        second = save_checkpoint(ckpt.store, ckpt.model_config, tmp_path / 'b.ckpt',
                                 train_config=ckpt.train_config, epoch=ckpt.epoch, step=ckpt.step)
        assert first.read_bytes() == second.read_bytes()

    @pytest.mark.unit
    @pytest.mark.storage
    def test_empty_store(self, tiny_config):
        ckpt = decode_checkpoint(encode_checkpoint(ParamStore(), tiny_config))
        assert len(ckpt.store) == 0
        assert ckpt.model_config == tiny_config

    @pytest.mark.unit
    @pytest.mark.storage
    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / 'absent.ckpt')


class TestImageIO:
    """测试图像读写"""

    @pytest.mark.unit
    @pytest.mark.storage
    def test_eight_bit_rgb(self, tmp_path, rng):
        pixels = rng.integers(0, 256, size=(6, 5, 3), dtype=np.uint8)
        Image.fromarray(pixels).save(tmp_path / 'a.png')
        tensor = load_image(tmp_path / 'a.png')
        assert tensor.shape == (1, 3, 6, 5)
        assert tensor.dtype == np.float32
        np.testing.assert_allclose(tensor[0].transpose(1, 2, 0), pixels / 255.0, atol=1e-7)

    @pytest.mark.unit
    @pytest.mark.storage
    def test_sixteen_bit_gray(self, tmp_path):
        pixels = np.array([[0, 65535], [32768, 1000]], dtype=np.uint16)
        Image.fromarray(pixels).save(tmp_path / 'b.png')
        tensor = load_image(tmp_path / 'b.png')
        assert tensor.shape == (1, 3, 2, 2)
        np.testing.assert_allclose(tensor[0, 0], pixels / 65535.0, atol=1e-7)
        np.testing.assert_array_equal(tensor[0, 0], tensor[0, 2])

    @pytest.mark.unit
    @pytest.mark.storage
    def test_gray_expanded_to_rgb(self, tmp_path):
        Image.fromarray(np.full((4, 4), 51, dtype=np.uint8)).save(tmp_path / 'g.png')
        tensor = load_image(tmp_path / 'g.png')
        assert tensor.shape == (1, 3, 4, 4)
        np.testing.assert_allclose(tensor, 0.2, atol=1e-7)

    @pytest.mark.unit
    @pytest.mark.storage
    def test_black_png_is_zero(self, tmp_path):
        Image.fromarray(np.zeros((5, 7, 3), dtype=np.uint8)).save(tmp_path / 'black.png')
        assert np.all(load_image(tmp_path / 'black.png') == 0)

    @pytest.mark.unit
    @pytest.mark.storage
    def test_sixteen_bit_gradient_requantized(self, tmp_path):
        """16 位渐变经 8 位保存后误差不超过 1/255"""
        ramp = np.linspace(0, 65535, 64).astype(np.uint16).reshape(8, 8)
        Image.fromarray(ramp).save(tmp_path / 'ramp.png')
        tensor = load_image(tmp_path / 'ramp.png')
        restored = load_image(save_image(tensor, tmp_path / 'ramp8.png'))
        assert float(np.max(np.abs(restored - tensor))) <= 1 / 255 + 1e-7

    @pytest.mark.unit
    @pytest.mark.storage
    def test_jpeg_readable(self, tmp_path):
        Image.fromarray(np.full((8, 8, 3), 128, dtype=np.uint8)).save(tmp_path / 'c.jpg', quality=95)
        tensor = load_image(tmp_path / 'c.jpg')
        assert tensor.shape == (1, 3, 8, 8)
        np.testing.assert_allclose(tensor, 128 / 255.0, atol=3 / 255.0)

    @pytest.mark.unit
    @pytest.mark.storage
    def test_unreadable_file(self, tmp_path):
        path = tmp_path / 'broken.png'
        path.write_bytes(b'not an image')
        with pytest.raises(ImageFormatError) as exc_info:
            load_image(path)
        assert exc_info.value.details['path'] == str(path)
        with pytest.raises(ImageFormatError):
            load_image(tmp_path / 'missing.png')

    @pytest.mark.unit
    @pytest.mark.storage
    def test_save_round_trip(self, tmp_path):
        tensor = (np.arange(48, dtype=np.float32).reshape(1, 3, 4, 4) * 5) / 255.0
        path = save_image(tensor, tmp_path / 'out' / 'x.png')
        np.testing.assert_allclose(load_image(path), tensor, atol=1e-6)

    @pytest.mark.unit
    @pytest.mark.storage
    def test_save_png_only(self, tmp_path, phantom):
        with pytest.raises(ImageFormatError):
            save_image(phantom, tmp_path / 'x.jpg')
        with pytest.raises(ImageFormatError):
            save_image(np.concatenate([phantom, phantom]), tmp_path / 'x.png')

    @pytest.mark.unit
    @pytest.mark.storage
    def test_quantize_clamps_and_rounds(self):
        q = quantize(np.array([-0.5, 0.0, 0.4 / 255, 1.6 / 255, 1.0, 2.0]))
        assert q.tolist() == [0, 0, 0, 2, 255, 255]

    @pytest.mark.unit
    @pytest.mark.storage
    def test_quantize_rounds_half_up(self):
        """恰好落在 .5 上的值一律进位，偶数码也不例外"""
        assert quantize(np.array([0.5])).tolist() == [128]
        n = np.arange(255, dtype=np.float64)
        values = (n + 0.5) / 255.0
        ties = values * 255.0 == n + 0.5
        assert np.any(ties & (n % 2 == 0))
        np.testing.assert_array_equal(quantize(values[ties]), (n[ties] + 1).astype(np.uint8))

    @pytest.mark.unit
    @pytest.mark.storage
    def test_resize(self):
        tensor = np.full((1, 3, 16, 16), 0.3, dtype=np.float32)
        out = resize_image(tensor, 8)
        assert out.shape == (1, 3, 8, 8)
        np.testing.assert_allclose(out, 0.3, atol=1e-6)
        same = resize_image(tensor, 16)
        assert same is not tensor
        np.testing.assert_array_equal(same, tensor)

    @pytest.mark.unit
    @pytest.mark.storage
    def test_list_images(self, tmp_path, image_dir):
        (image_dir / 'notes.txt').write_text('x', encoding='utf-8')
        names = [p.name for p in list_images(image_dir)]
        assert names == ['phantom_000.png', 'phantom_001.png', 'phantom_002.png', 'phantom_003.png']
        with pytest.raises(DatasetError):
            list_images(tmp_path / 'nowhere')


class TestDataset:
    """测试数据集划分与清单"""

    @pytest.mark.unit
    @pytest.mark.storage
    @pytest.mark.parametrize('n,expected', [(2, 1), (3, 2), (4, 3), (10, 7), (100, 70)])
    def test_train_count(self, n, expected):
        assert train_count(n, 0.7) == expected

    @pytest.mark.unit
    @pytest.mark.storage
    def test_split_ratio(self, tmp_path):
        paths = [tmp_path / f'img_{i:02d}.png' for i in range(10)]
        manifest = split_paths(paths, seed=1)
        assert manifest.counts() == {'train': 7, 'test': 3}
        assert [r['path'] for r in manifest.rows] == [str(p) for p in paths]
        assert split_paths(paths, seed=1).rows == manifest.rows

    @pytest.mark.unit
    @pytest.mark.storage
    def test_too_few_images(self, tmp_path):
        with pytest.raises(DatasetError):
            split_paths([tmp_path / 'only.png'])

    @pytest.mark.unit
    @pytest.mark.storage
    def test_manifest_csv_relative_paths(self, tmp_path, image_dir):
        manifest = split_dataset(image_dir, seed=42)
        csv_path = manifest.to_csv(tmp_path / 'manifests' / 'split.csv')
        df = pd.read_csv(csv_path, encoding='utf-8')
        assert list(df.columns) == ['path', 'split', 'seed']
        assert all(p.startswith('../hq/') for p in df['path'])

        restored = DatasetManifest.from_csv(csv_path)
        assert restored.counts() == manifest.counts() == {'train': 3, 'test': 1}
        assert [p.resolve() for p in restored.paths('train')] == [p.resolve() for p in manifest.paths('train')]
        assert [r['seed'] for r in restored.rows] == [r['seed'] for r in manifest.rows]

    @pytest.mark.unit
    @pytest.mark.storage
    def test_missing_files_listed(self, tmp_path, image_dir):
        csv_path = split_dataset(image_dir).to_csv(tmp_path / 'split.csv')
        (image_dir / 'phantom_001.png').unlink()
        (image_dir / 'phantom_003.png').unlink()
        with pytest.raises(DatasetError) as exc_info:
            DatasetManifest.from_csv(csv_path)
        assert sorted(exc_info.value.missing) == ['hq/phantom_001.png', 'hq/phantom_003.png']

    @pytest.mark.unit
    @pytest.mark.storage
    def test_bad_manifest(self, tmp_path):
        path = tmp_path / 'bad.csv'
        path.write_text('path,split,seed\na.png,validation,1\n', encoding='utf-8')
        with pytest.raises(DatasetError):
            DatasetManifest.from_csv(path, check_exists=False)
