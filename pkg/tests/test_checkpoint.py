import struct

import pytest
import torch

from src.checkpoint import FORMAT_VERSION, MAGIC, load_checkpoint, restore_optimizer, save_checkpoint
from src.data import BOS, EOS
from src.errors import CheckpointError, VersionMismatchError
from src.model import ModelConfig, init_params
from src.training import TrainConfig, build_optimizer, collate, train_step


def small_model(dtype: str = "float32"):
    return init_params(ModelConfig(vocab_size=8, model_dim=8, num_heads=2, encoder_layers=1, decoder_layers=1,
                                   ffn_dim=16, graph_lambda=2, max_source_len=4, dropout=0.0, seed=3, dtype=dtype))


@pytest.mark.parametrize("dtype", ["float32", "float64"])
def test_parameters_round_trip_bit_exact(tmp_path, dtype):
    model = small_model(dtype)
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path, step=17)
    checkpoint = load_checkpoint(path)
    assert checkpoint.step == 17
    assert checkpoint.model_config == model.cfg
    assert list(checkpoint.params) == list(model.state_dict())
    for name, value in model.state_dict().items():
        assert checkpoint.params[name].dtype == value.dtype
        assert torch.equal(checkpoint.params[name], value), name


def test_loaded_model_predicts_identically(tmp_path):
    model = small_model().eval()
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path)
    restored = load_checkpoint(path).build_model().eval()
    sources = [[4, 5, 6]]
    assert torch.equal(model.predict_dags(sources)[0].log_transitions,
                       restored.predict_dags(sources)[0].log_transitions)


def test_optimizer_state_round_trip(tmp_path, rng):
    model = small_model()
    cfg = TrainConfig(steps=5, warmup_steps=1)
    optimizer = build_optimizer(model, cfg)
    batch = collate([((4, 5), (BOS, 6, EOS))])
    train_step(model, optimizer, batch, cfg, 1, rng)
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path, step=1, optimizer=optimizer)

    checkpoint = load_checkpoint(path)
    assert any(name.endswith(".exp_avg") for name in checkpoint.optimizer_arrays)
    assert not any(name.startswith("optim.") for name in checkpoint.params)
    restored = checkpoint.build_model()
    restored_optimizer = build_optimizer(restored, cfg)
    restore_optimizer(restored, restored_optimizer, checkpoint.optimizer_arrays)
    for (_, a), (_, b) in zip(model.named_parameters(), restored.named_parameters()):
        original, loaded = optimizer.state[a], restored_optimizer.state[b]
        assert set(original) == set(loaded)
        for slot in original:
            assert loaded[slot].shape == torch.as_tensor(original[slot]).shape
            assert torch.equal(torch.as_tensor(original[slot]), loaded[slot])


def test_scalar_arrays_keep_their_shape(tmp_path):
    model = small_model()
    path = tmp_path / "model.ckpt"
    optimizer = torch.optim.AdamW(model.parameters())
    name, param = next(iter(model.named_parameters()))
    optimizer.state[param] = {"step": torch.tensor(3.0)}
    save_checkpoint(model, path, step=2, optimizer=optimizer)
    loaded = load_checkpoint(path).optimizer_arrays[f"optim.{name}.step"]
    assert loaded.dim() == 0 and float(loaded) == 3.0


def test_bad_magic(tmp_path):
    path = tmp_path / "model.ckpt"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 32)
    with pytest.raises(VersionMismatchError):
        load_checkpoint(path)


def test_future_version(tmp_path):
    path = tmp_path / "model.ckpt"
    path.write_bytes(MAGIC + struct.pack("<I", FORMAT_VERSION + 1) + b"\x00" * 16)
    with pytest.raises(VersionMismatchError, match="version"):
        load_checkpoint(path)


def test_corrupt_header(tmp_path):
    header = b"{not json"
    path = tmp_path / "model.ckpt"
    path.write_bytes(MAGIC + struct.pack("<I", FORMAT_VERSION) + struct.pack("<Q", len(header)) + header)
    with pytest.raises(VersionMismatchError):
        load_checkpoint(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(small_model(), path)
    data = path.read_bytes()
    path.write_bytes(data[:-10])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "absent.ckpt")


def test_save_leaves_no_temporary_file(tmp_path):
    path = tmp_path / "nested" / "model.ckpt"
    save_checkpoint(small_model(), path)
    assert [p.name for p in path.parent.iterdir()] == ["model.ckpt"]
