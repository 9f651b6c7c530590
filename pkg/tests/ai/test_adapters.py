"""
Unit tests for decoder adapters.
"""
import pytest
import torch

from src.ai.adapters import (
    Adapter,
    adapter_parameter_names,
    freeze_except_adapters,
    has_adapters,
    insert_adapters,
    unfreeze_all,
)
from src.ai.losses import ape_loss, compute_task_losses, ls_combine
from src.ai.model import QE_HEAD_PREFIXES
from src.exceptions import ModeError


class TestAdapter:
    """Test cases for the adapter block."""

    def test_identity_at_insertion(self, ape_model, qe_batch):
        ape_model.eval()
        with torch.no_grad():
            before = ape_model(qe_batch)
            insert_adapters(ape_model, 8)
            after = ape_model(qe_batch)
        assert (before - after).abs().max().item() <= 1e-6

    def test_block_is_residual(self):
        adapter = Adapter(4, 2)
        x = torch.randn(3, 4)
        assert torch.equal(adapter(x), x)

    def test_invalid_size(self):
        with pytest.raises(ValueError):
            Adapter(4, 0)

    def test_insertion_rules(self, nmt_model, ape_model):
        with pytest.raises(ModeError):
            insert_adapters(nmt_model)
        insert_adapters(ape_model)
        assert has_adapters(ape_model)
        assert ape_model.adapter_dim == ape_model.config.adapter_dim
        assert len(adapter_parameter_names(ape_model)) == 4 * len(ape_model.decoder_blocks)
        with pytest.raises(ModeError):
            insert_adapters(ape_model)

    def test_freeze_needs_adapters(self, ape_model):
        with pytest.raises(ModeError):
            freeze_except_adapters(ape_model)

    def test_only_adapters_change(self, ape_model, qe_batch):
        """A hundred optimizer steps leave every non-adapter weight bitwise intact."""
        insert_adapters(ape_model)
        freeze_except_adapters(ape_model)
        adapter_names = set(adapter_parameter_names(ape_model))
        assert {name for name, p in ape_model.named_parameters() if p.requires_grad} == adapter_names
        before = {name: value.clone() for name, value in ape_model.state_dict().items()}

        optimizer = torch.optim.Adam([p for p in ape_model.parameters() if p.requires_grad], lr=1e-2)
        ape_model.train()
        for _ in range(100):
            optimizer.zero_grad()
            ape_loss(ape_model(qe_batch), qe_batch.target_out, qe_batch.target_mask).backward()
            optimizer.step()

        after = ape_model.state_dict()
        for name, value in before.items():
            if name not in adapter_names:
                assert torch.equal(after[name], value), name
        assert any(not torch.equal(after[name], before[name]) for name in adapter_names)

    def test_kept_heads_train_with_adapters(self, qe_model, qe_batch):
        insert_adapters(qe_model)
        freeze_except_adapters(qe_model, keep=QE_HEAD_PREFIXES)
        trainable = {name for name, p in qe_model.named_parameters() if p.requires_grad}
        heads = {name for name in trainable if name.startswith(QE_HEAD_PREFIXES)}
        assert heads and trainable == set(adapter_parameter_names(qe_model)) | heads
        before = {name: value.clone() for name, value in qe_model.state_dict().items()}

        optimizer = torch.optim.Adam([p for p in qe_model.parameters() if p.requires_grad], lr=1e-2)
        qe_model.train()
        for _ in range(100):
            optimizer.zero_grad()
            ls_combine(compute_task_losses(qe_model, qe_batch)).backward()
            optimizer.step()

        after = qe_model.state_dict()
        for name, value in before.items():
            if name not in trainable:
                assert torch.equal(after[name], value), name
        assert any(not torch.equal(after[name], before[name]) for name in heads)

    def test_unfreeze_all(self, ape_model):
        insert_adapters(ape_model)
        freeze_except_adapters(ape_model)
        unfreeze_all(ape_model)
        assert all(p.requires_grad for p in ape_model.parameters())
