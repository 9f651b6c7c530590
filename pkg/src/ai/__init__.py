"""
Neural components: vocabulary, dual-encoder model, losses, Nash-MTL, training and decoding.
"""
from .adapters import Adapter, freeze_except_adapters, insert_adapters, unfreeze_all
from .checkpoint import init_from_checkpoint, load_checkpoint, save_checkpoint
from .config import ModelConfig, Stage, TrainConfig, TrainMode, load_train_config
from .decoding import beam_search, decode_corpus, greedy_decode
from .losses import ape_loss, collect_task_gradients, compute_task_losses, ls_combine, sent_qe_loss, word_qe_loss
from .model import ApeModel, Batch, add_translation_encoder, attach_qe_heads, collate_batch
from .nash import NashSolution, nash_combine, solve_nash
from .trainer import CtsData, CtsResult, CtsTrainer
from .vocab import Vocabulary

__all__ = [
    'Adapter',
    'ApeModel',
    'Batch',
    'CtsData',
    'CtsResult',
    'CtsTrainer',
    'ModelConfig',
    'NashSolution',
    'Stage',
    'TrainConfig',
    'TrainMode',
    'Vocabulary',
    'add_translation_encoder',
    'ape_loss',
    'attach_qe_heads',
    'beam_search',
    'collate_batch',
    'collect_task_gradients',
    'compute_task_losses',
    'decode_corpus',
    'freeze_except_adapters',
    'greedy_decode',
    'init_from_checkpoint',
    'insert_adapters',
    'load_checkpoint',
    'load_train_config',
    'ls_combine',
    'nash_combine',
    'save_checkpoint',
    'sent_qe_loss',
    'solve_nash',
    'unfreeze_all',
    'word_qe_loss',
]
