"""Minibatched StackLSTM transition-based dependency parsing."""

from .autodiff import Graph, Node
from .model import ModelConfig, ParserModel, greedy_parse, load_checkpoint, save_checkpoint
from .stack import BatchedStack, StackOverflow, StackUnderflow, new_stack
from .stacklstm import LSTMCellParams, StackLSTM, lstm_cell
from .trainer import TrainConfig, train
from .transitions import DepTree, System, Transition, static_oracle
from .treebank import Sentence, Vocab, evaluate, read_conll, write_conll

__version__ = "0.1.0"

__all__ = [
    "BatchedStack", "DepTree", "Graph", "LSTMCellParams", "ModelConfig", "Node", "ParserModel",
    "Sentence", "StackLSTM", "StackOverflow", "StackUnderflow", "System", "TrainConfig", "Transition",
    "Vocab", "evaluate", "greedy_parse", "load_checkpoint", "lstm_cell", "new_stack", "read_conll",
    "save_checkpoint", "static_oracle", "train", "write_conll",
]
