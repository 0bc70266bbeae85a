"""In-context-learning MIMO symbol estimation and toy joint source-channel coding."""
from . import channel, classical, cxmat, iq, model, prompt
from .channel import ChannelTask, LinkConfig
from .cxmat import pinv, svd
from .errors import (CapacityError, CheckpointError, ConvergenceError, DegenerateInputError, NumericError,
                     ShapeError, TrainingDivergedError)

__version__ = "0.1.0"
