from .network import (ArchConfig, ConvSpec, TrainConfig, evaluate, fit, forward,
                      init_network, loss_and_grads, train_step)

__all__ = ["ArchConfig", "ConvSpec", "TrainConfig", "evaluate", "fit", "forward",
           "init_network", "loss_and_grads", "train_step"]
