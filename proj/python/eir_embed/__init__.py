"""EIR unsupervised feature embedding: instance-recognition contrastive
learning with intra-instance multi-view alignment and inter-instance
interpolation consistency."""

from ._core import (
    EirError,
    EmbeddingBank,
    combine_losses,
    cutmix,
    encode,
    generate_synthetic,
    instance_probability,
    inter_loss,
    intra_loss,
    iraug_loss,
    knn_accuracy,
    l2_normalize,
    linear_probe,
    lr_at_epoch,
    mean_intra_kl,
    mixup,
    parse_cifar10,
    project_2d,
    recall_at_k,
    softmax,
    train,
    two_views,
    __version__,
)

__all__ = [
    "EirError",
    "EmbeddingBank",
    "combine_losses",
    "cutmix",
    "encode",
    "generate_synthetic",
    "instance_probability",
    "inter_loss",
    "intra_loss",
    "iraug_loss",
    "knn_accuracy",
    "l2_normalize",
    "linear_probe",
    "lr_at_epoch",
    "mean_intra_kl",
    "mixup",
    "parse_cifar10",
    "project_2d",
    "recall_at_k",
    "softmax",
    "train",
    "two_views",
    "__version__",
]
