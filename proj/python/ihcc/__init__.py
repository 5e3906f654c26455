"""Python access to the ihcc C++ core."""

from ihcc._core import (
    ConfigError,
    DataError,
    TrainingError,
    assign,
    beta_to_pi,
    check_config,
    cluster_contrastive_loss,
    default_config,
    dunn_index,
    evaluate,
    generate_corpus,
    instance_contrastive_loss,
    nmi,
    participant_loss,
    pi_to_beta,
    sb_log_prior,
    silhouette,
    spearman,
    train,
)

__all__ = [
    "ConfigError",
    "DataError",
    "TrainingError",
    "assign",
    "beta_to_pi",
    "check_config",
    "cluster_contrastive_loss",
    "default_config",
    "dunn_index",
    "evaluate",
    "generate_corpus",
    "instance_contrastive_loss",
    "nmi",
    "participant_loss",
    "pi_to_beta",
    "sb_log_prior",
    "silhouette",
    "spearman",
    "train",
]
