"""Level-wise supervised pretraining for recurrent time-series classifiers.

Train a baseline, rank classes by the entropy of their validation
confusion, then pretrain a ladder of progressively finer tasks whose
recurrent weights initialize the final model. Includes competing
initialization strategies, a repeated-split evaluation protocol, and a CLI.
"""

__version__ = "0.1.0"

from .data import (
    Dataset,
    DatasetError,
    TimeSeriesSample,
    class_weights,
    load_dataset,
    make_binary_shuffle_task,
    pad_batch,
    remap_labels_for_level,
    shuffle_timesteps,
    split,
)
from .evaluation import (
    AggregateReport,
    RunReport,
    accuracy,
    f_measure,
    per_class_f_measure,
    read_report_csv,
    repeated_evaluation,
    write_report_csv,
)
from .pipeline import (
    ClassHierarchy,
    DivergenceError,
    EntropyRanking,
    TaxoConfig,
    TaxoTrace,
    TrainConfig,
    baseline_ranking,
    class_entropy,
    confusion_matrix,
    load_hierarchy,
    predict_classes,
    rank_classes,
    run_baseline,
    run_hierarchy_pretrain,
    run_shuffle_pretrain,
    run_taxo,
    taxo_pretrain,
    train_model,
)
from .rnn import (
    SequenceClassifier,
    attention_pool,
    gru_step,
    init_params,
    load_checkpoint,
    lstm_step,
    model_backward,
    model_forward,
    save_checkpoint,
    transfer_recurrent_weights,
)

__all__ = [
    "AggregateReport", "ClassHierarchy", "Dataset", "DatasetError",
    "DivergenceError", "EntropyRanking", "RunReport", "SequenceClassifier",
    "TaxoConfig", "TaxoTrace", "TimeSeriesSample", "TrainConfig",
    "accuracy", "attention_pool", "baseline_ranking", "class_entropy",
    "class_weights", "confusion_matrix", "f_measure", "gru_step",
    "init_params", "load_checkpoint", "load_dataset", "load_hierarchy",
    "lstm_step", "make_binary_shuffle_task", "model_backward",
    "model_forward", "pad_batch", "per_class_f_measure", "predict_classes",
    "rank_classes", "read_report_csv", "remap_labels_for_level",
    "repeated_evaluation", "run_baseline", "run_hierarchy_pretrain",
    "run_shuffle_pretrain", "run_taxo", "save_checkpoint",
    "shuffle_timesteps", "split", "taxo_pretrain", "train_model",
    "transfer_recurrent_weights", "write_report_csv",
]
