"""forgetbench: benchmark harness comparing machine-unlearning methods.

Six unlearning procedures (retrain, ssd, teacher, scrub, unsir, mislabel)
behind one interface, the matching metric suite (relative accuracies, ZRF,
MIA, wall time), and a config-driven runner that persists records and emits
comparison tables.
"""

from .data import (
    DataPartition,
    ForgetSplit,
    LabeledExample,
    Scenario,
    UnknownDatasetError,
    available_datasets,
    load_dataset,
    make_full_class_split,
    make_random_split,
    make_subclass_split,
)
from .harness import (
    ExperimentConfig,
    ExperimentError,
    ExperimentRecord,
    ScenarioSpec,
    SchemaVersionError,
    load_config_documents,
    load_config_file,
    load_records,
    persist_records,
    run_experiment,
    run_grid,
)
from .methods import (
    CONFIG_TYPES,
    METHOD_NAMES,
    MislabelConfig,
    ScenarioMismatchError,
    ScrubConfig,
    SSDConfig,
    TeacherConfig,
    UnlearnResult,
    UnsirConfig,
    incompetent_teacher,
    mislabel,
    optimize_error_noise,
    retrain,
    run_method,
    scrub,
    ssd,
    unsir,
)
from .metrics import (
    AttackDataset,
    MetricsReport,
    evaluate_all,
    js_divergence,
    kl_divergence,
    membership_attack,
    membership_attack_from_losses,
    mia_score,
    relative_accuracy,
    zrf,
)
from .models import (
    Architecture,
    ClassifierModel,
    FimDiagonal,
    TrainConfig,
    evaluate_accuracy,
    fim_diagonal,
    load_checkpoint,
    per_sample_losses,
    predict_distribution,
    predict_probabilities,
    random_init,
    save_checkpoint,
    train,
)
from .report import REPORT_COLUMNS, emit_report

__version__ = "0.1.0"
