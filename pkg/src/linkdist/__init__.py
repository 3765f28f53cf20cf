"""Edge-distilled node classification laboratory.

Train a forked MLP by iterating over graph edges, supervising both
endpoints and pulling their cross predictions together; deploy it with or
without neighbor aggregation.  Ships with plain MLP / GCN /
teacher-student baselines, a seeded multi-run evaluation protocol, and a
finite-difference gradient oracle over the whole layer zoo.
"""

from .evaluation import (
    ExperimentSummary,
    RunResult,
    accuracy,
    results_table,
    run_experiment,
    run_experiment_paired,
    select_run,
)
from .graph import (
    Graph,
    SplitMasks,
    TrainView,
    alpha_schedule,
    average_degree,
    build_train_view,
    class_weights,
    epoch_budget,
    generate_sbm,
    load_container,
    make_full_split,
    make_semi_split,
    normalized_adjacency,
    sample_negative_pairs,
    save_container,
)
from .models import (
    ForkedMLP,
    GCNModel,
    MLPModel,
    load_snapshot,
    predict_mlp_mode,
    predict_mp_mode,
    save_snapshot,
)
from .nn import (
    InterLayerBlock,
    Linear,
    Param,
    adam_step,
    grad_check,
    make_rng,
    mse,
    one_hot,
    softmax_rows,
    weighted_cross_entropy,
)
from .training import (
    LossReport,
    TrainConfig,
    colinkdist_epoch,
    gcn2mlp_distill,
    linkdist_epoch,
    run_training,
    train_supervised,
    weighted_ce_epoch,
)
from .verify import gradcheck_suite

__version__ = "0.1.0"
