"""Cluster-structured sparse signal recovery.

Classical iterative shrinkage (ISTA and its reweighted variant) next to
trainable unrolled networks whose thresholds are modulated per coordinate
by a learned reweighting block, plus everything around them: CSS data
synthesis, hand-derived backpropagation, Adam training, Monte Carlo NMSE
sweeps, and a digit-recovery pipeline.  See README.md for a tour; the
``cssrec`` command exposes the gen / train / sweep / mnist workflows.
"""

from .errors import (
    ConfigError,
    ContractError,
    ConvergenceError,
    NumericError,
    ParseError,
)
from .evaluate import (
    NMSE_FLOOR_DB,
    SolverAdapter,
    SweepCell,
    SweepResult,
    SweepSpec,
    export_adjacency,
    export_reconstruction_grid,
    ista_adapter,
    network_adapter,
    nmse_db,
    run_sweep,
    rwista_adapter,
    save_sweep_csv,
    save_sweep_json,
)
from .linalg import conv1d_same, lipschitz_constant, soft_threshold
from .mnist import DigitImage, load_idx_images, load_idx_labels, to_digit_vector
from .network import (
    ForwardTape,
    LayerGrads,
    LayerParams,
    NetworkParams,
    ReweightBlockParams,
    backward,
    forward,
    init_from_ista,
    load_checkpoint,
    reweight_block,
    save_checkpoint,
)
from .rng import derive_seed, example_seed, stream
from .solvers import (
    MeritFunction,
    SolverConfig,
    ista,
    ista_matrices,
    lasso_objective,
    reweight,
    rwista,
)
from .synth import (
    CssSignal,
    DatasetSpec,
    Measurement,
    SensingMatrix,
    dataset_arrays,
    gen_css_signal,
    gen_sensing_matrix,
    load_dataset,
    make_dataset,
    save_dataset,
    support_runs,
    synthesize,
)
from .training import (
    AdamState,
    TrainConfig,
    TrainState,
    adam_step,
    loss_mse,
    train,
)

__version__ = "0.1.0"
