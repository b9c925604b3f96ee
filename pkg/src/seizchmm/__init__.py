"""Coupled hidden Markov model for seizure detection in multichannel EEG.

Seizure activity spreads along an electrode coupling graph: each channel
carries a three-state progression chain whose onset and offset odds are
logistic in the number of coupled channels that were seizing one frame
earlier.  Inference runs a structured variational EM with per-chain
forward-backward (compiled kernel when available, pure Python otherwise).
"""

from ._backend import FB_BACKEND
from .baselines import (
    GmmClassifier,
    LogRegClassifier,
    gmm_posterior,
    logreg_posterior,
    train_gmm_classifier,
    train_logreg,
)
from .errors import InputError, NumericalError
from .features import (
    FeatureSeries,
    Recording,
    band_power_features,
    bandpass_filter,
    extract_features,
    log_line_length,
    notch_filter,
)
from .inference import (
    EStepResult,
    PosteriorStats,
    VariationalChains,
    forward_backward,
    free_energy,
    mixture_responsibilities,
    run_estep,
    set_data_weights,
    update_chain_transitions,
)
from .learning import (
    EmConfig,
    EmResult,
    fit_transition_params,
    init_from_annotations,
    run_em,
    transition_design,
    update_emission_params,
)
from .metrics import FrameLabels, auc, frame_labels, kfold_split, weighted_rates
from .model import (
    ChmmModel,
    EmissionModel,
    StateSequences,
    TransitionParams,
    count_seizure_aunts,
    emission_loglik,
    joint_loglik,
    load_model,
    onset_offset_probs,
    sample_recording,
    save_model,
    transition_matrix,
)
from .montage import (
    MontageGraph,
    aunts,
    build_standard_montage,
    load_montage,
    serialize_montage,
)

__version__ = "0.1.0"
