from .config import ConfigError, ExperimentConfig, load_config, paper_config, parse_config_text, toy_config
from .checkpoint import CheckpointError, load_branch, load_checkpoint, load_into, save_checkpoint
from .synth import SynthSpec, synth_generate, synth_states
from .experiment import (
    build_segments,
    evaluate,
    run_eval,
    run_finetune,
    run_pretrain,
    split_segments,
    train_model,
)
from .ablation import SUITES, AblationTable, run_ablation
