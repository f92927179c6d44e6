"""Knowledge-graph-driven automatic modulation classification.

Synthesizes labeled I/Q modulation frames, embeds a modulation knowledge
graph with a relational graph network, trains a multi-scale signal
network under a joint metric loss so signal features aggregate around
semantic anchors, and evaluates accuracy and feature-space separation.
"""

__version__ = "0.1.0"

from .dataio import Dataset, read_dataset, split, write_dataset
from .errors import KgamcError
from .evaluation import EvalReport, accuracy_by_snr, cluster_metrics, confusion_matrix, evaluate
from .loss import LossBreakdown, anchor_penalty, ce_loss, joint_loss, npair_loss
from .mkg import (
    HeteroGraph,
    NodeType,
    RelationType,
    Triple,
    anchors,
    build_graph,
    init_node_features,
    load_default_graph,
    parse_triples,
    validate_ontology,
)
from .msnet import MsnetConfig, MsnetParams, classify, init_msnet_params, msnet_forward
from .rgcn import RgcnParams, hetero_layer, init_rgcn_params, rgcn_forward, sage_unit, semantic_anchors
from .sigsyn import (
    CLASSES,
    ModulationClass,
    SignalFrame,
    SynthConfig,
    add_awgn,
    constellation,
    modulate,
    rrc_taps,
    synth_dataset,
    to_iq_frame,
)
from .trainer import (
    ModelState,
    TrainConfig,
    TrainHistory,
    adam_step,
    infer,
    load_checkpoint,
    lr_schedule,
    save_checkpoint,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
