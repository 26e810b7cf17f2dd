from . import dataio, models, nnkit, privacy
from .about import version_dict, version_table
from .dataio import (
    AdRecord,
    BehaviorRecord,
    Dataset,
    SyntheticSpec,
    TrainingSample,
    generate_synthetic,
    load_dataset,
    save_dataset,
)
from .evaluation import (
    EvalReport,
    ExperimentConfig,
    auc,
    average_precision,
    non_gui_backend,
    run_experiment,
)
from .federation import (
    CentralizedModel,
    Federation,
    FederationOptions,
    InProcessTransport,
    RecordingTransport,
    audit_privacy_boundary,
)
from .models import ModelConfig
from .privacy import PrivacyConfig
from .version import __git_revision__, __version__
