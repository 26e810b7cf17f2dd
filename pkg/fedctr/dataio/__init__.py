from .pretrained import (
    apply_pretrained_embeddings,
    load_pretrained_embeddings,
    read_word_vectors,
)
from .records import (
    AdRecord,
    BehaviorRecord,
    Dataset,
    DatasetError,
    PlatformBehaviors,
    TrainingSample,
)
from .split import chronological_split, subsample
from .storage import load_dataset, save_dataset
from .synthetic import SyntheticSpec, generate_synthetic
from .vocab import OOV_ID, PAD_ID, Vocab, tokenize
