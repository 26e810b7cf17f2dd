from .gradcheck import GradCheckError, check_gradients, grad_check
from .init import (
    attentive_pooling_layer,
    dense_layer,
    embedding_layer,
    position_layer,
    self_attention_layer,
)
from .layers import (
    add_position_embeddings,
    add_position_embeddings_backward,
    attentive_pooling,
    attentive_pooling_backward,
    dense,
    dense_backward,
    dropout,
    dropout_backward,
    embed_lookup,
    embed_lookup_backward,
    multi_head_self_attention,
    multi_head_self_attention_backward,
    softmax_backward,
)
from .params import LayerKind, LayerParams, ShapeError, TokenIndexError
from .tape import ForwardTape, TapeCursor, TapeError, TapeRecord, seed_sequence
