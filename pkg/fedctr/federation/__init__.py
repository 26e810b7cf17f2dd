from .centralized import CentralizedModel
from .messages import (
    NO_CUTOFF,
    AggregatedEmbedding,
    DiscardTape,
    EmbeddingRequest,
    FedMessage,
    FrameError,
    LocalEmbedding,
    LocalGradient,
    MessageKind,
    PartyId,
    ProtocolError,
    Role,
    UserGradient,
    decode_frame,
    encode_frame,
    make_request_id,
)
from .options import FailurePolicy, FederationOptions, FederationOptionsError
from .orchestrator import Federation, build_models, fit_config
from .parties import AdPlatform, BehaviorPlatform, UserServer
from .runner import EpochRecord, Runner, TrainingHistory
from .tape_cache import TapeCache
from .transport import (
    AuditReport,
    DeliveryError,
    DeliveryReceipt,
    InProcessTransport,
    MessageLogEntry,
    RecordingTransport,
    UnknownPartyError,
    audit_privacy_boundary,
)
