from .attack import (
    AttackInstance,
    build_attack_instances,
    instance_auc,
    run_attack,
)
from .mechanisms import (
    LaplaceMechanism,
    PrivacyConfig,
    PrivacyConfigError,
    clip_l2,
    laplace_noise,
    laplace_perturb,
)
