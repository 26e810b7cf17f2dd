from .metrics import MetricError, auc, auc_pairwise, average_precision
from .options import ConfigError, ExperimentConfig
from .report import EvalReport, read_report, write_report, write_table
from .experiments import (
    AblationResult,
    PreparedData,
    apply_behavior_fraction,
    attack_federation,
    build_federation,
    load_data,
    prepare_data,
    run_ablation_behavior,
    run_ablation_noise,
    run_ablation_platforms,
    run_ablation_train_fraction,
    run_ablation_variants,
    run_experiment,
    run_repeated,
    variant_grid,
)
from .plotting import (
    non_gui_backend,
    plot_noise_tradeoff,
    plot_platform_ablation,
    plot_variant_comparison,
)
