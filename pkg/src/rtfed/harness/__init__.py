from .tsne import tsne, perplexity_profile, analyze_layers
from .scenarios import (
    Scenario,
    MetricsRow,
    run_scenario,
    train_centralized,
    summarize,
    format_cell,
)

__all__ = [
    "tsne",
    "perplexity_profile",
    "analyze_layers",
    "Scenario",
    "MetricsRow",
    "run_scenario",
    "train_centralized",
    "summarize",
    "format_cell",
]
