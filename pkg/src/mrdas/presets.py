"""Named experiment configurations, one per reproduced figure."""

from __future__ import annotations

from .config import ExperimentConfig

_PRESETS = {
    # CAS with non-cooperative detectors vs three-BS CoMP
    "fig5": dict(modes=("CAS", "CoMP-CAS"), detectors=("ML", "MMSE-OSIC", "PDA", "SC-PDA", "PDA-joint"),
                 tx_power_dbm=(20.0, 30.0)),
    # best direction, FFR-DAS detectors vs MR-aided SC-PDA
    "fig6": dict(modes=("FFR-DAS", "MR-FFR-DAS"), detectors=("ML", "MMSE-OSIC", "PDA", "SC-PDA"),
                 directions=("best",), rho=(0.0, 0.5, 1.0)),
    # best direction, MR selection strategies
    "fig7": dict(modes=("MR-FFR-DAS",), detectors=("SC-PDA", "PDA"), directions=("best",),
                 mr_strategy=("close_to_ms", "reliable_area")),
    # worst direction, BER: FFR-DAS baselines and both MR strategies
    "fig8a": dict(modes=("FFR-DAS", "MR-FFR-DAS"), detectors=("ML", "MMSE-OSIC", "PDA", "SC-PDA"),
                  directions=("worst",), mr_strategy=("close_to_ms", "reliable_area")),
    # worst direction, effective throughput of the MR strategies
    "fig8b": dict(modes=("MR-FFR-DAS",), detectors=("SC-PDA", "PDA"), directions=("worst",),
                  mr_strategy=("close_to_ms", "reliable_area")),
    # pathloss-only SIR with and without power control
    "fig9": dict(kind="sir", directions=("best", "worst"), power_control=(False, True)),
    # BER/throughput with power control
    "fig10": dict(modes=("FFR-DAS", "MR-FFR-DAS"), detectors=("PDA", "SC-PDA"),
                  directions=("best", "worst"), mr_strategy=("reliable_area",),
                  power_control=(True,)),
    # QoS map over the observation sector
    "fig11": dict(kind="qos", power_control=(True,)),
    # CoMP-CAS versus MR-FFR-DAS, both with SC-PDA
    "fig12": dict(modes=("CoMP-CAS", "MR-FFR-DAS"), detectors=("SC-PDA",), directions=("best",),
                  mr_strategy=("reliable_area",)),
}

# reduced budgets for quick full-suite runs
DESK_BUDGET = dict(min_bits=20_000, min_errors=20, max_bits=40_000, batch_trials=4,
                   sir_trials=300)


def preset_names() -> list[str]:
    return list(_PRESETS)


def preset(name: str, desk: bool = False) -> ExperimentConfig:
    try:
        kw = dict(_PRESETS[name])
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(_PRESETS)}") from None
    if desk:
        kw.update(DESK_BUDGET)
    return ExperimentConfig(preset=name, **kw)
