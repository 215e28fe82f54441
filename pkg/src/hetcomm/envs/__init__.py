from .base import EnvStepResult
from .scenarios import ScenarioConfig, builtin_scenarios, load_scenario
from .battle import BattleEnv
from .toy import SignalGameEnv, TwoStateMdpEnv, signal_game_optimal_returns, two_state_optimal_q


def make_env(scenario, **kwargs):
    """Build an environment from a builtin scenario id, a scenario file
    path, or a ScenarioConfig instance."""
    if scenario == "signal":
        return SignalGameEnv(**kwargs)
    if scenario == "two_state":
        return TwoStateMdpEnv(**kwargs)
    if isinstance(scenario, ScenarioConfig):
        return BattleEnv(scenario, **kwargs)
    return BattleEnv(load_scenario(scenario), **kwargs)


__all__ = [
    "EnvStepResult",
    "ScenarioConfig",
    "builtin_scenarios",
    "load_scenario",
    "BattleEnv",
    "SignalGameEnv",
    "TwoStateMdpEnv",
    "signal_game_optimal_returns",
    "two_state_optimal_q",
    "make_env",
]
