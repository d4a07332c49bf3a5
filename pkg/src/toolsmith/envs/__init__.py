"""Two-phase tool manipulation tasks."""

from .base import (
    CONTROL,
    DESIGN,
    Observation,
    ProtocolError,
    StepResult,
    TaskConfig,
    ToolTaskEnv,
    TradeoffConfig,
    default_config,
    dump_task_config,
    format_trace_record,
    load_task_config,
    make_env,
    parse_task_config,
    tradeoff_reward,
)

TASKS = ("push", "catch", "scoop")

__all__ = [
    "CONTROL",
    "DESIGN",
    "Observation",
    "ProtocolError",
    "StepResult",
    "TASKS",
    "TaskConfig",
    "ToolTaskEnv",
    "TradeoffConfig",
    "default_config",
    "dump_task_config",
    "format_trace_record",
    "load_task_config",
    "make_env",
    "parse_task_config",
    "tradeoff_reward",
]
