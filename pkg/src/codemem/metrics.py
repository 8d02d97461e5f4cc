"""Context-cost accounting and phase-timing decomposition over trajectories.

Two cost models are implemented over the same recorded events:

* react — every step re-reads the prompt plus all accumulated history and
  pays for that step's tool output, so cost grows with step count and
  payload size.
* codemem — cost is prompt + LLM-authored code + visible results only;
  payloads that stay inside the sandbox never appear in any term.

The token estimator is ceil(chars / 4): model-agnostic and reproducible.
Pass a different callable as ``tokenizer`` for exact counts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .errors import CodeMemError
from .trajectory import Trajectory

Tokenizer = Callable[[str], int]


class EmptyTrajectory(CodeMemError):
    pass


def estimate_tokens(text: str) -> int:
    return (len(text) + 3) // 4


@dataclass(frozen=True)
class ContextCost:
    mode: str  # react | codemem
    s_prompt: int
    s_history: int
    s_tool_outputs: tuple[int, ...]
    s_code_block: int
    s_final_result: int
    n_steps: int
    total: int

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "s_prompt": self.s_prompt,
            "s_history": self.s_history,
            "s_tool_outputs": list(self.s_tool_outputs),
            "s_code_block": self.s_code_block,
            "s_final_result": self.s_final_result,
            "n_steps": self.n_steps,
            "total": self.total,
        }


@dataclass(frozen=True)
class PhaseTimings:
    t_plan: float
    t_write_code: float
    t_debug: float
    t_execute: float

    @property
    def t_task(self) -> float:
        return self.t_plan + self.t_write_code + self.t_debug + self.t_execute

    def to_dict(self) -> dict:
        return {
            "t_plan": self.t_plan,
            "t_write_code": self.t_write_code,
            "t_debug": self.t_debug,
            "t_execute": self.t_execute,
            "t_task": self.t_task,
        }


@dataclass
class _Step:
    """One assistant action plus the visible outputs it provoked."""

    action_payload: dict
    action_tokens: int
    history_tokens: int
    output_tokens: int = 0


def _walk_steps(trajectory: Trajectory, tokenizer: Tokenizer) -> list[_Step]:
    steps: list[_Step] = []
    history = 0
    for event in trajectory.events:
        text = event.visible_text
        tokens = tokenizer(text) if text else 0
        if event.kind == "assistant_action":
            steps.append(
                _Step(
                    action_payload=event.payload,
                    action_tokens=tokens,
                    history_tokens=history,
                )
            )
        elif event.kind != "user_message" and steps and tokens:
            # Tool output attributed to the step that provoked it. User
            # replies are context growth, not tool output; history absorbs
            # them for subsequent steps either way.
            steps[-1].output_tokens += tokens
        history += tokens
    return steps


def context_cost(
    trajectory: Trajectory, mode: str, tokenizer: Tokenizer = estimate_tokens
) -> ContextCost:
    if not trajectory.events:
        raise EmptyTrajectory(f"session {trajectory.session_id!r} has no events")
    if mode not in ("react", "codemem"):
        raise ValueError(f"unknown cost mode {mode!r}")
    s_prompt = tokenizer(trajectory.system_prompt)
    steps = _walk_steps(trajectory, tokenizer)

    if mode == "react":
        outputs = tuple(s.output_tokens for s in steps)
        history_sum = sum(s.history_tokens for s in steps)
        total = len(steps) * s_prompt + history_sum + sum(outputs)
        return ContextCost(
            mode="react",
            s_prompt=s_prompt,
            s_history=history_sum,
            s_tool_outputs=outputs,
            s_code_block=0,
            s_final_result=0,
            n_steps=len(steps),
            total=total,
        )

    code_tokens = 0
    for step in steps:
        payload = step.action_payload
        if payload.get("kind") == "tool_call" and payload.get("tool") == "execute_code":
            code_tokens += tokenizer(str((payload.get("args") or {}).get("source", "")))
    final_tokens = 0
    for event in trajectory.events:
        if event.kind == "execution_result" and event.visible_text:
            final_tokens += tokenizer(event.visible_text)
        elif event.kind == "assistant_action" and event.payload.get("kind") == "final":
            final_tokens += tokenizer(event.payload.get("text") or "")
    total = s_prompt + code_tokens + final_tokens
    return ContextCost(
        mode="codemem",
        s_prompt=s_prompt,
        s_history=0,
        s_tool_outputs=(),
        s_code_block=code_tokens,
        s_final_result=final_tokens,
        n_steps=len(steps),
        total=total,
    )


def phase_timings(trajectory: Trajectory) -> PhaseTimings:
    """Attribute driver latency and sandbox wall time to task phases.

    Driver-call durations count as debugging while the most recent execution
    failed, as planning before any code has been issued, and as code-writing
    otherwise; sandbox wall time is execution. The paper names the phases
    without defining boundaries, so the classification is timestamp order.
    """
    events = trajectory.events
    if not events:
        raise EmptyTrajectory(f"session {trajectory.session_id!r} has no events")
    t_plan = t_write = t_debug = t_execute = 0.0
    seen_execute_action = False
    last_execution_failed = False
    for event in events:
        if event.kind == "assistant_action":
            duration = float(event.payload.get("duration_s", 0.0))
            is_execute = (
                event.payload.get("kind") == "tool_call"
                and event.payload.get("tool") == "execute_code"
            )
            if last_execution_failed:
                t_debug += duration
            elif not seen_execute_action and not is_execute:
                t_plan += duration
            else:
                t_write += duration
            if is_execute:
                seen_execute_action = True
        elif event.kind == "execution_result":
            t_execute += float(event.payload.get("wall_time", 0.0))
            last_execution_failed = event.payload.get("exit_status") != "success"
    return PhaseTimings(t_plan=t_plan, t_write_code=t_write, t_debug=t_debug, t_execute=t_execute)


def trajectory_tokens(trajectory: Trajectory, tokenizer: Tokenizer = estimate_tokens) -> int:
    """Total estimated tokens that crossed the LLM boundary for a session."""
    total = tokenizer(trajectory.system_prompt)
    for event in trajectory.events:
        text = event.visible_text
        if text:
            total += tokenizer(text)
    return total
