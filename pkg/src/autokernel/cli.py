"""Command-line entry points: serve the gateway or run a scripted demo task."""

from __future__ import annotations

import json
import os

import click

from .decisions import ObservedState, StateFragment
from .kernel import Kernel, TaskContext
from .memory import MemoryStore
from .planlang import PlanRuntime
from .policy import RemotePolicy, ScriptedPolicy


@click.group()
def main():
    """Autopilot agent kernel."""


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8700, show_default=True)
@click.option("--storage", default="autokernel.db", show_default=True,
              help="sqlite path for the durable store")
@click.option("--memory", default=None, help="sqlite path for dialogue memory")
@click.option("--inference-endpoint", default=None,
              help="policy inference URL (defaults to $AUTOKERNEL_INFERENCE_URL)")
@click.option("--token", "tokens", multiple=True,
              help="bootstrap user as token:user_id (repeatable)")
def serve(host, port, storage, memory, inference_endpoint, tokens):
    """Run the HTTP gateway."""
    import uvicorn

    from .gateway import GatewayConfig, create_app

    endpoint = inference_endpoint or os.environ.get("AUTOKERNEL_INFERENCE_URL", "")
    users = dict(t.split(":", 1) for t in tokens)
    config = GatewayConfig(
        storage_path=storage,
        memory_path=memory,
        users=users,
        policy_factory=(lambda: RemotePolicy(endpoint=endpoint)) if endpoint else None,
    )
    uvicorn.run(create_app(config), host=host, port=port)


@main.command()
@click.argument("instruction")
@click.option("--script", type=click.Path(exists=True), required=True,
              help="scripted policy fixture (JSON with an 'entries' list)")
def demo(instruction, script):
    """Run one task against a scripted policy and print the trajectory."""
    policy = ScriptedPolicy.from_fixture(script)
    kernel = Kernel(plan_runtime=PlanRuntime(), memory_store=MemoryStore())
    ctx = TaskContext(instruction=instruction)
    state = ObservedState(components=[
        StateFragment(source="user_input", content=instruction, step_of_origin=0)
    ])
    result = kernel.run_task(ctx, state, policy)
    click.echo(f"status: {result.status}")
    click.echo(f"answer: {result.answer}")
    click.echo(json.dumps(result.trajectory.export(), indent=2))


if __name__ == "__main__":
    main()
