"""autokernel: a model-centric autopilot agent kernel.

Subsystems: the reasoning loop (`kernel`), the sandboxed plan runtime
(`planlang`), the policy gateway (`policy`), multi-granularity memory
(`memory`), web perception (`web`), file perception (`files`), and the HTTP
gateway (`gateway`).
"""

__version__ = "0.1.0"
