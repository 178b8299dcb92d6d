"""Runtime-behavior reasoning evaluation harness.

Adapts executable code benchmarks into four runtime reasoning tasks
(coverage, program state, execution path, output prediction), evaluates
model backends on them, and scores per-task accuracy plus the
incremental-consistency of answers across the task chain.
"""

__version__ = "0.1.0"
