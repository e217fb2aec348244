"""daft: attribute-factored world models for multi-object control.

The package is organized around one pipeline:

  core        class system, template / pattern / dynamic graphs, grounding
  envs        symbolic push & switch environments with known ground truth
  nn          numpy-backed reverse-mode autodiff and the layer set
  template    stage 1: per-class template graphs + dynamics/reward models
  binding     stage 2.1: soft-attention action binding
  interaction stage 2.2: dynamic interaction graphs, patterns, latents
  planner     stages 3-4: imagination rollouts, MPC, evaluation, adaptation
  cli         experiment harness (`daft` command)
"""

__version__ = "0.1.0"
