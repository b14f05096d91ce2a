"""Multi-perspective visual servoing: simulator, learning stack, benchmark.

A simulated eye-in-hand depth camera on a 6-DOF arm is driven to a goal
pose defined only by a desired image.  The package contains the dense-MLP
math core, arm kinematics, an analytic depth renderer, a depth-image
autoencoder, the goal-conditioned servoing environment, a TD3 agent with
hindsight relabeling and DVS-generated demonstrations, the classical
photometric servoing baseline, and a seeded evaluation bench.  The
``servo-rl`` command line drives the whole pipeline.
"""

__version__ = "0.1.0"
