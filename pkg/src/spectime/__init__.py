"""Specified-time distributed optimization over sampled-data networks.

The package simulates multi-agent resource allocation where n agents,
each holding one scalar decision variable, minimize a sum of strongly
convex per-agent costs subject to a global equality constraint. Agents
communicate only at discrete sampling instants. With a sampling
schedule whose intervals sum to a chosen settling time T_c, the
iterates reach the constrained optimum at exactly T_c regardless of
initial conditions or graph parameters.

Layout:

* ``graph``: directed topologies, Laplacians, and the lifted operators
  driving the gradient-observer update.
* ``objective``: per-agent costs, curvature constants, and the
  equal-marginal-cost optimum oracle.
* ``schedule``: sampling-instant sequences (basel, truncated, power).
* ``protocol_directed``: observer-based iteration for directed graphs,
  with step bound, Lyapunov weight, and rate certificates.
* ``protocol_undirected``: reduced-order iteration for undirected
  graphs.
* ``simulator``: runs a protocol over a schedule, reconstructs the
  continuous-time trajectory, and checks certificates.
* ``cli`` / ``report``: scenario files, trace/summary emission, and
  figure rendering.
"""

__version__ = "0.1.0"
