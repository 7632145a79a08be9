"""feedsim: deterministic decision-stack simulator for short-video delivery.

Modules:
  core       economic layer (QoP vectors, impact table, profit gate)
  playback   client session simulator and decision functions
  cdn        multi-vendor billing, scheduling, caching, peak staggering
  delivery   ladder-subset delivery and the time-series context service
  uiae       value prediction, windowed ladder updates, transcode allocation
  publish    encoding/upload/priority planners
  experiment evaluation harness (AB, interleaving, quasi-experiment)
  workload   synthetic catalog/population/waveform generators
  cli        scenario runner
"""

__version__ = "0.1.0"
