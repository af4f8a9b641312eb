"""trisleep: trimodal (audio/ECG/IMU) sleep-wake classification at desk scale.

Stream synchronization, a from-scratch transformer with alternating self and
cross attention, span-mask pretraining, binary-classification metrics, and a
seeded experiment harness with a synthetic benchmark.
"""

__version__ = "0.1.0"
