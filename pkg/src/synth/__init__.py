"""
Synthetic multi-environment workloads with known ground-truth operator cost laws
"""

from .bench import (
    DEFAULT_COEFFICIENTS,
    SynthEnvironment,
    SynthTable,
    SynthWorkloadSpec,
    gen_environment,
    gen_plans,
    generate_workload,
    load_spec,
    write_workload,
)
