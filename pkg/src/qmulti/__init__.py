"""Multi-outcome observables and instruments on finite-dimensional Hilbert spaces."""

from .errors import (DimensionError, MeasurementMismatchError, NotApplicableError,
                     NotHermitianError, NotPSDError, NotSurjectiveError, QMultiError,
                     StructureError, ValidationError, VanishingDistributionError)
from .instruments import (Instrument, JointInstrumentReport, Operation, apply,
                          conditioned_observable, construct_holevo, construct_kraus,
                          construct_luders, dual_apply, instrument_deviation,
                          instrument_distribution, instrument_marginal, instrument_part,
                          measured_observable, operation_deviation, reduced_instrument,
                          seq_product_observables, sequential_instruments,
                          tensor_instruments, validate_instrument,
                          verify_instrument_product_structure, verify_joint_instrument)
from .linalg import (DEFAULT_TOL, jacobi_eigh, kron, partial_trace, psd_sqrt,
                     validate_effect)
from .observables import (JointReport, Observable, ProductStructureReport, State,
                          commuting_joint, distribution, identity_observable_check,
                          luders_sequential, marginal, observable_deviation, part,
                          reduced_observable, tensor_observables, validate_observable,
                          verify_joint, verify_product_structure)
from .outcomes import OutcomeMap, OutcomeSpace, ProductCheck, check_product_structure
from .sampling import SampleSummary, sample_trajectories, sample_trajectory, uniforms
from .scenario import Report, ScenarioError, parse_scenario, run_scenario
from .serialize import from_document, to_document


__all__ = [
    "DimensionError",
    "MeasurementMismatchError",
    "NotApplicableError",
    "NotHermitianError",
    "NotPSDError",
    "NotSurjectiveError",
    "QMultiError",
    "StructureError",
    "ValidationError",
    "VanishingDistributionError",
    "Instrument",
    "JointInstrumentReport",
    "Operation",
    "apply",
    "conditioned_observable",
    "construct_holevo",
    "construct_kraus",
    "construct_luders",
    "dual_apply",
    "instrument_deviation",
    "instrument_distribution",
    "instrument_marginal",
    "instrument_part",
    "measured_observable",
    "operation_deviation",
    "reduced_instrument",
    "seq_product_observables",
    "sequential_instruments",
    "tensor_instruments",
    "validate_instrument",
    "verify_instrument_product_structure",
    "verify_joint_instrument",
    "DEFAULT_TOL",
    "jacobi_eigh",
    "kron",
    "partial_trace",
    "psd_sqrt",
    "validate_effect",
    "JointReport",
    "Observable",
    "ProductStructureReport",
    "State",
    "commuting_joint",
    "distribution",
    "identity_observable_check",
    "luders_sequential",
    "marginal",
    "observable_deviation",
    "part",
    "reduced_observable",
    "tensor_observables",
    "validate_observable",
    "verify_joint",
    "verify_product_structure",
    "OutcomeMap",
    "OutcomeSpace",
    "ProductCheck",
    "check_product_structure",
    "SampleSummary",
    "sample_trajectories",
    "sample_trajectory",
    "uniforms",
    "Report",
    "ScenarioError",
    "parse_scenario",
    "run_scenario",
    "from_document",
    "to_document",
]

__version__ = "0.1.0"
