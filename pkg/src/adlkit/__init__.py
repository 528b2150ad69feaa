"""Randomized compression estimators for two-layer networks.

Bit-exact framed codecs, variance-certified sketch/memorizer estimators,
expected-length accounting, shattering lower-bound constructions, and a
statistical verification harness tying every declared contract to a
Monte Carlo or exact-enumeration check.
"""

from .bitcodec import (
    BitString,
    BitWriter,
    FramedMessage,
    SymbolReader,
    decode_fixed,
    decode_gamma,
    decode_signed,
    encode_fixed,
    encode_gamma,
    encode_signed,
    frame,
    gamma_length,
    signed_length,
)
from .errors import (
    AdlError,
    DecodeError,
    DimensionMismatch,
    EnumerationTooLarge,
    InfeasibleInstance,
    RestrictionError,
)
from .estimators import (
    H1Data,
    H1Estimate,
    NeuronRealization,
    RMFRealization,
    ScalarEstimator,
    SqueezerRealization,
    compute_h1_values,
    estimator_sum,
    h1_compress,
    h1_reference,
    neuron_decode,
    neuron_encode,
    neuron_eval,
    neuron_sample,
    residual_bound,
    rmf_decode,
    rmf_encode,
    rmf_entry_outcomes,
    rmf_make,
    squeezer_decode,
    squeezer_encode,
    squeezer_eval,
    squeezer_sample,
)
from .exact import ENUMERATION_CAP, count_mean_outcomes, iter_mean_outcomes
from .harness import (
    ExactReport,
    MCReport,
    concentration_suite,
    enumerate_exact,
    mc_contract,
    run_suite,
)
from .model import (
    Activation,
    EstimatorContract,
    HypoParams,
    Hypothesis,
    SampleSet,
    ValidityReport,
    activation_by_name,
    ceil_log2_int,
    ceil_log2_plus,
    derive_rng,
    eval_network,
    identity,
    relu,
    validate,
)
from .network import (
    BoundReport,
    NetworkRealization,
    NeuronPick,
    UnitEstimatorBundle,
    adl_bound,
    bound_report,
    coefficient_outcomes,
    gen_bound,
    network_decode,
    network_encode,
    network_eval,
    network_sample,
    network_unit_estimator,
    network_variance_bound,
    neuron_probs,
)
from .shatter import (
    LipschitzExtension,
    SeparationReport,
    ShatterCandidate,
    ShatterInstance,
    build_extension,
    build_instance,
    check_separation,
    class_membership,
    eval_extension,
    instance_from_jsonable,
    sample_candidate,
    verify_lipschitz,
    verify_shatter,
)
from .sketch import (
    AveragedSketch,
    SketchConfig,
    SketchSample,
    sketch_avg,
    sketch_contract,
    sketch_decode,
    sketch_encode,
    sketch_once,
)

__version__ = "0.1.0"
