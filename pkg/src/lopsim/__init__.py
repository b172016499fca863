"""Simulation and calibration toolkit for programmable photonic interferometers."""

from lopsim.fock import (
    FockBasis,
    FockState,
    ModeUnitary,
    OutputDistribution,
    enumerate_basis,
    output_amplitude,
    distinguishable_probability,
    permanent,
    sample,
    strong_simulate,
)
from lopsim.sources import (
    LabeledInput,
    NoisyDistribution,
    SourceModel,
    build_input,
    hom_experiment,
    ms_correction,
    noisy_simulate,
)
from lopsim.mesh import (
    CompilationResult,
    MeshLayout,
    MeshPhases,
    PhotonicCircuit,
    clements_decompose,
    compile_with_imperfections,
    fidelity,
    gauge_fidelity,
)
from lopsim.hardware import (
    HardwareModel,
    TranspilationError,
    benchmark_tvd,
    calibrate,
    phases_from_voltages,
    voltages_from_phases,
)
from lopsim.qubits import (
    GateCircuit,
    PostselectionRule,
    QubitEncoding,
    compile_gate_circuit,
    ghz_factory,
    ghz_fidelity,
    pauli_expectation,
    pauli_measurement_setting,
)
from lopsim.benchmark import (
    AlphaCoefficients,
    BenchmarkPlan,
    FidelityEstimate,
    alpha_coefficients,
    build_plan,
    estimate_favg,
    photonic_executor,
    spam_floor,
)
from lopsim.variational import (
    MitigationMatrix,
    PhotonicVqeBackend,
    QubitHamiltonian,
    VqeConfig,
    VqeResult,
    apply_mitigation,
    bond_table,
    build_mitigation,
    exact_ground_energy,
    h2_hamiltonian,
    measure_energy,
    reference_mitigation,
    vqe_run,
)
from lopsim.qnn import (
    ClassifierModel,
    QnnConfig,
    load_iris_dataset,
    qnn_forward,
    qnn_predict,
    qnn_train,
)

__version__ = "0.1.0"
