"""qefilt: quantization error feedback for distributed graph filters.

Design closed-form diagonal feedback weights for FIR/ARMA graph filters on
fixed or randomly failing topologies, predict the quantization noise power
analytically, and verify the predictions with a seeded Monte Carlo harness.
"""
from ._backend import BACKEND_NAME, HAVE_COMPILED, get_backend
from .design import (Gramian, KernelTensor, NoisePrediction, SourceNoise,
                     design_arma_feedback, design_arma_feedback_res,
                     design_feedback, design_fir_feedback, design_fir_feedback_res,
                     expected_fir_tail_gram, expected_sms, feedback_gradient,
                     fir_tail_gram, kernel_tensor, noise_power_objective,
                     observability_gramian, predict_arma_noise,
                     predict_arma_noise_res, predict_fir_noise,
                     predict_fir_noise_res, predict_noise, stochastic_gramian)
from .errors import (ConnectivityError, ConvergenceError, GraphFormatError,
                     GraphValidationError, QefiltError, ScenarioError, StabilityError)
from .filters import (ArmaFilter, ExecutionTrace, FeedbackMode, FeedbackPlan,
                      FirFilter, arma1, design_lowpass_fir, run_arma_exact,
                      run_arma_noise_driven, run_arma_quantized, run_fir_exact,
                      run_fir_noise_driven, run_fir_quantized, spectral_response)
from .graphs import (Graph, ResModel, ShiftKind, ShiftOperator, Spectrum,
                     build_shift, custom_shift, generate_sensor_graph, load_graph,
                     mean_shift, sample_res, save_graph, spectral_decompose)
from .quantizers import QuantizationResult, QuantizerConfig, noise_variance, quantize

__version__ = "0.1.0"
