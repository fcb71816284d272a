"""Inference on partial coherence graphs of high-dimensional time series."""
from .coherence import (CoherencePair, DebiasedEstimate, beta_debiased, beta_debiased_from_sum,
                        beta_gamma_hat, coherence_hat, debias_accumulator, debiased_matrix,
                        partial_coherence_matrix, rho_debiased, rho_plugin)
from .errors import (ConvergenceFailure, DegenerateInverse, DegenerateSpectrum, EmptyGrid,
                     GenerationFailure, HDSpectralError, InfeasiblePenalty, InvalidBandwidth,
                     InvalidInput, InvalidLag, InvalidOrder, SingularTransfer)
from .inverse import (InverseEstimate, bic_path, clime_solve, complex_recover,
                      estimate_inverse_field, glasso_solve, real_embed, select_lambda_bic,
                      threshold_inverse)
from .pipeline import AnalysisResult, analyze
from .prewhiten import VarModel, apply_filter, fit_sparse_var, recolor_spectrum, transfer_function
from .simulation import (ExperimentConfig, ExperimentReport, VarmaModel, exact_dft_variance,
                         generate_sparse_varma, run_experiment, simulate_path, sparse_var1,
                         true_partial_coherence, true_spectral_density)
from .spectral import (BARTLETT, UNIFORM, KernelSpec, MultivariateSeries, SpectralField,
                       autocovariances, bandwidth_select, center_series, dft, fourier_dft,
                       kernel_fourier, lag_window_estimate, sample_autocov, smoothed_periodogram)
from .testing import (FrequencyGrid, MultiTestResult, PairStatistic, build_grid, fdr_threshold,
                      fdr_threshold_multiband, multiple_test, pair_statistic, single_test,
                      single_test_quantile, vhat_inverse)

__version__ = "0.1.0"
