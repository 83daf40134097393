"""Joint small-area estimation for mixed Gaussian and binomial survey data."""

from .data_model import (
    AreaSet,
    EmptyPopulationError,
    PopulationFrame,
    PoststratCell,
    SchemaError,
    TransformMeta,
    UnitRecord,
    build_design_matrices,
    derive_poverty,
    ingest_population,
    transform_income,
)
from .design import (
    DesignSample,
    draw_design_sample,
    ht_area_estimates,
    ht_interval,
    inclusion_probabilities,
    scale_weights,
    size_measure,
    systematic_pps_sample,
)
from .gibbs import (
    BinomialUnivariateSampler,
    GaussianUnivariateSampler,
    ModelChain,
    MultitypeSampler,
    Priors,
    fit_binomial_univariate,
    fit_gaussian_univariate,
    fit_multitype,
    sample_gaussian_precision,
)
from .harness import (
    RunConfig,
    SyntheticSpec,
    compute_truths,
    derive_seed,
    run_simulation,
    synthesize_population,
)
from .metrics import (
    SimulationReport,
    aggregate_report,
    area_mse,
    coverage_rate,
    interval_score,
    ratio_to_ht,
)
from .pg import PGParams, draw_pg, pg_mean, sample_pg
from .poststrat import (
    AreaDraws,
    AreaEstimate,
    binomial_poststrat,
    gaussian_poststrat,
    gaussian_poststrat_aggregate,
    load_cells,
    summarize,
)
from .spatial_basis import BasisMatrix, adjacency_eigenbasis, area_design_rows

__version__ = "0.1.0"
