"""Privacy-preserving covariate-adjusted survival curves on distributed data.

Parties share only dimensionality-reduced representations of their
covariates; an analyst fuses them through a shared anchor, estimates
propensity scores, caliper-matches and runs Kaplan-Meier per arm.
"""

from .anchor import AnchorDataset, generate_anchor, slice_anchor
from .collab import (CollabRepresentation, CollabTransform, build_collab_representation,
                     build_collab_transforms, pseudoinverse, truncated_svd)
from .data import (CsvSchema, Dataset, Outcomes, PartitionScheme, PartyBlock, load_csv,
                   partition, reassemble)
from .matching import MatchConfig, MatchedSet, caliper_match, matched_sample_size
from .metrics import BalanceReport, gap, inconsistency, masmd, smd
from .pipeline import (ExperimentConfig, MethodResult, ReportTable, run_ca, run_dcqe,
                       run_experiment, run_la, run_lmca)
from .propensity import LogisticModel, PropensityScores, fit_logistic, logit, score
from .reduce import IntermediateRep, ReducerModel, apply_reducer, fit_reducer
from .survival import SurvivalCurve, eval_step, kaplan_meier, km_by_group
from .synth import SynthConfig

__version__ = "0.1.0"
