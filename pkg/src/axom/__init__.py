"""Tree-ensemble explanations with exact Shapley values and robustness metrics.

The package trains CART decision trees and bagged random forests from
scratch, computes exact per-tree Shapley explanations, combines weak
explanations by majority filtering (AXOM), and scores explanation
robustness on perturbation neighborhoods.
"""

from axom.datasets import Dataset, DatasetSchema, Split, load_csv, load_dataset, normalize, split
from axom.trees import (
    ForestModel,
    Leaf,
    SplitNode,
    TreeModel,
    fit_forest,
    fit_tree,
    grid_search_cv,
    predict_label,
    predict_proba,
)
from axom.shapley import (
    Explanation,
    LeafSignature,
    eval_masked,
    leaf_signature,
    shap_bruteforce,
    shap_fast,
    shap_forest,
)
from axom.majority import AxomExplanation, axom_explain, weak_mislabeling_rate
from axom.robustness import (
    Neighborhood,
    NeighborhoodSpec,
    RobustnessReport,
    evaluate_dataset,
    make_neighborhood,
    max_robustness,
    mean_robustness,
)
from axom.heatmaps import (
    HeatmapGrid,
    averaged_ratio_map,
    difference_map,
    embed_point,
    ratio_map,
    select_axes,
)
from axom.stats import TestResult, compare, normality_check

__version__ = "0.1.0"
