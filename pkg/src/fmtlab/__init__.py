"""fmtlab: depth-n theories of finite ordered structures, composition over
ordered sums, local/sparse theory distortions, and a reproducible random
graph-with-order laboratory."""

from .structures import (DEFAULT_GROWTH, FGrowth, GRAPH_ORDER, INF, Structure,
                         StructureError, System, Vocabulary, empty_structure,
                         graph_order_structure, lift_to_system, load_structure,
                         neighborhood, order_structure, ordered_sum, restrict,
                         save_structure, structure_from_json, structure_to_json,
                         system_from_metric, vocab)
from .logic import (EvalError, Formula, ParseError, builtin_sentences, depth,
                    eval_formula, free_vars, gap_sentence, is_sentence, parse,
                    pretty)
from .theory import (Theory, TheoryError, characteristic_formula, enumerate_th0,
                     reduce_theory, serialize, th, th_of_model,
                     truth_from_theory)
from .compose import oplus, order_theory, star_d_check, sum_theory
from .distorted import (BTheory, Decomposition, DistortionError, UTheory, bth,
                        c216_check, component_check, decompose_components,
                        expand_index, i_of_m, lemma214_check, sparse_check, uth)
from .randlab import (CutPoints, EstimationResult, PSeq, RandLabError, SprPair,
                      choose_cutpoints, claim33_estimate, coupling_check,
                      drunkard_sample, estimate_prob, exact_zeta, finite,
                      geometric, parse_pseq, power, ramsey_upper,
                      sample_graph_order, sample_spr, spr_law, vw_sweep,
                      wilson_interval, xi_37, xi_38, zeta_lower)

__version__ = "0.1.0"
