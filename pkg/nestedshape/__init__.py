"""Principal nested shape space analysis of landmark trajectories."""
from nestedshape.analysis.cluster import great_circle_distance_matrix, ward_cluster
from nestedshape.analysis.markov import equilibrium, estimate_transition_matrix, pool_transition_matrix
from nestedshape.models.pns import pns_decompose, pns_reconstruct
from nestedshape.models.pnss import fit_pnss, pnss_mean_shape, principal_arc
from nestedshape.shape.procrustes import gpa, opa_fit, to_preshape

__version__ = "0.1.0"
