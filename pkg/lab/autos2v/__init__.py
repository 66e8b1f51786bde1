from .models import ArchParams, CellSpec, OperationKind, S2vModel, SemanticHead, dag_edges
from .operations import build_adjacency, graph_conv, mixed_op
from .embedding import embed_semantic, embed_visual
from .losses import cet_loss, cosine_distance, s2v_loss
from .search import CellSummary, cell_summary, discretize
from .inference import predict_generalized, predict_unseen
from .serializers import dumps_cell, load_cell, loads_cell, save_cell
