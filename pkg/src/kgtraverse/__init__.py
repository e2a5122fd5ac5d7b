"""Plan-verify-execute retrieval over typed knowledge graphs."""

from .actions import ACTION_CATALOG, NodeSet, TraversalParam, fetch_neighbors, find_common_nodes, find_node
from .config import RunConfig
from .executor import RunRecord, execute_plan, generate_answer, run_query
from .graph_store import GraphSchema, KnowledgeGraph, infer_schema, load_graph, load_graph_file, neighbors
from .plan import PlanFormatError, TraversalPlan, parse_plan, serialize_plan
from .planner import PlanningExhausted, build_prompt, plan_with_verification
from .verifier import feedback_for_retry, verify_plan

__version__ = "0.1.0"
