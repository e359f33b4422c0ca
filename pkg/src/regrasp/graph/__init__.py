from regrasp.graph.structure import (TRANSFER, TRANSIT, EmptyState, GraphEdge, GraphNode,
                                     RegraspGraph, build_dual_arm, build_single_arm,
                                     check_invariants, dijkstra)
from regrasp.graph.search import (Infeasible, Metrics, RegraspPlan, Timeout, bind_yaw,
                                  dual_arm_plan, single_arm_plan)
