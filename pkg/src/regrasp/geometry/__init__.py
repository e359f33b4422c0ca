from regrasp.geometry.mesh import (EmptyMesh, FacetCluster, ParseError, TriMesh,
                                   cluster_facets, load_mesh, sample_cluster)
