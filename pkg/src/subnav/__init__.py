"""Sub-instruction aware navigation on viewpoint graphs.

Instruction chunking over dependency parses, the fine-grained
episode/alignment data model, trajectory metrics, a reference agent with a
sub-instruction attention and shifting kernel (hand-derived gradients), and
the traceability analyses, behind one CLI and an HTTP service.
"""

__version__ = "0.1.0"
