"""pairdiff: contrastive image-difference data synthesis pipeline.

Generates pairs of near-identical images that differ by a single object
replacement (or removal), localizes the differing regions with
segmentation plus embedding-similarity gates, captions the differences,
and emits conversation-formatted training samples together with funnel
and diversity analytics.
"""

__version__ = "0.1.0"
