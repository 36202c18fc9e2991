"""Clinical-text knowledge-graph construction toolkit.

Pipeline stages: standoff-annotation parsing and BIO conversion, a
character-level BiLSTM-CRF tagger with replace/mask training augmentation,
entity-level evaluation, TF-IDF alignment of extracted entities to a
file-based disease knowledge base, triple-store fusion, pattern query,
and Cypher/CSV export for graph databases.
"""

__version__ = "0.1.0"
