"""Neural bridge: external scorer and feature extractor for the wordorder
toolkit, speaking only its wire protocol and file formats."""
