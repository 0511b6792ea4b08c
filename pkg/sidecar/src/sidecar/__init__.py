"""Reference server for the pairdiff model-backend wire protocol.

Each protocol capability is bound to a model by a config file; built-in
lightweight reference models keep the server fully offline-capable, and
`hf:` bindings load Hugging Face models at startup when the extras are
installed. Unbound capabilities answer with a typed "unsupported" error.
"""

__version__ = "0.1.0"
