"""Classical simulator of homotopy-linearized PDEs evolved through Lindblad channels."""

__version__ = "0.1.0"
