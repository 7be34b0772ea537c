"""An object calculus with aliasing/mutation qualifiers: typechecker with
capsule/immutability recovery, store-as-blocks reducer, and executable
metatheory checks."""

__version__ = "0.1.0"
