"""One-shot converter from upstream citation-network files to text bundles."""

from .convert import (DATASETS, ConversionError, PlanetoidSource, convert,
                      write_bundle)

__version__ = "0.1.0"
