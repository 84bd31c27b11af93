"""Uniform spanning trees and loop-erased random walks on Z^d."""

__version__ = "0.1.0"
