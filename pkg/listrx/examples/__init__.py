"""
Examples for listrx.
"""

__author__ = "The listrx developers"
