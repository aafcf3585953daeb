"""
Test package for qlaplab.
Contains unit tests for every module, cross-route oracles and CLI tests.
"""
