"""Tabular policy mirror descent with TD critics under Markov sampling."""
