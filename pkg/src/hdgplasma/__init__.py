"""Implicit HDG solver library with a two-fluid plasma model and an
explicit-RKDG Von Neumann stability analyzer."""

__version__ = "0.1.0"
