"""Tests for :mod:`wifisense`."""
