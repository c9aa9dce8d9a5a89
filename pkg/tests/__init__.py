"""Tests for tpms_etr."""
