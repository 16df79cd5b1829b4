"""Tests for pmm-lab."""
