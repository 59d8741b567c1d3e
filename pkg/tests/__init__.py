"""Tests for roadheat."""
