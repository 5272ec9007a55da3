"""
Tests for SwarmGuard
"""
