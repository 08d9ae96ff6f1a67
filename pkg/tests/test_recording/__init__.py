"""Tests for trace recording and inspection."""
