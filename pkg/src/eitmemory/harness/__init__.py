"""Configuration, scenario orchestration and export."""
