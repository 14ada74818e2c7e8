from .generator import render_summary, write_summary

__all__ = ["render_summary", "write_summary"]
