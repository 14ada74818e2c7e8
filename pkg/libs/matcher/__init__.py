from .matcher import DEFAULT_WINDOW, check_pair, match_pairs

__all__ = ["DEFAULT_WINDOW", "check_pair", "match_pairs"]
