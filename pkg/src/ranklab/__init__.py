"""Effective-rank laboratory for RankMixer and RankElastor token mixers."""

__version__ = "0.1.0"
