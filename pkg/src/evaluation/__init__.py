"""
Link prediction evaluation package
"""
from .ranking import RankingProtocol, TiePolicy, evaluate, rank_from_scores, rank_query
from .report import CSV_FIELDS, HITS_AT, DirectionReport, RankingReport, report_json_schema

__all__ = [
    'CSV_FIELDS',
    'HITS_AT',
    'DirectionReport',
    'RankingProtocol',
    'RankingReport',
    'TiePolicy',
    'evaluate',
    'rank_from_scores',
    'rank_query',
    'report_json_schema',
]
